#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "icr/errors.hpp"

namespace icr {

/// One categorical variable. `ordinal` records its position in the owning
/// declaration order and fixes the canonical storage layout; it plays no part
/// in identity (variables are identified by name).
struct Variable {
  std::string name;
  int cardinality = 0;
  int ordinal = 0;
};

/// Ordered set of variables, kept sorted by ordinal (declaration order).
/// All set algebra is by name; duplicates are rejected.
class Scope {
 public:
  Scope() = default;
  explicit Scope(std::vector<Variable> vars);

  const std::vector<Variable>& vars() const { return vars_; }
  std::size_t size() const { return vars_.size(); }
  bool empty() const { return vars_.empty(); }
  const Variable& operator[](std::size_t i) const { return vars_[i]; }

  bool contains(const std::string& name) const;
  /// Index within this scope, or -1.
  int index_of(const std::string& name) const;
  /// Product of cardinalities (1 for the empty scope).
  std::size_t cell_count() const;

  Scope set_union(const Scope& o) const;
  Scope set_minus(const Scope& o) const;
  Scope set_intersect(const Scope& o) const;
  bool subset_of(const Scope& o) const;
  bool same_names(const Scope& o) const;

  std::vector<std::string> names() const;
  std::string to_string() const;  // "{x1,x2}"

 private:
  std::vector<Variable> vars_;
};

/// Both divergence directions plus derived summaries, in nats.
/// For conditional distributions the KL sums run over every cell (conditioning
/// slices added unweighted) while total variation is averaged per slice so it
/// stays in [0,1].
struct DivergenceReport {
  double kl_forward = 0.0;
  double kl_backward = 0.0;
  double symmetric = 0.0;
  double total_variation = 0.0;
  bool forward_infinite = false;
  bool backward_infinite = false;
};

/// Dense non-negative tensor over `scope` variables, optionally conditioned on
/// `given` variables. Layout: flat array indexed by scope axes first (first
/// listed variable varies fastest), then given axes. Unconditioned tensors sum
/// to 1; conditioned ones sum to 1 per configuration of `given`. Immutable
/// after construction.
class Distribution {
 public:
  /// Trivial distribution over no variables (one cell holding 1).
  Distribution() : values_{1.0} {}

  static Distribution joint(Scope scope, std::vector<double> values);
  static Distribution conditional(Scope scope, Scope given, std::vector<double> values);

  const Scope& scope() const { return scope_; }
  const Scope& given() const { return given_; }
  const std::vector<double>& values() const { return values_; }
  bool is_conditional() const { return !given_.empty(); }

  std::size_t size() const { return values_.size(); }
  /// Cells per conditioning configuration.
  std::size_t slice_size() const { return scope_.cell_count(); }
  std::size_t slice_count() const { return given_.cell_count(); }

  /// Value at a full configuration (scope digits then given digits).
  double at(std::span<const int> config) const;
  /// True when this distribution was renormalized on construction because the
  /// input sums were off by more than 1e-12 (but within 1e-6).
  bool was_renormalized() const { return renormalized_; }

 private:
  Distribution(Scope scope, Scope given, std::vector<double> values, bool strict);

  Scope scope_, given_;
  std::vector<double> values_;
  bool renormalized_ = false;

  friend Distribution normalize(const Distribution& d);
  friend class DistBuilder;
};

/// Proportional rescaling so every conditioning slice sums to 1.
Distribution normalize(const Distribution& d);

/// Build a distribution from raw non-negative cell weights, rescaling each
/// conditioning slice. AllZeroSlice when a slice has no mass.
Distribution normalize(Scope scope, Scope given, std::vector<double> weights);

/// Sum out scope \ keep. `given` is untouched; conditioning variables are
/// never summed over.
Distribution marginalize(const Distribution& d, const Scope& keep);

/// Product cond(a|b) * marg(b \ delta | delta) -> distribution over
/// a ∪ (b \ delta) given delta. Requires cond.given == marg.scope ∪ marg.given
/// as a name set.
Distribution compose(const Distribution& cond, const Distribution& marg);

/// Extract the conditional of d on `on`: scope \ on given on ∪ d.given.
Distribution condition(const Distribution& d, const Scope& on);

/// Divergences between two distributions over identical scope/given sets
/// (axis orders may differ; alignment is by name). p>0 where q=0 yields an
/// infinite direction, flagged rather than thrown.
DivergenceReport kl(const Distribution& p, const Distribution& q);

double symmetric_kl(const Distribution& p, const Distribution& q);
double total_variation(const Distribution& p, const Distribution& q);

/// Uniform distribution over scope per configuration of given.
Distribution uniform(Scope scope, Scope given = {});

/// Factory for distributions produced by tensor arithmetic, whose slices are
/// normalized by construction: floating-point drift is rescaled silently and
/// no transcription tolerance applies.
class DistBuilder {
 public:
  static Distribution make(Scope scope, Scope given, std::vector<double> values);
};

namespace detail {
/// Strides of a distribution's axes (scope then given), first axis fastest.
std::vector<std::size_t> strides(const Distribution& d);
/// For iterating q's cells in p's axis order: permutation and strides such
/// that q_flat_index = sum(digit[i] * perm_stride[i]) where digit[i] is the
/// i-th axis digit of p. Requires identical name sets (scope+given combined).
std::vector<std::size_t> aligned_strides(const Distribution& p, const Distribution& q);
}  // namespace detail

}  // namespace icr
