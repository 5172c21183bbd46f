#include "icr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace icr {

namespace {

constexpr double kSumTolStrict = 1e-12;
constexpr double kSumTolLoose = 1e-6;

using Axes = std::vector<Variable>;

Axes all_axes(const Scope& scope, const Scope& given) {
  Axes axes = scope.vars();
  axes.insert(axes.end(), given.vars().begin(), given.vars().end());
  return axes;
}

std::vector<std::size_t> strides_for(const Axes& axes) {
  std::vector<std::size_t> st(axes.size());
  std::size_t s = 1;
  for (std::size_t i = 0; i < axes.size(); ++i) {
    st[i] = s;
    s *= static_cast<std::size_t>(axes[i].cardinality);
  }
  return st;
}

std::size_t cells_of(const Axes& axes) {
  std::size_t n = 1;
  for (const auto& v : axes) n *= static_cast<std::size_t>(v.cardinality);
  return n;
}

/// Odometer over `axes` (first axis fastest); calls fn(flat_index, digits).
template <typename Fn>
void for_each_cell(const Axes& axes, Fn&& fn) {
  std::vector<int> digit(axes.size(), 0);
  const std::size_t n = cells_of(axes);
  for (std::size_t idx = 0; idx < n; ++idx) {
    fn(idx, digit);
    for (std::size_t a = 0; a < axes.size(); ++a) {
      if (++digit[a] < axes[a].cardinality) break;
      digit[a] = 0;
    }
  }
}

/// Stride each axis of `axes` contributes to a flat index of the distribution
/// with axis list `target` (0 when the variable is absent from target).
std::vector<std::size_t> contribution(const Axes& axes, const Axes& target) {
  const auto tst = strides_for(target);
  std::vector<std::size_t> out(axes.size(), 0);
  for (std::size_t i = 0; i < axes.size(); ++i)
    for (std::size_t k = 0; k < target.size(); ++k)
      if (target[k].name == axes[i].name) {
        if (target[k].cardinality != axes[i].cardinality)
          throw ValidationError("cardinality mismatch for '" + axes[i].name + "'");
        out[i] = tst[k];
      }
  return out;
}

}  // namespace

// ---------------------------------------------------------------- Scope

Scope::Scope(std::vector<Variable> vars) : vars_(std::move(vars)) {
  // insertion sort: scopes are tiny and this avoids stable_sort's buffer
  for (std::size_t i = 1; i < vars_.size(); ++i)
    for (std::size_t j = i; j > 0 && vars_[j].ordinal < vars_[j - 1].ordinal; --j)
      std::swap(vars_[j], vars_[j - 1]);
  for (std::size_t i = 0; i < vars_.size(); ++i) {
    if (vars_[i].cardinality < 2)
      throw ValidationError("variable '" + vars_[i].name + "' has cardinality " +
                            std::to_string(vars_[i].cardinality) + " (must be >= 2)");
    for (std::size_t j = i + 1; j < vars_.size(); ++j)
      if (vars_[i].name == vars_[j].name)
        throw ValidationError("duplicate variable '" + vars_[i].name + "' in scope");
  }
}

bool Scope::contains(const std::string& name) const { return index_of(name) >= 0; }

int Scope::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < vars_.size(); ++i)
    if (vars_[i].name == name) return static_cast<int>(i);
  return -1;
}

std::size_t Scope::cell_count() const { return cells_of(vars_); }

Scope Scope::set_union(const Scope& o) const {
  std::vector<Variable> out;
  out.reserve(vars_.size() + o.vars_.size());
  out = vars_;
  for (const auto& v : o.vars_)
    if (!contains(v.name)) out.push_back(v);
  return Scope(std::move(out));
}

Scope Scope::set_minus(const Scope& o) const {
  std::vector<Variable> out;
  out.reserve(vars_.size());
  for (const auto& v : vars_)
    if (!o.contains(v.name)) out.push_back(v);
  return Scope(std::move(out));
}

Scope Scope::set_intersect(const Scope& o) const {
  std::vector<Variable> out;
  out.reserve(vars_.size());
  for (const auto& v : vars_)
    if (o.contains(v.name)) out.push_back(v);
  return Scope(std::move(out));
}

bool Scope::subset_of(const Scope& o) const {
  return std::all_of(vars_.begin(), vars_.end(),
                     [&](const Variable& v) { return o.contains(v.name); });
}

bool Scope::same_names(const Scope& o) const { return size() == o.size() && subset_of(o); }

std::vector<std::string> Scope::names() const {
  std::vector<std::string> out;
  out.reserve(vars_.size());
  for (const auto& v : vars_) out.push_back(v.name);
  return out;
}

std::string Scope::to_string() const {
  std::string s = "{";
  for (std::size_t i = 0; i < vars_.size(); ++i) {
    if (i) s += ",";
    s += vars_[i].name;
  }
  return s + "}";
}

// ---------------------------------------------------------------- Distribution

Distribution::Distribution(Scope scope, Scope given, std::vector<double> values, bool strict)
    : scope_(std::move(scope)), given_(std::move(given)), values_(std::move(values)) {
  if (!scope_.set_intersect(given_).empty())
    throw ScopeError("scope and given overlap: " + scope_.to_string() + " vs " +
                     given_.to_string());
  const std::size_t want = scope_.cell_count() * given_.cell_count();
  if (values_.size() != want)
    throw ValidationError("value count " + std::to_string(values_.size()) +
                          " does not match scope size " + std::to_string(want));
  for (double v : values_) {
    if (!std::isfinite(v)) throw ValidationError("non-finite value in distribution");
    if (v < 0.0) throw ValidationError("negative value in distribution");
  }
  const std::size_t ns = slice_size();
  for (std::size_t s = 0; s < slice_count(); ++s) {
    double sum = 0.0;
    for (std::size_t i = 0; i < ns; ++i) sum += values_[s * ns + i];
    if (sum == 0.0)
      throw AllZeroSliceError("conditioning configuration " + std::to_string(s) +
                              " has total mass 0");
    const double off = std::abs(sum - 1.0);
    if (off <= kSumTolStrict) continue;
    if (strict && off > kSumTolLoose)
      throw ValidationError("slice " + std::to_string(s) + " sums to " + std::to_string(sum) +
                            "; more than 1e-6 away from 1");
    for (std::size_t i = 0; i < ns; ++i) values_[s * ns + i] /= sum;
    if (strict) renormalized_ = true;
  }
}

Distribution Distribution::joint(Scope scope, std::vector<double> values) {
  return Distribution(std::move(scope), Scope{}, std::move(values), /*strict=*/true);
}

Distribution Distribution::conditional(Scope scope, Scope given, std::vector<double> values) {
  return Distribution(std::move(scope), std::move(given), std::move(values), /*strict=*/true);
}

double Distribution::at(std::span<const int> config) const {
  const auto axes = all_axes(scope_, given_);
  std::size_t idx = 0, stride = 1;
  for (std::size_t i = 0; i < axes.size(); ++i) {
    idx += static_cast<std::size_t>(config[i]) * stride;
    stride *= static_cast<std::size_t>(axes[i].cardinality);
  }
  return values_[idx];
}

Distribution DistBuilder::make(Scope scope, Scope given, std::vector<double> values) {
  return Distribution(std::move(scope), std::move(given), std::move(values), /*strict=*/false);
}

namespace detail {

std::vector<std::size_t> strides(const Distribution& d) {
  return strides_for(all_axes(d.scope(), d.given()));
}

std::vector<std::size_t> aligned_strides(const Distribution& p, const Distribution& q) {
  const auto paxes = all_axes(p.scope(), p.given());
  const auto qaxes = all_axes(q.scope(), q.given());
  if (paxes.size() != qaxes.size())
    throw ScopeError("distributions do not cover the same variables");
  auto out = contribution(paxes, qaxes);
  for (std::size_t i = 0; i < paxes.size(); ++i) {
    bool found = false;
    for (const auto& qa : qaxes) found = found || qa.name == paxes[i].name;
    if (!found)
      throw ScopeError("variable '" + paxes[i].name + "' missing from second operand");
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------- operations

Distribution normalize(const Distribution& d) {
  return normalize(d.scope(), d.given(), d.values());
}

Distribution normalize(Scope scope, Scope given, std::vector<double> weights) {
  const std::size_t ns = scope.cell_count();
  if (weights.size() != ns * given.cell_count())
    throw ValidationError("normalize: weight count does not match scope size");
  for (double v : weights) {
    if (!std::isfinite(v)) throw ValidationError("normalize: non-finite weight");
    if (v < 0.0) throw ValidationError("normalize: negative weight");
  }
  for (std::size_t s = 0; s * ns < weights.size(); ++s) {
    double sum = 0.0;
    for (std::size_t i = 0; i < ns; ++i) sum += weights[s * ns + i];
    if (sum == 0.0)
      throw AllZeroSliceError("cannot normalize: conditioning configuration " +
                              std::to_string(s) + " has total mass 0");
    for (std::size_t i = 0; i < ns; ++i) weights[s * ns + i] /= sum;
  }
  return DistBuilder::make(std::move(scope), std::move(given), std::move(weights));
}

Distribution marginalize(const Distribution& d, const Scope& keep) {
  if (!keep.subset_of(d.scope()))
    throw ScopeError("marginalize: keep " + keep.to_string() + " is not a subset of scope " +
                     d.scope().to_string());
  if (keep.same_names(d.scope())) return d;

  std::vector<Variable> kept;
  for (const auto& v : d.scope().vars())
    if (keep.contains(v.name)) kept.push_back(v);
  Scope out_scope{kept};

  const auto daxes = all_axes(d.scope(), d.given());
  const auto oaxes = all_axes(out_scope, d.given());
  const auto contrib = contribution(daxes, oaxes);

  std::vector<double> acc(cells_of(oaxes), 0.0);
  const auto& vals = d.values();
  for_each_cell(daxes, [&](std::size_t idx, const std::vector<int>& digit) {
    std::size_t oidx = 0;
    for (std::size_t a = 0; a < digit.size(); ++a)
      oidx += static_cast<std::size_t>(digit[a]) * contrib[a];
    acc[oidx] += vals[idx];
  });
  return DistBuilder::make(std::move(out_scope), d.given(), std::move(acc));
}

Distribution compose(const Distribution& cond, const Distribution& marg) {
  const Scope marg_all = marg.scope().set_union(marg.given());
  if (!cond.given().same_names(marg_all))
    throw ScopeError("compose: conditional expects " + cond.given().to_string() +
                     " but marginal supplies " + marg_all.to_string());

  // Result lives in the conditional's variable universe.
  std::vector<Variable> scope_vars = cond.scope().vars();
  std::vector<Variable> given_vars;
  for (const auto& v : cond.given().vars()) {
    if (marg.scope().contains(v.name)) scope_vars.push_back(v);
    else given_vars.push_back(v);
  }
  Scope out_scope{scope_vars}, out_given{given_vars};

  const auto oaxes = all_axes(out_scope, out_given);
  const auto c_contrib = contribution(oaxes, all_axes(cond.scope(), cond.given()));
  const auto m_contrib = contribution(oaxes, all_axes(marg.scope(), marg.given()));

  std::vector<double> vals(cells_of(oaxes));
  const auto& cv = cond.values();
  const auto& mv = marg.values();
  for_each_cell(oaxes, [&](std::size_t idx, const std::vector<int>& digit) {
    std::size_t ci = 0, mi = 0;
    for (std::size_t a = 0; a < digit.size(); ++a) {
      ci += static_cast<std::size_t>(digit[a]) * c_contrib[a];
      mi += static_cast<std::size_t>(digit[a]) * m_contrib[a];
    }
    vals[idx] = cv[ci] * mv[mi];
  });
  return DistBuilder::make(std::move(out_scope), std::move(out_given), std::move(vals));
}

Distribution condition(const Distribution& d, const Scope& on) {
  if (on.empty() || on.same_names(d.scope()) || !on.subset_of(d.scope()))
    throw ScopeError("condition: on-set " + on.to_string() +
                     " must be a non-empty strict subset of scope " + d.scope().to_string());
  Distribution mg = marginalize(d, on);
  for (double v : mg.values())
    if (v == 0.0)
      throw AllZeroSliceError("condition: zero-mass configuration of " + on.to_string());

  std::vector<Variable> scope_vars, on_vars;
  for (const auto& v : d.scope().vars())
    (on.contains(v.name) ? on_vars : scope_vars).push_back(v);
  std::vector<Variable> given_vars = on_vars;
  given_vars.insert(given_vars.end(), d.given().vars().begin(), d.given().vars().end());
  Scope out_scope{scope_vars}, out_given{given_vars};

  const auto oaxes = all_axes(out_scope, out_given);
  const auto d_contrib = contribution(oaxes, all_axes(d.scope(), d.given()));
  const auto m_contrib = contribution(oaxes, all_axes(mg.scope(), mg.given()));

  std::vector<double> vals(cells_of(oaxes));
  const auto& dv = d.values();
  const auto& mv = mg.values();
  for_each_cell(oaxes, [&](std::size_t idx, const std::vector<int>& digit) {
    std::size_t di = 0, mi = 0;
    for (std::size_t a = 0; a < digit.size(); ++a) {
      di += static_cast<std::size_t>(digit[a]) * d_contrib[a];
      mi += static_cast<std::size_t>(digit[a]) * m_contrib[a];
    }
    vals[idx] = dv[di] / mv[mi];
  });
  return DistBuilder::make(std::move(out_scope), std::move(out_given), std::move(vals));
}

DivergenceReport kl(const Distribution& p, const Distribution& q) {
  if (!p.scope().same_names(q.scope()) || !p.given().same_names(q.given()))
    throw ScopeError("kl: scope/given mismatch: " + p.scope().to_string() + "|" +
                     p.given().to_string() + " vs " + q.scope().to_string() + "|" +
                     q.given().to_string());
  const auto qmap = detail::aligned_strides(p, q);
  const auto paxes = all_axes(p.scope(), p.given());
  const auto& pv = p.values();
  const auto& qv = q.values();

  DivergenceReport rep;
  double fwd = 0.0, bwd = 0.0, l1 = 0.0;
  for_each_cell(paxes, [&](std::size_t idx, const std::vector<int>& digit) {
    std::size_t qi = 0;
    for (std::size_t a = 0; a < digit.size(); ++a)
      qi += static_cast<std::size_t>(digit[a]) * qmap[a];
    const double a = pv[idx], b = qv[qi];
    l1 += std::abs(a - b);
    if (a > 0.0) {
      if (b == 0.0) rep.forward_infinite = true;
      else fwd += a * std::log(a / b);
    }
    if (b > 0.0) {
      if (a == 0.0) rep.backward_infinite = true;
      else bwd += b * std::log(b / a);
    }
  });
  rep.kl_forward = rep.forward_infinite ? std::numeric_limits<double>::infinity()
                                        : std::max(fwd, 0.0);
  rep.kl_backward = rep.backward_infinite ? std::numeric_limits<double>::infinity()
                                          : std::max(bwd, 0.0);
  rep.symmetric = rep.kl_forward + rep.kl_backward;
  rep.total_variation = 0.5 * l1 / static_cast<double>(p.slice_count());
  return rep;
}

double symmetric_kl(const Distribution& p, const Distribution& q) { return kl(p, q).symmetric; }

double total_variation(const Distribution& p, const Distribution& q) {
  return kl(p, q).total_variation;
}

Distribution uniform(Scope scope, Scope given) {
  const double v = 1.0 / static_cast<double>(scope.cell_count());
  std::vector<double> vals(scope.cell_count() * given.cell_count(), v);
  return DistBuilder::make(std::move(scope), std::move(given), std::move(vals));
}

}  // namespace icr
