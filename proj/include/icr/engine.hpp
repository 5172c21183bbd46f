#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "icr/cycles.hpp"
#include "icr/model.hpp"

namespace icr {

/// How the first iterate is seeded. The engine always starts from a member of
/// the last cycle slot's space: compose(f_last, init marginal over its
/// predictors). `uniform` uses a flat marginal; `distribution` marginalizes /
/// conditions the given distribution down to what the last block needs;
/// `seeded` draws a positive random marginal from the seed.
struct InitSpec {
  enum class Kind { uniform, distribution, seeded };
  Kind kind = Kind::uniform;
  std::optional<Distribution> dist;
  std::uint64_t seed = 0;

  static InitSpec make_uniform() { return {}; }
  static InitSpec from_distribution(Distribution d) {
    return InitSpec{Kind::distribution, std::move(d), 0};
  }
  static InitSpec random(std::uint64_t seed) {
    return InitSpec{Kind::seeded, std::nullopt, seed};
  }
};

struct IcrConfig {
  double tol_m = 1e-10;
  double tol_pi = 1e-10;
  int max_cycles = 10000;
  InitSpec init;
  /// Keep iterating after M drops below tol_m until it stops improving (or
  /// hits zero), sharpening the reported stationary set. Also supplies the
  /// post-convergence window the plateau rule needs.
  bool polish = true;
  int polish_max_extra = 500;
  /// Track the consistency divergence Pi(t). Switching it off skips the
  /// compatibility monitor entirely (verdict becomes undetermined); used when
  /// timing pure synthesis against other methods.
  bool track_pi = true;
};

enum class Verdict { compatible, incompatible, undetermined };

const char* verdict_name(Verdict v);

/// Full record of one ICR run along a permissible cycle.
struct IcrRun {
  UpdateCycle cycle;
  /// Latest iterate per slot; slot i lives in the space of cycle.order[i].
  std::vector<Distribution> iterates;
  std::vector<double> m_trace;
  std::vector<double> pi_trace;
  bool converged = false;
  /// First cycle index t with M(t) < tol_m (-1 when never reached).
  int stop_cycle = -1;
  int cycles_run = 0;
  Verdict compatibility = Verdict::undetermined;
  Scope delta;
  /// Union of block coverages minus delta: the scope of "full" iterates.
  Scope lambda;
};

/// One conditional replacement: compose(block.table, marginalize(q, needed)).
/// The projection of q onto the set of distributions with block's conditional.
Distribution project(const Distribution& q, const ConditionalBlock& block);

IcrRun run_icr(const CsmModel& m, const UpdateCycle& cycle, const IcrConfig& cfg = {});

/// Reusable executor for one (model, cycle) pair: index maps and the
/// comparison pattern are built once, each run() is flat-buffer arithmetic.
/// The engine borrows the model; keep the model alive while using it. run()
/// is const and carries no shared mutable state, so distinct runs may execute
/// concurrently.
class IcrEngine {
 public:
  IcrEngine(const CsmModel& m, const UpdateCycle& cycle);
  ~IcrEngine();
  IcrEngine(IcrEngine&&) noexcept;
  IcrEngine& operator=(IcrEngine&&) noexcept;

  IcrRun run(const IcrConfig& cfg = {}) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Re-derive the verdict from a run's traces: compatible when the final
/// consistency divergence fell below tol_pi; incompatible when it plateaued
/// above tol_pi (relative change < 1e-6 over the last 5 cycles) while M
/// converged; undetermined otherwise.
Verdict check_compatibility(const IcrRun& run, double tol_pi = 1e-10);

/// The converged slot distributions, each mapped onto the next by one
/// replacement step.
struct StationarySet {
  UpdateCycle cycle;
  std::vector<Distribution> members;
  /// Rotation label per member: the update order ending at that slot.
  std::vector<std::string> rotations;
};

/// Extract and verify the mutually stationary set of a converged run: one
/// projection maps member i onto member i+1 within 10*tol_pi. Throws
/// NonConvergence when the run did not converge or verification fails.
StationarySet stationary_set(const CsmModel& m, const IcrRun& run, double tol_pi = 1e-10);

}  // namespace icr
