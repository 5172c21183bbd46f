#pragma once

#include <string>
#include <vector>

#include "icr/engine.hpp"
#include "icr/model.hpp"

namespace icr {

enum class Deviance { kl, pearson_x2, freeman_tukey_f2 };

Deviance deviance_from_name(const std::string& name);  // "kl" | "x2" | "f2"
const char* deviance_name(Deviance d);

/// Collection of full-scope stationary distributions gathered across
/// permissible cycles (rotations whose scope misses variables stay out).
struct Ensemble {
  std::vector<Distribution> members;
  std::vector<std::string> sources;  // "cycle <order> rotation <...>"
};

/// Run every permissible cycle (up to cycle_limit) and keep the full-scope
/// stationary members.
Ensemble collect_ensemble(const CsmModel& m, std::size_t cycle_limit = 24,
                          const IcrConfig& cfg = {});

/// Marginal-weighted conditional deviance of `mix` against the model: for each
/// block, the mix's predictor marginal weights the per-slice divergence
/// between the block table and the mix's own conditional. Zero exactly when
/// every block's conditional is reproduced.
double model_deviance(const Distribution& mix, const CsmModel& m, Deviance measure);

struct MixtureResult {
  std::vector<double> weights;  // simplex vector over ensemble members
  Distribution mixture;
  double deviance = 0.0;
  Deviance measure = Deviance::kl;
};

/// Projected-gradient search over the weight simplex with multistarts and
/// golden-section line search. Ties resolve toward uniform weights.
MixtureResult optimize_mixture(const Ensemble& e, const CsmModel& m, Deviance measure);

/// Independent dense search over the simplex for <= 3 members; step is the
/// weight resolution (two-stage refinement keeps 3-member grids tractable).
MixtureResult grid_search_mixture(const Ensemble& e, const CsmModel& m, Deviance measure,
                                  double step = 1e-4);

/// Convex combination of the members with the given weights.
Distribution mix_members(const Ensemble& e, const std::vector<double>& weights);

}  // namespace icr
