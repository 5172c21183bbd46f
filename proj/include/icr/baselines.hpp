#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "icr/engine.hpp"
#include "icr/model.hpp"

namespace icr {

/// Markov kernel of one full conditional over the enumerated joint states.
/// State s is the flat index of the full configuration (first declared
/// variable fastest), matching Distribution layout, so apply(q) equals the
/// value array of project(q, block).
struct TransitionMatrix {
  std::string block_id;
  Scope all_vars;
  std::size_t n = 0;
  std::vector<double> rows;  // row-major n*n, each row sums to 1

  std::vector<double> apply(const std::vector<double>& q) const;
};

TransitionMatrix transition_matrix(const CsmModel& m, const std::string& block_id);

struct PowerResult {
  Distribution stationary;
  int iterations = 0;
  bool converged = false;
  /// Rows of T^k disagreed beyond 1e-6 at stop: the chain looks reducible and
  /// the row average depends on the starting state.
  bool reducible_warning = false;
  double row_spread = 0.0;
};

/// Row average of (T_1 ... T_L)^k at the first k where consecutive averages
/// agree under symmetric KL below tol.
PowerResult power_iterate(const CsmModel& m, const UpdateCycle& order, double tol = 1e-10,
                          int max_iter = 10000);

/// Deterministic systematic-scan Gibbs output: counts over the full joint
/// scope. One draw is recorded after each completed scan.
struct SampleTrace {
  std::uint64_t seed = 0;
  std::int64_t burn_in = 0;
  std::int64_t draws = 0;
  Scope scope;
  std::vector<std::uint64_t> counts;

  Distribution empirical() const;  // NonConvergence when draws == 0
};

SampleTrace gibbs_sample(const CsmModel& m, const UpdateCycle& order, std::int64_t n,
                         std::int64_t burn_in, std::uint64_t seed);

struct BenchConfig {
  std::int64_t gs_batch = 1000000;
  int gs_batches = 5;
  std::int64_t gs_burn_in = 100000;
  std::uint64_t seed = 1;
  double tol = 1e-10;
  int max_iter = 1000;
  /// Repetitions used for the wall-clock medians of ICR and the power method.
  int timing_reps = 25;
};

struct CompareRow {
  std::string method;  // icr | power | gs
  int step = 0;
  std::int64_t samples = 0;  // gs only
  double sym_kl = 0.0;
};

struct CompareReport {
  std::vector<CompareRow> rows;
  double icr_seconds = 0.0;
  double power_seconds = 0.0;
  double gs_seconds = 0.0;
  std::string rng_name = "mt19937_64";
  Distribution reference;

  std::string csv() const;
};

/// Convergence/efficiency comparison of ICR, the power method and Gibbs
/// sampling on a saturated model. The reference distribution is the polished
/// ICR stationary joint.
CompareReport compare_report(const CsmModel& m, const UpdateCycle& order,
                             const BenchConfig& cfg = {});

}  // namespace icr
