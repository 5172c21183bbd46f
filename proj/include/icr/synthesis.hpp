#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "icr/engine.hpp"
#include "icr/model.hpp"

namespace icr {

enum class PhaseMode { icr, compose, ipf };

/// One step of a synthesis plan. `group` names inputs: block ids from the
/// model or ids of earlier phase outputs (icr phases also publish every slot
/// as "<phase-id>:<block-id>").
struct Phase {
  std::string id;
  PhaseMode mode = PhaseMode::icr;
  std::vector<std::string> group;

  // icr
  std::optional<std::vector<std::string>> cycle;  // explicit update order
  std::optional<std::string> pick;  // slot published under the phase id

  // compose
  std::optional<std::string> cond;  // disambiguates which input is the conditional

  // ipf
  std::string assumption;  // "zero-three-way" or "offsets" (explicit, required)
  std::vector<double> offsets;  // log-linear offsets when assumption == "offsets"
  double ipf_tol = 1e-10;
  int ipf_max_iter = 10000;
};

struct SynthesisPlan {
  std::vector<Phase> phases;
};

SynthesisPlan parse_plan(const std::string& text);
SynthesisPlan load_plan(const std::string& path);

/// A named distribution produced by a phase.
struct Intermediate {
  std::string id;
  Distribution dist;
  std::string provenance;  // "<phase-id> mode rotation/source"
  bool full_scope = false;  // covers every model variable, unconditioned
};

/// Execute the phases in order; returns every output (per-slot icr outputs
/// included). Failures are wrapped in PhaseError naming the phase.
std::vector<Intermediate> run_plan(const CsmModel& m, const SynthesisPlan& plan,
                                   const IcrConfig& cfg = {});

/// Cyclic proportional scaling of `init` to match every target marginal
/// within tol (L1 per marginal). Targets must agree on shared sub-margins
/// within 1e-8.
Distribution ipf_fit(const std::vector<Distribution>& target_marginals,
                     const Distribution& init, double tol = 1e-10, int max_iter = 10000);

struct SufficiencyFlag {
  std::string output_id;
  std::string reason;
};

/// Static plan lint: scope bookkeeping, cycle existence per icr phase, and
/// assumption bookkeeping for ipf phases. `sufficient` means the plan reaches
/// a full joint without any assumption-dependent step.
struct SufficiencyReport {
  bool sufficient = false;
  bool reaches_full_joint = false;
  std::vector<SufficiencyFlag> flags;
};

SufficiencyReport validate_sufficiency(const CsmModel& m, const SynthesisPlan& plan);

}  // namespace icr
