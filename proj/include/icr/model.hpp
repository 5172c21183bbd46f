#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "icr/tensor.hpp"

namespace icr {

/// One model element f_{a|b}: a conditional table for `target` given
/// `predictors` (empty predictors make it a plain marginal).
struct ConditionalBlock {
  std::string id;
  Scope target;
  Scope predictors;
  Distribution table;  // scope = target, given = predictors

  /// target ∪ predictors.
  Scope coverage() const { return target.set_union(predictors); }
};

/// Non-fatal findings from parsing/validation.
struct ValidationReport {
  std::vector<std::string> warnings;
};

/// A conditionally specified model: named variables plus conditional blocks.
/// Immutable after construction.
class CsmModel {
 public:
  CsmModel(std::vector<Variable> variables, std::vector<ConditionalBlock> blocks);

  const std::vector<Variable>& variables() const { return variables_; }
  const std::vector<ConditionalBlock>& blocks() const { return blocks_; }
  std::size_t block_count() const { return blocks_.size(); }

  const ConditionalBlock& block(const std::string& id) const;  // UnknownBlock
  int block_index(const std::string& id) const;                // -1 when absent
  const Variable& variable(const std::string& name) const;

  /// Variables appearing only as predictors: (∪b_i) \ (∪a_i).
  Scope delta() const;
  /// Union of every block's target ∪ predictors.
  Scope coverage() const;

 private:
  std::vector<Variable> variables_;
  std::vector<ConditionalBlock> blocks_;
};

enum class ModelClass { saturated, unsaturated };

/// saturated iff every block covers all declared variables.
ModelClass classify(const CsmModel& m);

/// Parse the JSON model format. Optional `report` collects warnings
/// (renormalized tables, delta-membership violations).
CsmModel parse_model(const std::string& text, ValidationReport* report = nullptr);
std::string serialize_model(const CsmModel& m);

CsmModel load_model(const std::string& path, ValidationReport* report = nullptr);

/// Distribution JSON ({"scope":[...],"given":[...],"values":[...]}).
Distribution parse_distribution(const std::string& text);
std::string serialize_distribution(const Distribution& d);
Distribution load_distribution(const std::string& path);
void save_distribution(const Distribution& d, const std::string& path);

/// Pattern entry: (target names, predictor names).
using CsmPattern = std::vector<std::pair<std::vector<std::string>, std::vector<std::string>>>;

/// Build a compatible-by-construction model by extracting each pattern entry's
/// conditional from a strictly compatible joint. Block ids are synthesized as
/// "f<targets>|<predictors>" from variable names.
CsmModel derive_csm_from_joint(const Distribution& joint, const CsmPattern& pattern);

}  // namespace icr
