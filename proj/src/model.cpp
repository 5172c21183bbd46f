#include "icr/model.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace icr {

using nlohmann::json;

// ---------------------------------------------------------------- CsmModel

CsmModel::CsmModel(std::vector<Variable> variables, std::vector<ConditionalBlock> blocks)
    : variables_(std::move(variables)), blocks_(std::move(blocks)) {
  if (blocks_.empty()) throw ValidationError("model has no blocks");
  std::set<std::string> names;
  for (std::size_t i = 0; i < variables_.size(); ++i) {
    if (!names.insert(variables_[i].name).second)
      throw ValidationError("duplicate variable '" + variables_[i].name + "'");
    if (variables_[i].cardinality < 2)
      throw ValidationError("variable '" + variables_[i].name + "' has cardinality < 2");
    if (variables_[i].ordinal != static_cast<int>(i))
      throw ValidationError("variable ordinals must match declaration order");
  }
  std::set<std::string> ids;
  for (const auto& b : blocks_) {
    if (b.id.empty()) throw ValidationError("block with empty id");
    if (!ids.insert(b.id).second) throw ValidationError("duplicate block id '" + b.id + "'");
    if (!b.target.set_intersect(b.predictors).empty())
      throw ValidationError("block '" + b.id + "': target and predictors overlap");
    const Scope cover = b.coverage();
    for (const auto& v : cover.vars()) {
      if (!names.count(v.name))
        throw ValidationError("block '" + b.id + "' references undeclared variable '" +
                              v.name + "'");
    }
    if (!b.table.scope().same_names(b.target) || !b.table.given().same_names(b.predictors))
      throw ValidationError("block '" + b.id + "': table axes do not match target/predictors");
  }
}

const ConditionalBlock& CsmModel::block(const std::string& id) const {
  const int i = block_index(id);
  if (i < 0) throw UnknownBlockError("no block with id '" + id + "'");
  return blocks_[static_cast<std::size_t>(i)];
}

int CsmModel::block_index(const std::string& id) const {
  for (std::size_t i = 0; i < blocks_.size(); ++i)
    if (blocks_[i].id == id) return static_cast<int>(i);
  return -1;
}

const Variable& CsmModel::variable(const std::string& name) const {
  for (const auto& v : variables_)
    if (v.name == name) return v;
  throw ValidationError("no variable named '" + name + "'");
}

Scope CsmModel::delta() const {
  Scope targets, predictors;
  for (const auto& b : blocks_) {
    targets = targets.set_union(b.target);
    predictors = predictors.set_union(b.predictors);
  }
  return predictors.set_minus(targets);
}

Scope CsmModel::coverage() const {
  Scope s;
  for (const auto& b : blocks_) s = s.set_union(b.coverage());
  return s;
}

ModelClass classify(const CsmModel& m) {
  const std::size_t all = m.variables().size();
  for (const auto& b : m.blocks())
    if (b.coverage().size() != all) return ModelClass::unsaturated;
  return ModelClass::saturated;
}

// ---------------------------------------------------------------- JSON

namespace {

json parse_json(const std::string& text) {
  json j = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) throw ParseError("malformed JSON");
  return j;
}

Scope scope_from_names(const std::vector<Variable>& universe, const json& names,
                       const std::string& where) {
  std::vector<Variable> vars;
  for (const auto& n : names) {
    if (!n.is_string()) throw ParseError(where + ": variable names must be strings");
    const std::string name = n.get<std::string>();
    bool found = false;
    for (const auto& v : universe)
      if (v.name == name) {
        vars.push_back(v);
        found = true;
        break;
      }
    if (!found)
      throw ValidationError(where + ": undeclared variable '" + name + "'");
  }
  return Scope(std::move(vars));
}

std::vector<double> values_from_json(const json& j, const std::string& where) {
  if (!j.is_array()) throw ParseError(where + ": 'values' must be an array");
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& v : j) {
    if (!v.is_number()) throw ParseError(where + ": non-numeric value");
    out.push_back(v.get<double>());
  }
  return out;
}

}  // namespace

CsmModel parse_model(const std::string& text, ValidationReport* report) {
  const json j = parse_json(text);
  if (!j.is_object() || !j.contains("variables") || !j.contains("blocks"))
    throw ParseError("model JSON needs 'variables' and 'blocks'");

  std::vector<Variable> vars;
  int ord = 0;
  for (const auto& v : j["variables"]) {
    if (!v.contains("name") || !v.contains("cardinality"))
      throw ParseError("variable entries need 'name' and 'cardinality'");
    vars.push_back(Variable{v["name"].get<std::string>(), v["cardinality"].get<int>(), ord++});
  }

  std::vector<ConditionalBlock> blocks;
  for (const auto& b : j["blocks"]) {
    if (!b.contains("id") || !b.contains("target") || !b.contains("predictors") ||
        !b.contains("values"))
      throw ParseError("block entries need 'id', 'target', 'predictors', 'values'");
    const std::string id = b["id"].get<std::string>();
    Scope target = scope_from_names(vars, b["target"], "block '" + id + "'");
    Scope predictors = scope_from_names(vars, b["predictors"], "block '" + id + "'");
    Distribution table = Distribution::conditional(target, predictors,
                                                   values_from_json(b["values"], id));
    if (table.was_renormalized() && report)
      report->warnings.push_back("block '" + id + "': table renormalized (sums off by >1e-12)");
    blocks.push_back(ConditionalBlock{id, std::move(target), std::move(predictors),
                                      std::move(table)});
  }

  CsmModel m(std::move(vars), std::move(blocks));

  if (j.contains("delta")) {
    Scope stored = scope_from_names(m.variables(), j["delta"], "delta");
    if (!stored.same_names(m.delta()))
      throw ValidationError("stored delta " + stored.to_string() +
                            " does not match recomputed delta " + m.delta().to_string());
  }
  if (report) {
    const Scope d = m.delta();
    if (!d.empty()) {
      for (const auto& b : m.blocks())
        if (!d.subset_of(b.predictors)) {
          report->warnings.push_back(
              "delta " + d.to_string() + " is not contained in predictors of block '" + b.id +
              "'; no permissible updating cycle can exist");
          break;
        }
    }
  }
  return m;
}

std::string serialize_model(const CsmModel& m) {
  json j;
  j["variables"] = json::array();
  for (const auto& v : m.variables())
    j["variables"].push_back({{"name", v.name}, {"cardinality", v.cardinality}});
  j["blocks"] = json::array();
  for (const auto& b : m.blocks()) {
    json e;
    e["id"] = b.id;
    e["target"] = b.target.names();
    e["predictors"] = b.predictors.names();
    e["values"] = b.table.values();
    j["blocks"].push_back(std::move(e));
  }
  return j.dump(1);
}

CsmModel load_model(const std::string& path, ValidationReport* report) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open model file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_model(ss.str(), report);
}

Distribution parse_distribution(const std::string& text) {
  const json j = parse_json(text);
  if (!j.is_object() || !j.contains("scope") || !j.contains("values"))
    throw ParseError("distribution JSON needs 'scope' and 'values'");
  std::vector<Variable> vars;
  int ord = 0;
  auto read_vars = [&](const json& arr) {
    std::vector<Variable> out;
    for (const auto& v : arr) {
      if (!v.contains("name") || !v.contains("cardinality"))
        throw ParseError("scope entries need 'name' and 'cardinality'");
      Variable var{v["name"].get<std::string>(), v["cardinality"].get<int>(), ord++};
      vars.push_back(var);
      out.push_back(var);
    }
    return out;
  };
  std::vector<Variable> scope_vars = read_vars(j["scope"]);
  std::vector<Variable> given_vars =
      j.contains("given") ? read_vars(j["given"]) : std::vector<Variable>{};
  return Distribution::conditional(Scope(std::move(scope_vars)), Scope(std::move(given_vars)),
                                   values_from_json(j["values"], "distribution"));
}

std::string serialize_distribution(const Distribution& d) {
  json j;
  j["scope"] = json::array();
  for (const auto& v : d.scope().vars())
    j["scope"].push_back({{"name", v.name}, {"cardinality", v.cardinality}});
  j["given"] = json::array();
  for (const auto& v : d.given().vars())
    j["given"].push_back({{"name", v.name}, {"cardinality", v.cardinality}});
  j["values"] = d.values();
  return j.dump(1);
}

Distribution load_distribution(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open distribution file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_distribution(ss.str());
}

void save_distribution(const Distribution& d, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write '" + path + "'");
  out << serialize_distribution(d) << "\n";
}

// ------------------------------------------------------- derive_csm_from_joint

namespace {

std::string short_name(const std::string& var) {
  if (var.size() > 1 && var[0] == 'x' &&
      var.find_first_not_of("0123456789", 1) == std::string::npos)
    return var.substr(1);
  return var;
}

std::string block_id_for(const std::vector<std::string>& target,
                         const std::vector<std::string>& predictors) {
  std::string id = "f";
  for (const auto& t : target) id += short_name(t);
  if (!predictors.empty()) {
    id += "|";
    for (const auto& p : predictors) id += short_name(p);
  }
  return id;
}

}  // namespace

CsmModel derive_csm_from_joint(const Distribution& joint, const CsmPattern& pattern) {
  if (!joint.given().empty())
    throw ScopeError("derive_csm_from_joint expects an unconditioned joint");
  std::vector<ConditionalBlock> blocks;
  for (const auto& [tnames, pnames] : pattern) {
    std::vector<Variable> tv, pv;
    for (const auto& n : tnames) {
      const int i = joint.scope().index_of(n);
      if (i < 0) throw ScopeError("pattern targets unknown variable '" + n + "'");
      tv.push_back(joint.scope()[static_cast<std::size_t>(i)]);
    }
    for (const auto& n : pnames) {
      const int i = joint.scope().index_of(n);
      if (i < 0) throw ScopeError("pattern predictors unknown variable '" + n + "'");
      pv.push_back(joint.scope()[static_cast<std::size_t>(i)]);
    }
    Scope target(std::move(tv)), predictors(std::move(pv));
    Distribution sub = marginalize(joint, target.set_union(predictors));
    Distribution table = predictors.empty() ? sub : condition(sub, predictors);
    blocks.push_back(ConditionalBlock{block_id_for(tnames, pnames), std::move(target),
                                      std::move(predictors), std::move(table)});
  }
  return CsmModel(joint.scope().vars(), std::move(blocks));
}

}  // namespace icr
