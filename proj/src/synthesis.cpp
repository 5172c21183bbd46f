#include "icr/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "icr/cycles.hpp"

namespace icr {

using nlohmann::json;

// ---------------------------------------------------------------- plan JSON

SynthesisPlan parse_plan(const std::string& text) {
  json j = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) throw ParseError("malformed plan JSON");
  if (!j.is_object() || !j.contains("phases") || !j["phases"].is_array())
    throw ParseError("plan JSON needs a 'phases' array");

  SynthesisPlan plan;
  for (const auto& p : j["phases"]) {
    if (!p.contains("id") || !p.contains("mode") || !p.contains("group"))
      throw ParseError("each phase needs 'id', 'mode', 'group'");
    Phase ph;
    ph.id = p["id"].get<std::string>();
    const std::string mode = p["mode"].get<std::string>();
    if (mode == "icr") ph.mode = PhaseMode::icr;
    else if (mode == "compose") ph.mode = PhaseMode::compose;
    else if (mode == "ipf") ph.mode = PhaseMode::ipf;
    else throw ParseError("phase '" + ph.id + "': unknown mode '" + mode + "'");
    for (const auto& g : p["group"]) ph.group.push_back(g.get<std::string>());

    const json params = p.contains("params") ? p["params"] : json::object();
    if (params.contains("cycle"))
      ph.cycle = params["cycle"].get<std::vector<std::string>>();
    if (params.contains("pick")) ph.pick = params["pick"].get<std::string>();
    if (params.contains("cond")) ph.cond = params["cond"].get<std::string>();
    if (params.contains("assumption")) ph.assumption = params["assumption"].get<std::string>();
    if (params.contains("offsets")) ph.offsets = params["offsets"].get<std::vector<double>>();
    if (params.contains("tol")) ph.ipf_tol = params["tol"].get<double>();
    if (params.contains("max_iter")) ph.ipf_max_iter = params["max_iter"].get<int>();
    plan.phases.push_back(std::move(ph));
  }
  return plan;
}

SynthesisPlan load_plan(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open plan file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_plan(ss.str());
}

// ---------------------------------------------------------------- IPF

Distribution ipf_fit(const std::vector<Distribution>& target_marginals,
                     const Distribution& init, double tol, int max_iter) {
  if (target_marginals.empty()) throw ValidationError("ipf_fit needs at least one target");
  for (const auto& t : target_marginals) {
    if (!t.given().empty()) throw ScopeError("ipf targets must be unconditioned marginals");
    if (!t.scope().subset_of(init.scope()))
      throw ScopeError("ipf target over " + t.scope().to_string() +
                       " is outside the init scope " + init.scope().to_string());
  }
  if (!init.given().empty()) throw ScopeError("ipf init must be unconditioned");

  // Pairwise consistency on shared sub-margins.
  for (std::size_t i = 0; i < target_marginals.size(); ++i)
    for (std::size_t j = i + 1; j < target_marginals.size(); ++j) {
      const Scope common =
          target_marginals[i].scope().set_intersect(target_marginals[j].scope());
      if (common.empty()) continue;
      const Distribution a = marginalize(target_marginals[i], common);
      const Distribution b = marginalize(target_marginals[j], common);
      double l1 = 0.0;
      const auto map = detail::aligned_strides(a, b);
      for (std::size_t c = 0; c < a.size(); ++c) l1 += std::abs(a.values()[c] - b.values()[c]);
      (void)map;  // scopes share canonical order within one universe
      if (l1 > 1e-8)
        throw InconsistentError("ipf targets disagree on " + common.to_string() +
                                " (L1 " + std::to_string(l1) + ")");
    }

  // Work on a raw copy; intermediate states are not normalized distributions.
  std::vector<double> cur = init.values();
  const Scope full = init.scope();
  const auto& axes = full.vars();
  std::vector<std::size_t> stride(axes.size());
  {
    std::size_t s = 1;
    for (std::size_t i = 0; i < axes.size(); ++i) {
      stride[i] = s;
      s *= static_cast<std::size_t>(axes[i].cardinality);
    }
  }

  struct Target {
    const Distribution* dist;
    std::vector<std::size_t> contrib;  // full axis -> target stride (0 if absent)
    std::size_t cells;
  };
  std::vector<Target> targets;
  for (const auto& t : target_marginals) {
    Target tg{&t, std::vector<std::size_t>(axes.size(), 0), t.size()};
    std::vector<std::size_t> tstride(t.scope().size());
    std::size_t s = 1;
    for (std::size_t i = 0; i < t.scope().size(); ++i) {
      tstride[i] = s;
      s *= static_cast<std::size_t>(t.scope()[i].cardinality);
    }
    for (std::size_t i = 0; i < axes.size(); ++i) {
      const int k = t.scope().index_of(axes[i].name);
      if (k >= 0) tg.contrib[i] = tstride[static_cast<std::size_t>(k)];
    }
    targets.push_back(std::move(tg));
  }

  const std::size_t n = cur.size();
  std::vector<int> digit(axes.size());
  std::vector<std::size_t> cellmap(n);
  std::vector<double> margin;

  auto fill_cellmap = [&](const Target& tg) {
    std::fill(digit.begin(), digit.end(), 0);
    for (std::size_t idx = 0; idx < n; ++idx) {
      std::size_t mi = 0;
      for (std::size_t a = 0; a < axes.size(); ++a)
        mi += static_cast<std::size_t>(digit[a]) * tg.contrib[a];
      cellmap[idx] = mi;
      for (std::size_t a = 0; a < axes.size(); ++a) {
        if (++digit[a] < axes[a].cardinality) break;
        digit[a] = 0;
      }
    }
  };

  for (int it = 0; it < max_iter; ++it) {
    for (const Target& tg : targets) {
      fill_cellmap(tg);
      margin.assign(tg.cells, 0.0);
      for (std::size_t idx = 0; idx < n; ++idx) margin[cellmap[idx]] += cur[idx];
      for (std::size_t idx = 0; idx < n; ++idx) {
        const double mv = margin[cellmap[idx]];
        const double tv = tg.dist->values()[cellmap[idx]];
        cur[idx] = mv > 0.0 ? cur[idx] * (tv / mv) : 0.0;
      }
    }
    double worst = 0.0;
    for (const Target& tg : targets) {
      fill_cellmap(tg);
      margin.assign(tg.cells, 0.0);
      for (std::size_t idx = 0; idx < n; ++idx) margin[cellmap[idx]] += cur[idx];
      double l1 = 0.0;
      for (std::size_t c = 0; c < tg.cells; ++c)
        l1 += std::abs(margin[c] - tg.dist->values()[c]);
      worst = std::max(worst, l1);
    }
    if (worst < tol) return DistBuilder::make(full, Scope{}, std::move(cur));
  }
  throw NotConvergedError("ipf did not reach tol within " + std::to_string(max_iter) +
                          " iterations");
}

// ---------------------------------------------------------------- run_plan

namespace {

struct Registry {
  const CsmModel* model;
  std::map<std::string, Distribution> dists;

  bool is_block(const std::string& id) const { return model->block_index(id) >= 0; }

  /// Input as a distribution (block tables included).
  const Distribution& dist(const std::string& id) const {
    auto it = dists.find(id);
    if (it != dists.end()) return it->second;
    if (is_block(id)) return model->block(id).table;
    throw PhaseError("unknown input '" + id + "'");
  }

  /// Input as a conditional block (intermediates become blocks with
  /// target = scope, predictors = given).
  ConditionalBlock as_block(const std::string& id) const {
    if (is_block(id)) return model->block(id);
    const Distribution& d = dist(id);
    return ConditionalBlock{id, d.scope(), d.given(), d};
  }
};

Distribution plan_compose(const Registry& reg, const Phase& ph) {
  if (ph.group.size() != 2)
    throw PhaseError("compose phase '" + ph.id + "' needs exactly two inputs");
  const Distribution& a = reg.dist(ph.group[0]);
  const Distribution& b = reg.dist(ph.group[1]);

  auto try_pair = [](const Distribution& cond, const Distribution& marg)
      -> std::optional<Distribution> {
    if (cond.given().empty()) return std::nullopt;
    if (!marg.given().subset_of(cond.given())) return std::nullopt;
    const Scope need = cond.given().set_minus(marg.given());
    if (!need.subset_of(marg.scope())) return std::nullopt;
    // auto-marginalize the supplier down to exactly what the conditional needs
    return compose(cond, marginalize(marg, need));
  };

  if (ph.cond) {
    const bool first = *ph.cond == ph.group[0];
    if (!first && *ph.cond != ph.group[1])
      throw PhaseError("compose phase '" + ph.id + "': cond names an absent input");
    auto r = first ? try_pair(a, b) : try_pair(b, a);
    if (!r) throw PhaseError("compose phase '" + ph.id + "': scopes do not line up");
    return *r;
  }
  auto r1 = try_pair(a, b);
  auto r2 = try_pair(b, a);
  if (r1 && r2)
    throw PhaseError("compose phase '" + ph.id +
                     "' is ambiguous; set params.cond to the conditional input");
  if (r1) return *r1;
  if (r2) return *r2;
  throw PhaseError("compose phase '" + ph.id + "': no orientation lines up");
}

}  // namespace

std::vector<Intermediate> run_plan(const CsmModel& m, const SynthesisPlan& plan,
                                   const IcrConfig& cfg) {
  Registry reg{&m, {}};
  std::vector<Intermediate> out;
  const Scope all_vars = Scope(m.variables());

  auto publish = [&](const std::string& id, Distribution d, const std::string& prov) {
    const bool full = d.given().empty() && d.scope().same_names(all_vars);
    reg.dists.insert_or_assign(id, d);
    out.push_back(Intermediate{id, std::move(d), prov, full});
  };

  for (const Phase& ph : plan.phases) {
    try {
      switch (ph.mode) {
        case PhaseMode::icr: {
          std::vector<ConditionalBlock> blocks;
          for (const auto& id : ph.group) blocks.push_back(reg.as_block(id));
          CsmModel sub(m.variables(), std::move(blocks));
          UpdateCycle cycle;
          if (ph.cycle) {
            cycle = make_cycle(sub, *ph.cycle);
          } else {
            auto found = enumerate_cycles(sub, 1);
            if (found.empty())
              throw NoCycleError("group has no permissible updating cycle");
            cycle = std::move(found[0]);
          }
          IcrRun run = run_icr(sub, cycle, cfg);
          if (!run.converged)
            throw NotConvergedError("icr phase did not converge within max_cycles");
          StationarySet st = stationary_set(sub, run, cfg.tol_pi);
          // publish each slot, then the picked one under the phase id
          int picked = -1;
          std::size_t best_scope = 0;
          for (std::size_t i = 0; i < st.members.size(); ++i) {
            publish(ph.id + ":" + cycle.order[i], st.members[i],
                    ph.id + " icr rotation " + st.rotations[i]);
            const std::size_t sz = st.members[i].scope().size();
            if (ph.pick ? (cycle.order[i] == *ph.pick) : (sz > best_scope)) {
              picked = static_cast<int>(i);
              best_scope = sz;
            }
          }
          if (picked < 0) throw PhaseError("pick '" + *ph.pick + "' is not in the group");
          publish(ph.id, st.members[static_cast<std::size_t>(picked)],
                  ph.id + " icr rotation " + st.rotations[static_cast<std::size_t>(picked)]);
          break;
        }
        case PhaseMode::compose:
          publish(ph.id, plan_compose(reg, ph), ph.id + " compose");
          break;
        case PhaseMode::ipf: {
          if (ph.assumption.empty())
            throw PhaseError("ipf phase must declare its interaction assumption explicitly");
          std::vector<Distribution> targets;
          Scope union_scope;
          for (const auto& id : ph.group) {
            targets.push_back(reg.dist(id));
            union_scope = union_scope.set_union(targets.back().scope());
          }
          Distribution init = uniform(union_scope);
          if (ph.assumption == "offsets") {
            if (ph.offsets.size() != union_scope.cell_count())
              throw PhaseError("offsets length does not match the union scope");
            std::vector<double> vals(ph.offsets.size());
            double sum = 0.0;
            for (std::size_t i = 0; i < vals.size(); ++i) sum += (vals[i] = std::exp(ph.offsets[i]));
            for (auto& v : vals) v /= sum;
            init = DistBuilder::make(union_scope, Scope{}, std::move(vals));
          } else if (ph.assumption != "zero-three-way") {
            throw PhaseError("unknown ipf assumption '" + ph.assumption + "'");
          }
          publish(ph.id, ipf_fit(targets, init, ph.ipf_tol, ph.ipf_max_iter),
                  ph.id + " ipf assumption=" + ph.assumption);
          break;
        }
      }
    } catch (const PhaseError&) {
      throw;
    } catch (const Error& e) {
      throw PhaseError("phase '" + ph.id + "': " + std::string(e.kind_name()) + ": " +
                       e.what());
    }
  }
  return out;
}

// ------------------------------------------------------- validate_sufficiency

SufficiencyReport validate_sufficiency(const CsmModel& m, const SynthesisPlan& plan) {
  SufficiencyReport rep;
  const Scope all_vars = Scope(m.variables());

  struct Sym {
    Scope scope, given;
    bool assumed = false;  // depends on an interaction assumption somewhere upstream
  };
  std::map<std::string, Sym> syms;

  auto resolve = [&](const std::string& id) -> std::optional<Sym> {
    auto it = syms.find(id);
    if (it != syms.end()) return it->second;
    const int bi = m.block_index(id);
    if (bi < 0) return std::nullopt;
    const auto& b = m.blocks()[static_cast<std::size_t>(bi)];
    return Sym{b.target, b.predictors, false};
  };

  for (const Phase& ph : plan.phases) {
    std::vector<Sym> inputs;
    bool missing = false;
    for (const auto& id : ph.group) {
      auto s = resolve(id);
      if (!s) {
        rep.flags.push_back({ph.id, "input '" + id + "' is not a block or earlier output"});
        missing = true;
        break;
      }
      inputs.push_back(*s);
    }
    if (missing) continue;
    const bool any_assumed =
        std::any_of(inputs.begin(), inputs.end(), [](const Sym& s) { return s.assumed; });

    switch (ph.mode) {
      case PhaseMode::icr: {
        std::vector<ConditionalBlock> blocks;
        bool buildable = true;
        for (std::size_t i = 0; i < inputs.size(); ++i) {
          // scope bookkeeping only; tables are irrelevant for cycle checks
          const std::string& id = ph.group[i];
          if (m.block_index(id) >= 0) {
            blocks.push_back(m.block(id));
          } else {
            auto it = syms.find(id);
            // synthesize a placeholder with a uniform table
            blocks.push_back(ConditionalBlock{id, it->second.scope, it->second.given,
                                              uniform(it->second.scope, it->second.given)});
          }
          if (blocks.back().target.empty()) buildable = false;
        }
        Scope cover, targets, preds;
        for (const auto& b : blocks) {
          cover = cover.set_union(b.coverage());
          targets = targets.set_union(b.target);
          preds = preds.set_union(b.predictors);
        }
        const Scope delta = preds.set_minus(targets);
        bool has_cycle = false;
        if (buildable) {
          try {
            CsmModel sub(m.variables(), blocks);
            has_cycle = ph.cycle ? (make_cycle(sub, *ph.cycle), true)
                                 : has_cycle_through_all(sub);
          } catch (const Error&) {
            has_cycle = false;
          }
        }
        if (!has_cycle)
          rep.flags.push_back({ph.id, "group has no permissible updating cycle"});
        syms[ph.id] = Sym{cover.set_minus(delta), delta, any_assumed};
        // per-slot outputs share the phase's assumption status
        for (const auto& b : blocks)
          syms[ph.id + ":" + b.id] =
              Sym{b.coverage().set_minus(delta), delta, any_assumed};
        break;
      }
      case PhaseMode::compose: {
        if (inputs.size() != 2) {
          rep.flags.push_back({ph.id, "compose needs exactly two inputs"});
          break;
        }
        // Mirror the runtime orientation rule: the conditional's predictors
        // are fed by the other input, which gets marginalized down to them.
        auto orient = [](const Sym& c, const Sym& o) -> std::optional<Sym> {
          if (c.given.empty()) return std::nullopt;
          if (!o.given.subset_of(c.given)) return std::nullopt;
          const Scope need = c.given.set_minus(o.given);
          if (!need.subset_of(o.scope)) return std::nullopt;
          return Sym{c.scope.set_union(need), o.given, c.assumed || o.assumed};
        };
        std::optional<Sym> r;
        if (ph.cond) {
          r = (*ph.cond == ph.group[0]) ? orient(inputs[0], inputs[1])
                                        : orient(inputs[1], inputs[0]);
        } else {
          auto r1 = orient(inputs[0], inputs[1]);
          auto r2 = orient(inputs[1], inputs[0]);
          r = r1 ? r1 : r2;
          if (r1 && r2)
            rep.flags.push_back({ph.id, "compose orientation is ambiguous; set params.cond"});
        }
        if (!r) {
          rep.flags.push_back({ph.id, "compose inputs' scopes do not line up"});
          break;
        }
        syms[ph.id] = *r;
        break;
      }
      case PhaseMode::ipf: {
        Scope scope;
        for (const auto& s : inputs) scope = scope.set_union(s.scope);
        if (ph.assumption.empty()) {
          rep.flags.push_back(
              {ph.id, "ipf phase does not declare its interaction assumption"});
          syms[ph.id] = Sym{scope, Scope{}, true};
        } else {
          rep.flags.push_back(
              {ph.id, "output over " + scope.to_string() +
                          " is assumption-dependent (" + ph.assumption +
                          "); the model does not determine it"});
          syms[ph.id] = Sym{scope, Scope{}, true};
        }
        break;
      }
    }
  }

  for (const auto& [id, s] : syms)
    if (s.given.empty() && s.scope.same_names(all_vars)) rep.reaches_full_joint = true;

  rep.sufficient = rep.reaches_full_joint && rep.flags.empty();
  return rep;
}

}  // namespace icr
