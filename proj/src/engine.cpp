#include "icr/engine.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>

namespace icr {

namespace {

double clamp0(double x) { return x > 0.0 ? x : 0.0; }

Distribution seed_marginal(const ConditionalBlock& last, const Scope& delta,
                           const InitSpec& init) {
  const Scope free = last.predictors.set_minus(delta);
  switch (init.kind) {
    case InitSpec::Kind::uniform:
      return uniform(free, delta);
    case InitSpec::Kind::seeded: {
      std::mt19937_64 gen(init.seed);
      std::vector<double> vals(free.cell_count() * delta.cell_count());
      for (auto& v : vals)
        v = 0.1 + 0.9 * (static_cast<double>(gen() >> 11) * 0x1.0p-53);
      const std::size_t ns = free.cell_count();
      for (std::size_t s = 0; s < delta.cell_count(); ++s) {
        double sum = 0.0;
        for (std::size_t i = 0; i < ns; ++i) sum += vals[s * ns + i];
        for (std::size_t i = 0; i < ns; ++i) vals[s * ns + i] /= sum;
      }
      return DistBuilder::make(free, delta, std::move(vals));
    }
    case InitSpec::Kind::distribution: {
      Distribution d = *init.dist;
      if (!d.given().empty() && !d.given().subset_of(delta))
        throw ScopeError("init distribution is conditioned on " + d.given().to_string() +
                         " which is not inside delta " + delta.to_string());
      if (!free.subset_of(d.scope()))
        throw ScopeError("init distribution lacks predictors " + free.to_string() +
                         " of the cycle's last block");
      const Scope keep = free.set_union(delta.set_minus(d.given())).set_intersect(d.scope());
      Distribution mg = marginalize(d, keep);
      const Scope missing_delta = delta.set_minus(d.given()).set_intersect(mg.scope());
      if (!missing_delta.empty()) mg = condition(mg, missing_delta);
      return mg;
    }
  }
  throw ScopeError("unreachable init kind");
}

// -------------------------------------------------------------- execution plan
// Every shape in a run is a function of the cycle alone, so all index maps are
// precomputed once and each cycle is flat-buffer arithmetic.

std::vector<Variable> axes_of(const Scope& scope, const Scope& given) {
  std::vector<Variable> axes = scope.vars();
  axes.insert(axes.end(), given.vars().begin(), given.vars().end());
  return axes;
}

std::size_t cells_of(const std::vector<Variable>& axes) {
  std::size_t n = 1;
  for (const auto& v : axes) n *= static_cast<std::size_t>(v.cardinality);
  return n;
}

/// target-flat-index of every cell of `axes` (absent axes stride 0).
std::vector<std::size_t> cell_map(const std::vector<Variable>& axes,
                                  const std::vector<Variable>& target_axes) {
  std::vector<std::size_t> tstride(target_axes.size());
  std::size_t s = 1;
  for (std::size_t i = 0; i < target_axes.size(); ++i) {
    tstride[i] = s;
    s *= static_cast<std::size_t>(target_axes[i].cardinality);
  }
  std::vector<std::size_t> contrib(axes.size(), 0);
  for (std::size_t i = 0; i < axes.size(); ++i)
    for (std::size_t k = 0; k < target_axes.size(); ++k)
      if (target_axes[k].name == axes[i].name) contrib[i] = tstride[k];

  std::vector<std::size_t> out(cells_of(axes));
  std::vector<int> digit(axes.size(), 0);
  for (std::size_t idx = 0; idx < out.size(); ++idx) {
    std::size_t t = 0;
    for (std::size_t a = 0; a < axes.size(); ++a)
      t += static_cast<std::size_t>(digit[a]) * contrib[a];
    out[idx] = t;
    for (std::size_t a = 0; a < axes.size(); ++a) {
      if (++digit[a] < axes[a].cardinality) break;
      digit[a] = 0;
    }
  }
  return out;
}

double kl_flat(const std::vector<double>& p, const std::vector<double>& q) {
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0.0) {
      if (q[i] == 0.0) return std::numeric_limits<double>::infinity();
      acc += p[i] * std::log(p[i] / q[i]);
    }
  return clamp0(acc);
}

/// Symmetric divergence folded into one log per cell:
/// p log(p/q) + q log(q/p) = (p - q) log(p/q).
double sym_kl_flat(const std::vector<double>& p, const std::vector<double>& q) {
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0 && q[i] > 0.0) {
      if (p[i] != q[i]) acc += (p[i] - q[i]) * std::log(p[i] / q[i]);
    } else if (p[i] != q[i]) {
      return std::numeric_limits<double>::infinity();
    }
  }
  return clamp0(acc);
}

/// A marginal comparison inside the M(t) monitor: accumulate both endpoint
/// buffers onto a shared pending scope and take the symmetric divergence.
struct Comparison {
  int before_slot;  // -1 means the incoming q^(Lt) (slot L of the last cycle)
  int after_slot;
  std::vector<std::size_t> before_map, after_map;
  std::size_t cells;
};

struct Step {
  const ConditionalBlock* block;
  std::size_t out_cells;
  Scope out_scope, out_given;
  std::vector<std::size_t> marg_of_prev;  // prev-slot cell -> marginal index
  std::size_t marg_cells;
  std::vector<std::size_t> tbl_of_out, marg_of_out;
};

struct CyclePlan {
  std::vector<Step> steps;
  std::vector<Comparison> m_terms;     // per-step emissions, evaluated in order
  std::vector<int> m_after_step;       // which step each m-term fires after
  bool has_wrap = false;
  Comparison wrap;                      // pending remainder across the cycle end
  std::vector<int> full_slots;          // slots whose scope equals lambda (or -1
                                        // sentinel for the incoming iterate)
  bool pi_fallback = false;
  std::vector<Comparison> pi_pairs;     // fallback: consecutive common scopes
};

CyclePlan build_plan(const std::vector<const ConditionalBlock*>& order, const Scope& delta,
                     const Scope& lambda) {
  const std::size_t L = order.size();
  CyclePlan plan;

  // Slot shapes: slot i holds the iterate after applying order[i]; slot L-1's
  // shape is also the incoming q^(Lt) shape.
  std::vector<Scope> slot_scope(L);
  for (std::size_t i = 0; i < L; ++i)
    slot_scope[i] = order[i]->coverage().set_minus(delta);

  for (std::size_t i = 0; i < L; ++i) {
    const ConditionalBlock* b = order[i];
    const Scope prev = slot_scope[(i + L - 1) % L];
    const Scope need = b->predictors.set_minus(delta);
    if (!need.subset_of(prev))
      throw ScopeError("project: predictors " + b->predictors.to_string() +
                       " not available in iterate over " + prev.to_string());
    Step st;
    st.block = b;
    st.out_scope = slot_scope[i];
    st.out_given = delta;
    const auto prev_axes = axes_of(prev, delta);
    const auto marg_axes = axes_of(need, delta);
    const auto out_axes = axes_of(st.out_scope, delta);
    st.marg_of_prev = cell_map(prev_axes, marg_axes);
    st.marg_cells = cells_of(marg_axes);
    st.out_cells = cells_of(out_axes);
    std::vector<Variable> tbl_axes = b->target.vars();
    tbl_axes.insert(tbl_axes.end(), b->predictors.vars().begin(), b->predictors.vars().end());
    st.tbl_of_out = cell_map(out_axes, tbl_axes);
    st.marg_of_out = cell_map(out_axes, marg_axes);
    plan.steps.push_back(std::move(st));
  }

  // M(t) anchor pattern: emit whenever the iterate returns to the anchor's
  // scope with all replaced variables visible; whatever is left at the end of
  // the cycle is compared across the wrap on the shared part.
  {
    int anchor = -1;  // -1 = incoming iterate, shape slot_scope[L-1]
    Scope anchor_scope = slot_scope[L - 1];
    Scope pending;
    for (std::size_t i = 0; i < L; ++i) {
      pending = pending.set_union(order[i]->target);
      if (slot_scope[i].same_names(anchor_scope) && pending.subset_of(slot_scope[i])) {
        Comparison c;
        c.before_slot = anchor;
        c.after_slot = static_cast<int>(i);
        const auto paxes = axes_of(pending, delta);
        c.before_map = cell_map(axes_of(anchor_scope, delta), paxes);
        c.after_map = cell_map(axes_of(slot_scope[i], delta), paxes);
        c.cells = cells_of(paxes);
        plan.m_terms.push_back(std::move(c));
        plan.m_after_step.push_back(static_cast<int>(i));
        anchor = static_cast<int>(i);
        anchor_scope = slot_scope[i];
        pending = Scope{};
      }
    }
    if (!pending.empty()) {
      const Scope common =
          pending.set_intersect(anchor_scope).set_intersect(slot_scope[L - 1]);
      if (!common.empty()) {
        plan.has_wrap = true;
        plan.wrap.before_slot = anchor;
        plan.wrap.after_slot = static_cast<int>(L - 1);
        const auto caxes = axes_of(common, delta);
        plan.wrap.before_map = cell_map(axes_of(anchor_scope, delta), caxes);
        plan.wrap.after_map = cell_map(axes_of(slot_scope[L - 1], delta), caxes);
        plan.wrap.cells = cells_of(caxes);
      }
    }
  }

  // Pi(t): consecutive full-scope iterates in the inclusive window; with
  // fewer than two full slots, consecutive pairs on common scopes.
  {
    if (slot_scope[L - 1].same_names(lambda)) plan.full_slots.push_back(-1);
    for (std::size_t i = 0; i < L; ++i)
      if (slot_scope[i].same_names(lambda)) plan.full_slots.push_back(static_cast<int>(i));
    if (plan.full_slots.size() < 2) {
      plan.pi_fallback = true;
      for (std::size_t i = 0; i < L; ++i) {
        const Scope before = slot_scope[(i + L - 1) % L];
        const Scope common = before.set_intersect(slot_scope[i]);
        if (common.empty()) continue;
        Comparison c;
        c.before_slot = i == 0 ? -1 : static_cast<int>(i - 1);
        c.after_slot = static_cast<int>(i);
        const auto caxes = axes_of(common, delta);
        c.before_map = cell_map(axes_of(before, delta), caxes);
        c.after_map = cell_map(axes_of(slot_scope[i], delta), caxes);
        c.cells = cells_of(caxes);
        plan.pi_pairs.push_back(std::move(c));
      }
    }
  }
  return plan;
}

}  // namespace

const char* verdict_name(Verdict v) {
  switch (v) {
    case Verdict::compatible: return "compatible";
    case Verdict::incompatible: return "incompatible";
    case Verdict::undetermined: return "undetermined";
  }
  return "undetermined";
}

Distribution project(const Distribution& q, const ConditionalBlock& block) {
  const Scope needed = block.predictors.set_minus(q.given());
  if (!needed.subset_of(q.scope()))
    throw ScopeError("project: predictors " + block.predictors.to_string() +
                     " not available in iterate over " + q.scope().to_string() + "|" +
                     q.given().to_string());
  if (needed.same_names(q.scope()))
    return compose(block.table, q);  // no marginalization required
  return compose(block.table, marginalize(q, needed));
}

struct IcrEngine::Impl {
  const CsmModel* model;
  UpdateCycle cycle;
  std::vector<const ConditionalBlock*> order;
  Scope delta, lambda;
  CyclePlan plan;
  std::vector<double> q0_uniform;  // seed values for the default init
};

IcrEngine::IcrEngine(const CsmModel& m, const UpdateCycle& cycle)
    : impl_(std::make_unique<Impl>()) {
  impl_->model = &m;
  // Re-validate the order against this model unless it already carries a full
  // set of verified edges; throws NoCycle when impermissible.
  const bool prechecked =
      cycle.edges.size() == cycle.order.size() && !cycle.order.empty() &&
      std::all_of(cycle.edges.begin(), cycle.edges.end(),
                  [](const EdgeCheck& e) { return e.permissible; });
  impl_->cycle = prechecked ? cycle : make_cycle(m, cycle.order);
  impl_->order.reserve(impl_->cycle.order.size());
  for (const auto& id : impl_->cycle.order) impl_->order.push_back(&m.block(id));
  impl_->delta = m.delta();
  Scope lambda;
  for (const auto* b : impl_->order) lambda = lambda.set_union(b->coverage());
  impl_->lambda = lambda.set_minus(impl_->delta);
  impl_->plan = build_plan(impl_->order, impl_->delta, impl_->lambda);
  impl_->q0_uniform =
      compose(impl_->order.back()->table,
              seed_marginal(*impl_->order.back(), impl_->delta, InitSpec::make_uniform()))
          .values();
}

IcrEngine::~IcrEngine() = default;
IcrEngine::IcrEngine(IcrEngine&&) noexcept = default;
IcrEngine& IcrEngine::operator=(IcrEngine&&) noexcept = default;

IcrRun IcrEngine::run(const IcrConfig& cfg) const {
  if (cfg.tol_m <= 0 || cfg.tol_pi <= 0) throw ValidationError("tolerances must be positive");
  if (cfg.max_cycles < 1) throw ValidationError("max_cycles must be >= 1");
  const CyclePlan& plan = impl_->plan;
  const auto& order = impl_->order;
  const std::size_t L = order.size();

  IcrRun run;
  run.cycle = impl_->cycle;
  run.delta = impl_->delta;
  run.lambda = impl_->lambda;

  // Seed slot L-1 with a member of its space built from the init marginal.
  // Scratch buffers are thread_local: concurrent runs stay independent.
  thread_local std::vector<std::vector<double>> slot;
  thread_local std::vector<double> incoming, marg, cmp_a, cmp_b;
  slot.resize(L);
  for (std::size_t i = 0; i < L; ++i) slot[i].assign(plan.steps[i].out_cells, 0.0);
  if (cfg.init.kind == InitSpec::Kind::uniform) {
    slot[L - 1] = impl_->q0_uniform;
  } else {
    slot[L - 1] =
        compose(order.back()->table, seed_marginal(*order.back(), run.delta, cfg.init))
            .values();
  }
  incoming = slot[L - 1];  // q^(Lt): last slot at window start

  auto buffer_of = [&](int slot_idx) -> const std::vector<double>& {
    return slot_idx < 0 ? incoming : slot[static_cast<std::size_t>(slot_idx)];
  };

  auto compare = [&](const Comparison& c, bool symmetric) {
    const auto& a = buffer_of(c.before_slot);
    const auto& b = buffer_of(c.after_slot);
    cmp_a.assign(c.cells, 0.0);
    cmp_b.assign(c.cells, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) cmp_a[c.before_map[i]] += a[i];
    for (std::size_t i = 0; i < b.size(); ++i) cmp_b[c.after_map[i]] += b[i];
    return symmetric ? sym_kl_flat(cmp_a, cmp_b) : kl_flat(cmp_a, cmp_b);
  };

  bool stop_next = false;
  int extra = 0;

  for (int t = 0; t < cfg.max_cycles; ++t) {
    incoming = slot[L - 1];
    double mt = 0.0;
    std::size_t m_term = 0;
    double pt = 0.0;
    std::size_t full_seen = 0;
    int prev_full = -2;  // -2: no full iterate seen yet in this window
    if (!plan.full_slots.empty() && plan.full_slots.front() == -1) {
      prev_full = -1;
      full_seen = 1;
    }

    for (std::size_t i = 0; i < L; ++i) {
      const Step& st = plan.steps[i];
      const auto& prev = i == 0 ? incoming : slot[i - 1];
      marg.assign(st.marg_cells, 0.0);
      for (std::size_t c = 0; c < prev.size(); ++c) marg[st.marg_of_prev[c]] += prev[c];
      auto& out = slot[i];
      const auto& tbl = st.block->table.values();
      for (std::size_t c = 0; c < st.out_cells; ++c)
        out[c] = tbl[st.tbl_of_out[c]] * marg[st.marg_of_out[c]];

      while (m_term < plan.m_terms.size() &&
             plan.m_after_step[m_term] == static_cast<int>(i)) {
        mt += clamp0(compare(plan.m_terms[m_term], /*symmetric=*/true));
        ++m_term;
      }
      if (cfg.track_pi && !plan.pi_fallback && full_seen < plan.full_slots.size() &&
          plan.full_slots[full_seen] == static_cast<int>(i)) {
        if (prev_full != -2) pt += kl_flat(buffer_of(prev_full), slot[i]);
        prev_full = static_cast<int>(i);
        ++full_seen;
      }
    }
    if (plan.has_wrap) mt += clamp0(compare(plan.wrap, /*symmetric=*/true));
    if (cfg.track_pi && plan.pi_fallback)
      for (const auto& pair : plan.pi_pairs) pt += compare(pair, /*symmetric=*/false);

    run.m_trace.push_back(mt);
    if (cfg.track_pi) run.pi_trace.push_back(clamp0(pt));
    run.cycles_run = t + 1;

    if (!run.converged && mt < cfg.tol_m) {
      run.converged = true;
      run.stop_cycle = t;
      if (!cfg.polish) break;
    } else if (run.converged && cfg.polish) {
      ++extra;
      const double prev_m = run.m_trace[run.m_trace.size() - 2];
      const bool floored = mt == 0.0 || mt >= prev_m;
      // Six extra cycles keep the whole plateau window past convergence.
      if ((floored && extra >= 6) || extra >= cfg.polish_max_extra) stop_next = true;
    }
    if (stop_next) break;
  }

  run.iterates.reserve(L);
  for (std::size_t i = 0; i < L; ++i)
    run.iterates.push_back(DistBuilder::make(plan.steps[i].out_scope,
                                             plan.steps[i].out_given,
                                             std::vector<double>(slot[i])));

  run.compatibility = check_compatibility(run, cfg.tol_pi);
  return run;
}

IcrRun run_icr(const CsmModel& m, const UpdateCycle& cycle, const IcrConfig& cfg) {
  return IcrEngine(m, cycle).run(cfg);
}

Verdict check_compatibility(const IcrRun& run, double tol_pi) {
  if (!run.converged || run.pi_trace.empty()) return Verdict::undetermined;
  const double last = run.pi_trace.back();
  if (std::isfinite(last) && last < tol_pi) return Verdict::compatible;

  // Plateau: relative change below 1e-6 across the last five cycle pairs
  // while the divergence stays above tol_pi.
  constexpr int kWindow = 5;
  constexpr double kRelTol = 1e-6;
  const int n = static_cast<int>(run.pi_trace.size());
  if (n < kWindow + 1) return Verdict::undetermined;
  for (int k = n - kWindow; k < n; ++k) {
    const double a = run.pi_trace[static_cast<std::size_t>(k - 1)];
    const double b = run.pi_trace[static_cast<std::size_t>(k)];
    if (std::isinf(a) && std::isinf(b)) continue;  // persistently disjoint supports
    if (!(a > tol_pi && b > tol_pi)) return Verdict::undetermined;
    if (std::abs(a - b) / std::max(b, 1e-300) >= kRelTol) return Verdict::undetermined;
  }
  return Verdict::incompatible;
}

StationarySet stationary_set(const CsmModel& m, const IcrRun& run, double tol_pi) {
  if (!run.converged)
    throw NotConvergedError("stationary set requested from a non-converged run");
  StationarySet s;
  s.cycle = run.cycle;
  s.members = run.iterates;
  const std::size_t L = run.iterates.size();
  for (std::size_t i = 0; i < L; ++i) {
    std::string rot = "(";
    for (std::size_t k = 1; k <= L; ++k) {
      if (k > 1) rot += ",";
      rot += run.cycle.order[(i + k) % L];
    }
    s.rotations.push_back(rot + ")");
  }
  // Mutual stationarity: one replacement maps each member onto the next.
  for (std::size_t i = 0; i < L; ++i) {
    const ConditionalBlock& next = m.block(run.cycle.order[(i + 1) % L]);
    const double d = symmetric_kl(project(s.members[i], next), s.members[(i + 1) % L]);
    if (!(d <= 10.0 * tol_pi))
      throw NotConvergedError("stationary set failed mutual stationarity at slot " +
                              std::to_string(i) + ": divergence " + std::to_string(d));
  }
  return s;
}

}  // namespace icr
