#include "icr/baselines.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <sstream>

namespace icr {

namespace {

constexpr std::size_t kMaxStatesEnumeration = std::size_t{1} << 20;
constexpr std::size_t kMaxStatesDenseMatrix = std::size_t{1} << 11;

Scope model_scope(const CsmModel& m) { return Scope(m.variables()); }

void require_saturated(const CsmModel& m, const char* what) {
  if (classify(m) != ModelClass::saturated)
    throw NotFullConditionalError(std::string(what) + " requires a saturated model");
}

double draw_unit(std::mt19937_64& gen) {
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

double sym_kl_flat(const std::vector<double>& a, const std::vector<double>& b) {
  double fwd = 0.0, bwd = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] > 0.0) {
      if (b[i] == 0.0) return std::numeric_limits<double>::infinity();
      fwd += a[i] * std::log(a[i] / b[i]);
    }
    if (b[i] > 0.0) {
      if (a[i] == 0.0) return std::numeric_limits<double>::infinity();
      bwd += b[i] * std::log(b[i] / a[i]);
    }
  }
  return std::max(fwd, 0.0) + std::max(bwd, 0.0);
}

}  // namespace

std::vector<double> TransitionMatrix::apply(const std::vector<double>& q) const {
  std::vector<double> out(n, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    const double qs = q[s];
    if (qs == 0.0) continue;
    const double* row = rows.data() + s * n;
    for (std::size_t t = 0; t < n; ++t) out[t] += qs * row[t];
  }
  return out;
}

TransitionMatrix transition_matrix(const CsmModel& m, const std::string& block_id) {
  const ConditionalBlock& b = m.block(block_id);
  if (b.coverage().size() != m.variables().size())
    throw NotFullConditionalError("block '" + block_id + "' is not a full conditional");

  TransitionMatrix T;
  T.block_id = block_id;
  T.all_vars = model_scope(m);
  T.n = T.all_vars.cell_count();
  if (T.n > kMaxStatesDenseMatrix)
    throw InstanceTooLargeError("dense transition matrix limited to " +
                                std::to_string(kMaxStatesDenseMatrix) + " states; got " +
                                std::to_string(T.n));
  T.rows.assign(T.n * T.n, 0.0);

  const auto& vars = T.all_vars.vars();
  const std::size_t nv = vars.size();
  std::vector<std::size_t> stride(nv);
  std::size_t s = 1;
  for (std::size_t i = 0; i < nv; ++i) {
    stride[i] = s;
    s *= static_cast<std::size_t>(vars[i].cardinality);
  }
  // positions of target variables within the full axis list
  std::vector<std::size_t> tpos;
  for (std::size_t i = 0; i < nv; ++i)
    if (b.target.contains(vars[i].name)) tpos.push_back(i);

  // stride of each full axis inside the block table (target axes first)
  std::vector<std::size_t> tstride(nv, 0);
  {
    std::vector<Variable> taxes = b.target.vars();
    taxes.insert(taxes.end(), b.predictors.vars().begin(), b.predictors.vars().end());
    std::size_t st = 1;
    std::vector<std::size_t> raw(taxes.size());
    for (std::size_t i = 0; i < taxes.size(); ++i) {
      raw[i] = st;
      st *= static_cast<std::size_t>(taxes[i].cardinality);
    }
    for (std::size_t i = 0; i < nv; ++i)
      for (std::size_t k = 0; k < taxes.size(); ++k)
        if (taxes[k].name == vars[i].name) tstride[i] = raw[k];
  }

  std::vector<bool> is_target(nv, false);
  for (std::size_t p : tpos) is_target[p] = true;

  std::vector<int> digit(nv, 0);
  for (std::size_t state = 0; state < T.n; ++state) {
    std::size_t base_to = 0, base_tidx = 0;
    for (std::size_t k = 0; k < nv; ++k) {
      if (is_target[k]) continue;
      base_to += static_cast<std::size_t>(digit[k]) * stride[k];
      base_tidx += static_cast<std::size_t>(digit[k]) * tstride[k];
    }
    std::vector<int> tdigit(tpos.size(), 0);
    while (true) {
      std::size_t to = base_to, tidx = base_tidx;
      for (std::size_t j = 0; j < tpos.size(); ++j) {
        to += static_cast<std::size_t>(tdigit[j]) * stride[tpos[j]];
        tidx += static_cast<std::size_t>(tdigit[j]) * tstride[tpos[j]];
      }
      T.rows[state * T.n + to] = b.table.values()[tidx];
      std::size_t j = 0;
      for (; j < tpos.size(); ++j) {
        if (++tdigit[j] < vars[tpos[j]].cardinality) break;
        tdigit[j] = 0;
      }
      if (j == tpos.size()) break;
    }
    for (std::size_t k = 0; k < nv; ++k) {
      if (++digit[k] < vars[k].cardinality) break;
      digit[k] = 0;
    }
  }
  return T;
}

namespace {

/// T = T_{o1} ... T_{oL} in update order.
std::vector<double> build_cycle_matrix(const CsmModel& m, const UpdateCycle& order,
                                       std::size_t n) {
  std::vector<double> T;
  for (const auto& id : order.order) {
    const TransitionMatrix Ti = transition_matrix(m, id);
    if (T.empty()) {
      T = Ti.rows;
      continue;
    }
    std::vector<double> next(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < n; ++k) {
        const double v = T[i * n + k];
        if (v == 0.0) continue;
        const double* row = Ti.rows.data() + k * n;
        double* out = next.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) out[j] += v * row[j];
      }
    T = std::move(next);
  }
  return T;
}

struct PowerLoopResult {
  std::vector<double> avg;
  std::vector<double> P;  // matrix power at stop
  int iterations = 0;
  bool converged = false;
};

/// Row averages of T^k until consecutive averages agree below tol.
PowerLoopResult power_loop(const std::vector<double>& T, std::size_t n, double tol,
                           int max_iter) {
  PowerLoopResult res;
  res.P = T;
  res.avg.assign(n, 0.0);
  std::vector<double> prev;
  for (int k = 1; k <= max_iter; ++k) {
    for (std::size_t j = 0; j < n; ++j) res.avg[j] = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) res.avg[j] += res.P[i * n + j];
    for (std::size_t j = 0; j < n; ++j) res.avg[j] /= static_cast<double>(n);
    res.iterations = k;
    if (!prev.empty() && sym_kl_flat(res.avg, prev) < tol) {
      res.converged = true;
      break;
    }
    prev = res.avg;
    std::vector<double> next(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k2 = 0; k2 < n; ++k2) {
        const double v = res.P[i * n + k2];
        if (v == 0.0) continue;
        const double* row = T.data() + k2 * n;
        double* out = next.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) out[j] += v * row[j];
      }
    res.P = std::move(next);
  }
  return res;
}

}  // namespace

PowerResult power_iterate(const CsmModel& m, const UpdateCycle& order, double tol,
                          int max_iter) {
  require_saturated(m, "power_iterate");
  const Scope all = model_scope(m);
  const std::size_t n = all.cell_count();
  if (n > kMaxStatesDenseMatrix)
    throw InstanceTooLargeError("power method limited to " +
                                std::to_string(kMaxStatesDenseMatrix) + " states");

  const std::vector<double> T = build_cycle_matrix(m, order, n);
  PowerLoopResult loop = power_loop(T, n, tol, max_iter);

  PowerResult res{uniform(all), loop.iterations, loop.converged, false, 0.0};
  if (loop.converged) {
    double spread = 0.0;
    for (std::size_t i = 1; i < n; ++i) {
      double tvd = 0.0;
      for (std::size_t j = 0; j < n; ++j) tvd += std::abs(loop.P[i * n + j] - loop.P[j]);
      spread = std::max(spread, 0.5 * tvd);
    }
    res.row_spread = spread;
    res.reducible_warning = spread > 1e-6;
  }
  res.stationary = DistBuilder::make(all, Scope{}, std::move(loop.avg));
  return res;
}

SampleTrace gibbs_sample(const CsmModel& m, const UpdateCycle& order, std::int64_t n,
                         std::int64_t burn_in, std::uint64_t seed) {
  require_saturated(m, "gibbs_sample");
  const Scope all = model_scope(m);
  if (all.cell_count() > kMaxStatesEnumeration)
    throw InstanceTooLargeError("joint state space exceeds 2^20 cells");

  SampleTrace trace;
  trace.seed = seed;
  trace.burn_in = burn_in;
  trace.draws = n;
  trace.scope = all;
  trace.counts.assign(all.cell_count(), 0);
  if (n <= 0) {
    trace.draws = 0;
    return trace;
  }

  const auto& vars = all.vars();
  const std::size_t nv = vars.size();
  std::vector<std::size_t> stride(nv);
  std::size_t s = 1;
  for (std::size_t i = 0; i < nv; ++i) {
    stride[i] = s;
    s *= static_cast<std::size_t>(vars[i].cardinality);
  }

  struct Step {
    const ConditionalBlock* block;
    std::vector<std::size_t> tpos;        // target axes within full list
    std::vector<std::size_t> tstride;     // table stride per full axis
    std::size_t tcells;
  };
  std::vector<Step> steps;
  for (const auto& id : order.order) {
    const ConditionalBlock& b = m.block(id);
    Step st;
    st.block = &b;
    st.tcells = b.target.cell_count();
    std::vector<Variable> taxes = b.target.vars();
    taxes.insert(taxes.end(), b.predictors.vars().begin(), b.predictors.vars().end());
    std::vector<std::size_t> raw(taxes.size());
    std::size_t acc = 1;
    for (std::size_t i = 0; i < taxes.size(); ++i) {
      raw[i] = acc;
      acc *= static_cast<std::size_t>(taxes[i].cardinality);
    }
    st.tstride.assign(nv, 0);
    for (std::size_t i = 0; i < nv; ++i) {
      if (b.target.contains(vars[i].name)) st.tpos.push_back(i);
      for (std::size_t k = 0; k < taxes.size(); ++k)
        if (taxes[k].name == vars[i].name) st.tstride[i] = raw[k];
    }
    steps.push_back(std::move(st));
  }

  std::mt19937_64 gen(seed);
  std::vector<int> state(nv, 0);

  auto scan = [&]() {
    for (const Step& st : steps) {
      // base table index from predictor digits only
      std::size_t base = 0;
      for (std::size_t i = 0; i < nv; ++i)
        if (!st.block->target.contains(vars[i].name))
          base += static_cast<std::size_t>(state[i]) * st.tstride[i];
      const double u = draw_unit(gen);
      // walk target cells in table order (target axes are fastest)
      double cum = 0.0;
      std::size_t pick = st.tcells - 1;
      for (std::size_t k = 0; k < st.tcells; ++k) {
        cum += st.block->table.values()[base + k];
        if (u < cum) {
          pick = k;
          break;
        }
      }
      // write the picked target digits back into the state
      std::size_t rem = pick;
      for (std::size_t j = 0; j < st.tpos.size(); ++j) {
        const std::size_t card =
            static_cast<std::size_t>(vars[st.tpos[j]].cardinality);
        state[st.tpos[j]] = static_cast<int>(rem % card);
        rem /= card;
      }
    }
  };

  for (std::int64_t k = 0; k < burn_in; ++k) scan();
  for (std::int64_t k = 0; k < n; ++k) {
    scan();
    std::size_t idx = 0;
    for (std::size_t i = 0; i < nv; ++i) idx += static_cast<std::size_t>(state[i]) * stride[i];
    ++trace.counts[idx];
  }
  return trace;
}

Distribution SampleTrace::empirical() const {
  if (draws <= 0) throw ValidationError("empirical distribution undefined for an empty trace");
  std::vector<double> vals(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i)
    vals[i] = static_cast<double>(counts[i]) / static_cast<double>(draws);
  return DistBuilder::make(scope, Scope{}, std::move(vals));
}

namespace {

template <typename Fn>
double median_seconds(int reps, Fn&& fn) {
  std::vector<double> times;
  times.reserve(static_cast<std::size_t>(reps));
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    times.push_back(std::chrono::duration<double>(t1 - t0).count());
  }
  std::sort(times.begin(), times.end());
  return times[times.size() / 2];
}

}  // namespace

CompareReport compare_report(const CsmModel& m, const UpdateCycle& order,
                             const BenchConfig& cfg) {
  require_saturated(m, "compare_report");

  IcrConfig icfg;
  icfg.tol_m = cfg.tol;
  icfg.max_cycles = cfg.max_iter;
  IcrRun ref_run = run_icr(m, order, icfg);
  if (!ref_run.converged) throw NotConvergedError("ICR did not converge on the bench model");

  CompareReport rep;
  rep.reference = ref_run.iterates.back();
  const Distribution& ref = rep.reference;

  // ICR trajectory: end-of-cycle iterate vs reference.
  {
    const ConditionalBlock& last = m.block(order.order.back());
    Distribution q = compose(last.table, uniform(last.predictors));
    for (int t = 0; t < ref_run.cycles_run; ++t) {
      for (const auto& id : order.order) q = project(q, m.block(id));
      const double d = symmetric_kl(q, ref);
      rep.rows.push_back({"icr", t, 0, d});
      if (d < cfg.tol) break;
    }
  }
  // Power-method trajectory.
  {
    PowerResult pr = power_iterate(m, order, cfg.tol, cfg.max_iter);
    std::vector<double> T;  // rebuilt below for the per-step distances
    const std::size_t n = ref.size();
    for (const auto& id : order.order) {
      const TransitionMatrix Ti = transition_matrix(m, id);
      if (T.empty()) {
        T = Ti.rows;
        continue;
      }
      std::vector<double> next(n * n, 0.0);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < n; ++k) {
          const double v = T[i * n + k];
          if (v == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) next[i * n + j] += v * Ti.rows[k * n + j];
        }
      T = std::move(next);
    }
    std::vector<double> P = T, avg(n);
    for (int k = 1; k <= pr.iterations; ++k) {
      for (std::size_t j = 0; j < n; ++j) avg[j] = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) avg[j] += P[i * n + j];
      for (std::size_t j = 0; j < n; ++j) avg[j] /= static_cast<double>(n);
      rep.rows.push_back({"power", k, 0, sym_kl_flat(avg, ref.values())});
      if (k == pr.iterations) break;
      std::vector<double> next(n * n, 0.0);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k2 = 0; k2 < n; ++k2) {
          const double v = P[i * n + k2];
          if (v == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) next[i * n + j] += v * T[k2 * n + j];
        }
      P = std::move(next);
    }
  }
  // Gibbs batches: cumulative empirical distributions (same seed, so shorter
  // runs are exact prefixes of the longest one, which is the one timed).
  for (int s = 1; s <= cfg.gs_batches; ++s) {
    const bool full = s == cfg.gs_batches;
    const auto t0 = std::chrono::steady_clock::now();
    SampleTrace part = gibbs_sample(m, order, cfg.gs_batch * s, cfg.gs_burn_in, cfg.seed);
    if (full)
      rep.gs_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rep.rows.push_back({"gs", s, cfg.gs_batch * s, symmetric_kl(part.empirical(), ref)});
  }

  // Wall clocks compare the iteration phases with each method's operators
  // prepared up front (replacement plan for ICR, cycle matrix for the power
  // method); each runs exactly its own stopping rule.
  {
    IcrEngine engine(m, order);
    IcrConfig c = icfg;
    c.polish = false;
    c.track_pi = false;
    rep.icr_seconds = median_seconds(cfg.timing_reps, [&] { (void)engine.run(c); });
  }
  {
    const std::size_t n = ref.size();
    const std::vector<double> T = build_cycle_matrix(m, order, n);
    rep.power_seconds = median_seconds(cfg.timing_reps, [&] {
      (void)power_loop(T, n, cfg.tol, cfg.max_iter);
    });
  }
  return rep;
}

std::string CompareReport::csv() const {
  std::ostringstream os;
  os << "# icr-bench v1\n";
  os << "# rng=" << rng_name << " stream=base_seed (single chain per report)\n";
  os << "method,step,samples,sym_kl\n";
  os.precision(17);
  for (const auto& r : rows)
    os << r.method << "," << r.step << "," << r.samples << "," << r.sym_kl << "\n";
  os << "# seconds icr=" << icr_seconds << " power=" << power_seconds << " gs=" << gs_seconds
     << "\n";
  return os.str();
}

}  // namespace icr
