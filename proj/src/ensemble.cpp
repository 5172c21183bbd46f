#include "icr/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>

#include "icr/cycles.hpp"

namespace icr {

Deviance deviance_from_name(const std::string& name) {
  if (name == "kl") return Deviance::kl;
  if (name == "x2") return Deviance::pearson_x2;
  if (name == "f2") return Deviance::freeman_tukey_f2;
  throw ValidationError("unknown deviance measure '" + name + "' (use kl, x2 or f2)");
}

const char* deviance_name(Deviance d) {
  switch (d) {
    case Deviance::kl: return "kl";
    case Deviance::pearson_x2: return "x2";
    case Deviance::freeman_tukey_f2: return "f2";
  }
  return "kl";
}

Ensemble collect_ensemble(const CsmModel& m, std::size_t cycle_limit, const IcrConfig& cfg) {
  Ensemble e;
  const auto cycles = enumerate_cycles(m, cycle_limit);
  if (cycles.empty()) throw NoCycleError("model has no permissible updating cycle");
  for (const auto& cyc : cycles) {
    IcrRun run = run_icr(m, cyc, cfg);
    if (!run.converged)
      throw NotConvergedError("ensemble member run did not converge");
    StationarySet st = stationary_set(m, run, cfg.tol_pi);
    std::string order = "<<";
    for (std::size_t i = 0; i < cyc.order.size(); ++i)
      order += (i ? "," : "") + cyc.order[i];
    order += ">>";
    for (std::size_t i = 0; i < st.members.size(); ++i) {
      if (!st.members[i].scope().same_names(run.lambda)) continue;
      e.members.push_back(st.members[i]);
      e.sources.push_back("cycle " + order + " rotation " + st.rotations[i]);
    }
  }
  return e;
}

namespace {

std::vector<Variable> axes_of(const Distribution& d) {
  std::vector<Variable> axes = d.scope().vars();
  axes.insert(axes.end(), d.given().vars().begin(), d.given().vars().end());
  return axes;
}

std::vector<std::size_t> strides_of(const std::vector<Variable>& axes) {
  std::vector<std::size_t> st(axes.size());
  std::size_t s = 1;
  for (std::size_t i = 0; i < axes.size(); ++i) {
    st[i] = s;
    s *= static_cast<std::size_t>(axes[i].cardinality);
  }
  return st;
}

/// Flat index of each cell of `axes` inside a distribution over a sub-list of
/// those axes (absent axes contribute stride 0).
std::vector<std::size_t> cell_map(const std::vector<Variable>& axes,
                                  const std::vector<Variable>& target_axes) {
  const auto tst = strides_of(target_axes);
  std::vector<std::size_t> contrib(axes.size(), 0);
  for (std::size_t i = 0; i < axes.size(); ++i)
    for (std::size_t k = 0; k < target_axes.size(); ++k)
      if (target_axes[k].name == axes[i].name) contrib[i] = tst[k];

  std::size_t n = 1;
  for (const auto& v : axes) n *= static_cast<std::size_t>(v.cardinality);
  std::vector<std::size_t> out(n);
  std::vector<int> digit(axes.size(), 0);
  for (std::size_t idx = 0; idx < n; ++idx) {
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

/// Precomputed per-block index maps so a deviance evaluation is plain array
/// arithmetic over the mixture's cell values.
class DevianceEvaluator {
 public:
  DevianceEvaluator(const Distribution& prototype, const CsmModel& m) {
    const auto mix_axes = axes_of(prototype);
    for (const auto& b : m.blocks()) {
      Block blk;
      blk.id = b.id;
      blk.table = &b.table.values();
      const Scope free = b.predictors.set_minus(prototype.given());
      if (!free.subset_of(prototype.scope()) || !b.target.subset_of(prototype.scope()))
        throw ScopeError("mixture over " + prototype.scope().to_string() +
                         " cannot be checked against block '" + b.id + "'");
      // sub-marginal axes: (target ∪ free) in canonical order, then mix.given
      std::vector<Variable> sub_axes;
      for (const auto& v : prototype.scope().vars())
        if (b.target.contains(v.name) || free.contains(v.name)) sub_axes.push_back(v);
      std::vector<Variable> w_axes;
      for (const auto& v : sub_axes)
        if (free.contains(v.name)) w_axes.push_back(v);
      for (const auto& v : prototype.given().vars()) {
        sub_axes.push_back(v);
        w_axes.push_back(v);
      }
      blk.sub_of_mix = cell_map(mix_axes, sub_axes);
      blk.w_of_sub = cell_map(sub_axes, w_axes);
      std::vector<Variable> table_axes = b.target.vars();
      table_axes.insert(table_axes.end(), b.predictors.vars().begin(),
                        b.predictors.vars().end());
      blk.sub_of_table = cell_map(table_axes, sub_axes);
      std::size_t ns = 1;
      for (const auto& v : sub_axes) ns *= static_cast<std::size_t>(v.cardinality);
      std::size_t nw = 1;
      for (const auto& v : w_axes) nw *= static_cast<std::size_t>(v.cardinality);
      blk.sub.assign(ns, 0.0);
      blk.weight.assign(nw, 0.0);
      blocks_.push_back(std::move(blk));
    }
  }

  double eval(const std::vector<double>& mix, Deviance measure) {
    double total = 0.0;
    for (auto& blk : blocks_) {
      std::fill(blk.sub.begin(), blk.sub.end(), 0.0);
      for (std::size_t c = 0; c < mix.size(); ++c) blk.sub[blk.sub_of_mix[c]] += mix[c];
      std::fill(blk.weight.begin(), blk.weight.end(), 0.0);
      for (std::size_t s = 0; s < blk.sub.size(); ++s)
        blk.weight[blk.w_of_sub[s]] += blk.sub[s];

      const auto& table = *blk.table;
      double acc = 0.0;
      for (std::size_t t = 0; t < table.size(); ++t) {
        const std::size_t si = blk.sub_of_table[t];
        const double w = blk.weight[blk.w_of_sub[si]];
        const double f = table[t];
        if (w == 0.0)
          throw SupportError("mixture puts no mass on a predictor configuration of block '" +
                             blk.id + "'");
        const double g = blk.sub[si] / w;
        switch (measure) {
          case Deviance::kl:
            if (f > 0.0) {
              if (g == 0.0) return std::numeric_limits<double>::infinity();
              acc += w * f * std::log(f / g);
            }
            break;
          case Deviance::pearson_x2:
            if (g == 0.0) {
              if (f != 0.0) return std::numeric_limits<double>::infinity();
            } else {
              acc += w * (f - g) * (f - g) / g;
            }
            break;
          case Deviance::freeman_tukey_f2: {
            const double d = std::sqrt(f) - std::sqrt(g);
            acc += 4.0 * w * d * d;
            break;
          }
        }
      }
      total += std::max(acc, 0.0);
    }
    return total;
  }

 private:
  struct Block {
    std::string id;
    const std::vector<double>* table;
    std::vector<std::size_t> sub_of_mix, w_of_sub, sub_of_table;
    std::vector<double> sub, weight;
  };
  std::vector<Block> blocks_;
};

/// Aligned member values plus a weight-mixing buffer.
class MixBuffer {
 public:
  MixBuffer(const Ensemble& e) {
    if (e.members.empty()) throw ValidationError("empty ensemble");
    const auto axes0 = axes_of(e.members[0]);
    const std::size_t n = e.members[0].size();
    for (const auto& mem : e.members) {
      if (mem.size() != n || !mem.scope().same_names(e.members[0].scope()) ||
          !mem.given().same_names(e.members[0].given()))
        throw ScopeError("ensemble members have mismatched scopes");
      const auto map = detail::aligned_strides(e.members[0], mem);
      std::vector<double> aligned(n);
      std::vector<int> digit(axes0.size(), 0);
      for (std::size_t idx = 0; idx < n; ++idx) {
        std::size_t mi = 0;
        for (std::size_t a = 0; a < axes0.size(); ++a)
          mi += static_cast<std::size_t>(digit[a]) * map[a];
        aligned[idx] = mem.values()[mi];
        for (std::size_t a = 0; a < axes0.size(); ++a) {
          if (++digit[a] < axes0[a].cardinality) break;
          digit[a] = 0;
        }
      }
      aligned_.push_back(std::move(aligned));
    }
    buf_.assign(n, 0.0);
  }

  const std::vector<double>& mix(const std::vector<double>& w) {
    std::fill(buf_.begin(), buf_.end(), 0.0);
    for (std::size_t k = 0; k < aligned_.size(); ++k)
      for (std::size_t i = 0; i < buf_.size(); ++i) buf_[i] += w[k] * aligned_[k][i];
    return buf_;
  }

 private:
  std::vector<std::vector<double>> aligned_;
  std::vector<double> buf_;
};

void project_to_simplex(std::vector<double>& w) {
  std::vector<double> u = w;
  std::sort(u.begin(), u.end(), std::greater<>());
  double css = 0.0, theta = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    css += u[i];
    const double t = (css - 1.0) / static_cast<double>(i + 1);
    if (u[i] - t > 0.0) theta = t;
  }
  double sum = 0.0;
  for (auto& x : w) sum += (x = std::max(x - theta, 0.0));
  if (sum > 0.0)
    for (auto& x : w) x /= sum;
  else
    std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(w.size()));
}

double golden_section(const std::function<double(double)>& f, double lo, double hi,
                      int iters = 40) {
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = lo, b = hi;
  double c = b - phi * (b - a), d = a + phi * (b - a);
  double fc = f(c), fd = f(d);
  for (int i = 0; i < iters && (b - a) > 1e-13; ++i) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + phi * (b - a);
      fd = f(d);
    }
  }
  return fc < fd ? c : d;
}

}  // namespace

double model_deviance(const Distribution& mix, const CsmModel& m, Deviance measure) {
  DevianceEvaluator ev(mix, m);
  return ev.eval(mix.values(), measure);
}

Distribution mix_members(const Ensemble& e, const std::vector<double>& weights) {
  if (weights.size() != e.members.size())
    throw ValidationError("weight count does not match member count");
  MixBuffer mb(e);
  return DistBuilder::make(e.members[0].scope(), e.members[0].given(),
                           std::vector<double>(mb.mix(weights)));
}

MixtureResult optimize_mixture(const Ensemble& e, const CsmModel& m, Deviance measure) {
  const std::size_t K = e.members.size();
  if (K == 0) throw ValidationError("empty ensemble");
  MixBuffer mb(e);
  DevianceEvaluator ev(e.members[0], m);
  auto eval = [&](const std::vector<double>& w) { return ev.eval(mb.mix(w), measure); };

  if (K == 1) {
    MixtureResult r{{1.0}, e.members[0], eval({1.0}), measure};
    return r;
  }

  // Multistarts: uniform, vertices, then seeded random simplex points.
  std::vector<std::vector<double>> starts;
  starts.push_back(std::vector<double>(K, 1.0 / static_cast<double>(K)));
  for (std::size_t k = 0; k < K && starts.size() < 20; ++k) {
    std::vector<double> v(K, 0.0);
    v[k] = 1.0;
    starts.push_back(std::move(v));
  }
  std::mt19937_64 gen(1234);
  while (starts.size() < 20) {
    std::vector<double> v(K);
    double sum = 0.0;
    for (auto& x : v)
      sum += (x = -std::log(1.0 - static_cast<double>(gen() >> 11) * 0x1.0p-53));
    for (auto& x : v) x /= sum;
    starts.push_back(std::move(v));
  }

  std::vector<double> best_w;
  double best_f = std::numeric_limits<double>::infinity();
  const double h = 1e-7;
  std::vector<double> g(K), wp, wm, next;
  for (auto w : starts) {
    double fw = eval(w);
    for (int it = 0; it < 100; ++it) {
      for (std::size_t k = 0; k < K; ++k) {
        wp = w;
        wm = w;
        wp[k] += h;
        wm[k] = std::max(wm[k] - h, 0.0);
        double sp = 0.0, sm = 0.0;
        for (double x : wp) sp += x;
        for (double x : wm) sm += x;
        for (auto& x : wp) x /= sp;
        for (auto& x : wm) x /= sm;
        g[k] = (eval(wp) - eval(wm)) / (2.0 * h);
      }
      double gmean = 0.0;
      for (double x : g) gmean += x;
      gmean /= static_cast<double>(K);
      for (auto& x : g) x -= gmean;
      double gnorm = 0.0;
      for (double x : g) gnorm += x * x;
      if (gnorm < 1e-24) break;

      auto along = [&](double s) {
        std::vector<double> cand = w;
        for (std::size_t k = 0; k < K; ++k) cand[k] -= s * g[k];
        project_to_simplex(cand);
        return eval(cand);
      };
      const double step = golden_section(along, 0.0, 2.0 / std::sqrt(gnorm));
      next = w;
      for (std::size_t k = 0; k < K; ++k) next[k] -= step * g[k];
      project_to_simplex(next);
      const double fn = eval(next);
      double moved = 0.0;
      for (std::size_t k = 0; k < K; ++k) moved += std::abs(next[k] - w[k]);
      if (fn <= fw) {
        w = next;
        fw = fn;
      }
      if (moved < 1e-10) break;
    }
    auto dist_uniform = [&](const std::vector<double>& v) {
      double s = 0.0;
      for (double x : v) {
        const double d = x - 1.0 / static_cast<double>(K);
        s += d * d;
      }
      return s;
    };
    const bool better = fw < best_f - 1e-12;
    const bool tie = std::abs(fw - best_f) <= 1e-12;
    if (better || best_w.empty() || (tie && dist_uniform(w) < dist_uniform(best_w))) {
      best_f = fw;
      best_w = w;
    }
  }

  MixtureResult r;
  r.weights = best_w;
  r.mixture = mix_members(e, best_w);
  r.deviance = best_f;
  r.measure = measure;
  return r;
}

MixtureResult grid_search_mixture(const Ensemble& e, const CsmModel& m, Deviance measure,
                                  double step) {
  const std::size_t K = e.members.size();
  if (K == 0 || K > 3) throw ValidationError("grid search supports 1 to 3 members");
  MixBuffer mb(e);
  DevianceEvaluator ev(e.members[0], m);
  auto eval = [&](const std::vector<double>& w) { return ev.eval(mb.mix(w), measure); };

  MixtureResult best;
  best.measure = measure;
  best.deviance = std::numeric_limits<double>::infinity();
  best.mixture = e.members[0];
  auto consider = [&](std::vector<double> w) {
    const double f = eval(w);
    if (f < best.deviance) {
      best.deviance = f;
      best.weights = std::move(w);
    }
  };

  if (K == 1) {
    consider({1.0});
  } else if (K == 2) {
    const auto n = static_cast<std::int64_t>(std::llround(1.0 / step));
    for (std::int64_t i = 0; i <= n; ++i) {
      const double a = static_cast<double>(i) / static_cast<double>(n);
      consider({a, 1.0 - a});
    }
  } else {
    // Two-stage refinement keeps the 3-member grid tractable at fine steps.
    const double coarse = std::max(step, 1e-2);
    auto sweep = [&](double lo1, double hi1, double lo2, double hi2, double st) {
      for (double a = lo1; a <= hi1 + 1e-15; a += st)
        for (double b = lo2; b <= std::min(hi2, 1.0 - a) + 1e-15; b += st) {
          const double c = 1.0 - a - b;
          if (c < -1e-15) continue;
          consider({a, b, std::max(c, 0.0)});
        }
    };
    sweep(0.0, 1.0, 0.0, 1.0, coarse);
    if (step < coarse) {
      const double a0 = best.weights[0], b0 = best.weights[1];
      sweep(std::max(0.0, a0 - coarse), std::min(1.0, a0 + coarse),
            std::max(0.0, b0 - coarse), std::min(1.0, b0 + coarse), step);
    }
  }
  best.mixture = mix_members(e, best.weights);
  return best;
}

}  // namespace icr
