#pragma once

// Shared helpers for the test suites: fixture loading, random generators, and
// small brute-force oracles kept independent of the library's stride logic.

#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "icr/model.hpp"
#include "icr/tensor.hpp"

#ifndef ICR_FIXTURE_DIR
#define ICR_FIXTURE_DIR "fixtures"
#endif

namespace testsup {

inline std::string fixture_path(const std::string& name) {
  return std::string(ICR_FIXTURE_DIR) + "/" + name;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline icr::CsmModel load_fixture_model(const std::string& name,
                                        icr::ValidationReport* rep = nullptr) {
  return icr::load_model(fixture_path(name), rep);
}

inline icr::Distribution load_fixture_dist(const std::string& name) {
  return icr::load_distribution(fixture_path(name));
}

/// Variables x1..xn with the given cardinalities, ordinals in order.
inline std::vector<icr::Variable> make_vars(const std::vector<int>& cards) {
  std::vector<icr::Variable> out;
  for (std::size_t i = 0; i < cards.size(); ++i)
    out.push_back({"x" + std::to_string(i + 1), cards[i], static_cast<int>(i)});
  return out;
}

inline icr::Scope scope_of(const std::vector<icr::Variable>& vars,
                           const std::vector<std::string>& names) {
  std::vector<icr::Variable> picked;
  for (const auto& n : names)
    for (const auto& v : vars)
      if (v.name == n) picked.push_back(v);
  return icr::Scope(picked);
}

inline double unit_draw(std::mt19937_64& gen) {
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

/// Random strictly positive joint over the scope.
inline icr::Distribution random_joint(const icr::Scope& s, std::mt19937_64& gen,
                                      double floor = 0.05) {
  std::vector<double> v(s.cell_count());
  double sum = 0.0;
  for (auto& x : v) sum += (x = floor + unit_draw(gen));
  for (auto& x : v) x /= sum;
  return icr::Distribution::joint(s, std::move(v));
}

/// Random conditional table scope|given, strictly positive.
inline icr::Distribution random_conditional(const icr::Scope& scope, const icr::Scope& given,
                                            std::mt19937_64& gen, double floor = 0.05) {
  const std::size_t ns = scope.cell_count();
  std::vector<double> v(ns * given.cell_count());
  for (std::size_t s = 0; s < given.cell_count(); ++s) {
    double sum = 0.0;
    for (std::size_t i = 0; i < ns; ++i) sum += (v[s * ns + i] = floor + unit_draw(gen));
    for (std::size_t i = 0; i < ns; ++i) v[s * ns + i] /= sum;
  }
  return icr::Distribution::conditional(scope, given, std::move(v));
}

// ------------------------------------------------------------------ oracles
// Independent reference implementations working on name->value config maps;
// no stride arithmetic shared with the library.

using Config = std::map<std::string, int>;

/// All configurations of a scope, enumerated odometer-style by name.
inline std::vector<Config> enumerate_configs(const icr::Scope& s) {
  std::vector<Config> out;
  const auto& vars = s.vars();
  std::vector<int> digit(vars.size(), 0);
  const std::size_t n = s.cell_count();
  for (std::size_t i = 0; i < n; ++i) {
    Config c;
    for (std::size_t k = 0; k < vars.size(); ++k) c[vars[k].name] = digit[k];
    out.push_back(std::move(c));
    for (std::size_t k = 0; k < vars.size(); ++k) {
      if (++digit[k] < vars[k].cardinality) break;
      digit[k] = 0;
    }
  }
  return out;
}

/// Value lookup through the public Distribution::at, building the per-axis
/// config from a name map.
inline double value_at(const icr::Distribution& d, const Config& c) {
  std::vector<int> cfg;
  for (const auto& v : d.scope().vars()) cfg.push_back(c.at(v.name));
  for (const auto& v : d.given().vars()) cfg.push_back(c.at(v.name));
  return d.at(cfg);
}

/// Brute-force marginal of an unconditioned joint onto `keep` via config maps.
inline std::map<std::vector<int>, double> oracle_marginal(const icr::Distribution& joint,
                                                          const icr::Scope& keep) {
  std::map<std::vector<int>, double> acc;
  for (const auto& c : enumerate_configs(joint.scope())) {
    std::vector<int> key;
    for (const auto& v : keep.vars()) key.push_back(c.at(v.name));
    acc[key] += value_at(joint, c);
  }
  return acc;
}

/// Brute-force one-directional KL over full configurations.
inline double oracle_kl(const icr::Distribution& p, const icr::Distribution& q) {
  double acc = 0.0;
  const icr::Scope all = p.scope().set_union(p.given());
  for (const auto& c : enumerate_configs(all)) {
    const double a = value_at(p, c), b = value_at(q, c);
    if (a > 0.0) acc += a * std::log(a / b);
  }
  return acc;
}

}  // namespace testsup
