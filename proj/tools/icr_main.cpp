// icr: synthesize joint distributions from conditionally specified models,
// enumerate permissible updating cycles, check compatibility, and benchmark
// against Gibbs sampling and the power method.

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"

#include "icr/baselines.hpp"
#include "icr/cycles.hpp"
#include "icr/engine.hpp"
#include "icr/ensemble.hpp"
#include "icr/model.hpp"
#include "icr/synthesis.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int g_log_level = 1;  // 0 quiet, 1 warn, 2 info

void log_warn(const std::string& msg) {
  if (g_log_level >= 1) std::cerr << "warning: " << msg << "\n";
}
void log_info(const std::string& msg) {
  if (g_log_level >= 2) std::cerr << "info: " << msg << "\n";
}

std::string sanitize(const std::string& s) {
  std::string out;
  for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) ? c : '-');
  return out;
}

std::vector<std::string> split_ids(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(tok);
  return out;
}

void write_trace_csv(const icr::IcrRun& run, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw icr::ParseError("cannot write trace file '" + path + "'");
  out << "# icr-trace v1\n";
  out << "t,M,Pi\n";
  out.precision(17);
  for (std::size_t t = 0; t < run.m_trace.size(); ++t)
    out << t << "," << run.m_trace[t] << "," << run.pi_trace[t] << "\n";
}

json run_summary(const icr::IcrRun& run) {
  json j;
  j["cycle"] = run.cycle.order;
  j["converged"] = run.converged;
  j["stop_cycle"] = run.stop_cycle;
  j["cycles_run"] = run.cycles_run;
  j["m_final"] = run.m_trace.empty() ? -1.0 : run.m_trace.back();
  j["pi_final"] = run.pi_trace.empty() ? -1.0 : run.pi_trace.back();
  j["verdict"] = icr::verdict_name(run.compatibility);
  j["delta"] = run.delta.names();
  return j;
}

/// Run tasks with at most `threads` concurrent workers; exceptions rethrown.
void run_parallel(std::size_t threads, std::vector<std::function<void()>> tasks) {
  if (threads <= 1 || tasks.size() <= 1) {
    for (auto& t : tasks) t();
    return;
  }
  std::mutex mu;
  std::size_t next = 0;
  std::exception_ptr err;
  auto worker = [&] {
    for (;;) {
      std::size_t i;
      {
        std::lock_guard lk(mu);
        if (next >= tasks.size() || err) return;
        i = next++;
      }
      try {
        tasks[i]();
      } catch (...) {
        std::lock_guard lk(mu);
        if (!err) err = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t k = 0; k < std::min(threads, tasks.size()); ++k)
    pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

int map_error(const icr::Error& e) {
  json diag;
  diag["error"] = e.kind_name();
  diag["message"] = e.what();
  std::cerr << diag.dump() << "\n";
  switch (e.kind()) {
    case icr::ErrorKind::not_converged:
      return 3;
    default:
      return 2;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ICR: joint-distribution synthesis from conditional models"};
  app.require_subcommand(1);

  std::string log_level = "warn";
  unsigned threads = 1;
  std::uint64_t seed = 1;
  app.add_option("--log-level", log_level, "quiet|warn|info")->capture_default_str();
  app.add_option("--threads", threads, "max concurrent independent runs")
      ->capture_default_str();
  app.add_option("--seed", seed, "seed for randomized inits and samplers")
      ->capture_default_str();

  // ---- validate
  auto* c_validate = app.add_subcommand("validate", "parse and validate a model file");
  std::string validate_model;
  c_validate->add_option("model", validate_model, "model JSON file")->required();

  // ---- cycles
  auto* c_cycles = app.add_subcommand("cycles", "enumerate permissible updating cycles");
  std::string cycles_model;
  std::size_t cycles_limit = SIZE_MAX;
  c_cycles->add_option("model", cycles_model)->required();
  c_cycles->add_option("--limit", cycles_limit, "cap on reported cycles");

  // ---- run
  auto* c_run = app.add_subcommand("run", "run ICR along one or more cycles");
  std::string run_model, run_cycle, run_init = "uniform", run_trace, run_out;
  bool run_all = false, expect_compatible = false, no_polish = false;
  double run_tol = 1e-10, run_tol_pi = 1e-10;
  int run_max_cycles = 10000;
  c_run->add_option("model", run_model)->required();
  c_run->add_option("--cycle", run_cycle, "comma-separated block ids in update order");
  c_run->add_flag("--all-cycles", run_all, "run every permissible cycle (cap 24)");
  c_run->add_option("--tol", run_tol, "convergence tolerance on M")->capture_default_str();
  c_run->add_option("--tol-pi", run_tol_pi, "compatibility tolerance on Pi")
      ->capture_default_str();
  c_run->add_option("--max-cycles", run_max_cycles)->capture_default_str();
  c_run->add_option("--init", run_init, "uniform | seeded | path to a distribution JSON")
      ->capture_default_str();
  c_run->add_option("--trace", run_trace, "write the M/Pi trace CSV here (single cycle)");
  c_run->add_option("--out", run_out, "directory for traces and stationary members");
  c_run->add_flag("--expect-compatible", expect_compatible,
                  "exit 4 when any run is judged incompatible");
  c_run->add_flag("--no-polish", no_polish, "stop exactly at the M tolerance");

  // ---- plan
  auto* c_plan = app.add_subcommand("plan", "execute a divide-then-ICR synthesis plan");
  std::string plan_model, plan_file, plan_out;
  c_plan->add_option("model", plan_model)->required();
  c_plan->add_option("plan", plan_file)->required();
  c_plan->add_option("--out", plan_out, "directory for intermediates");

  // ---- ensemble
  auto* c_ens = app.add_subcommand("ensemble", "optimize a mixture over all stationary joints");
  std::string ens_model, ens_measure = "kl", ens_out;
  std::size_t ens_limit = 24;
  c_ens->add_option("model", ens_model)->required();
  c_ens->add_option("--measure", ens_measure, "kl | x2 | f2")->capture_default_str();
  c_ens->add_option("--limit", ens_limit, "cap on cycles contributing members")
      ->capture_default_str();
  c_ens->add_option("--out", ens_out, "write weights and mixture JSON here");

  // ---- bench
  auto* c_bench = app.add_subcommand("bench", "compare ICR, power method and Gibbs sampling");
  std::string bench_model, bench_out, bench_cycle;
  std::int64_t gs_n = 1000000, gs_burnin = 100000;
  int gs_batches = 5, bench_seeds = 1;
  c_bench->add_option("model", bench_model)->required();
  c_bench->add_option("--cycle", bench_cycle, "update order (default: first permissible)");
  c_bench->add_option("--gs-n", gs_n, "Gibbs samples per batch")->capture_default_str();
  c_bench->add_option("--gs-burnin", gs_burnin)->capture_default_str();
  c_bench->add_option("--gs-batches", gs_batches)->capture_default_str();
  c_bench->add_option("--seeds", bench_seeds, "independent Gibbs chains")->capture_default_str();
  c_bench->add_option("--out", bench_out, "report CSV path");

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 1;
  }

  if (log_level == "quiet") g_log_level = 0;
  else if (log_level == "info") g_log_level = 2;

  try {
    // ---------------- validate
    if (*c_validate) {
      icr::ValidationReport rep;
      icr::CsmModel m = icr::load_model(validate_model, &rep);
      json j;
      j["variables"] = m.variables().size();
      j["blocks"] = m.block_count();
      j["class"] = icr::classify(m) == icr::ModelClass::saturated ? "saturated" : "unsaturated";
      j["delta"] = m.delta().names();
      j["warnings"] = rep.warnings;
      std::cout << j.dump() << "\n";
      for (const auto& w : rep.warnings) log_warn(w);
      return 0;
    }

    // ---------------- cycles
    if (*c_cycles) {
      icr::CsmModel m = icr::load_model(cycles_model);
      const auto cycles = icr::enumerate_cycles(m, cycles_limit);
      for (const auto& c : cycles) {
        json j;
        j["order"] = c.order;
        j["delta"] = c.delta.names();
        j["edges"] = json::array();
        for (const auto& e : c.edges)
          j["edges"].push_back({{"from", e.from_block},
                                {"to", e.to_block},
                                {"rule_a", e.rule_a},
                                {"rule_b", e.rule_b}});
        std::cout << j.dump() << "\n";
      }
      log_info(std::to_string(cycles.size()) + " permissible cycle(s)");
      return 0;
    }

    // ---------------- run
    if (*c_run) {
      icr::ValidationReport rep;
      icr::CsmModel m = icr::load_model(run_model, &rep);
      for (const auto& w : rep.warnings) log_warn(w);

      icr::IcrConfig cfg;
      cfg.tol_m = run_tol;
      cfg.tol_pi = run_tol_pi;
      cfg.max_cycles = run_max_cycles;
      cfg.polish = !no_polish;
      if (run_init == "uniform") cfg.init = icr::InitSpec::make_uniform();
      else if (run_init == "seeded") cfg.init = icr::InitSpec::random(seed);
      else cfg.init = icr::InitSpec::from_distribution(icr::load_distribution(run_init));

      std::vector<icr::UpdateCycle> cycles;
      if (!run_cycle.empty()) {
        cycles.push_back(icr::make_cycle(m, split_ids(run_cycle)));
      } else {
        cycles = icr::enumerate_cycles(m, run_all ? 24 : 1);
        if (!run_all && !cycles.empty()) cycles.resize(1);
      }
      if (cycles.empty()) throw icr::NoCycleError("model has no permissible updating cycle");

      std::vector<icr::IcrRun> runs(cycles.size(),
                                    icr::IcrRun{});
      std::vector<std::function<void()>> tasks;
      for (std::size_t i = 0; i < cycles.size(); ++i)
        tasks.push_back([&, i] { runs[i] = icr::run_icr(m, cycles[i], cfg); });
      run_parallel(threads, std::move(tasks));

      bool any_nonconverged = false, any_incompatible = false;
      for (std::size_t i = 0; i < runs.size(); ++i) {
        const auto& run = runs[i];
        std::cout << run_summary(run).dump() << "\n";
        any_nonconverged = any_nonconverged || !run.converged;
        any_incompatible =
            any_incompatible || run.compatibility == icr::Verdict::incompatible;
        if (!run_trace.empty() && runs.size() == 1) write_trace_csv(run, run_trace);
        if (!run_out.empty()) {
          fs::create_directories(run_out);
          write_trace_csv(run, run_out + "/cycle" + std::to_string(i) + "_trace.csv");
          if (run.converged) {
            const icr::StationarySet st = icr::stationary_set(m, run, cfg.tol_pi);
            for (std::size_t s = 0; s < st.members.size(); ++s)
              icr::save_distribution(st.members[s],
                                     run_out + "/cycle" + std::to_string(i) + "_pi_" +
                                         sanitize(st.rotations[s]) + ".json");
          }
        }
      }
      if (any_nonconverged) return 3;
      if (expect_compatible && any_incompatible) return 4;
      return 0;
    }

    // ---------------- plan
    if (*c_plan) {
      icr::CsmModel m = icr::load_model(plan_model);
      icr::SynthesisPlan plan = icr::load_plan(plan_file);
      const icr::SufficiencyReport suff = icr::validate_sufficiency(m, plan);
      json js;
      js["sufficient"] = suff.sufficient;
      js["reaches_full_joint"] = suff.reaches_full_joint;
      js["flags"] = json::array();
      for (const auto& f : suff.flags)
        js["flags"].push_back({{"output", f.output_id}, {"reason", f.reason}});
      std::cout << js.dump() << "\n";

      const auto outs = icr::run_plan(m, plan);
      for (const auto& o : outs) {
        json j;
        j["id"] = o.id;
        j["provenance"] = o.provenance;
        j["scope"] = o.dist.scope().names();
        j["given"] = o.dist.given().names();
        j["full_joint"] = o.full_scope;
        std::cout << j.dump() << "\n";
        if (!plan_out.empty()) {
          fs::create_directories(plan_out);
          icr::save_distribution(o.dist, plan_out + "/" + sanitize(o.id) + ".json");
        }
      }
      return 0;
    }

    // ---------------- ensemble
    if (*c_ens) {
      icr::CsmModel m = icr::load_model(ens_model);
      const icr::Deviance measure = icr::deviance_from_name(ens_measure);
      const icr::Ensemble e = icr::collect_ensemble(m, ens_limit);
      const icr::MixtureResult r = icr::optimize_mixture(e, m, measure);
      json j;
      j["measure"] = icr::deviance_name(measure);
      j["members"] = e.sources;
      j["weights"] = r.weights;
      j["deviance"] = r.deviance;
      std::cout << j.dump() << "\n";
      if (!ens_out.empty()) {
        json out = j;
        out["mixture"] = json::parse(icr::serialize_distribution(r.mixture));
        std::ofstream f(ens_out);
        if (!f) throw icr::ParseError("cannot write '" + ens_out + "'");
        f << out.dump(1) << "\n";
      }
      return 0;
    }

    // ---------------- bench
    if (*c_bench) {
      icr::CsmModel m = icr::load_model(bench_model);
      icr::UpdateCycle order;
      if (!bench_cycle.empty()) {
        order = icr::make_cycle(m, split_ids(bench_cycle));
      } else {
        auto found = icr::enumerate_cycles(m, 1);
        if (found.empty()) throw icr::NoCycleError("no permissible updating cycle");
        order = std::move(found[0]);
      }
      icr::BenchConfig cfg;
      cfg.gs_batch = gs_n;
      cfg.gs_batches = gs_batches;
      cfg.gs_burn_in = gs_burnin;
      cfg.seed = seed;

      // independent chains differ by seed offset; report carries the first
      std::vector<icr::CompareReport> reports(static_cast<std::size_t>(bench_seeds));
      std::vector<std::function<void()>> tasks;
      for (int s = 0; s < bench_seeds; ++s)
        tasks.push_back([&, s] {
          icr::BenchConfig c = cfg;
          c.seed = seed + static_cast<std::uint64_t>(s);
          reports[static_cast<std::size_t>(s)] =
              icr::compare_report(m, order, c);
        });
      run_parallel(threads, std::move(tasks));

      const icr::CompareReport& rep = reports[0];
      if (!bench_out.empty()) {
        std::ofstream f(bench_out);
        if (!f) throw icr::ParseError("cannot write '" + bench_out + "'");
        f << rep.csv();
      } else {
        std::cout << rep.csv();
      }
      json j;
      j["icr_seconds"] = rep.icr_seconds;
      j["power_seconds"] = rep.power_seconds;
      j["gs_seconds"] = rep.gs_seconds;
      j["chains"] = bench_seeds;
      std::cout << j.dump() << "\n";
      return 0;
    }
  } catch (const icr::Error& e) {
    return map_error(e);
  } catch (const std::exception& e) {
    json diag;
    diag["error"] = "InternalError";
    diag["message"] = e.what();
    std::cerr << diag.dump() << "\n";
    return 2;
  }
  return 1;
}
