#pragma once

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <thread>
#include <vector>

#include "ttsa/config.hpp"

namespace ttsa {

namespace detail {

inline int env_workers() {
  if (const char* w = std::getenv("TTSA_WORKERS")) {
    const int n = std::atoi(w);
    if (n > 0) return n;
  }
  return 0;
}

inline std::string resolve_output_dir(const std::string& configured) {
  if (const char* d = std::getenv("TTSA_OUTPUT_DIR")) {
    if (*d) return d;
  }
  return configured;
}

template <typename Fn>
void parallel_for_index(int n, int workers, Fn fn) {
  if (workers <= 0) workers = static_cast<int>(std::thread::hardware_concurrency());
  workers = std::max(1, std::min(workers, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
  };
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

inline RootProblem resolve_problem(const ExperimentConfig& cfg) {
  if (cfg.problem_file) return load_linear_problem(*cfg.problem_file);
  return make_problem(cfg.problem);
}

// Theory-mode constants come from the problem metadata when omitted in the
// config; the resolved values are echoed for provenance.
inline ScheduleSpec resolve_schedule(const ExperimentConfig& cfg, const RootProblem& p,
                                     ExperimentConfig& resolved) {
  if (cfg.solver == SolverKind::classic) return *cfg.classic_schedule;
  FastScheduleParams fp = *cfg.fast_schedule;
  if (cfg.derive_theory_constants) {
    fp = theory_constants(p.mu_F, p.mu_G, p.L());
    resolved.fast_schedule = fp;
    resolved.derive_theory_constants = false;
  }
  return fp;
}

inline nlohmann::json violations_json(const ValidationReport& report) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& v : report.violations)
    arr.push_back({{"condition", v.condition},
                   {"first_k", v.first_k},
                   {"lhs", v.lhs},
                   {"rhs", v.rhs}});
  return arr;
}

}  // namespace detail

/// Executes one configured experiment, writing trace CSVs, a summary JSON,
/// and the resolved config to the output directory.
/// Returns 0 on success, 2 when a replication hit the divergence guard.
inline int run_experiment(const ExperimentConfig& cfg_in, std::ostream& log = std::cerr) {
  namespace fs = std::filesystem;
  ExperimentConfig cfg = cfg_in;
  cfg.output_dir = detail::resolve_output_dir(cfg.output_dir);
  const fs::path out_dir(cfg.output_dir);
  fs::create_directories(out_dir);
  const int workers = detail::env_workers();

  nlohmann::json summary;
  int exit_code = 0;

  if (cfg.kind == ExperimentKind::root_find || cfg.kind == ExperimentKind::rate_study) {
    const RootProblem problem = detail::resolve_problem(cfg);
    ExperimentConfig resolved = cfg;
    const ScheduleSpec sched = detail::resolve_schedule(cfg, problem, resolved);
    detail::write_file(out_dir / "resolved_config.json", emit_config(resolved).dump(2) + "\n");

    ValidationReport validation;
    if (const auto* fp = std::get_if<FastScheduleParams>(&sched)) {
      validation = validate_fast(*fp, problem.mu_F, problem.mu_G, problem.L(),
                                 std::min<long long>(cfg.T, 1000000));
      if (fp->mode == ScheduleMode::theory && !validation.ok()) {
        log << "theory-mode schedule fails its admissibility conditions:\n"
            << validation.describe();
        return 1;
      }
    } else {
      validation = validate_classic(std::get<ClassicScheduleParams>(sched), problem.mu_F,
                                    problem.mu_G, problem.lip_G);
    }
    if (!validation.ok())
      log << "schedule validation (advisory for tuned mode):\n" << validation.describe();
    summary["schedule_violations"] = detail::violations_json(validation);

    if (cfg.kind == ExperimentKind::root_find) {
      nlohmann::json reps = nlohmann::json::array();
      for (int i = 0; i < cfg.n_reps; ++i) {
        RunOptions ro;
        ro.T = cfg.T;
        ro.seed = cfg.base_seed + static_cast<std::uint64_t>(i);
        ro.record_every = cfg.record_every;
        ro.debug_checks = cfg.debug_checks;
        ro.warm_start = cfg.warm_start;
        ro.init = cfg.init;
        const RunResult res = run(problem, cfg.solver, sched, cfg.noise, ro);
        std::ostringstream csv;
        write_trace_csv(csv, res.records);
        detail::write_file(out_dir / ("trace_seed" + std::to_string(ro.seed) + ".csv"),
                           csv.str());
        nlohmann::json rj;
        rj["seed"] = ro.seed;
        rj["aborted"] = res.aborted;
        if (res.aborted) {
          rj["abort_k"] = res.abort_k;
          exit_code = 2;
        }
        if (!res.records.empty()) {
          const auto& last = res.records.back();
          rj["final_k"] = last.k;
          if (last.V_fast) rj["final_V_fast"] = *last.V_fast;
          if (last.V_classic) rj["final_V_classic"] = *last.V_classic;
        }
        reps.push_back(rj);
      }
      summary["reps"] = reps;
    } else {
      MonteCarloOptions mc;
      mc.T = cfg.T;
      mc.n_reps = cfg.n_reps;
      mc.base_seed = cfg.base_seed;
      mc.record_every = cfg.record_every;
      mc.n_workers = workers;
      mc.warm_start = cfg.warm_start;
      mc.init = cfg.init;
      MeanTrace trace;
      try {
        trace = monte_carlo(problem, cfg.solver, sched, cfg.noise, mc);
      } catch (const std::runtime_error& e) {
        log << e.what() << "\n";
        return 2;
      }
      if (trace.aborted > 0)
        log << "warning: " << trace.aborted << " of " << cfg.n_reps
            << " replications diverged and were excluded\n";

      std::optional<BoundColumn> bound;
      if (const auto* fp = std::get_if<FastScheduleParams>(&sched)) {
        if (fp->mode == ScheduleMode::theory && cfg.noise.kind == NoiseModel::Kind::gaussian_iid)
          bound = BoundColumn{*fp, trace.mean_V.front(), cfg.noise.gamma11, cfg.noise.gamma22};
        if (cfg.record_every == 1) {
          const auto rc = check_one_step_recursion(trace, *fp, problem.mu_G, cfg.noise.gamma11,
                                                   cfg.noise.gamma22);
          summary["recursion_check"] = {{"checked", rc.checked},
                                        {"violations", rc.violating_ks.size()},
                                        {"violation_fraction", rc.violation_fraction()}};
        }
      }
      std::ostringstream csv;
      write_mean_trace_csv(csv, trace, bound);
      detail::write_file(out_dir / "mean_trace.csv", csv.str());

      const long long k_min = cfg.fit ? cfg.fit->k_min : std::max<long long>(1, cfg.T / 100);
      const long long k_max = cfg.fit ? cfg.fit->k_max : cfg.T;
      try {
        const RateFit fit = fit_rate(trace, k_min, k_max);
        summary["slope"] = fit.slope;
        summary["intercept"] = fit.intercept;
        summary["r_squared"] = fit.r_squared;
        summary["fit_window"] = {fit.k_min, fit.k_max};
        summary["fit_points"] = fit.n_points;
      } catch (const std::invalid_argument& e) {
        summary["fit_error"] = e.what();
      }
      summary["n_reps"] = trace.n_reps;
      summary["aborted"] = trace.aborted;
    }
  } else if (cfg.kind == ExperimentKind::policy_eval) {
    detail::write_file(out_dir / "resolved_config.json", emit_config(cfg).dump(2) + "\n");
    const PolicyEvalOptions pe = [&] {
      PolicyEvalOptions p = *cfg.policy_eval;
      p.T = cfg.T;
      p.record_every = cfg.record_every;
      return p;
    }();

    std::vector<std::map<PEAlgo, ErrorTrace>> all(cfg.n_reps);
    detail::parallel_for_index(cfg.n_reps, workers, [&](int i) {
      all[i] = run_policy_eval(pe, cfg.base_seed + static_cast<std::uint64_t>(i) * 1000);
    });

    for (PEAlgo algo : {PEAlgo::td, PEAlgo::tdc, PEAlgo::fast_tdc}) {
      std::vector<long long> ks;
      for (const auto& rep : all)
        if (!rep.at(algo).aborted) {
          ks = rep.at(algo).ks;
          break;
        }
      std::vector<double> mean(ks.size(), 0.0);
      int used = 0;
      nlohmann::json finals = nlohmann::json::array();
      for (const auto& rep : all) {
        const auto& tr = rep.at(algo);
        if (tr.aborted || tr.theta_err.size() != ks.size()) {
          exit_code = 2;
          continue;
        }
        for (size_t i = 0; i < ks.size(); ++i) mean[i] += tr.theta_err[i];
        finals.push_back(tr.theta_err.back());
        ++used;
      }
      for (auto& v : mean) v /= std::max(1, used);
      std::ostringstream csv;
      csv << "k,theta_err\n";
      for (size_t i = 0; i < ks.size(); ++i)
        csv << ks[i] << ',' << format_g17(mean[i]) << '\n';
      detail::write_file(out_dir / (to_string(algo) + ".csv"), csv.str());
      summary["final_errors"][to_string(algo)] = finals;
      if (!mean.empty()) {
        summary["mean_initial_error"][to_string(algo)] = mean.front();
        summary["mean_final_error"][to_string(algo)] = mean.back();
      }
    }
  } else {  // lqr
    detail::write_file(out_dir / "resolved_config.json", emit_config(cfg).dump(2) + "\n");
    const LqrExperimentOptions lo = *cfg.lqr;
    LQRInstance inst = paper_lqr_instance(lo.sigma);
    std::vector<SolverKind> variants;
    if (lo.variant == "classic" || lo.variant == "both") variants.push_back(SolverKind::classic);
    if (lo.variant == "fast" || lo.variant == "both") variants.push_back(SolverKind::fast);

    for (SolverKind variant : variants) {
      std::vector<JGapTrace> traces(cfg.n_reps);
      detail::parallel_for_index(cfg.n_reps, workers, [&](int i) {
        ActorCriticOptions ac;
        ac.critic_step = lo.critic_step;
        ac.actor_step = lo.actor_step;
        ac.lambda_c = lo.lambda_c;
        ac.lambda_h = lo.lambda_h;
        ac.T = cfg.T;
        ac.record_every = cfg.record_every;
        ac.seed = cfg.base_seed + static_cast<std::uint64_t>(i);
        traces[i] = actor_critic_run(inst, variant, ac);
      });
      nlohmann::json finals = nlohmann::json::array();
      nlohmann::json tenth = nlohmann::json::array();
      for (int i = 0; i < cfg.n_reps; ++i) {
        const auto& tr = traces[i];
        std::ostringstream csv;
        write_jgap_csv(csv, tr);
        detail::write_file(out_dir / ("jgap_" + to_string(variant) + "_seed" +
                                      std::to_string(cfg.base_seed + i) + ".csv"),
                           csv.str());
        if (tr.aborted) {
          exit_code = 2;
          continue;
        }
        finals.push_back(tr.j_gap.back());
        const long long target = cfg.T / 10;
        double at_tenth = tr.j_gap.front();
        for (size_t r = 0; r < tr.ks.size(); ++r)
          if (tr.ks[r] <= target) at_tenth = tr.j_gap[r];
        tenth.push_back(at_tenth);
      }
      summary["variants"][to_string(variant)] = {{"final_gaps", finals},
                                                 {"gaps_at_T_over_10", tenth}};
    }
  }

  detail::write_file(out_dir / "summary.json", summary.dump(2) + "\n");
  return exit_code;
}

}  // namespace ttsa
