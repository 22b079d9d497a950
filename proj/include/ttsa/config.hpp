#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "ttsa/analysis.hpp"
#include "ttsa/lqr.hpp"
#include "ttsa/policy_eval.hpp"
#include "ttsa/problem.hpp"
#include "ttsa/schedule.hpp"
#include "ttsa/solver.hpp"

namespace ttsa {

enum class ExperimentKind { root_find, rate_study, policy_eval, lqr };

inline std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::root_find: return "root_find";
    case ExperimentKind::rate_study: return "rate_study";
    case ExperimentKind::policy_eval: return "policy_eval";
    default: return "lqr";
  }
}

struct FitWindow {
  long long k_min = 0, k_max = 0;
};

struct LqrExperimentOptions {
  std::string variant = "both";  // classic | fast | both
  double sigma = 0.1;
  double critic_step = 2e-3;
  double actor_step = 1e-5;
  double lambda_c = 20.0;
  double lambda_h = 60000.0;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::root_find;
  std::string problem;  // builtin id; empty when problem_file is used
  std::optional<std::string> problem_file;
  SolverKind solver = SolverKind::fast;
  std::optional<FastScheduleParams> fast_schedule;
  std::optional<ClassicScheduleParams> classic_schedule;
  bool derive_theory_constants = false;  // theory mode with constants omitted
  NoiseModel noise;
  long long T = 1000;
  int n_reps = 1;
  std::uint64_t base_seed = 0;
  long long record_every = 1;
  std::string output_dir = "out";
  bool debug_checks = false;
  bool warm_start = false;
  std::optional<FitWindow> fit;
  std::optional<std::pair<VectorXd, VectorXd>> init;
  std::optional<PolicyEvalOptions> policy_eval;
  std::optional<LqrExperimentOptions> lqr;
};

struct ParseResult {
  std::optional<ExperimentConfig> config;
  std::vector<std::string> errors;
  bool ok() const { return errors.empty() && config.has_value(); }
  std::string describe() const {
    std::string s;
    for (const auto& e : errors) s += e + "\n";
    return s;
  }
};

namespace detail {

using nlohmann::json;

struct ConfigReader {
  std::vector<std::string>& errors;

  void unknown_keys(const json& obj, const std::string& path,
                    const std::set<std::string>& allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      if (!allowed.count(it.key()))
        errors.push_back(path + ": unknown key '" + it.key() + "'");
    }
  }

  template <typename T>
  std::optional<T> get(const json& obj, const std::string& path, const std::string& key) {
    if (!obj.contains(key)) return std::nullopt;
    try {
      return obj.at(key).get<T>();
    } catch (const json::exception&) {
      errors.push_back(path + "." + key + ": wrong type");
      return std::nullopt;
    }
  }

  template <typename T>
  std::optional<T> require(const json& obj, const std::string& path, const std::string& key) {
    if (!obj.contains(key)) {
      errors.push_back(path + "." + key + ": missing");
      return std::nullopt;
    }
    return get<T>(obj, path, key);
  }
};

inline std::optional<VectorXd> read_vector(ConfigReader& r, const json& obj,
                                           const std::string& path, const std::string& key) {
  auto v = r.require<std::vector<double>>(obj, path, key);
  if (!v) return std::nullopt;
  VectorXd out(v->size());
  for (size_t i = 0; i < v->size(); ++i) out[i] = (*v)[i];
  return out;
}

}  // namespace detail

/// Strict parse: unknown keys, type mismatches, conflicting or missing blocks,
/// and out-of-range values are all collected and reported together.
inline ParseResult parse_config(const std::string& text) {
  ParseResult result;
  auto& errors = result.errors;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    errors.push_back(std::string("invalid JSON: ") + e.what());
    return result;
  }
  if (!j.is_object()) {
    errors.push_back("config must be a JSON object");
    return result;
  }

  detail::ConfigReader r{errors};
  ExperimentConfig cfg;

  r.unknown_keys(j, "config",
                 {"kind", "problem", "problem_file", "solver", "schedule", "noise", "T", "n_reps",
                  "base_seed", "record_every", "output_dir", "debug_checks", "warm_start", "init",
                  "fit", "policy_eval", "lqr"});

  if (auto kind = r.require<std::string>(j, "config", "kind")) {
    if (*kind == "root_find") cfg.kind = ExperimentKind::root_find;
    else if (*kind == "rate_study") cfg.kind = ExperimentKind::rate_study;
    else if (*kind == "policy_eval") cfg.kind = ExperimentKind::policy_eval;
    else if (*kind == "lqr") cfg.kind = ExperimentKind::lqr;
    else errors.push_back("config.kind: must be root_find, rate_study, policy_eval, or lqr");
  }

  if (auto T = r.get<long long>(j, "config", "T")) {
    cfg.T = *T;
    if (cfg.T < 1) errors.push_back("config.T: T must be >= 1");
  }
  if (auto n = r.get<long long>(j, "config", "n_reps")) {
    cfg.n_reps = static_cast<int>(*n);
    if (cfg.n_reps < 1) errors.push_back("config.n_reps: must be >= 1");
  }
  if (auto s = r.get<std::uint64_t>(j, "config", "base_seed")) cfg.base_seed = *s;
  if (auto re = r.get<long long>(j, "config", "record_every")) {
    cfg.record_every = *re;
    if (cfg.record_every < 1) errors.push_back("config.record_every: must be >= 1");
  }
  if (auto o = r.get<std::string>(j, "config", "output_dir")) cfg.output_dir = *o;
  if (auto d = r.get<bool>(j, "config", "debug_checks")) cfg.debug_checks = *d;
  if (auto w = r.get<bool>(j, "config", "warm_start")) cfg.warm_start = *w;

  const bool solver_kind_needed =
      cfg.kind == ExperimentKind::root_find || cfg.kind == ExperimentKind::rate_study;

  const bool has_problem = j.contains("problem");
  const bool has_problem_file = j.contains("problem_file");
  if (solver_kind_needed) {
    if (has_problem && has_problem_file)
      errors.push_back("config: give either problem or problem_file, not both");
    else if (!has_problem && !has_problem_file)
      errors.push_back("config.problem: missing");
    if (has_problem)
      if (auto p = r.get<std::string>(j, "config", "problem")) cfg.problem = *p;
    if (has_problem_file)
      if (auto p = r.get<std::string>(j, "config", "problem_file")) cfg.problem_file = *p;

    if (auto s = r.require<std::string>(j, "config", "solver")) {
      if (*s == "fast") cfg.solver = SolverKind::fast;
      else if (*s == "classic") cfg.solver = SolverKind::classic;
      else errors.push_back("config.solver: must be fast or classic");
    }

    if (!j.contains("schedule")) {
      errors.push_back("config.schedule: missing");
    } else if (!j.at("schedule").is_object()) {
      errors.push_back("config.schedule: must be an object");
    } else {
      const auto& sj = j.at("schedule");
      r.unknown_keys(sj, "config.schedule", {"fast", "classic"});
      const bool has_fast = sj.contains("fast"), has_classic = sj.contains("classic");
      if (has_fast && has_classic)
        errors.push_back("config.schedule: both fast and classic blocks given; exactly one must "
                         "match the solver");
      if (!has_fast && !has_classic)
        errors.push_back("config.schedule: needs a fast or classic block");
      if (has_fast && cfg.solver == SolverKind::classic && !has_classic)
        errors.push_back("config.schedule: fast block given but solver is classic");
      if (has_classic && cfg.solver == SolverKind::fast && !has_fast)
        errors.push_back("config.schedule: classic block given but solver is fast");

      if (has_fast && sj.at("fast").is_object()) {
        const auto& fj = sj.at("fast");
        r.unknown_keys(fj, "config.schedule.fast",
                       {"C_lambda", "C_gamma", "C_alpha", "C_beta", "h", "mode"});
        FastScheduleParams fp;
        std::string mode = r.get<std::string>(fj, "config.schedule.fast", "mode").value_or("tuned");
        if (mode == "theory") fp.mode = ScheduleMode::theory;
        else if (mode == "tuned") fp.mode = ScheduleMode::tuned;
        else errors.push_back("config.schedule.fast.mode: must be theory or tuned");

        const bool any_const = fj.contains("C_lambda") || fj.contains("C_gamma") ||
                               fj.contains("C_alpha") || fj.contains("C_beta") || fj.contains("h");
        if (fp.mode == ScheduleMode::theory && !any_const) {
          cfg.derive_theory_constants = true;
        } else {
          auto cl = r.require<double>(fj, "config.schedule.fast", "C_lambda");
          auto cg = r.require<double>(fj, "config.schedule.fast", "C_gamma");
          auto ca = r.require<double>(fj, "config.schedule.fast", "C_alpha");
          auto cb = r.require<double>(fj, "config.schedule.fast", "C_beta");
          auto h = r.require<double>(fj, "config.schedule.fast", "h");
          if (cl && cg && ca && cb && h) {
            fp.C_lambda = *cl;
            fp.C_gamma = *cg;
            fp.C_alpha = *ca;
            fp.C_beta = *cb;
            fp.h = *h;
            for (auto [nm, v] : std::initializer_list<std::pair<const char*, double>>{
                     {"C_lambda", *cl}, {"C_gamma", *cg}, {"C_alpha", *ca}, {"C_beta", *cb},
                     {"h", *h}}) {
              if (!(v > 0))
                errors.push_back(std::string("config.schedule.fast.") + nm +
                                 ": must be positive");
            }
          }
        }
        cfg.fast_schedule = fp;
      }
      if (has_classic && sj.at("classic").is_object()) {
        const auto& cj = sj.at("classic");
        r.unknown_keys(cj, "config.schedule.classic", {"alpha0", "beta0", "a", "b"});
        ClassicScheduleParams cp;
        auto a0 = r.require<double>(cj, "config.schedule.classic", "alpha0");
        auto b0 = r.require<double>(cj, "config.schedule.classic", "beta0");
        auto a = r.require<double>(cj, "config.schedule.classic", "a");
        auto b = r.require<double>(cj, "config.schedule.classic", "b");
        if (a0 && b0 && a && b) {
          cp.alpha0 = *a0;
          cp.beta0 = *b0;
          cp.a = *a;
          cp.b = *b;
          if (!(cp.alpha0 > 0)) errors.push_back("config.schedule.classic.alpha0: must be positive");
          if (!(cp.beta0 > 0)) errors.push_back("config.schedule.classic.beta0: must be positive");
        }
        cfg.classic_schedule = cp;
      }
    }

    if (j.contains("noise")) {
      const auto& nj = j.at("noise");
      if (!nj.is_object()) {
        errors.push_back("config.noise: must be an object");
      } else {
        r.unknown_keys(nj, "config.noise", {"kind", "gamma11", "gamma22"});
        auto kind = r.require<std::string>(nj, "config.noise", "kind");
        if (kind && *kind == "gaussian_iid") {
          auto g11 = r.require<double>(nj, "config.noise", "gamma11");
          auto g22 = r.require<double>(nj, "config.noise", "gamma22");
          if (g11 && g22) {
            if (*g11 < 0 || *g22 < 0)
              errors.push_back("config.noise: variances must be nonnegative");
            else
              cfg.noise = NoiseModel::gaussian(*g11, *g22);
          }
        } else if (kind && *kind != "none") {
          errors.push_back("config.noise.kind: must be none or gaussian_iid");
        }
      }
    }

    if (j.contains("init")) {
      const auto& ij = j.at("init");
      if (!ij.is_object()) {
        errors.push_back("config.init: must be an object");
      } else {
        r.unknown_keys(ij, "config.init", {"x0", "y0"});
        auto x0 = detail::read_vector(r, ij, "config.init", "x0");
        auto y0 = detail::read_vector(r, ij, "config.init", "y0");
        if (x0 && y0) cfg.init = std::make_pair(*x0, *y0);
      }
    }

    if (j.contains("fit")) {
      const auto& fj = j.at("fit");
      if (!fj.is_object()) {
        errors.push_back("config.fit: must be an object");
      } else {
        r.unknown_keys(fj, "config.fit", {"k_min", "k_max"});
        auto kmin = r.require<long long>(fj, "config.fit", "k_min");
        auto kmax = r.require<long long>(fj, "config.fit", "k_max");
        if (kmin && kmax) {
          if (*kmin < 0 || *kmax <= *kmin)
            errors.push_back("config.fit: need 0 <= k_min < k_max");
          else
            cfg.fit = FitWindow{*kmin, *kmax};
        }
      }
    }
  } else {
    for (const char* key : {"problem", "problem_file", "solver", "schedule", "noise", "init",
                            "fit"}) {
      if (j.contains(key))
        errors.push_back(std::string("config.") + key + ": not applicable to kind " +
                         to_string(cfg.kind));
    }
  }

  if (cfg.kind == ExperimentKind::policy_eval) {
    PolicyEvalOptions pe;
    if (j.contains("policy_eval")) {
      const auto& pj = j.at("policy_eval");
      if (!pj.is_object()) {
        errors.push_back("config.policy_eval: must be an object");
      } else {
        r.unknown_keys(pj, "config.policy_eval",
                       {"n_states", "n_actions", "d", "gamma", "alpha", "beta", "lambda_c",
                        "lambda_h", "importance_correction"});
        if (auto v = r.get<int>(pj, "config.policy_eval", "n_states")) pe.n_states = *v;
        if (auto v = r.get<int>(pj, "config.policy_eval", "n_actions")) pe.n_actions = *v;
        if (auto v = r.get<int>(pj, "config.policy_eval", "d")) pe.d = *v;
        if (auto v = r.get<double>(pj, "config.policy_eval", "gamma")) pe.gamma = *v;
        if (auto v = r.get<double>(pj, "config.policy_eval", "alpha")) pe.alpha = *v;
        if (auto v = r.get<double>(pj, "config.policy_eval", "beta")) pe.beta = *v;
        if (auto v = r.get<double>(pj, "config.policy_eval", "lambda_c")) pe.lambda_c = *v;
        if (auto v = r.get<double>(pj, "config.policy_eval", "lambda_h")) pe.lambda_h = *v;
        if (auto v = r.get<bool>(pj, "config.policy_eval", "importance_correction"))
          pe.importance_correction = *v;
        if (pe.n_states < 2 || pe.n_actions < 1)
          errors.push_back("config.policy_eval: need n_states >= 2 and n_actions >= 1");
        if (pe.d < 1 || pe.d > pe.n_states)
          errors.push_back("config.policy_eval: need 1 <= d <= n_states");
        if (!(pe.gamma > 0) || !(pe.gamma < 1))
          errors.push_back("config.policy_eval.gamma: must be in (0, 1)");
      }
    }
    cfg.policy_eval = pe;
  } else if (j.contains("policy_eval")) {
    errors.push_back("config.policy_eval: not applicable to kind " + to_string(cfg.kind));
  }

  if (cfg.kind == ExperimentKind::lqr) {
    LqrExperimentOptions lo;
    if (j.contains("lqr")) {
      const auto& lj = j.at("lqr");
      if (!lj.is_object()) {
        errors.push_back("config.lqr: must be an object");
      } else {
        r.unknown_keys(lj, "config.lqr",
                       {"variant", "sigma", "critic_step", "actor_step", "lambda_c", "lambda_h"});
        if (auto v = r.get<std::string>(lj, "config.lqr", "variant")) {
          if (*v != "classic" && *v != "fast" && *v != "both")
            errors.push_back("config.lqr.variant: must be classic, fast, or both");
          else
            lo.variant = *v;
        }
        if (auto v = r.get<double>(lj, "config.lqr", "sigma")) lo.sigma = *v;
        if (auto v = r.get<double>(lj, "config.lqr", "critic_step")) lo.critic_step = *v;
        if (auto v = r.get<double>(lj, "config.lqr", "actor_step")) lo.actor_step = *v;
        if (auto v = r.get<double>(lj, "config.lqr", "lambda_c")) lo.lambda_c = *v;
        if (auto v = r.get<double>(lj, "config.lqr", "lambda_h")) lo.lambda_h = *v;
        if (lo.sigma < 0) errors.push_back("config.lqr.sigma: must be nonnegative");
      }
    }
    cfg.lqr = lo;
  } else if (j.contains("lqr")) {
    errors.push_back("config.lqr: not applicable to kind " + to_string(cfg.kind));
  }

  if (errors.empty()) result.config = cfg;
  return result;
}

/// Inverse of parse_config for valid configs (round-trip identity).
inline nlohmann::json emit_config(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["kind"] = to_string(cfg.kind);
  j["T"] = cfg.T;
  j["n_reps"] = cfg.n_reps;
  j["base_seed"] = cfg.base_seed;
  j["record_every"] = cfg.record_every;
  j["output_dir"] = cfg.output_dir;
  if (cfg.debug_checks) j["debug_checks"] = true;
  if (cfg.warm_start) j["warm_start"] = true;

  if (cfg.kind == ExperimentKind::root_find || cfg.kind == ExperimentKind::rate_study) {
    if (cfg.problem_file) j["problem_file"] = *cfg.problem_file;
    else j["problem"] = cfg.problem;
    j["solver"] = to_string(cfg.solver);
    nlohmann::json sj;
    if (cfg.fast_schedule) {
      nlohmann::json fj;
      fj["mode"] = cfg.fast_schedule->mode == ScheduleMode::theory ? "theory" : "tuned";
      if (!cfg.derive_theory_constants) {
        fj["C_lambda"] = cfg.fast_schedule->C_lambda;
        fj["C_gamma"] = cfg.fast_schedule->C_gamma;
        fj["C_alpha"] = cfg.fast_schedule->C_alpha;
        fj["C_beta"] = cfg.fast_schedule->C_beta;
        fj["h"] = cfg.fast_schedule->h;
      }
      sj["fast"] = fj;
    }
    if (cfg.classic_schedule) {
      sj["classic"] = {{"alpha0", cfg.classic_schedule->alpha0},
                       {"beta0", cfg.classic_schedule->beta0},
                       {"a", cfg.classic_schedule->a},
                       {"b", cfg.classic_schedule->b}};
    }
    j["schedule"] = sj;
    if (cfg.noise.kind == NoiseModel::Kind::gaussian_iid) {
      j["noise"] = {{"kind", "gaussian_iid"},
                    {"gamma11", cfg.noise.gamma11},
                    {"gamma22", cfg.noise.gamma22}};
    }
    if (cfg.init) {
      std::vector<double> x0(cfg.init->first.begin(), cfg.init->first.end());
      std::vector<double> y0(cfg.init->second.begin(), cfg.init->second.end());
      j["init"] = {{"x0", x0}, {"y0", y0}};
    }
    if (cfg.fit) j["fit"] = {{"k_min", cfg.fit->k_min}, {"k_max", cfg.fit->k_max}};
  }
  if (cfg.kind == ExperimentKind::policy_eval && cfg.policy_eval) {
    const auto& pe = *cfg.policy_eval;
    j["policy_eval"] = {{"n_states", pe.n_states},
                        {"n_actions", pe.n_actions},
                        {"d", pe.d},
                        {"gamma", pe.gamma},
                        {"alpha", pe.alpha},
                        {"beta", pe.beta},
                        {"lambda_c", pe.lambda_c},
                        {"lambda_h", pe.lambda_h},
                        {"importance_correction", pe.importance_correction}};
  }
  if (cfg.kind == ExperimentKind::lqr && cfg.lqr) {
    const auto& lo = *cfg.lqr;
    j["lqr"] = {{"variant", lo.variant},   {"sigma", lo.sigma},
                {"critic_step", lo.critic_step}, {"actor_step", lo.actor_step},
                {"lambda_c", lo.lambda_c}, {"lambda_h", lo.lambda_h}};
  }
  return j;
}

}  // namespace ttsa
