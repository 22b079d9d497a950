#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "ttsa/experiment.hpp"

namespace {

constexpr const char* kVersion = "0.1.0";

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

int cmd_run(const std::string& config_path) {
  ttsa::ParseResult parsed = ttsa::parse_config(read_file(config_path));
  if (!parsed.ok()) {
    std::cerr << "config errors:\n" << parsed.describe();
    return 1;
  }
  return ttsa::run_experiment(*parsed.config);
}

int cmd_validate(const std::string& config_path) {
  ttsa::ParseResult parsed = ttsa::parse_config(read_file(config_path));
  if (!parsed.ok()) {
    std::cerr << "config errors:\n" << parsed.describe();
    return 1;
  }
  const auto& cfg = *parsed.config;
  if (cfg.kind != ttsa::ExperimentKind::root_find &&
      cfg.kind != ttsa::ExperimentKind::rate_study) {
    std::cerr << "validate-schedule applies to root_find/rate_study configs\n";
    return 1;
  }
  const ttsa::RootProblem problem = ttsa::detail::resolve_problem(cfg);
  ttsa::ExperimentConfig resolved = cfg;
  const ttsa::ScheduleSpec sched = ttsa::detail::resolve_schedule(cfg, problem, resolved);

  ttsa::ValidationReport report;
  if (const auto* fp = std::get_if<ttsa::FastScheduleParams>(&sched)) {
    report = ttsa::validate_fast(*fp, problem.mu_F, problem.mu_G, problem.L(),
                                 std::min<long long>(cfg.T, 1000000));
    std::cout << "fast schedule: C_lambda=" << fp->C_lambda << " C_gamma=" << fp->C_gamma
              << " C_alpha=" << fp->C_alpha << " C_beta=" << fp->C_beta << " h=" << fp->h
              << "\n";
  } else {
    const auto& cp = std::get<ttsa::ClassicScheduleParams>(sched);
    report = ttsa::validate_classic(cp, problem.mu_F, problem.mu_G, problem.lip_G);
    std::cout << "classic schedule: alpha0=" << cp.alpha0 << " beta0=" << cp.beta0
              << " a=" << cp.a << " b=" << cp.b << "\n";
  }
  if (report.ok()) {
    std::cout << "all step-size conditions hold\n";
    return 0;
  }
  std::cout << report.describe();
  return 0;  // violations are data, not an error
}

int cmd_list_problems() {
  for (const auto& id : ttsa::builtin_problem_ids()) std::cout << id << "\n";
  std::cout << "or a JSON file with keys A11, A12, A21, A22, b1, b2 via problem_file\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-time-scale stochastic approximation experiments"};
  app.require_subcommand(1);

  std::string run_config, validate_config;
  auto* run = app.add_subcommand("run", "execute an experiment config");
  run->add_option("config", run_config, "JSON config file")->required();
  auto* validate =
      app.add_subcommand("validate-schedule", "check step-size conditions for a config");
  validate->add_option("config", validate_config, "JSON config file")->required();
  auto* list = app.add_subcommand("list-problems", "list built-in problem ids");
  auto* version = app.add_subcommand("version", "print version");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(run_config);
    if (validate->parsed()) return cmd_validate(validate_config);
    if (list->parsed()) return cmd_list_problems();
    if (version->parsed()) {
      std::cout << "ttsa " << kVersion << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
