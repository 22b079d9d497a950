// Acceptance suite: every criterion below runs end to end at its stated
// tolerance and prints one PASS/FAIL line. The binary exits nonzero if any
// criterion fails.

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <thread>
#include <vector>

#include "ttsa/experiment.hpp"

using namespace ttsa;
namespace fs = std::filesystem;

namespace {

struct CriterionFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require(bool cond, const std::string& what) {
  if (!cond) throw CriterionFailure(what);
}

struct Harness {
  int failures = 0;
  void criterion(int number, const std::string& title, const std::function<void()>& body) {
    try {
      body();
      std::cout << "[PASS] criterion " << number << ": " << title << std::endl;
    } catch (const std::exception& e) {
      ++failures;
      std::cout << "[FAIL] criterion " << number << ": " << title << " -- " << e.what()
                << std::endl;
    }
  }
};

template <typename Fn>
void parallel_seeds(int n, Fn fn) {
  std::atomic<int> next{0};
  const int workers = std::max(1u, std::min<unsigned>(std::thread::hardware_concurrency(),
                                                      static_cast<unsigned>(n)));
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&]() {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  for (auto& t : pool) t.join();
}

VectorXd scalar_vec(double v) { return (VectorXd(1) << v).finished(); }

// ---------------------------------------------------------------------------
// 1. Fixed point & reduction
// ---------------------------------------------------------------------------
void criterion_fixed_point_and_reduction() {
  const RootProblem p = make_scalar_instance();
  const NoiseModel zero = NoiseModel::zero();
  Rng rng(1);

  SolverState sf = make_state(p, VectorXd::Zero(1), VectorXd::Zero(1));
  SolverState sc = sf;
  for (int k = 0; k < 1000; ++k) {
    fast_step(sf, p, zero, FastStepSizes{0.25, 0.25, 0.1, 0.05}, rng);
    classic_step(sc, p, zero, ClassicStepSizes{0.3, 0.1}, rng);
    require(sf.x.norm() <= 1e-12 && sf.y.norm() <= 1e-12 && sf.f.norm() <= 1e-12,
            "averaged solver drifted from the root at k=" + std::to_string(k));
    require(sc.x.norm() <= 1e-12 && sc.y.norm() <= 1e-12,
            "classic solver drifted from the root at k=" + std::to_string(k));
  }

  // lambda = gamma = 1 with warm-started averages equals the classic
  // recursion driven by the sample stream shifted by one index
  const NoiseModel noise = NoiseModel::gaussian(1.0, 0.5);
  const double alpha = 0.05, beta = 0.02;
  Rng fast_rng(5), replay(5);
  SolverState fast = make_state(p, scalar_vec(1.3), scalar_vec(-0.4));
  auto [f0, g0] = sample_noisy(p, noise, fast.x, fast.y, fast_rng);
  fast.f = f0;
  fast.g = g0;
  sample_noisy(p, noise, fast.x, fast.y, replay);

  SolverState classic = make_state(p, scalar_vec(1.3), scalar_vec(-0.4));
  VectorXd prev_F = f0, prev_G = g0;
  for (int k = 0; k < 100; ++k) {
    auto [Fk, Gk] = sample_noisy(p, noise, fast.x, fast.y, replay);
    fast_step(fast, p, noise, FastStepSizes{1.0, 1.0, alpha, beta}, fast_rng);
    classic_step_with_samples(classic, ClassicStepSizes{alpha, beta}, prev_F, prev_G);
    prev_F = Fk;
    prev_G = Gk;
    require((fast.x - classic.x).norm() <= 1e-12 && (fast.y - classic.y).norm() <= 1e-12,
            "reduction mismatch at k=" + std::to_string(k));
  }
}

// ---------------------------------------------------------------------------
// 2. Deterministic lemma inequalities
// ---------------------------------------------------------------------------
void criterion_lemma_inequalities() {
  const FastScheduleParams sched{2.0, 2.0, 1.0, 0.5, 7.0, ScheduleMode::tuned};
  int runs = 0;
  for (const std::string id : {"scalar", "tanh:0.5"}) {
    const RootProblem p = make_problem(id);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      RunOptions opt;
      opt.T = 10000;
      opt.seed = seed;
      opt.record_every = 1000;
      opt.debug_checks = true;  // asserts the four bounds at every step
      const RunResult res = run(p, SolverKind::fast, sched, NoiseModel::gaussian(1.0, 1.0), opt);
      require(!res.aborted, "run aborted on " + id + " seed " + std::to_string(seed));
      ++runs;
    }
  }
  require(runs == 10, "expected 10 randomized runs");
}

// ---------------------------------------------------------------------------
// 3 & 4. One-step recursion and rate-bound domination, theory schedule
// ---------------------------------------------------------------------------
MeanTrace theory_trace;
FastScheduleParams theory_sched;

void criterion_one_step_recursion() {
  const RootProblem p = make_scalar_instance();
  theory_sched = theory_constants(p.mu_F, p.mu_G, p.L());
  require(validate_fast(theory_sched, p.mu_F, p.mu_G, p.L(), 1000000).ok(),
          "theory schedule failed validation");
  MonteCarloOptions opt;
  opt.T = 501;
  opt.n_reps = 1000;
  opt.base_seed = 2025;
  opt.record_every = 1;
  theory_trace =
      monte_carlo(p, SolverKind::fast, theory_sched, NoiseModel::gaussian(1.0, 1.0), opt);
  require(theory_trace.aborted == 0, "replications diverged under the theory schedule");

  const RecursionCheck rc =
      check_one_step_recursion(theory_trace, theory_sched, p.mu_G, 1.0, 1.0);
  std::ostringstream os;
  os << "violation fraction " << rc.violation_fraction() << " over " << rc.checked << " steps";
  require(rc.violation_fraction() <= 0.01, os.str());
}

void criterion_rate_bound_domination() {
  require(!theory_trace.ks.empty(), "criterion 3 must run first");
  const double V0 = theory_trace.mean_V.front();
  for (size_t i = 0; i < theory_trace.ks.size(); ++i) {
    const double bound =
        theoretical_bound_fast(theory_trace.ks[i], theory_sched, V0, 1.0, 1.0) +
        3.0 * theory_trace.stderr_V[i];
    require(theory_trace.mean_V[i] <= bound,
            "mean V exceeds the rate bound at k=" + std::to_string(theory_trace.ks[i]));
  }
}

// ---------------------------------------------------------------------------
// 5. Rate exponents on the nonlinear instance
// ---------------------------------------------------------------------------
void criterion_rate_exponents() {
  const RootProblem p = make_tanh_instance(0.5);
  const NoiseModel noise = NoiseModel::gaussian(1.0, 1.0);

  const FastScheduleParams fast_sched{4.0, 4.0, 2.0, 2.0, 15.0, ScheduleMode::tuned};
  {
    const auto report = validate_fast(fast_sched, p.mu_F, p.mu_G, p.L(), 1000);
    bool hard_violation = false;  // tuned mode enforces positivity and beta <= alpha
    for (const auto& v : report.violations)
      if (v.condition == "beta_k <= alpha_k" || v.condition.find("> 0") != std::string::npos)
        hard_violation = true;
    require(!hard_violation, "tuned schedule violates positivity or beta <= alpha");
  }

  MonteCarloOptions opt;
  opt.T = 100000;
  opt.n_reps = 200;
  opt.base_seed = 31;
  opt.record_every = 250;
  const MeanTrace fast_trace = monte_carlo(p, SolverKind::fast, fast_sched, noise, opt);
  require(fast_trace.aborted == 0, "fast replications diverged");
  const RateFit fast_fit = fit_rate(fast_trace, 1000, 100000);
  {
    std::ostringstream os;
    os << "fast slope " << fast_fit.slope << " (needs <= -0.85)";
    require(fast_fit.slope <= -0.85, os.str());
  }

  const ClassicScheduleParams classic_sched{4.0, 2.0, 2.0 / 3.0, 1.0};
  require(validate_classic(classic_sched, p.mu_F, p.mu_G, p.lip_G).ok(),
          "classic schedule failed validation");
  const MeanTrace classic_trace =
      monte_carlo(p, SolverKind::classic, classic_sched, noise, opt);
  require(classic_trace.aborted == 0, "classic replications diverged");
  const RateFit classic_fit = fit_rate(classic_trace, 1000, 100000);
  {
    std::ostringstream os;
    os << "classic slope " << classic_fit.slope << " (needs <= -0.55)";
    require(classic_fit.slope <= -0.55, os.str());
  }

  // envelope: V stays below its k=1e3 value scaled by (k/1e3)^(-2/3) * 1.5
  double anchor = -1.0;
  for (size_t i = 0; i < classic_trace.ks.size(); ++i)
    if (classic_trace.ks[i] == 1000) anchor = classic_trace.mean_V[i];
  require(anchor > 0, "no record at k = 1000");
  for (size_t i = 0; i < classic_trace.ks.size(); ++i) {
    const long long k = classic_trace.ks[i];
    if (k < 1000) continue;
    const double envelope = anchor * std::pow(k / 1000.0, -2.0 / 3.0) * 1.5;
    std::ostringstream os;
    os << "classic V " << classic_trace.mean_V[i] << " above the 2/3-rate envelope " << envelope
       << " at k=" << k;
    require(classic_trace.mean_V[i] <= envelope, os.str());
  }
}

// ---------------------------------------------------------------------------
// 6. Eigenvalue reproduction of the printed linear example
// ---------------------------------------------------------------------------
void criterion_eigenvalues() {
  const LinearInstance inst = remark2_matrices();
  auto has = [](const Eigen::VectorXcd& eigs, std::complex<double> t) {
    for (int i = 0; i < eigs.size(); ++i)
      if (std::abs(eigs[i] - t) <= 0.01) return true;
    return false;
  };
  const Eigen::VectorXcd e11 = Eigen::EigenSolver<MatrixXd>(inst.A11).eigenvalues();
  require(has(e11, {-1.75, 2.33}) && has(e11, {-1.75, -2.33}),
          "eig(A11) != -1.75 +/- 2.33i within 0.01");
  const Eigen::VectorXcd ed =
      Eigen::EigenSolver<MatrixXd>(schur_complement(inst)).eigenvalues();
  require(has(ed, {-3.44, 14.24}) && has(ed, {-3.44, -14.24}),
          "eig(Delta) != -3.44 +/- 14.24i within 0.01");
  MatrixXd A(4, 4);
  A << inst.A11, inst.A12, inst.A21, inst.A22;
  const Eigen::VectorXcd eA = Eigen::EigenSolver<MatrixXd>(A).eigenvalues();
  require(has(eA, {-8.53, 4.51}) && has(eA, {-8.53, -4.51}) && has(eA, {1.28, 4.24}) &&
              has(eA, {1.28, -4.24}),
          "eig(A) != {-8.53 +/- 4.51i, 1.28 +/- 4.24i} within 0.01");
}

// ---------------------------------------------------------------------------
// 7. Off-policy evaluation: ordering and error decrease
// ---------------------------------------------------------------------------
void criterion_policy_eval() {
  PolicyEvalOptions opt;  // paper setting: 50 states/actions, d=10, gamma=0.5,
  opt.T = 200000;         // steps 2e-3 (auxiliary) / 5e-4 (main), lambda_k=4/(5(k+10))
  opt.record_every = 20000;

  const int n_seeds = 10;
  std::vector<std::map<PEAlgo, ErrorTrace>> results(n_seeds);
  parallel_seeds(n_seeds, [&](int i) {
    results[i] = run_policy_eval(opt, 1000 + static_cast<std::uint64_t>(i) * 1000);
  });

  double init = 0, final_td = 0, final_tdc = 0, final_fast = 0;
  for (const auto& rep : results) {
    for (const auto& [algo, tr] : rep)
      require(!tr.aborted, "a run diverged (" + to_string(algo) + ")");
    init += rep.at(PEAlgo::tdc).theta_err.front();
    final_td += rep.at(PEAlgo::td).theta_err.back();
    final_tdc += rep.at(PEAlgo::tdc).theta_err.back();
    final_fast += rep.at(PEAlgo::fast_tdc).theta_err.back();
  }
  init /= n_seeds;
  final_td /= n_seeds;
  final_tdc /= n_seeds;
  final_fast /= n_seeds;

  std::ostringstream os;
  os << "mean errors: initial " << init << ", td " << final_td << ", tdc " << final_tdc
     << ", fast_tdc " << final_fast;
  require(final_fast <= final_tdc, "ordering violated; " + os.str());
  require(final_tdc <= 0.5 * init && final_fast <= 0.5 * init,
          "insufficient error decrease; " + os.str());
}

// ---------------------------------------------------------------------------
// 8. LQR oracles and actor-critic comparison
// ---------------------------------------------------------------------------
void criterion_lqr() {
  const LQRInstance inst = paper_lqr_instance(0.1);  // oracle checks at the default sigma

  for (double scale : {0.0, 0.1, 0.3}) {
    const MatrixXd K = MatrixXd::Constant(2, 3, scale);
    const MatrixXd P = solve_policy_lyapunov(inst, K);
    const MatrixXd Acl = inst.A - inst.B * K;
    const double res =
        (P - (inst.Q + K.transpose() * inst.R * K + Acl.transpose() * P * Acl)).norm();
    require(res <= 1e-10, "Lyapunov residual " + std::to_string(res));
  }

  const MatrixXd K_star = optimal_gain(inst);
  const double J_star = lqr_cost(inst, K_star);
  for (int g = 0; g < 3; ++g) {
    const MatrixXd K = g == 0   ? MatrixXd::Zero(2, 3)
                       : g == 1 ? K_star
                                : MatrixXd::Constant(2, 3, 0.2);
    const double J = lqr_cost(inst, K);
    const double J_sim = simulate_average_cost(inst, K, 1000000, 99 + g);
    std::ostringstream os;
    os << "simulated cost " << J_sim << " vs model cost " << J;
    require(std::abs(J_sim - J) / J <= 0.05, os.str());
  }

  Rng rng(31);
  int checked = 0;
  while (checked < 100) {
    MatrixXd E(2, 3);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 3; ++j) E(i, j) = gaussian_vector(1, rng)[0];
    E *= 0.05 / E.norm();
    if (!is_stabilizing(inst, K_star + E)) continue;
    ++checked;
    require(lqr_cost(inst, K_star + E) >= J_star - 1e-12,
            "a perturbed gain beat the Riccati gain");
  }

  // actor-critic comparison at higher exploration so the critic identifies
  // the control blocks of the quadratic value quickly
  const LQRInstance ac_inst = paper_lqr_instance(0.5);
  const MatrixXd K0 = 3.0 * optimal_gain(ac_inst);
  const int n_seeds = 10;
  ActorCriticOptions ac;
  ac.critic_step = 2e-3;
  ac.actor_step = 1e-5;
  ac.lambda_c = 20.0;
  ac.lambda_h = 60000.0;
  ac.T = 100000;
  ac.record_every = 10000;

  std::vector<double> final_classic(n_seeds), final_fast(n_seeds);
  std::vector<int> decreased_classic(n_seeds, 0), decreased_fast(n_seeds, 0);
  std::atomic<int> aborted{0};
  parallel_seeds(n_seeds, [&](int i) {
    for (SolverKind variant : {SolverKind::classic, SolverKind::fast}) {
      ActorCriticOptions o = ac;
      o.seed = 500 + static_cast<std::uint64_t>(i);
      const JGapTrace tr = actor_critic_run(ac_inst, variant, o, K0);
      if (tr.aborted) {
        ++aborted;
        return;
      }
      double at_tenth = tr.j_gap.front();
      for (size_t r = 0; r < tr.ks.size(); ++r)
        if (tr.ks[r] <= ac.T / 10) at_tenth = tr.j_gap[r];
      if (variant == SolverKind::classic) {
        final_classic[i] = tr.j_gap.back();
        decreased_classic[i] = tr.j_gap.back() < at_tenth;
      } else {
        final_fast[i] = tr.j_gap.back();
        decreased_fast[i] = tr.j_gap.back() < at_tenth;
      }
    }
  });
  require(aborted == 0, "an actor-critic run left the stabilizing region");

  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  };
  const double med_classic = median(final_classic), med_fast = median(final_fast);
  {
    std::ostringstream os;
    os << "median final gap: fast " << med_fast << " vs classic " << med_classic;
    require(med_fast <= med_classic, os.str());
  }
  int n_dec_classic = 0, n_dec_fast = 0;
  for (int i = 0; i < n_seeds; ++i) {
    n_dec_classic += decreased_classic[i];
    n_dec_fast += decreased_fast[i];
  }
  std::ostringstream os;
  os << "gap decreased from T/10 to T for " << n_dec_classic << "/10 classic and "
     << n_dec_fast << "/10 fast seeds";
  require(n_dec_classic >= 9 && n_dec_fast >= 9, os.str());
}

// ---------------------------------------------------------------------------
// 9. Determinism of experiment artifacts
// ---------------------------------------------------------------------------
void criterion_determinism() {
  const fs::path base = fs::temp_directory_path() / "ttsa_acceptance_det";
  fs::remove_all(base);

  const std::vector<std::string> configs = {
      R"({"kind":"root_find","problem":"tanh:0.5","solver":"fast",
          "schedule":{"fast":{"C_lambda":2,"C_gamma":2,"C_alpha":1,"C_beta":0.5,"h":7,"mode":"tuned"}},
          "noise":{"kind":"gaussian_iid","gamma11":1,"gamma22":1},
          "T":500,"n_reps":2,"base_seed":5,"record_every":50,"output_dir":"D"})",
      R"({"kind":"rate_study","problem":"scalar","solver":"classic",
          "schedule":{"classic":{"alpha0":4,"beta0":2,"a":0.6666666666666666,"b":1}},
          "noise":{"kind":"gaussian_iid","gamma11":1,"gamma22":1},
          "T":400,"n_reps":4,"base_seed":9,"record_every":10,"output_dir":"D"})",
      R"({"kind":"policy_eval","T":2000,"n_reps":2,"base_seed":3,"record_every":500,
          "policy_eval":{"n_states":8,"n_actions":4,"d":3},"output_dir":"D"})",
      R"({"kind":"lqr","T":2000,"n_reps":2,"base_seed":4,"record_every":500,
          "lqr":{"variant":"both"},"output_dir":"D"})"};

  int idx = 0;
  for (const auto& text : configs) {
    ParseResult parsed = parse_config(text);
    require(parsed.ok(), "config " + std::to_string(idx) + " failed to parse:\n" +
                             parsed.describe());
    for (int round = 0; round < 2; ++round) {
      parsed.config->output_dir =
          (base / (std::to_string(idx) + "_" + std::to_string(round))).string();
      std::ostringstream log;
      require(run_experiment(*parsed.config, log) == 0,
              "experiment " + std::to_string(idx) + " failed");
    }
    const fs::path a = base / (std::to_string(idx) + "_0");
    const fs::path b = base / (std::to_string(idx) + "_1");
    for (const auto& entry : fs::directory_iterator(a)) {
      if (entry.path().extension() != ".csv") continue;
      std::ifstream fa(entry.path(), std::ios::binary);
      std::ifstream fb(b / entry.path().filename(), std::ios::binary);
      std::stringstream sa, sb;
      sa << fa.rdbuf();
      sb << fb.rdbuf();
      require(sa.str() == sb.str() && !sa.str().empty(),
              "CSV mismatch for " + entry.path().filename().string());
    }
    ++idx;
  }
  fs::remove_all(base);
}

}  // namespace

int main() {
  Harness h;
  h.criterion(1, "fixed-point stationarity and shifted-sample reduction",
              criterion_fixed_point_and_reduction);
  h.criterion(2, "per-step norm inequalities over 10 randomized runs",
              criterion_lemma_inequalities);
  h.criterion(3, "one-step mean recursion under the theory schedule",
              criterion_one_step_recursion);
  h.criterion(4, "rate-bound domination under the theory schedule",
              criterion_rate_bound_domination);
  h.criterion(5, "decay exponents on the nonlinear instance", criterion_rate_exponents);
  h.criterion(6, "eigenvalue reproduction of the linear example", criterion_eigenvalues);
  h.criterion(7, "off-policy evaluation ordering and decrease", criterion_policy_eval);
  h.criterion(8, "LQR oracles and actor-critic comparison", criterion_lqr);
  h.criterion(9, "byte-identical experiment reruns", criterion_determinism);

  if (h.failures > 0) {
    std::cout << h.failures << " criterion(s) failed" << std::endl;
    return 1;
  }
  std::cout << "all acceptance criteria passed" << std::endl;
  return 0;
}
