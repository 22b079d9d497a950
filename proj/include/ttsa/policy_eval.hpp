#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ttsa/rng.hpp"
#include "ttsa/solver.hpp"

namespace ttsa {

struct TabularMDP {
  int n_states = 0;
  int n_actions = 0;
  double gamma = 0.5;
  std::vector<MatrixXd> P;  // one row-stochastic n_states x n_states block per action

  const MatrixXd& transition(int a) const { return P[static_cast<size_t>(a)]; }
};

/// Uniformly random transition kernel: entries Unif(0,1), rows normalized.
inline TabularMDP generate_mdp(std::uint64_t seed, int n_states = 50, int n_actions = 50,
                               double gamma = 0.5) {
  if (n_states < 2 || n_actions < 1) throw std::invalid_argument("need n_states >= 2, n_actions >= 1");
  TabularMDP mdp;
  mdp.n_states = n_states;
  mdp.n_actions = n_actions;
  mdp.gamma = gamma;
  mdp.P.assign(n_actions, MatrixXd(n_states, n_states));
  Rng rng(seed);
  for (int a = 0; a < n_actions; ++a) {
    for (int s = 0; s < n_states; ++s) {
      double total = 0.0;
      for (int t = 0; t < n_states; ++t) {
        const double u = uniform01(rng);
        mdp.P[a](s, t) = u;
        total += u;
      }
      mdp.P[a].row(s) /= total;
    }
  }
  return mdp;
}

/// Off-policy evaluation target: softmax policy, Gaussian features, and a
/// reward chosen so the true value function lies exactly in span(Phi).
struct EvalSetup {
  MatrixXd target_policy;  // n_states x n_actions, rows sum to 1
  MatrixXd Phi;            // n_states x d
  VectorXd theta_star;
  VectorXd V_star;    // Phi * theta_star
  VectorXd R_state;   // observed reward, a function of the state only
  MatrixXd P_pi;      // state transition kernel under the target policy
};

inline EvalSetup make_eval_setup(const TabularMDP& mdp, std::uint64_t seed, int d = 10) {
  if (d > mdp.n_states) throw std::invalid_argument("feature dimension d must be <= n_states");
  Rng rng(seed);
  EvalSetup su;

  su.target_policy.resize(mdp.n_states, mdp.n_actions);
  for (int s = 0; s < mdp.n_states; ++s) {
    VectorXd logits = gaussian_vector(mdp.n_actions, rng);
    const double m = logits.maxCoeff();
    VectorXd e = (logits.array() - m).exp();
    su.target_policy.row(s) = e.transpose() / e.sum();
  }

  auto draw_features = [&]() {
    MatrixXd Phi(mdp.n_states, d);
    for (int s = 0; s < mdp.n_states; ++s) Phi.row(s) = gaussian_vector(d, rng).transpose();
    return Phi;
  };
  su.Phi = draw_features();
  auto rank_of = [](const MatrixXd& M) {
    Eigen::JacobiSVD<MatrixXd> svd(M);
    svd.setThreshold(1e-10);
    return svd.rank();
  };
  if (rank_of(su.Phi) < d) {
    su.Phi = draw_features();  // resample once
    if (rank_of(su.Phi) < d) throw std::runtime_error("feature matrix is rank deficient");
  }

  su.theta_star = gaussian_vector(d, rng);
  su.V_star = su.Phi * su.theta_star;

  su.P_pi.setZero(mdp.n_states, mdp.n_states);
  for (int a = 0; a < mdp.n_actions; ++a)
    su.P_pi += su.target_policy.col(a).asDiagonal() * mdp.P[a];
  su.R_state = su.V_star - mdp.gamma * su.P_pi * su.V_star;
  return su;
}

enum class PEAlgo { td, tdc, fast_tdc };

inline std::string to_string(PEAlgo a) {
  switch (a) {
    case PEAlgo::td: return "td";
    case PEAlgo::tdc: return "tdc";
    default: return "fast_tdc";
  }
}

struct TDCState {
  VectorXd theta;          // main weight, slow time scale
  VectorXd w;              // auxiliary weight, fast time scale
  VectorXd avg_w_dir;      // operator averages, averaged variant only
  VectorXd avg_theta_dir;
  int s = 0;
  long long k = 0;
};

inline TDCState make_tdc_state(int d, int s0) {
  TDCState st;
  st.theta = VectorXd::Zero(d);
  st.w = VectorXd::Zero(d);
  st.avg_w_dir = VectorXd::Zero(d);
  st.avg_theta_dir = VectorXd::Zero(d);
  st.s = s0;
  return st;
}

struct TdcStepOptions {
  double alpha = 2e-3;  // auxiliary weight step (fast)
  double beta = 5e-4;   // main weight step (slow)
  double lambda_k = 1.0;
  PEAlgo algo = PEAlgo::tdc;
  bool importance_correction = true;
};

struct TdcStepInfo {
  double delta = 0;
  double rho = 0;
  VectorXd d_w, d_theta;
  int a = 0, s_next = 0;
};

inline int sample_from_row(const MatrixXd& P, int row, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (int t = 0; t < P.cols(); ++t) {
    acc += P(row, t);
    if (u < acc) return t;
  }
  return static_cast<int>(P.cols()) - 1;
}

/// One transition of off-policy evaluation from the uniform behavior policy.
/// The TD error carries the importance ratio rho = pi(a|s)/pi_b(a|s); the
/// averaged variant applies the pre-update direction averages, mirroring the
/// operator-averaged root-finding scheme.
inline TdcStepInfo tdc_step(TDCState& st, const EvalSetup& su, const TabularMDP& mdp,
                            const TdcStepOptions& opt, Rng& rng) {
  std::uniform_int_distribution<int> act(0, mdp.n_actions - 1);
  TdcStepInfo info;
  info.a = act(rng);
  info.s_next = sample_from_row(mdp.transition(info.a), st.s, rng);

  const VectorXd phi = su.Phi.row(st.s).transpose();
  const VectorXd phi_next = su.Phi.row(info.s_next).transpose();
  const double r = su.R_state[st.s];
  info.rho = opt.importance_correction
                 ? su.target_policy(st.s, info.a) * static_cast<double>(mdp.n_actions)
                 : 1.0;
  info.delta = info.rho * (r + mdp.gamma * phi_next.dot(st.theta) - phi.dot(st.theta));

  switch (opt.algo) {
    case PEAlgo::td:
      info.d_theta = info.delta * phi;
      info.d_w = VectorXd::Zero(st.w.size());
      st.theta += opt.beta * info.d_theta;
      break;
    case PEAlgo::tdc:
      info.d_w = (info.delta - phi.dot(st.w)) * phi;
      info.d_theta = (phi - mdp.gamma * phi_next) * phi.dot(st.w);
      st.w += opt.alpha * info.d_w;
      st.theta += opt.beta * info.d_theta;
      break;
    case PEAlgo::fast_tdc:
      info.d_w = (info.delta - phi.dot(st.w)) * phi;
      info.d_theta = (phi - mdp.gamma * phi_next) * phi.dot(st.w);
      st.w += opt.alpha * st.avg_w_dir;
      st.theta += opt.beta * st.avg_theta_dir;
      st.avg_w_dir = (1.0 - opt.lambda_k) * st.avg_w_dir + opt.lambda_k * info.d_w;
      st.avg_theta_dir = (1.0 - opt.lambda_k) * st.avg_theta_dir + opt.lambda_k * info.d_theta;
      break;
  }
  st.s = info.s_next;
  st.k += 1;
  if (!st.theta.allFinite() || !st.w.allFinite())
    throw std::runtime_error("policy evaluation produced non-finite weights at k=" +
                             std::to_string(st.k));
  return info;
}

struct PolicyEvalOptions {
  int n_states = 50;
  int n_actions = 50;
  int d = 10;
  double gamma = 0.5;
  double alpha = 2e-3;     // auxiliary (fast) weight
  double beta = 5e-4;      // main (slow) weight
  double lambda_c = 0.8;   // lambda_k = lambda_c / (k + lambda_h)
  double lambda_h = 10.0;
  long long T = 200000;
  long long record_every = 1000;
  bool importance_correction = true;
};

struct ErrorTrace {
  std::vector<long long> ks;
  std::vector<double> theta_err;
  bool aborted = false;
};

/// Runs one algorithm down a single behavior-policy trajectory. The
/// trajectory is a function of the seed alone, so all three algorithms see
/// identical data for a given seed.
inline ErrorTrace policy_eval_single(const TabularMDP& mdp, const EvalSetup& su, PEAlgo algo,
                                     const PolicyEvalOptions& opt, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_int_distribution<int> us(0, mdp.n_states - 1);
  TDCState st = make_tdc_state(opt.d, us(rng));

  ErrorTrace tr;
  auto record = [&]() {
    tr.ks.push_back(st.k);
    tr.theta_err.push_back((st.theta - su.theta_star).norm());
  };
  record();
  for (long long k = 0; k < opt.T; ++k) {
    TdcStepOptions so;
    so.alpha = opt.alpha;
    so.beta = opt.beta;
    so.lambda_k = opt.lambda_c / (static_cast<double>(k) + opt.lambda_h);
    so.algo = algo;
    so.importance_correction = opt.importance_correction;
    try {
      tdc_step(st, su, mdp, so, rng);
    } catch (const std::runtime_error&) {
      tr.aborted = true;
      return tr;
    }
    if (st.k % opt.record_every == 0 || st.k == opt.T) record();
    if (tr.theta_err.back() > 1e12) {
      tr.aborted = true;
      return tr;
    }
  }
  return tr;
}

/// One full replication: the seed generates the MDP, the evaluation setup,
/// and the trajectory; all three algorithms run on the same data.
inline std::map<PEAlgo, ErrorTrace> run_policy_eval(const PolicyEvalOptions& opt,
                                                    std::uint64_t seed) {
  const TabularMDP mdp = generate_mdp(seed, opt.n_states, opt.n_actions, opt.gamma);
  const EvalSetup su = make_eval_setup(mdp, seed + 1, opt.d);
  std::map<PEAlgo, ErrorTrace> out;
  for (PEAlgo algo : {PEAlgo::td, PEAlgo::tdc, PEAlgo::fast_tdc})
    out[algo] = policy_eval_single(mdp, su, algo, opt, seed + 2);
  return out;
}

}  // namespace ttsa
