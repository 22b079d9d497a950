#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ttsa/rng.hpp"
#include "ttsa/solver.hpp"

namespace ttsa {

/// Average-cost LQR: minimize lim (1/T) E[sum x'Qx + u'Ru] subject to
/// x' = Ax + Bu + w, w ~ N(0, Psi), over gains u = -Kx + sigma * eps.
struct LQRInstance {
  MatrixXd A, B, Q, R;
  MatrixXd Psi;        // system noise covariance
  double sigma = 0.1;  // exploration standard deviation

  int state_dim() const { return static_cast<int>(A.rows()); }
  int input_dim() const { return static_cast<int>(B.cols()); }
  MatrixXd psi_sigma() const { return Psi + sigma * sigma * B * B.transpose(); }
};

inline LQRInstance paper_lqr_instance(double sigma = 0.1) {
  LQRInstance inst;
  inst.A = (MatrixXd(3, 3) << 0.5, 0.01, 0.0, 0.01, 0.5, 0.01, 0.0, 0.01, 0.5).finished();
  inst.B = (MatrixXd(3, 2) << 1.0, 0.1, 0.0, 0.1, 0.0, 0.1).finished();
  inst.Q = MatrixXd::Identity(3, 3);
  inst.R = MatrixXd::Identity(2, 2);
  inst.Psi = MatrixXd::Identity(3, 3);
  inst.sigma = sigma;
  return inst;
}

inline double spectral_radius(const MatrixXd& M) {
  return M.eigenvalues().cwiseAbs().maxCoeff();
}

/// Square root of a PSD matrix; used to color the system noise (works for
/// singular covariances, unlike a Cholesky factor).
inline MatrixXd psd_sqrt(const MatrixXd& M) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(M);
  return es.eigenvectors() *
         es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
         es.eigenvectors().transpose();
}

inline bool is_stabilizing(const LQRInstance& inst, const MatrixXd& K) {
  return spectral_radius(inst.A - inst.B * K) < 1.0;
}

/// Value matrix of the gain K: the fixed point of
///   P = Q + K'RK + (A-BK)' P (A-BK),
/// iterated to Frobenius residual 1e-10.
inline MatrixXd solve_policy_lyapunov(const LQRInstance& inst, const MatrixXd& K) {
  const MatrixXd Acl = inst.A - inst.B * K;
  const double rho = spectral_radius(Acl);
  if (rho >= 1.0)
    throw std::invalid_argument("gain is not stabilizing: spectral radius " +
                                std::to_string(rho));
  const MatrixXd C = inst.Q + K.transpose() * inst.R * K;
  MatrixXd P = C;
  for (int it = 0; it < 1000000; ++it) {
    MatrixXd next = C + Acl.transpose() * P * Acl;
    next = 0.5 * (next + next.transpose());
    if ((next - P).norm() <= 1e-10 * 0.5) {
      P = next;
      break;
    }
    P = next;
  }
  if ((P - (C + Acl.transpose() * P * Acl)).norm() > 1e-10)
    throw std::runtime_error("policy Lyapunov iteration did not reach the residual tolerance");
  return P;
}

/// J(K) = trace(P_K Psi_sigma) + sigma^2 trace(R).
inline double lqr_cost(const LQRInstance& inst, const MatrixXd& K) {
  const MatrixXd P = solve_policy_lyapunov(inst, K);
  return (P * inst.psi_sigma()).trace() + inst.sigma * inst.sigma * inst.R.trace();
}

/// Riccati fixed point and the optimal gain K* = (R + B'PB)^{-1} B'PA.
inline MatrixXd optimal_gain(const LQRInstance& inst) {
  if (inst.B.norm() == 0.0)
    throw std::invalid_argument("no control authority: B is zero");
  MatrixXd P = inst.Q;
  bool converged = false;
  for (int it = 0; it < 100000; ++it) {
    const MatrixXd BtP = inst.B.transpose() * P;
    const MatrixXd gain = (inst.R + BtP * inst.B).ldlt().solve(BtP * inst.A);
    MatrixXd next = inst.Q + inst.A.transpose() * P * inst.A -
                    inst.A.transpose() * P * inst.B * gain;
    next = 0.5 * (next + next.transpose());
    if ((next - P).norm() <= 1e-12) {
      P = next;
      converged = true;
      break;
    }
    P = next;
  }
  if (!converged) throw std::runtime_error("Riccati iteration did not converge in 1e5 sweeps");
  const MatrixXd BtP = inst.B.transpose() * P;
  return (inst.R + BtP * inst.B).ldlt().solve(BtP * inst.A);
}

/// Long-run average of the realized stage cost under u = -Kx + sigma eps;
/// consistency oracle for lqr_cost.
inline double simulate_average_cost(const LQRInstance& inst, const MatrixXd& K, long long T,
                                    std::uint64_t seed) {
  if (!is_stabilizing(inst, K)) throw std::invalid_argument("gain is not stabilizing");
  Rng rng(seed);
  const MatrixXd psi_chol = psd_sqrt(inst.Psi);
  VectorXd x = VectorXd::Zero(inst.state_dim());
  double total = 0.0;
  for (long long k = 0; k < T; ++k) {
    const VectorXd u =
        -K * x + inst.sigma * gaussian_vector(inst.input_dim(), rng);
    total += x.dot(inst.Q * x) + u.dot(inst.R * u);
    x = inst.A * x + inst.B * u + psi_chol * gaussian_vector(inst.state_dim(), rng);
  }
  return total / static_cast<double>(T);
}

namespace detail {

// phi(z) = upper triangle of z z^T, off-diagonal entries counted once;
// phi(z) . m == z^T M z with M_ii = m_ii, M_ij = M_ji = m_ij / 2.
inline int quad_feature_dim(int n) { return n * (n + 1) / 2; }

inline VectorXd quad_features(const VectorXd& z) {
  const int n = static_cast<int>(z.size());
  VectorXd phi(quad_feature_dim(n));
  int idx = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) phi[idx++] = z[i] * z[j];
  return phi;
}

inline MatrixXd quad_matrix(const VectorXd& m, int n) {
  MatrixXd M(n, n);
  int idx = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      if (i == j) {
        M(i, i) = m[idx];
      } else {
        M(i, j) = M(j, i) = 0.5 * m[idx];
      }
      ++idx;
    }
  return M;
}

}  // namespace detail

struct ActorCriticOptions {
  double critic_step = 2e-3;  // fast time scale
  double actor_step = 1e-5;   // slow time scale
  // lambda_k = lambda_c / (k + lambda_h + 1) for the averaged variant; the
  // defaults give a near-constant weight whose memory exceeds the critic's
  // mixing time while staying well inside the actor loop's stability margin
  double lambda_c = 20.0;
  double lambda_h = 60000.0;
  long long T = 50000;
  long long record_every = 1000;
  std::uint64_t seed = 0;
};

struct JGapTrace {
  std::vector<long long> ks;
  std::vector<double> j_gap;
  bool aborted = false;
  long long abort_k = -1;
};

/// Online actor-critic on one trajectory. The critic (fast iterate) learns an
/// average-cost quadratic state-action value by semi-gradient TD; the actor
/// (slow iterate) descends the policy-improvement direction Muu K - Mux read
/// off the critic estimate. The averaged variant passes both raw update
/// directions through pre-update operator averages with weight lambda_k.
/// J(K_k) is scored by the model-based cost oracle at recorded iterations.
inline JGapTrace actor_critic_run(const LQRInstance& inst, SolverKind variant,
                                  const ActorCriticOptions& opt,
                                  const MatrixXd& K0 = MatrixXd()) {
  if (opt.T < 1) throw std::invalid_argument("T must be >= 1");
  const int n = inst.state_dim(), m = inst.input_dim();
  MatrixXd K = K0.size() > 0 ? K0 : MatrixXd::Zero(m, n);
  if (!is_stabilizing(inst, K)) throw std::invalid_argument("initial gain is not stabilizing");

  const double j_star = lqr_cost(inst, optimal_gain(inst));
  const int p = detail::quad_feature_dim(n + m);

  Rng rng(opt.seed);
  const MatrixXd psi_chol = psd_sqrt(inst.Psi);

  VectorXd mvec = VectorXd::Zero(p);  // quadratic value coefficients
  double eta = 0.0;                   // average-cost estimate
  VectorXd avg_m = VectorXd::Zero(p);
  double avg_eta = 0.0;
  MatrixXd avg_K = MatrixXd::Zero(m, n);

  VectorXd x = VectorXd::Zero(n);
  VectorXd u = -K * x + inst.sigma * gaussian_vector(m, rng);

  JGapTrace tr;
  auto record = [&](long long k) {
    tr.ks.push_back(k);
    tr.j_gap.push_back(lqr_cost(inst, K) - j_star);
  };
  record(0);

  for (long long k = 0; k < opt.T; ++k) {
    VectorXd z(n + m);
    z << x, u;
    const double cost = x.dot(inst.Q * x) + u.dot(inst.R * u);
    const VectorXd x_next = inst.A * x + inst.B * u + psi_chol * gaussian_vector(n, rng);
    const VectorXd u_next = -K * x_next + inst.sigma * gaussian_vector(m, rng);
    VectorXd z_next(n + m);
    z_next << x_next, u_next;

    const VectorXd phi = detail::quad_features(z);
    const VectorXd phi_next = detail::quad_features(z_next);
    const double delta = cost - eta + phi_next.dot(mvec) - phi.dot(mvec);
    const double d_eta = cost - eta;
    const VectorXd d_m = delta * phi;

    const MatrixXd M = detail::quad_matrix(mvec, n + m);
    const MatrixXd d_K = M.bottomRightCorner(m, m) * K - M.bottomLeftCorner(m, n);

    if (variant == SolverKind::fast) {
      const double lambda = opt.lambda_c / (static_cast<double>(k) + opt.lambda_h + 1.0);
      eta += opt.critic_step * avg_eta;
      mvec += opt.critic_step * avg_m;
      K -= opt.actor_step * avg_K;
      avg_eta = (1.0 - lambda) * avg_eta + lambda * d_eta;
      avg_m = (1.0 - lambda) * avg_m + lambda * d_m;
      avg_K = (1.0 - lambda) * avg_K + lambda * d_K;
    } else {
      eta += opt.critic_step * d_eta;
      mvec += opt.critic_step * d_m;
      K -= opt.actor_step * d_K;
    }

    if (!K.allFinite() || !mvec.allFinite() || !std::isfinite(eta) ||
        !is_stabilizing(inst, K)) {
      tr.aborted = true;
      tr.abort_k = k + 1;
      return tr;
    }
    x = x_next;
    u = u_next;
    if ((k + 1) % opt.record_every == 0 || k + 1 == opt.T) record(k + 1);
  }
  return tr;
}

inline void write_jgap_csv(std::ostream& os, const JGapTrace& tr) {
  os << "k,J_gap\n";
  for (size_t i = 0; i < tr.ks.size(); ++i)
    os << tr.ks[i] << ',' << format_g17(tr.j_gap[i]) << '\n';
}

}  // namespace ttsa
