#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "ttsa/rng.hpp"

namespace ttsa {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct NoiseModel {
  enum class Kind { none, gaussian_iid };
  Kind kind = Kind::none;
  double gamma11 = 0.0;  // trace of the xi covariance
  double gamma22 = 0.0;  // trace of the psi covariance

  static NoiseModel zero() { return {}; }
  static NoiseModel gaussian(double g11, double g22) {
    if (g11 < 0 || g22 < 0) throw std::invalid_argument("noise variances must be nonnegative");
    return {Kind::gaussian_iid, g11, g22};
  }
};

/// A coupled root-finding problem: find (x*, y*) with F(x*,y*) = 0, G(x*,y*) = 0.
/// H, when present, maps y to the unique x with F(H(y), y) = 0.
struct RootProblem {
  std::string name;
  int dim_x = 0;
  int dim_y = 0;
  std::function<VectorXd(const VectorXd&, const VectorXd&)> F;
  std::function<VectorXd(const VectorXd&, const VectorXd&)> G;
  std::function<VectorXd(const VectorXd&)> H;  // empty when no closed form is known
  std::optional<std::pair<VectorXd, VectorXd>> solution;

  double mu_F = 0.0;
  double mu_G = 0.0;
  double lip_F = 0.0;
  double lip_G = 0.0;
  double lip_H = 0.0;

  // When true, mu_F/mu_G are spectral-abscissa margins of a linear instance
  // whose symmetric parts are indefinite; the pointwise monotonicity
  // inequality does not hold for such instances.
  bool spectral_mu = false;

  double L() const { return std::max({lip_F, lip_G, lip_H}); }
  bool has_inner_map() const { return static_cast<bool>(H); }
};

inline void check_dimensions(const RootProblem& p, const VectorXd& x, const VectorXd& y) {
  if (x.size() != p.dim_x || y.size() != p.dim_y) {
    std::ostringstream os;
    os << "dimension mismatch for problem '" << p.name << "': expected (" << p.dim_x << ", "
       << p.dim_y << "), got (" << x.size() << ", " << y.size() << ")";
    throw std::invalid_argument(os.str());
  }
}

inline std::pair<VectorXd, VectorXd> evaluate(const RootProblem& p, const VectorXd& x,
                                              const VectorXd& y) {
  check_dimensions(p, x, y);
  return {p.F(x, y), p.G(x, y)};
}

inline std::pair<VectorXd, VectorXd> sample_noisy(const RootProblem& p, const NoiseModel& noise,
                                                  const VectorXd& x, const VectorXd& y, Rng& rng) {
  auto [Fxy, Gxy] = evaluate(p, x, y);
  if (noise.kind == NoiseModel::Kind::gaussian_iid) {
    const double sx = std::sqrt(noise.gamma11 / p.dim_x);
    const double sy = std::sqrt(noise.gamma22 / p.dim_y);
    Fxy += sx * gaussian_vector(p.dim_x, rng);
    Gxy += sy * gaussian_vector(p.dim_y, rng);
  }
  return {Fxy, Gxy};
}

struct LinearInstance {
  MatrixXd A11, A12, A21, A22;
  VectorXd b1, b2;
};

inline MatrixXd symmetric_part(const MatrixXd& M) { return 0.5 * (M + M.transpose()); }

inline double min_symmetric_eigenvalue(const MatrixXd& M) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetric_part(M));
  return es.eigenvalues().minCoeff();
}

inline double min_real_eigenvalue(const MatrixXd& M) {
  Eigen::EigenSolver<MatrixXd> es(M, false);
  return es.eigenvalues().real().minCoeff();
}

inline double spectral_norm(const MatrixXd& M) {
  return M.jacobiSvd().singularValues().maxCoeff();
}

inline MatrixXd schur_complement(const LinearInstance& inst) {
  return inst.A22 - inst.A21 * inst.A11.partialPivLu().solve(inst.A12);
}

namespace detail {

// Shared by the strict constructor and the remark2 builder; does everything
// except choose mu_F/mu_G.
inline RootProblem linear_problem_core(const LinearInstance& inst, std::string name) {
  const int dx = static_cast<int>(inst.A11.rows());
  const int dy = static_cast<int>(inst.A22.rows());
  if (inst.A11.cols() != dx || inst.A12.rows() != dx || inst.A12.cols() != dy ||
      inst.A21.rows() != dy || inst.A21.cols() != dx || inst.A22.cols() != dy ||
      inst.b1.size() != dx || inst.b2.size() != dy) {
    throw std::invalid_argument("linear instance has inconsistent block dimensions");
  }

  RootProblem p;
  p.name = std::move(name);
  p.dim_x = dx;
  p.dim_y = dy;

  const MatrixXd A11 = inst.A11, A12 = inst.A12, A21 = inst.A21, A22 = inst.A22;
  const VectorXd b1 = inst.b1, b2 = inst.b2;
  p.F = [A11, A12, b1](const VectorXd& x, const VectorXd& y) -> VectorXd {
    return A11 * x + A12 * y - b1;
  };
  p.G = [A21, A22, b2](const VectorXd& x, const VectorXd& y) -> VectorXd {
    return A21 * x + A22 * y - b2;
  };

  Eigen::PartialPivLU<MatrixXd> lu11(inst.A11);
  p.H = [lu11, A12, b1](const VectorXd& y) -> VectorXd { return lu11.solve(b1 - A12 * y); };

  const MatrixXd delta = schur_complement(inst);
  const VectorXd y_star = delta.partialPivLu().solve(inst.b2 - inst.A21 * lu11.solve(inst.b1));
  const VectorXd x_star = lu11.solve(inst.b1 - inst.A12 * y_star);
  p.solution = std::make_pair(x_star, y_star);

  p.lip_F = std::max(spectral_norm(inst.A11), spectral_norm(inst.A12));
  p.lip_G = std::max(spectral_norm(inst.A21), spectral_norm(inst.A22));
  p.lip_H = spectral_norm(lu11.solve(inst.A12));
  return p;
}

}  // namespace detail

/// Builds a runnable problem from linear blocks. The descent update
/// x' = x - alpha F requires the symmetric parts of A11 and of the Schur
/// complement to be positive definite; instances violating that are rejected.
inline RootProblem make_linear_problem(const LinearInstance& inst,
                                       std::string name = "linear") {
  const double muF = min_symmetric_eigenvalue(inst.A11);
  if (!(muF > 0)) {
    std::ostringstream os;
    os << "A11 is not strongly monotone: min eigenvalue of its symmetric part is " << muF;
    throw std::invalid_argument(os.str());
  }
  const MatrixXd delta = schur_complement(inst);
  const double muG = min_symmetric_eigenvalue(delta);
  if (!(muG > 0)) {
    std::ostringstream os;
    os << "Schur complement is not strongly monotone: min eigenvalue of its symmetric part is "
       << muG;
    throw std::invalid_argument(os.str());
  }
  RootProblem p = detail::linear_problem_core(inst, std::move(name));
  p.mu_F = muF;
  p.mu_G = std::min(muG, muF);  // Assumption ordering mu_G <= mu_F
  return p;
}

/// The 2x2-block example matrices exactly as printed (A11 and the Schur
/// complement have eigenvalues with negative real parts).
inline LinearInstance remark2_matrices() {
  LinearInstance inst;
  inst.A11 = (MatrixXd(2, 2) << -3.5, -8.5, 1.0, 0.0).finished();
  inst.A12 = 2.0 * MatrixXd::Identity(2, 2);
  inst.A21 = 5.0 * MatrixXd::Identity(2, 2);
  inst.A22 = (MatrixXd(2, 2) << -10.0, -1.6, 20.0, -1.0).finished();
  inst.b1 = VectorXd::Zero(2);
  inst.b2 = VectorXd::Zero(2);
  return inst;
}

/// Runnable variant of the printed example: all four blocks negated so the
/// descent update contracts. The negated blocks are Hurwitz but their
/// symmetric parts are indefinite, so mu_F/mu_G are taken from the
/// eigenvalue real parts and flagged via spectral_mu.
inline RootProblem remark2_instance() {
  LinearInstance inst = remark2_matrices();
  inst.A11 = -inst.A11;
  inst.A12 = -inst.A12;
  inst.A21 = -inst.A21;
  inst.A22 = -inst.A22;
  RootProblem p = detail::linear_problem_core(inst, "remark2");
  p.mu_F = min_real_eigenvalue(inst.A11);
  p.mu_G = std::min(min_real_eigenvalue(schur_complement(inst)), p.mu_F);
  p.spectral_mu = true;
  return p;
}

/// F(x,y) = x, G(x,y) = y; root at the origin, H == 0.
inline RootProblem make_scalar_instance() {
  RootProblem p;
  p.name = "scalar";
  p.dim_x = p.dim_y = 1;
  p.F = [](const VectorXd& x, const VectorXd&) -> VectorXd { return x; };
  p.G = [](const VectorXd&, const VectorXd& y) -> VectorXd { return y; };
  p.H = [](const VectorXd& y) -> VectorXd { return VectorXd::Zero(y.size()); };
  p.solution = std::make_pair(VectorXd::Zero(1), VectorXd::Zero(1));
  p.mu_F = p.mu_G = 1.0;
  p.lip_F = p.lip_G = 1.0;
  p.lip_H = 0.0;
  return p;
}

namespace detail {

inline RootProblem scalar_inner_map_instance(double c, double lip_G, std::string name,
                                             std::function<double(double)> h) {
  if (!(c > 0.0) || c > 1.0) throw std::invalid_argument("c must be in (0, 1]");
  RootProblem p;
  p.name = std::move(name);
  p.dim_x = p.dim_y = 1;
  p.H = [h](const VectorXd& y) -> VectorXd { return (VectorXd(1) << h(y[0])).finished(); };
  auto H = p.H;
  p.F = [H](const VectorXd& x, const VectorXd& y) -> VectorXd { return x - H(y); };
  p.G = [H, c](const VectorXd& x, const VectorXd& y) -> VectorXd { return y + c * (x - H(y)); };
  p.solution = std::make_pair(VectorXd::Zero(1), VectorXd::Zero(1));
  p.mu_F = p.mu_G = 1.0;
  p.lip_F = 1.0;
  p.lip_G = lip_G;
  p.lip_H = c;
  return p;
}

}  // namespace detail

/// Scalar problem with the smooth inner map H(y) = c tanh(y).
inline RootProblem make_tanh_instance(double c) {
  // dG/dy = 1 - c^2 sech^2(y) stays in [1-c^2, 1]
  return detail::scalar_inner_map_instance(
      c, 1.0, "tanh:" + std::to_string(c), [c](double y) { return c * std::tanh(y); });
}

/// Scalar problem with the nonsmooth inner map H(y) = c |y|.
inline RootProblem make_abs_instance(double c) {
  // dG/dy = 1 - c^2 sign(y) reaches 1 + c^2
  return detail::scalar_inner_map_instance(c, 1.0 + c * c, "abs:" + std::to_string(c),
                                           [c](double y) { return c * std::abs(y); });
}

inline std::vector<std::string> builtin_problem_ids() {
  return {"scalar", "remark2", "tanh:<c>", "abs:<c>"};
}

inline RootProblem make_problem(const std::string& id) {
  if (id == "scalar") return make_scalar_instance();
  if (id == "remark2") return remark2_instance();
  if (id.rfind("tanh:", 0) == 0) return make_tanh_instance(std::stod(id.substr(5)));
  if (id.rfind("abs:", 0) == 0) return make_abs_instance(std::stod(id.substr(4)));
  throw std::invalid_argument("unknown problem id '" + id +
                              "' (expected scalar, remark2, tanh:<c>, abs:<c>)");
}

inline MatrixXd matrix_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty()) throw std::invalid_argument("expected a nonempty 2-d array");
  const auto rows = j.size();
  const auto cols = j.at(0).size();
  MatrixXd M(rows, cols);
  for (size_t r = 0; r < rows; ++r) {
    if (j.at(r).size() != cols) throw std::invalid_argument("ragged matrix rows");
    for (size_t c = 0; c < cols; ++c) M(r, c) = j.at(r).at(c).get<double>();
  }
  return M;
}

inline VectorXd vector_from_json(const nlohmann::json& j) {
  VectorXd v(j.size());
  for (size_t i = 0; i < j.size(); ++i) v[i] = j.at(i).get<double>();
  return v;
}

inline LinearInstance linear_instance_from_json(const nlohmann::json& j) {
  for (const char* key : {"A11", "A12", "A21", "A22", "b1", "b2"}) {
    if (!j.contains(key)) throw std::invalid_argument(std::string("missing key '") + key + "'");
  }
  LinearInstance inst;
  inst.A11 = matrix_from_json(j.at("A11"));
  inst.A12 = matrix_from_json(j.at("A12"));
  inst.A21 = matrix_from_json(j.at("A21"));
  inst.A22 = matrix_from_json(j.at("A22"));
  inst.b1 = vector_from_json(j.at("b1"));
  inst.b2 = vector_from_json(j.at("b2"));
  return inst;
}

inline RootProblem load_linear_problem(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open problem file '" + path + "'");
  nlohmann::json j;
  in >> j;
  return make_linear_problem(linear_instance_from_json(j), path);
}

}  // namespace ttsa
