#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace ttsa {

enum class ScheduleMode { theory, tuned };

/// Step-size family lambda_k = C_lambda/(k+h+1), and likewise for gamma,
/// alpha, beta with their own constants and the shared offset h.
struct FastScheduleParams {
  double C_lambda = 1.0;
  double C_gamma = 1.0;
  double C_alpha = 1.0;
  double C_beta = 1.0;
  double h = 1.0;
  ScheduleMode mode = ScheduleMode::tuned;
};

struct FastStepSizes {
  double lambda, gamma, alpha, beta;
};

inline FastStepSizes eval_fast(const FastScheduleParams& p, long long k) {
  const double d = static_cast<double>(k) + p.h + 1.0;
  return {p.C_lambda / d, p.C_gamma / d, p.C_alpha / d, p.C_beta / d};
}

/// Polynomially decaying pair alpha_k = alpha0/(k+2)^a, beta_k = beta0/(k+2)^b.
struct ClassicScheduleParams {
  double alpha0 = 1.0;
  double beta0 = 1.0;
  double a = 2.0 / 3.0;
  double b = 1.0;
};

struct ClassicStepSizes {
  double alpha, beta;
};

inline ClassicStepSizes eval_classic(const ClassicScheduleParams& p, long long k) {
  const double d = static_cast<double>(k) + 2.0;
  return {p.alpha0 / std::pow(d, p.a), p.beta0 / std::pow(d, p.b)};
}

struct ScheduleViolation {
  std::string condition;
  long long first_k;
  double lhs, rhs;
};

struct ValidationReport {
  std::vector<ScheduleViolation> violations;
  bool ok() const { return violations.empty(); }
  std::string describe() const {
    std::string s;
    for (const auto& v : violations) {
      s += v.condition + " first violated at k=" + std::to_string(v.first_k) + " (" +
           std::to_string(v.lhs) + " > " + std::to_string(v.rhs) + ")\n";
    }
    return s;
  }
};

namespace detail {

// Keeps only the first violating k per condition id.
struct ViolationCollector {
  std::vector<ScheduleViolation> out;
  std::map<std::string, size_t> seen;
  void record(const std::string& cond, long long k, double lhs, double rhs) {
    if (seen.count(cond)) return;
    seen[cond] = out.size();
    out.push_back({cond, k, lhs, rhs});
  }
};

// 1-ulp-scale slack so bounds met with equality (the theory constants sit
// exactly on several of them) survive the two divisions in eval_fast.
inline bool leq(double lhs, double rhs) { return lhs <= rhs + 1e-12 * std::abs(rhs) + 1e-300; }

}  // namespace detail

inline double alpha_over_lambda_bound(double mu_G, double L) {
  return std::min({1.0 / (24.0 * L), mu_G / (144.0 * (1.0 + mu_G)),
                   mu_G / (192.0 * std::pow(L, 4) * (1.0 + L) * (1.0 + L))});
}

inline double alpha_bound(double mu_F, double mu_G, double L) {
  return std::min(mu_F / (32.0 * L * L * (L + 1.0) * (L + 1.0)),
                  mu_G / (std::pow(L, 4) * (1.0 + L) * (1.0 + L)));
}

inline double beta_over_alpha_bound(double mu_F, double mu_G, double L) {
  return mu_F * mu_G / (32.0 * L * L * std::pow(1.0 + L, 4));
}

/// Checks every step-size condition of the averaged-scheme rate theorem plus
/// the per-lemma preconditions, for all k < horizon. Violations are data; an
/// empty report means the schedule is admissible over the horizon.
inline ValidationReport validate_fast(const FastScheduleParams& p, double mu_F, double mu_G,
                                      double L, long long horizon) {
  if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
  detail::ViolationCollector c;

  for (const auto& [cond, val] : std::initializer_list<std::pair<const char*, double>>{
           {"C_lambda > 0", p.C_lambda},
           {"C_gamma > 0", p.C_gamma},
           {"C_alpha > 0", p.C_alpha},
           {"C_beta > 0", p.C_beta},
           {"h > 0", p.h}}) {
    if (!(val > 0)) c.record(cond, 0, val, 0.0);
  }
  if (p.mode == ScheduleMode::theory && p.C_lambda != p.C_gamma)
    c.record("lambda == gamma (theory mode)", 0, p.C_lambda, p.C_gamma);

  const double r_al = alpha_over_lambda_bound(mu_G, L);
  const double r_a = alpha_bound(mu_F, mu_G, L);
  const double r_ba = beta_over_alpha_bound(mu_F, mu_G, L);
  const double r_a_xhat = mu_F / (L * L);
  const double r_b_yhat = mu_G / (4.0 * L * L * (1.0 + L) * (1.0 + L));

  for (long long k = 0; k < horizon; ++k) {
    const FastStepSizes s = eval_fast(p, k);
    if (!detail::leq(s.lambda, 0.25)) c.record("lambda_k <= 1/4", k, s.lambda, 0.25);
    if (!detail::leq(s.gamma, 0.25)) c.record("gamma_k <= 1/4", k, s.gamma, 0.25);
    if (!detail::leq(s.beta / s.alpha, r_ba))
      c.record("beta_k/alpha_k <= mu_F mu_G/(32 L^2 (1+L)^4)", k, s.beta / s.alpha, r_ba);
    if (!detail::leq(s.alpha, r_a))
      c.record("alpha_k <= min{mu_F/(32 L^2 (L+1)^2), mu_G/(L^4 (1+L)^2)}", k, s.alpha, r_a);
    if (!detail::leq(s.alpha / s.lambda, r_al))
      c.record("alpha_k/lambda_k <= min{1/(24L), mu_G/(144(1+mu_G)), mu_G/(192 L^4 (1+L)^2)}", k,
               s.alpha / s.lambda, r_al);
    if (!detail::leq(s.beta, s.alpha)) c.record("beta_k <= alpha_k", k, s.beta, s.alpha);
    if (!detail::leq(s.alpha, r_a_xhat)) c.record("alpha_k <= mu_F/L^2", k, s.alpha, r_a_xhat);
    if (!detail::leq(s.beta, r_b_yhat))
      c.record("beta_k <= mu_G/(4 L^2 (1+L)^2)", k, s.beta, r_b_yhat);
  }
  return {std::move(c.out)};
}

/// Constants meeting every admissibility condition with equality at the
/// binding bound. h additionally enforces lambda_0 <= 1/4, which the stated
/// lower bound on h alone does not guarantee.
inline FastScheduleParams theory_constants(double mu_F, double mu_G, double L) {
  if (!(mu_F > 0) || !(mu_G > 0) || !(L > 0))
    throw std::invalid_argument("mu_F, mu_G, L must be positive");
  if (mu_G > mu_F) throw std::invalid_argument("requires mu_G <= mu_F");
  if (L < std::max(mu_F, mu_G)) throw std::invalid_argument("requires L >= max(mu_F, mu_G)");

  FastScheduleParams p;
  p.mode = ScheduleMode::theory;
  p.C_beta = 2.0 / mu_G;
  p.C_alpha = 64.0 * L * L * std::pow(1.0 + L, 4) / (mu_F * mu_G * mu_G);
  p.C_lambda = p.C_gamma = p.C_alpha / alpha_over_lambda_bound(mu_G, L);
  const double h_lower =
      p.C_alpha / std::min(0.25, alpha_bound(mu_F, mu_G, L));
  p.h = std::max(h_lower, 4.0 * p.C_lambda - 1.0);
  return p;
}

/// Conditions of the 2/3-rate theorem for the non-averaged scheme.
inline ValidationReport validate_classic(const ClassicScheduleParams& p, double mu_F, double mu_G,
                                         double L_G) {
  detail::ViolationCollector c;
  if (!(p.alpha0 > 0)) c.record("alpha0 > 0", 0, p.alpha0, 0.0);
  if (!(p.beta0 > 0)) c.record("beta0 > 0", 0, p.beta0, 0.0);
  if (!(p.a > 0.5)) c.record("a > 1/2", 0, p.a, 0.5);
  if (!(p.a < p.b)) c.record("a < b", 0, p.a, p.b);
  if (!(p.b <= 1.0)) c.record("b <= 1", 0, p.b, 1.0);
  if (!(2.0 * p.b - p.a > 1.0)) c.record("2b - a > 1", 0, 2.0 * p.b - p.a, 1.0);

  const double ratio_bound = std::min(mu_F * mu_G / (2.0 * L_G), mu_F / (2.0 * mu_G));
  if (!detail::leq(p.beta0 / p.alpha0, ratio_bound))
    c.record("beta0/alpha0 <= min{mu_F mu_G/(2 L_G), mu_F/(2 mu_G)}", 0, p.beta0 / p.alpha0,
             ratio_bound);
  if (!detail::leq(2.0 / mu_G, p.beta0)) c.record("beta0 >= 2/mu_G", 0, 2.0 / mu_G, p.beta0);
  return {std::move(c.out)};
}

}  // namespace ttsa
