#pragma once

#include <cmath>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "ttsa/problem.hpp"
#include "ttsa/schedule.hpp"

namespace ttsa {

enum class SolverKind { classic, fast };

inline std::string to_string(SolverKind k) { return k == SolverKind::fast ? "fast" : "classic"; }

struct SolverState {
  long long k = 0;
  VectorXd x, y;
  VectorXd f, g;  // operator averages; unused by the classic scheme
};

inline SolverState make_state(const RootProblem& p, VectorXd x0, VectorXd y0) {
  SolverState s;
  s.x = std::move(x0);
  s.y = std::move(y0);
  s.f = VectorXd::Zero(p.dim_x);
  s.g = VectorXd::Zero(p.dim_y);
  check_dimensions(p, s.x, s.y);
  return s;
}

/// Residual norms; a missing component (no averages, no H, no known solution)
/// stays unset rather than reading as zero.
struct Residuals {
  std::optional<double> df, dg, xhat, yhat;
};

inline Residuals compute_residuals(const SolverState& s, const RootProblem& p,
                                   bool with_averages) {
  Residuals r;
  if (with_averages) {
    auto [Fxy, Gxy] = evaluate(p, s.x, s.y);
    r.df = (s.f - Fxy).norm();
    r.dg = (s.g - Gxy).norm();
  }
  if (p.has_inner_map()) r.xhat = (s.x - p.H(s.y)).norm();
  if (p.solution) r.yhat = (s.y - p.solution->second).norm();
  return r;
}

inline double lyapunov_fast(const Residuals& r) {
  if (!r.df || !r.dg || !r.xhat || !r.yhat)
    throw std::invalid_argument("lyapunov_fast needs all four residuals");
  return *r.df * *r.df + *r.dg * *r.dg + *r.xhat * *r.xhat + *r.yhat * *r.yhat;
}

inline double lyapunov_classic(const Residuals& r, double alpha_k, double beta_k, double mu_F,
                               double mu_G, double L_G) {
  if (!r.xhat || !r.yhat) throw std::invalid_argument("lyapunov_classic needs xhat and yhat");
  if (!(alpha_k > 0)) throw std::invalid_argument("lyapunov_classic needs alpha_k > 0");
  const double w = 2.0 * L_G / (mu_F * mu_G) * (beta_k / alpha_k);
  return *r.yhat * *r.yhat + w * *r.xhat * *r.xhat;
}

namespace detail {

inline void ensure_finite(const SolverState& s, const char* scheme) {
  if (!s.x.allFinite() || !s.y.allFinite() || !s.f.allFinite() || !s.g.allFinite()) {
    std::ostringstream os;
    os << scheme << " step produced non-finite values at iteration " << s.k;
    throw std::runtime_error(os.str());
  }
}

}  // namespace detail

/// One iteration of the operator-averaged scheme. The iterate updates apply
/// the pre-update averages f_k, g_k; the averages then absorb one fresh noisy
/// sample taken at (x_k, y_k). Exactly one noisy evaluation of each operator.
inline void fast_step(SolverState& s, const RootProblem& p, const NoiseModel& noise,
                      const FastStepSizes& ss, Rng& rng) {
  auto [Fs, Gs] = sample_noisy(p, noise, s.x, s.y, rng);
  s.x -= ss.alpha * s.f;
  s.y -= ss.beta * s.g;
  s.f = (1.0 - ss.lambda) * s.f + ss.lambda * Fs;
  s.g = (1.0 - ss.gamma) * s.g + ss.gamma * Gs;
  s.k += 1;
  detail::ensure_finite(s, "fast");
}

inline void fast_step(SolverState& s, const RootProblem& p, const NoiseModel& noise,
                      const FastScheduleParams& sched, Rng& rng) {
  fast_step(s, p, noise, eval_fast(sched, s.k), rng);
}

inline void classic_step(SolverState& s, const RootProblem& p, const NoiseModel& noise,
                         const ClassicStepSizes& ss, Rng& rng) {
  auto [Fs, Gs] = sample_noisy(p, noise, s.x, s.y, rng);
  s.x -= ss.alpha * Fs;
  s.y -= ss.beta * Gs;
  s.k += 1;
  detail::ensure_finite(s, "classic");
}

inline void classic_step(SolverState& s, const RootProblem& p, const NoiseModel& noise,
                         const ClassicScheduleParams& sched, Rng& rng) {
  classic_step(s, p, noise, eval_classic(sched, s.k), rng);
}

/// Classic update driven by externally supplied operator samples. Feeding the
/// averaged solver's sample stream shifted by one index reproduces its
/// iterates when lambda = gamma = 1.
inline void classic_step_with_samples(SolverState& s, const ClassicStepSizes& ss,
                                      const VectorXd& Fs, const VectorXd& Gs) {
  s.x -= ss.alpha * Fs;
  s.y -= ss.beta * Gs;
  s.k += 1;
}

struct TraceRecord {
  long long k = 0;
  double alpha = 0, beta = 0;
  std::optional<double> lambda, gamma;
  Residuals residuals;
  std::optional<double> V_fast, V_classic;
};

using ScheduleSpec = std::variant<FastScheduleParams, ClassicScheduleParams>;

struct RunOptions {
  long long T = 1000;
  std::uint64_t seed = 0;
  long long record_every = 1;
  bool debug_checks = false;
  bool warm_start = false;  // seed the averages with the first noisy sample
  std::optional<std::pair<VectorXd, VectorXd>> init;
  double divergence_threshold = 1e12;
};

struct RunResult {
  std::vector<TraceRecord> records;
  bool aborted = false;
  long long abort_k = -1;
};

namespace detail {

inline TraceRecord make_record(const SolverState& s, const RootProblem& p, SolverKind kind,
                               const ScheduleSpec& sched) {
  TraceRecord rec;
  rec.k = s.k;
  if (kind == SolverKind::fast) {
    const auto ss = eval_fast(std::get<FastScheduleParams>(sched), s.k);
    rec.alpha = ss.alpha;
    rec.beta = ss.beta;
    rec.lambda = ss.lambda;
    rec.gamma = ss.gamma;
  } else {
    const auto ss = eval_classic(std::get<ClassicScheduleParams>(sched), s.k);
    rec.alpha = ss.alpha;
    rec.beta = ss.beta;
  }
  rec.residuals = compute_residuals(s, p, kind == SolverKind::fast);
  const auto& r = rec.residuals;
  if (r.df && r.dg && r.xhat && r.yhat) rec.V_fast = lyapunov_fast(r);
  if (r.xhat && r.yhat && rec.alpha > 0)
    rec.V_classic = lyapunov_classic(r, rec.alpha, rec.beta, p.mu_F, p.mu_G, p.lip_G);
  return rec;
}

inline bool diverged(const TraceRecord& rec, double thr) {
  const auto& r = rec.residuals;
  return (r.df && *r.df > thr) || (r.dg && *r.dg > thr) || (r.xhat && *r.xhat > thr) ||
         (r.yhat && *r.yhat > thr);
}

// Norm bounds that hold deterministically at every step of the averaged
// scheme; violations indicate wrong Lipschitz metadata or a broken step.
inline void check_lemma_inequalities(const SolverState& before, const SolverState& after,
                                     const RootProblem& p, const FastStepSizes& ss) {
  if (!p.has_inner_map() || !p.solution) return;
  constexpr double tol = 1e-9;
  const double L = p.L();
  auto [Fxy, Gxy] = evaluate(p, before.x, before.y);
  const double df = (before.f - Fxy).norm();
  const double dg = (before.g - Gxy).norm();
  const double xh = (before.x - p.H(before.y)).norm();
  const double yh = (before.y - p.solution->second).norm();

  auto fail = [&](const char* what, double lhs, double rhs) {
    std::ostringstream os;
    os << "lemma inequality '" << what << "' violated at k=" << before.k << ": " << lhs << " > "
       << rhs;
    throw std::runtime_error(os.str());
  };
  const double g_bound = dg + L * xh + L * (1.0 + L) * yh;
  if (before.g.norm() > g_bound + tol) fail("|g_k|", before.g.norm(), g_bound);
  const double f_bound = df + L * xh;
  if (before.f.norm() > f_bound + tol) fail("|f_k|", before.f.norm(), f_bound);
  const double dx = (after.x - before.x).norm();
  if (dx > ss.alpha * f_bound + tol) fail("|x_{k+1}-x_k|", dx, ss.alpha * f_bound);
  const double dy = (after.y - before.y).norm();
  if (dy > ss.beta * g_bound + tol) fail("|y_{k+1}-y_k|", dy, ss.beta * g_bound);
}

}  // namespace detail

/// Runs T steps from the configured start (default: x0, y0 standard normal
/// from the seed; zero averages), recording k = 0, every record_every-th
/// iteration, and k = T. A residual above the divergence threshold aborts the
/// run and returns the partial trace.
inline RunResult run(const RootProblem& p, SolverKind kind, const ScheduleSpec& sched,
                     const NoiseModel& noise, const RunOptions& opt) {
  if (opt.T < 1) throw std::invalid_argument("T must be >= 1");
  if (opt.record_every < 1) throw std::invalid_argument("record_every must be >= 1");
  if (kind == SolverKind::fast && !std::holds_alternative<FastScheduleParams>(sched))
    throw std::invalid_argument("fast solver needs a fast schedule");
  if (kind == SolverKind::classic && !std::holds_alternative<ClassicScheduleParams>(sched))
    throw std::invalid_argument("classic solver needs a classic schedule");

  Rng rng(opt.seed);
  SolverState s;
  if (opt.init) {
    s = make_state(p, opt.init->first, opt.init->second);
  } else {
    s = make_state(p, gaussian_vector(p.dim_x, rng), gaussian_vector(p.dim_y, rng));
  }
  if (kind == SolverKind::fast && opt.warm_start) {
    auto [Fs, Gs] = sample_noisy(p, noise, s.x, s.y, rng);
    s.f = Fs;
    s.g = Gs;
  }

  RunResult result;
  result.records.push_back(detail::make_record(s, p, kind, sched));
  if (detail::diverged(result.records.back(), opt.divergence_threshold)) {
    result.aborted = true;
    result.abort_k = 0;
    return result;
  }

  for (long long k = 0; k < opt.T; ++k) {
    SolverState before;
    const bool check = opt.debug_checks && kind == SolverKind::fast;
    if (check) before = s;
    FastStepSizes ss{};
    bool step_ok = true;
    try {
      if (kind == SolverKind::fast) {
        ss = eval_fast(std::get<FastScheduleParams>(sched), s.k);
        fast_step(s, p, noise, ss, rng);
      } else {
        classic_step(s, p, noise, std::get<ClassicScheduleParams>(sched), rng);
      }
    } catch (const std::runtime_error&) {  // non-finite state
      step_ok = false;
    }
    if (!step_ok) {
      result.aborted = true;
      result.abort_k = k + 1;
      return result;
    }
    if (check) detail::check_lemma_inequalities(before, s, p, ss);
    const bool record = (s.k % opt.record_every == 0) || s.k == opt.T;
    if (record) {
      result.records.push_back(detail::make_record(s, p, kind, sched));
      if (detail::diverged(result.records.back(), opt.divergence_threshold)) {
        result.aborted = true;
        result.abort_k = s.k;
        return result;
      }
    }
  }
  return result;
}

inline std::string format_g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_trace_csv(std::ostream& os, const std::vector<TraceRecord>& records) {
  auto cell = [](const std::optional<double>& v) { return v ? format_g17(*v) : std::string(); };
  os << "k,alpha,beta,lambda,gamma,df,dg,xhat,yhat,V_fast,V_classic\n";
  for (const auto& r : records) {
    os << r.k << ',' << format_g17(r.alpha) << ',' << format_g17(r.beta) << ',' << cell(r.lambda)
       << ',' << cell(r.gamma) << ',' << cell(r.residuals.df) << ',' << cell(r.residuals.dg)
       << ',' << cell(r.residuals.xhat) << ',' << cell(r.residuals.yhat) << ',' << cell(r.V_fast)
       << ',' << cell(r.V_classic) << '\n';
  }
}

}  // namespace ttsa
