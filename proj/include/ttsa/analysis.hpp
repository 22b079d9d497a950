#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "ttsa/solver.hpp"

namespace ttsa {

/// Pointwise sample mean and standard error of the Lyapunov value over
/// independent replications (V_fast for the averaged scheme, the coupled V
/// for the classic one).
struct MeanTrace {
  std::vector<long long> ks;
  std::vector<double> mean_V;
  std::vector<double> stderr_V;
  int n_reps = 0;
  int aborted = 0;
  SolverKind solver_kind = SolverKind::fast;
  std::string schedule_desc;
};

struct MonteCarloOptions {
  long long T = 1000;
  int n_reps = 2;
  std::uint64_t base_seed = 0;
  long long record_every = 1;
  int n_workers = 0;  // 0 = hardware concurrency
  bool warm_start = false;
  std::optional<std::pair<VectorXd, VectorXd>> init;
};

namespace detail {

inline std::string describe(const ScheduleSpec& sched) {
  if (const auto* f = std::get_if<FastScheduleParams>(&sched)) {
    return "fast(C_lambda=" + format_g17(f->C_lambda) + ",C_gamma=" + format_g17(f->C_gamma) +
           ",C_alpha=" + format_g17(f->C_alpha) + ",C_beta=" + format_g17(f->C_beta) +
           ",h=" + format_g17(f->h) +
           ",mode=" + (f->mode == ScheduleMode::theory ? "theory" : "tuned") + ")";
  }
  const auto& c = std::get<ClassicScheduleParams>(sched);
  return "classic(alpha0=" + format_g17(c.alpha0) + ",beta0=" + format_g17(c.beta0) +
         ",a=" + format_g17(c.a) + ",b=" + format_g17(c.b) + ")";
}

inline double record_V(const TraceRecord& rec, SolverKind kind) {
  const auto& v = kind == SolverKind::fast ? rec.V_fast : rec.V_classic;
  if (!v)
    throw std::runtime_error(
        "Lyapunov value unavailable (problem needs an inner map and a known solution)");
  return *v;
}

}  // namespace detail

/// Runs n_reps independent replications with seeds base_seed .. base_seed +
/// n_reps - 1, fanning out across workers, and aggregates V pointwise in seed
/// order. Replications that hit the divergence guard are excluded and counted.
inline MeanTrace monte_carlo(const RootProblem& p, SolverKind kind, const ScheduleSpec& sched,
                             const NoiseModel& noise, const MonteCarloOptions& opt) {
  if (opt.n_reps < 2) throw std::invalid_argument("n_reps must be >= 2");

  std::vector<RunResult> results(opt.n_reps);
  int workers = opt.n_workers > 0 ? opt.n_workers
                                  : static_cast<int>(std::thread::hardware_concurrency());
  workers = std::max(1, std::min(workers, opt.n_reps));

  std::atomic<int> next{0};
  auto worker = [&]() {
    for (int i = next.fetch_add(1); i < opt.n_reps; i = next.fetch_add(1)) {
      RunOptions ro;
      ro.T = opt.T;
      ro.seed = opt.base_seed + static_cast<std::uint64_t>(i);
      ro.record_every = opt.record_every;
      ro.warm_start = opt.warm_start;
      ro.init = opt.init;
      results[i] = run(p, kind, sched, noise, ro);
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  MeanTrace out;
  out.solver_kind = kind;
  out.schedule_desc = detail::describe(sched);
  out.n_reps = 0;

  std::vector<std::vector<double>> series;
  for (const auto& res : results) {
    if (res.aborted) {
      ++out.aborted;
      continue;
    }
    if (out.ks.empty()) {
      for (const auto& rec : res.records) out.ks.push_back(rec.k);
    }
    std::vector<double> v;
    v.reserve(res.records.size());
    for (const auto& rec : res.records) v.push_back(detail::record_V(rec, kind));
    series.push_back(std::move(v));
    ++out.n_reps;
  }
  if (out.n_reps == 0) throw std::runtime_error("all replications diverged");

  const size_t n = out.ks.size();
  out.mean_V.assign(n, 0.0);
  out.stderr_V.assign(n, 0.0);
  // sums are centered on the first series so identical replications give an
  // exact mean and an exactly zero standard error
  for (const auto& v : series)
    for (size_t i = 0; i < n; ++i) out.mean_V[i] += v[i] - series.front()[i];
  for (size_t i = 0; i < n; ++i) out.mean_V[i] = series.front()[i] + out.mean_V[i] / out.n_reps;
  if (out.n_reps > 1) {
    for (const auto& v : series)
      for (size_t i = 0; i < n; ++i) {
        const double d = v[i] - out.mean_V[i];
        out.stderr_V[i] += d * d;
      }
    for (auto& s : out.stderr_V)
      s = std::sqrt(s / (out.n_reps - 1)) / std::sqrt(static_cast<double>(out.n_reps));
  }
  return out;
}

/// Pools two aggregates of the same grid; the merged mean is the
/// replication-weighted average.
inline MeanTrace merge_mean_traces(const MeanTrace& a, const MeanTrace& b) {
  if (a.ks != b.ks) throw std::invalid_argument("mean traces recorded on different grids");
  MeanTrace out = a;
  out.n_reps = a.n_reps + b.n_reps;
  out.aborted = a.aborted + b.aborted;
  const double na = a.n_reps, nb = b.n_reps, n = na + nb;
  for (size_t i = 0; i < out.ks.size(); ++i) {
    out.mean_V[i] = (na * a.mean_V[i] + nb * b.mean_V[i]) / n;
    out.stderr_V[i] = std::sqrt(na * na * a.stderr_V[i] * a.stderr_V[i] +
                                nb * nb * b.stderr_V[i] * b.stderr_V[i]) /
                      n;
  }
  return out;
}

struct RateFit {
  double slope = 0, intercept = 0, r_squared = 0;
  long long k_min = 0, k_max = 0;
  int n_points = 0;
};

/// Ordinary least squares of log(mean_V) on log(k+1) over [k_min, k_max];
/// the slope estimates the decay exponent.
inline RateFit fit_rate(const MeanTrace& trace, long long k_min, long long k_max) {
  std::vector<double> xs, ys;
  for (size_t i = 0; i < trace.ks.size(); ++i) {
    const long long k = trace.ks[i];
    if (k < k_min || k > k_max || !(trace.mean_V[i] > 0)) continue;
    xs.push_back(std::log(static_cast<double>(k) + 1.0));
    ys.push_back(std::log(trace.mean_V[i]));
  }
  const int n = static_cast<int>(xs.size());
  if (n < 5) throw std::invalid_argument("fit_rate needs at least 5 usable records in-window");

  double sx = 0, sy = 0;
  for (int i = 0; i < n; ++i) {
    sx += xs[i];
    sy += ys[i];
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0, syy = 0;
  for (int i = 0; i < n; ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  RateFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss_res = 0;
  for (int i = 0; i < n; ++i) {
    const double e = ys[i] - (fit.intercept + fit.slope * xs[i]);
    ss_res += e * e;
  }
  fit.r_squared = syy > 0 ? 1.0 - ss_res / syy : 1.0;
  fit.k_min = k_min;
  fit.k_max = k_max;
  fit.n_points = n;
  return fit;
}

struct RecursionCheck {
  long long checked = 0;
  std::vector<long long> violating_ks;
  std::vector<double> margins;
  double violation_fraction() const {
    return checked == 0 ? 0.0 : static_cast<double>(violating_ks.size()) / checked;
  }
};

/// Verifies the one-step mean recursion
///   E[V_{k+1}] <= (1 - mu_G beta_k) E[V_k] + 2 lambda_k^2 (Gamma11 + Gamma22)
/// against sample means, padded by 3 standard errors on both sides.
inline RecursionCheck check_one_step_recursion(const MeanTrace& trace,
                                               const FastScheduleParams& sched, double mu_G,
                                               double gamma11, double gamma22) {
  for (size_t i = 0; i + 1 < trace.ks.size(); ++i) {
    if (trace.ks[i + 1] != trace.ks[i] + 1)
      throw std::invalid_argument("recursion check needs consecutive records (record_every = 1)");
  }
  RecursionCheck out;
  for (size_t i = 0; i + 1 < trace.ks.size(); ++i) {
    const auto ss = eval_fast(sched, trace.ks[i]);
    const double rhs = (1.0 - mu_G * ss.beta) * trace.mean_V[i] +
                       2.0 * ss.lambda * ss.lambda * (gamma11 + gamma22) +
                       3.0 * (trace.stderr_V[i] + trace.stderr_V[i + 1]);
    ++out.checked;
    if (trace.mean_V[i + 1] > rhs) {
      out.violating_ks.push_back(trace.ks[i]);
      out.margins.push_back(trace.mean_V[i + 1] - rhs);
    }
  }
  return out;
}

/// Rate-lemma upper bound h^2 V0/(k+h+1)^2 + C_lambda^2 (G11+G22)/(k+h+1).
inline double theoretical_bound_fast(long long k, const FastScheduleParams& sched, double V0,
                                     double gamma11, double gamma22) {
  const double d = static_cast<double>(k) + sched.h + 1.0;
  return sched.h * sched.h * V0 / (d * d) +
         sched.C_lambda * sched.C_lambda * (gamma11 + gamma22) / d;
}

struct BoundColumn {
  FastScheduleParams sched;
  double V0, gamma11, gamma22;
};

inline void write_mean_trace_csv(std::ostream& os, const MeanTrace& trace,
                                 const std::optional<BoundColumn>& bound = std::nullopt) {
  os << "k,mean_V,stderr_V,bound\n";
  for (size_t i = 0; i < trace.ks.size(); ++i) {
    os << trace.ks[i] << ',' << format_g17(trace.mean_V[i]) << ','
       << format_g17(trace.stderr_V[i]) << ',';
    if (bound)
      os << format_g17(theoretical_bound_fast(trace.ks[i], bound->sched, bound->V0,
                                              bound->gamma11, bound->gamma22));
    os << '\n';
  }
}

}  // namespace ttsa
