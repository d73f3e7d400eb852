#pragma once

// Monte-Carlo rate experiments: sweeps over n, p or L, two-sample distances,
// log-log rate fits and calibration of the absolute constant.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "gal/bounds.hpp"
#include "gal/core.hpp"
#include "gal/sampling.hpp"
#include "gal/transport.hpp"

namespace gal {

enum class SweepAxis { n, p, L };

inline std::string_view to_string(SweepAxis a) noexcept {
  switch (a) {
    case SweepAxis::n: return "n";
    case SweepAxis::p: return "p";
    case SweepAxis::L: return "L";
  }
  return "?";
}

inline SweepAxis sweep_axis_from_string(std::string_view s) {
  if (s == "n") return SweepAxis::n;
  if (s == "p") return SweepAxis::p;
  if (s == "L") return SweepAxis::L;
  throw ConfigError("unknown sweep axis '" + std::string(s) + "'");
}

struct GridPoint {
  std::size_t n = 100;
  std::size_t p = 5;
  double L = 2.0;
};

struct ExperimentGrid {
  SweepAxis sweep_axis = SweepAxis::n;
  std::vector<double> axis_values;
  GridPoint fixed;                // values of the two parameters not swept
  std::size_t m = 2000;           // replicates per cloud
  std::size_t trials = 5;
  SummandModel model;             // n and p are overwritten per cell
  SinkhornConfig sinkhorn;        // cost_exponent is overwritten per cell
  SeedSpec seed;
  double nu0 = 1.0;               // sub-Gaussian proxy used by the theory column
  std::optional<double> abs_const_C;  // calibrated on the first cell when absent
  unsigned threads = 0;           // 0: hardware concurrency

  void validate() const {
    if (axis_values.size() < 3) throw ConfigError("a sweep needs at least 3 axis values");
    for (std::size_t i = 1; i < axis_values.size(); ++i)
      if (!(axis_values[i] > axis_values[i - 1])) throw ConfigError("axis values must be strictly increasing");
    for (double v : axis_values) {
      if (!std::isfinite(v)) throw ConfigError("axis values must be finite");
      if (sweep_axis == SweepAxis::L) {
        if (v < 1.0) throw ConfigError("L values must be >= 1");
      } else if (v < 1.0 || v != std::floor(v)) {
        throw ConfigError("n and p values must be positive integers");
      }
    }
    if (trials < 1) throw ConfigError("trials must be >= 1");
    if (m < 1) throw ConfigError("m must be >= 1");
    if (fixed.n < 1 || fixed.p < 1 || !(fixed.L >= 1.0)) throw ConfigError("fixed parameters out of range");
    if (!(nu0 > 0.0)) throw ConfigError("nu0 must be > 0");
    if (abs_const_C && !(*abs_const_C >= 0.0)) throw ConfigError("abs_const_C must be >= 0");
    sinkhorn.validate();
  }

  GridPoint point(std::size_t cell) const {
    GridPoint g = fixed;
    const double v = axis_values.at(cell);
    switch (sweep_axis) {
      case SweepAxis::n: g.n = static_cast<std::size_t>(v); break;
      case SweepAxis::p: g.p = static_cast<std::size_t>(v); break;
      case SweepAxis::L: g.L = v; break;
    }
    return g;
  }

  SummandModel model_at(std::size_t cell) const {
    const GridPoint g = point(cell);
    SummandModel mod = model;
    mod.n = g.n;
    mod.p = g.p;
    if (mod.base_cov && mod.base_cov->dim() != g.p) mod.base_cov.reset();
    return mod;
  }
};

struct CellResult {
  double axis_value = 0.0;
  double distance = 0.0;         // mean over trials
  double distance_stderr = 0.0;  // sample standard error over trials
  double distance_raw = std::numeric_limits<double>::quiet_NaN();  // undebiased W_L (W_L sweeps only)
  double theory_bound = 0.0;
  long sweeps_used = 0;          // summed over trials
  bool converged = true;         // every trial converged
  double wall_time_ms = 0.0;     // summed job time, never used for output ordering
  std::vector<double> trial_distances;
};

enum class Regressor { log, log_log };

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  Regressor regressor = Regressor::log;
};

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

/// sup_t |F_a(t) - F_b(t)| for the empirical CDFs of a and b.
inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw InputError("KS statistic needs non-empty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double best = 0.0;
  while (i < a.size() && j < b.size()) {
    const double t = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == t) ++i;
    while (j < b.size() && b[j] == t) ++j;
    best = std::max(best, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return best;
}

/// Row-wise maximum coordinate.
inline std::vector<double> row_maxima(const PointCloud& c) {
  std::vector<double> out(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) out[i] = c.points().row(static_cast<Eigen::Index>(i)).maxCoeff();
  return out;
}

inline RateFit fit_rate(const std::vector<double>& axis, const std::vector<double>& distance, Regressor reg) {
  if (axis.size() != distance.size()) throw InputError("axis and distance lengths differ");
  if (axis.size() < 3) throw InputError("rate fit needs at least 3 points");
  std::vector<double> x(axis.size()), y(axis.size());
  for (std::size_t i = 0; i < axis.size(); ++i) {
    if (!(distance[i] > 0.0)) throw DataError("rate fit needs positive distances");
    if (!(axis[i] > 0.0)) throw DataError("rate fit needs positive axis values");
    x[i] = std::log(axis[i]);
    if (reg == Regressor::log_log) {
      if (!(x[i] > 0.0)) throw DataError("log-log regressor needs axis values > 1");
      x[i] = std::log(x[i]);
    }
    y[i] = std::log(distance[i]);
  }
  const double k = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= k;
  my /= k;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw DataError("regressor has no spread");
  RateFit f;
  f.regressor = reg;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ssr = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (f.intercept + f.slope * x[i]);
    ssr += r * r;
  }
  f.r2 = syy > 0.0 ? std::clamp(1.0 - ssr / syy, 0.0, 1.0) : 1.0;
  return f;
}

inline RateFit fit_rate(const std::vector<CellResult>& cells, Regressor reg) {
  std::vector<double> axis, dist;
  for (const auto& c : cells) {
    axis.push_back(c.axis_value);
    dist.push_back(c.distance);
  }
  return fit_rate(axis, dist, reg);
}

/// Smallest C >= 0 with C * c_term + free_term >= distance.
inline double calibrate_linear(double distance, double c_term, double free_term) {
  if (!(distance > 0.0)) throw DataError("calibration needs a positive distance");
  if (distance <= free_term) return 0.0;
  if (!(c_term > 0.0)) throw DomainError("bound does not depend on C");
  return (distance - free_term) / c_term;
}

/// Smallest absolute constant for which the sub-Gaussian W_L bound dominates the cell.
inline double calibrate_constant(const CellResult& cell, const BoundInputs& in) {
  const SubGaussianWlTerms t = wlt_subgaussian_terms(in);
  return calibrate_linear(cell.distance, t.c_term, t.free_term);
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

namespace detail {

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double stderr_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double mu = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - mu) * (x - mu);
  return std::sqrt(s / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

/// Runs job(0..count-1) on a bounded pool. Jobs write to their own slots.
inline void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& job) {
  unsigned workers = threads ? threads : std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, count));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < count && !failed; i = next++) {
          try {
            job(i);
          } catch (...) {
            if (!failed.exchange(true)) failure = std::current_exception();
          }
        }
      });
  }
  if (failure) std::rethrow_exception(failure);
}

struct TrialOutcome {
  double distance = 0.0;
  double raw = 0.0;
  long sweeps = 0;
  bool converged = true;
  double ms = 0.0;
};

using CellLogger = std::function<void(const CellResult&, std::size_t cell)>;

inline std::vector<CellResult> run_sweep(const ExperimentGrid& grid,
                                         const std::function<TrialOutcome(std::size_t, SeedSpec)>& trial,
                                         bool record_raw, std::size_t max_cells = SIZE_MAX) {
  grid.validate();
  const std::size_t cells = std::min(grid.axis_values.size(), max_cells);
  std::vector<TrialOutcome> out(cells * grid.trials);
  parallel_for(out.size(), grid.threads, [&](std::size_t job) {
    const std::size_t cell = job / grid.trials, t = job % grid.trials;
    const auto t0 = std::chrono::steady_clock::now();
    out[job] = trial(cell, grid.seed.derive(cell).derive(t));
    out[job].ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  });

  std::vector<CellResult> res(cells);
  for (std::size_t c = 0; c < cells; ++c) {
    CellResult& r = res[c];
    r.axis_value = grid.axis_values[c];
    std::vector<double> raw;
    for (std::size_t t = 0; t < grid.trials; ++t) {
      const TrialOutcome& o = out[c * grid.trials + t];
      r.trial_distances.push_back(o.distance);
      raw.push_back(o.raw);
      r.sweeps_used += o.sweeps;
      r.converged = r.converged && o.converged;
      r.wall_time_ms += o.ms;
    }
    r.distance = mean_of(r.trial_distances);
    r.distance_stderr = stderr_of(r.trial_distances);
    if (record_raw) r.distance_raw = mean_of(raw);
  }
  return res;
}

}  // namespace detail

inline BoundInputs wl_bound_inputs(const ExperimentGrid& grid, std::size_t cell, double abs_const_C) {
  const GridPoint g = grid.point(cell);
  BoundInputs in;
  in.n = g.n;
  in.p = g.p;
  in.L = g.L;
  in.nu0 = grid.nu0;
  in.sigma_norm = sum_covariance(grid.model_at(cell)).operator_norm();
  in.abs_const_C = abs_const_C;
  return in;
}

/// W_L between the sum and a Gaussian with the exact covariance of the sum,
/// per cell and trial. The distance column is the debiased Sinkhorn value and
/// distance_raw the undebiased one.
namespace detail {

inline std::vector<CellResult> wl_cells(const ExperimentGrid& grid, std::size_t max_cells) {
  return run_sweep(
      grid,
      [&](std::size_t cell, SeedSpec seed) {
        const SummandModel mod = grid.model_at(cell);
        SinkhornConfig cfg = grid.sinkhorn;
        cfg.cost_exponent = grid.point(cell).L;
        cfg.debias = true;
        const PointCloud xi = sample_sum_replicates(mod, grid.m, seed.derive(0));
        const PointCloud gamma = sample_gaussian(sum_covariance(mod), grid.m, seed.derive(1));
        const TransportResult r = sinkhorn_wl(xi, gamma, cfg);
        return detail::TrialOutcome{r.wl, std::pow(std::max(0.0, r.entropic_cost), 1.0 / cfg.cost_exponent),
                                    r.sweeps_used, r.converged, 0.0};
      },
      true, max_cells);
}

}  // namespace detail

/// Runs only the first cell (the calibration pilot); theory_bound is left at 0.
inline CellResult run_wl_pilot(const ExperimentGrid& grid) { return detail::wl_cells(grid, 1).front(); }

inline std::vector<CellResult> run_wl_sweep(const ExperimentGrid& grid) {
  auto cells = detail::wl_cells(grid, SIZE_MAX);
  const double C = grid.abs_const_C ? *grid.abs_const_C : calibrate_constant(cells.front(), wl_bound_inputs(grid, 0, 0.0));
  for (std::size_t c = 0; c < cells.size(); ++c) cells[c].theory_bound = wlt_subgaussian_bound(wl_bound_inputs(grid, c, C));
  return cells;
}

/// Kolmogorov bound for the coordinate maxima with the grid's covariance at a cell.
inline FinalDistBound max_bound_at(const ExperimentGrid& grid, std::size_t cell, double abs_const_C) {
  const SummandModel mod = grid.model_at(cell);
  const CovarianceSpec cov = sum_covariance(mod);
  return final_dist_bound(mod.n, mod.p, grid.nu0, cov.sigma_upper(), cov.sigma_lower(), cov.lambda_min(),
                          abs_const_C);
}

/// Two-sample KS statistic between max_k xi_k and max_k gamma_k.
inline std::vector<CellResult> run_max_sweep(const ExperimentGrid& grid) {
  auto cells = detail::run_sweep(
      grid,
      [&](std::size_t cell, SeedSpec seed) {
        const SummandModel mod = grid.model_at(cell);
        const PointCloud xi = sample_sum_replicates(mod, grid.m, seed.derive(0));
        const PointCloud gamma = sample_gaussian(sum_covariance(mod), grid.m, seed.derive(1));
        return detail::TrialOutcome{ks_statistic(row_maxima(xi), row_maxima(gamma)), 0.0, 0, true, 0.0};
      },
      false);
  double C = 1.0;
  if (grid.abs_const_C) {
    C = *grid.abs_const_C;
  } else if (cells.front().distance > 0.0) {
    C = calibrate_linear(cells.front().distance, max_bound_at(grid, 0, 1.0).bound, 0.0);
  }
  for (std::size_t c = 0; c < cells.size(); ++c) cells[c].theory_bound = max_bound_at(grid, c, C).bound;
  return cells;
}

// ---------------------------------------------------------------------------
// Ornstein-Uhlenbeck profile
// ---------------------------------------------------------------------------

struct OuPoint {
  double t = 0.0;
  double distance = 0.0;  // mean over trials of W_L(X_t, gamma)
  double distance_stderr = 0.0;
  bool converged = true;
};

/// t -> W_L(X_t, gamma) with X_t = e^{-t} xi + sqrt(1 - e^{-2t}) gamma, for one
/// xi-cloud and one matched-covariance gamma-cloud per trial.
inline std::vector<OuPoint> run_ou_profile(const SummandModel& model, std::size_t m, const std::vector<double>& times,
                                           std::size_t trials, SinkhornConfig cfg, SeedSpec seed, unsigned threads = 0) {
  if (times.empty()) throw ConfigError("time grid is empty");
  if (trials < 1) throw ConfigError("trials must be >= 1");
  cfg.debias = true;
  const std::size_t nt = times.size();
  std::vector<TransportResult> out(trials * nt);
  detail::parallel_for(trials, threads, [&](std::size_t t) {
    const SeedSpec s = seed.derive(t);
    const PointCloud xi = sample_sum_replicates(model, m, s.derive(0));
    const PointCloud gamma = sample_gaussian(sum_covariance(model), m, s.derive(1));
    for (std::size_t k = 0; k < nt; ++k) out[t * nt + k] = sinkhorn_wl(ou_interpolate(xi, gamma, times[k]), gamma, cfg);
  });
  std::vector<OuPoint> res;
  for (std::size_t k = 0; k < nt; ++k) {
    OuPoint pt;
    pt.t = times[k];
    std::vector<double> d;
    for (std::size_t t = 0; t < trials; ++t) {
      d.push_back(out[t * nt + k].wl);
      pt.converged = pt.converged && out[t * nt + k].converged;
    }
    pt.distance = detail::mean_of(d);
    pt.distance_stderr = detail::stderr_of(d);
    res.push_back(pt);
  }
  return res;
}

}  // namespace gal
