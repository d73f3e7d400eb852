#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

#include "gal/core.hpp"
#include "gal/sampling.hpp"

namespace gal {

/// Log-domain Sinkhorn settings. Defaults follow the reference experiment
/// (blur 0.01, length-scale annealing ratio 0.99).
struct SinkhornConfig {
  double cost_exponent = 2.0;  // L: ground cost ||x - y||^L
  double blur = 0.01;          // target length-scale; final epsilon = blur^L
  double scaling = 0.99;       // per-level annealing ratio of the length-scale
  int max_sweeps = 2000;       // sweep budget at the final epsilon
  int sweeps_per_level = 1;    // sweep budget at each intermediate epsilon
  double tolerance = 1e-6;     // sup-norm change of the dual potentials
  bool debias = false;         // return the Sinkhorn divergence
  bool keep_plan = false;      // materialize the (rounded) x-y coupling

  void validate() const {
    if (!(cost_exponent >= 1.0) || !std::isfinite(cost_exponent)) throw ConfigError("cost exponent L must be >= 1");
    if (!(blur > 0.0) || !std::isfinite(blur)) throw ConfigError("blur must be > 0");
    if (!(scaling > 0.0 && scaling < 1.0)) throw ConfigError("scaling must lie in (0, 1)");
    if (max_sweeps < 1 || sweeps_per_level < 1) throw ConfigError("sweep budgets must be positive");
    if (!(tolerance > 0.0)) throw ConfigError("tolerance must be > 0");
  }
};

/// Coupling with prescribed marginals.
struct TransportPlan {
  Matrix plan;
  Vector row_marginal;
  Vector col_marginal;
};

struct TransportResult {
  double wl = 0.0;        // raw_cost^{1/L}
  double raw_cost = 0.0;  // E||x - y||^L (exact) or entropic cost / divergence (Sinkhorn)
  double entropic_cost = 0.0;  // undebiased OT_eps(x, y); equals raw_cost for exact solves
  int sweeps_used = 0;
  bool converged = true;
  std::optional<TransportPlan> plan;
};

// ---------------------------------------------------------------------------
// Cost matrices
// ---------------------------------------------------------------------------

/// C_ij = ||x_i - y_j||^L, computed as (squared distance)^{L/2}. Computed
/// coordinate-wise so that cost_matrix(y, x) is exactly the transpose.
inline Matrix cost_matrix(const PointCloud& x, const PointCloud& y, double L) {
  if (x.dim() != y.dim()) throw DimensionError("point clouds differ in dimension");
  const Matrix& X = x.points();
  const Matrix& Y = y.points();
  Matrix c(X.rows(), Y.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    for (Eigen::Index j = 0; j < Y.rows(); ++j) c(i, j) = (X.row(i) - Y.row(j)).squaredNorm();
  if (L == 2.0) return c;
  return c.array().pow(0.5 * L).matrix();
}

// ---------------------------------------------------------------------------
// Exact transport between equal-size uniform clouds (assignment problem)
// ---------------------------------------------------------------------------

namespace detail {

// Shortest-augmenting-path Hungarian method on a square cost matrix.
// Returns the optimal column for each row and fills the dual potentials.
inline std::vector<int> hungarian(const Matrix& cost, Vector& u_out, Vector& v_out) {
  const int n = static_cast<int>(cost.rows());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> assign(n, -1);
  for (int j = 1; j <= n; ++j)
    if (p[j] != 0) assign[p[j] - 1] = j - 1;
  u_out.resize(n);
  v_out.resize(n);
  for (int i = 0; i < n; ++i) {
    u_out(i) = u[i + 1];
    v_out(i) = v[i + 1];
  }
  return assign;
}

// Kuhn augmenting path restricted to allowed edges.
inline bool augment(int row, const std::vector<std::vector<int>>& adj, std::vector<int>& match_col,
                    std::vector<char>& seen, const std::vector<char>& col_blocked) {
  for (int j : adj[row]) {
    if (seen[j] || col_blocked[j]) continue;
    seen[j] = 1;
    if (match_col[j] < 0 || augment(match_col[j], adj, match_col, seen, col_blocked)) {
      match_col[j] = row;
      return true;
    }
  }
  return false;
}

// True when rows [first, n) can be perfectly matched into unblocked columns.
inline bool has_perfect_matching(int first, const std::vector<std::vector<int>>& adj,
                                 const std::vector<char>& col_blocked) {
  const int n = static_cast<int>(adj.size());
  std::vector<int> match_col(n, -1);
  std::vector<char> seen(n);
  for (int r = first; r < n; ++r) {
    std::fill(seen.begin(), seen.end(), 0);
    if (!augment(r, adj, match_col, seen, col_blocked)) return false;
  }
  return true;
}

// Among all optimal assignments (perfect matchings on dual-tight edges), pick
// the lexicographically smallest one.
inline std::vector<int> lexicographic_optimum(const Matrix& cost, const Vector& u, const Vector& v,
                                              const std::vector<int>& fallback) {
  const int n = static_cast<int>(cost.rows());
  const double scale = std::max(1.0, cost.cwiseAbs().maxCoeff());
  const double tight_tol = 1e-11 * scale;
  std::vector<std::vector<int>> adj(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (std::abs(cost(i, j) - u(i) - v(j)) <= tight_tol) adj[i].push_back(j);

  std::vector<int> result(n, -1);
  std::vector<char> blocked(n, 0);
  for (int i = 0; i < n; ++i) {
    bool placed = false;
    for (int j : adj[i]) {
      if (blocked[j]) continue;
      blocked[j] = 1;
      if (has_perfect_matching(i + 1, adj, blocked)) {
        result[i] = j;
        placed = true;
        break;
      }
      blocked[j] = 0;
    }
    if (!placed) return fallback;  // tolerance too tight for this instance
  }
  return result;
}

inline double assignment_cost(const Matrix& cost, const std::vector<int>& perm) {
  double s = 0.0;
  for (std::size_t i = 0; i < perm.size(); ++i) s += cost(static_cast<Eigen::Index>(i), perm[i]);
  return s;
}

}  // namespace detail

/// Optimal permutation for a square cost matrix, lexicographically smallest
/// among minimizers. Exhaustive for n <= 8, Hungarian otherwise.
inline std::vector<int> optimal_assignment(const Matrix& cost) {
  const auto n = static_cast<int>(cost.rows());
  if (cost.cols() != n) throw SizeError("assignment needs a square cost matrix");
  if (n <= 8) {
    std::vector<int> perm(n), best;
    std::iota(perm.begin(), perm.end(), 0);
    double best_cost = std::numeric_limits<double>::infinity();
    do {
      const double c = detail::assignment_cost(cost, perm);
      if (c < best_cost) {  // strict: first (lexicographically smallest) minimizer wins
        best_cost = c;
        best = perm;
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
  }
  Vector u, v;
  const std::vector<int> assign = detail::hungarian(cost, u, v);
  return detail::lexicographic_optimum(cost, u, v, assign);
}

/// Exact W_L between two clouds of equal size m <= 64.
inline TransportResult exact_wl(const PointCloud& x, const PointCloud& y, double L) {
  if (x.size() != y.size()) throw SizeError("exact transport needs clouds of equal size");
  if (x.size() > 64) throw SizeError("exact transport supports at most 64 points");
  if (x.dim() != y.dim()) throw DimensionError("point clouds differ in dimension");
  if (!(L >= 1.0)) throw DomainError("cost exponent L must be >= 1");
  x.validate();
  y.validate();

  const Matrix c = cost_matrix(x, y, L);
  const std::vector<int> perm = optimal_assignment(c);
  const double m = static_cast<double>(x.size());

  TransportResult r;
  r.raw_cost = std::max(0.0, detail::assignment_cost(c, perm) / m);
  r.wl = std::pow(r.raw_cost, 1.0 / L);
  r.entropic_cost = r.raw_cost;
  TransportPlan plan;
  plan.plan = Matrix::Zero(c.rows(), c.cols());
  for (std::size_t i = 0; i < perm.size(); ++i) plan.plan(static_cast<Eigen::Index>(i), perm[i]) = 1.0 / m;
  plan.row_marginal = Vector::Constant(c.rows(), 1.0 / m);
  plan.col_marginal = Vector::Constant(c.cols(), 1.0 / m);
  r.plan = std::move(plan);
  return r;
}

// ---------------------------------------------------------------------------
// Log-domain Sinkhorn with epsilon-scaling
// ---------------------------------------------------------------------------

namespace detail {

/// out_i = -eps * log sum_j b_j exp((h_j - C_ij) / eps), for potentials h on the
/// column side and log-weights log_b. Exponents are shifted by the row maximum
/// in double and then exponentiated and summed in single precision (relative
/// error ~1e-7 on the sum, i.e. ~1e-7 * eps on the potential).
inline void softmin(const Matrix& cost, double eps, const Vector& h, double log_b, Vector& out,
                    Eigen::ArrayXd& buf) {
  const Eigen::Index rows = cost.rows();
  const double inv = 1.0 / eps;
  const Eigen::ArrayXd hs = h.array() * inv;
  Eigen::ArrayXf fbuf(buf.size());
  for (Eigen::Index i = 0; i < rows; ++i) {
    buf = hs - cost.row(i).transpose().array() * inv;
    const double mx = buf.maxCoeff();
    fbuf = (buf - mx).cast<float>();
    const double s = static_cast<double>(fbuf.exp().sum());
    out(i) = -eps * (mx + std::log(s) + log_b);
  }
}

inline double sup_diff(const Vector& a, const Vector& b) { return (a - b).cwiseAbs().maxCoeff(); }

/// Length-scale diameter of the joint bounding box.
inline double bbox_diameter(const PointCloud& x, const PointCloud& y) {
  const Eigen::RowVectorXd lo = x.points().colwise().minCoeff().cwiseMin(y.points().colwise().minCoeff());
  const Eigen::RowVectorXd hi = x.points().colwise().maxCoeff().cwiseMax(y.points().colwise().maxCoeff());
  return (hi - lo).norm();
}

/// Epsilon ladder: (diam * scaling^k)^L for k = 0, 1, ... down to blur^L.
inline std::vector<double> epsilon_schedule(double diameter, const SinkhornConfig& cfg) {
  const double L = cfg.cost_exponent;
  std::vector<double> eps;
  if (diameter > cfg.blur) {
    const double steps = std::log(diameter / cfg.blur) / -std::log(cfg.scaling);
    const auto count = static_cast<long>(std::ceil(steps - 1e-9));
    eps.reserve(static_cast<std::size_t>(count) + 1);
    for (long k = 0; k < count; ++k) eps.push_back(std::pow(diameter * std::pow(cfg.scaling, static_cast<double>(k)), L));
  }
  eps.push_back(std::pow(cfg.blur, L));
  return eps;
}

struct DualSolution {
  Vector f, g;  // potentials on x and y
  int sweeps = 0;
  bool converged = false;
};

// Two-sided problem with symmetric (averaged) updates: for a swapped input the
// iterates are exactly swapped.
inline DualSolution solve_pair(const Matrix& cxy, const Matrix& cyx, const std::vector<double>& schedule,
                               const SinkhornConfig& cfg) {
  const Eigen::Index mx = cxy.rows(), my = cxy.cols();
  const double log_a = -std::log(static_cast<double>(mx));
  const double log_b = -std::log(static_cast<double>(my));
  DualSolution s;
  s.f = Vector::Zero(mx);
  s.g = Vector::Zero(my);
  Vector ft(mx), gt(my);
  Eigen::ArrayXd buf_x(my), buf_y(mx);
  double change = std::numeric_limits<double>::infinity();

  for (std::size_t level = 0; level < schedule.size(); ++level) {
    const double eps = schedule[level];
    const bool last = level + 1 == schedule.size();
    const int budget = last ? cfg.max_sweeps : cfg.sweeps_per_level;
    for (int sweep = 0; sweep < budget; ++sweep) {
      softmin(cxy, eps, s.g, log_b, ft, buf_x);
      softmin(cyx, eps, s.f, log_a, gt, buf_y);
      change = std::max(sup_diff(ft, s.f), sup_diff(gt, s.g));
      s.f = 0.5 * (s.f + ft);
      s.g = 0.5 * (s.g + gt);
      ++s.sweeps;
      if (change < cfg.tolerance) break;
    }
  }
  // final unaveraged extrapolation at the target epsilon
  const double eps = schedule.back();
  softmin(cxy, eps, s.g, log_b, ft, buf_x);
  softmin(cyx, eps, s.f, log_a, gt, buf_y);
  s.f = ft;
  s.g = gt;
  s.converged = change < cfg.tolerance;
  return s;
}

// Symmetric problem (x against itself): a single potential.
inline DualSolution solve_self(const Matrix& cxx, const std::vector<double>& schedule, const SinkhornConfig& cfg) {
  const Eigen::Index m = cxx.rows();
  const double log_a = -std::log(static_cast<double>(m));
  DualSolution s;
  s.f = Vector::Zero(m);
  Vector ft(m);
  Eigen::ArrayXd buf(m);
  double change = std::numeric_limits<double>::infinity();
  for (std::size_t level = 0; level < schedule.size(); ++level) {
    const double eps = schedule[level];
    const bool last = level + 1 == schedule.size();
    const int budget = last ? cfg.max_sweeps : cfg.sweeps_per_level;
    for (int sweep = 0; sweep < budget; ++sweep) {
      softmin(cxx, eps, s.f, log_a, ft, buf);
      change = sup_diff(ft, s.f);
      s.f = 0.5 * (s.f + ft);
      ++s.sweeps;
      if (change < cfg.tolerance) break;
    }
  }
  softmin(cxx, schedule.back(), s.f, log_a, ft, buf);
  s.f = ft;
  s.g = ft;
  s.converged = change < cfg.tolerance;
  return s;
}

// Primal plan pi_ij = a_i b_j exp((f_i + g_j - C_ij)/eps), then rounded onto
// the exact marginals (row/column clipping plus a rank-one correction).
inline TransportPlan primal_plan(const Matrix& cxy, const DualSolution& s, double eps) {
  const Eigen::Index mx = cxy.rows(), my = cxy.cols();
  const Vector a = Vector::Constant(mx, 1.0 / static_cast<double>(mx));
  const Vector b = Vector::Constant(my, 1.0 / static_cast<double>(my));
  Matrix pi(mx, my);
  for (Eigen::Index i = 0; i < mx; ++i)
    for (Eigen::Index j = 0; j < my; ++j)
      pi(i, j) = a(i) * b(j) * std::exp((s.f(i) + s.g(j) - cxy(i, j)) / eps);

  Vector r = pi.rowwise().sum();
  for (Eigen::Index i = 0; i < mx; ++i)
    if (r(i) > a(i)) pi.row(i) *= a(i) / r(i);
  Vector c = pi.colwise().sum().transpose();
  for (Eigen::Index j = 0; j < my; ++j)
    if (c(j) > b(j)) pi.col(j) *= b(j) / c(j);
  const Vector err_r = (a - pi.rowwise().sum()).cwiseMax(0.0);
  const Vector err_c = (b - pi.colwise().sum().transpose()).cwiseMax(0.0);
  const double mass = err_r.sum();
  if (mass > 0.0) pi += err_r * err_c.transpose() / mass;
  return {std::move(pi), a, b};
}

}  // namespace detail

/// Entropic W_L estimate between uniform clouds. Returns OT_eps (or the
/// debiased divergence, clamped at 0) as raw_cost and its 1/L-th power as wl.
inline TransportResult sinkhorn_wl(const PointCloud& x, const PointCloud& y, const SinkhornConfig& cfg) {
  cfg.validate();
  if (x.dim() != y.dim()) throw DimensionError("point clouds differ in dimension");
  x.validate();
  y.validate();
  const double L = cfg.cost_exponent;

  const std::vector<double> schedule = detail::epsilon_schedule(detail::bbox_diameter(x, y), cfg);
  detail::DualSolution xy;
  std::optional<TransportPlan> plan;
  {
    const Matrix cxy = cost_matrix(x, y, L);
    if (!cxy.allFinite()) throw DataError("cost matrix has non-finite entries");
    const Matrix cyx = cxy.transpose();
    xy = detail::solve_pair(cxy, cyx, schedule, cfg);
    if (cfg.keep_plan) plan = detail::primal_plan(cxy, xy, schedule.back());
  }
  const double entropic = xy.f.mean() + xy.g.mean();
  double cost = entropic;
  int sweeps = xy.sweeps;
  bool converged = xy.converged;

  if (cfg.debias) {
    // one self-cost matrix alive at a time
    const auto self_mean = [&](const PointCloud& c, int& used, bool& ok) {
      const detail::DualSolution s = detail::solve_self(cost_matrix(c, c, L), schedule, cfg);
      used += s.sweeps;
      ok = ok && s.converged;
      return s.f.mean();
    };
    const double pxx = self_mean(x, sweeps, converged);
    const double pyy = self_mean(y, sweeps, converged);
    cost = (xy.f.mean() - pxx) + (xy.g.mean() - pyy);
  }

  TransportResult r;
  r.raw_cost = std::max(0.0, cost);
  r.wl = std::pow(r.raw_cost, 1.0 / L);
  r.entropic_cost = entropic;
  r.sweeps_used = sweeps;
  r.converged = converged;
  r.plan = std::move(plan);
  return r;
}

/// Samples m replicates of the sum and m Gaussian replicates (streams 1 and 2
/// derived from seed) and returns their Sinkhorn distance.
inline TransportResult wl_between_sum_and_gaussian(const SummandModel& model, const CovarianceSpec& cov,
                                                   std::size_t m, const SinkhornConfig& cfg, SeedSpec seed) {
  const PointCloud xi = sample_sum_replicates(model, m, seed.derive(1));
  const PointCloud gamma = sample_gaussian(cov, m, seed.derive(2));
  return sinkhorn_wl(xi, gamma, cfg);
}

}  // namespace gal
