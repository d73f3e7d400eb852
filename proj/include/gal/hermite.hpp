#pragma once

// Multivariate probabilists' Hermite polynomials (identity covariance),
// Gauss-Hermite quadrature, the hypercontractivity moment check, and a
// kernel-regression estimate of the Ornstein-Uhlenbeck velocity field.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>

#include "gal/core.hpp"
#include "gal/sampling.hpp"

namespace gal {

class MultiIndex {
 public:
  explicit MultiIndex(std::vector<unsigned> alpha) : alpha_(std::move(alpha)) {
    if (alpha_.empty()) throw DimensionError("multi-index needs p >= 1");
  }

  static MultiIndex zero(std::size_t p) { return MultiIndex(std::vector<unsigned>(p, 0u)); }

  std::size_t dim() const noexcept { return alpha_.size(); }
  unsigned operator[](std::size_t j) const { return alpha_[j]; }
  const std::vector<unsigned>& components() const noexcept { return alpha_; }

  unsigned order() const noexcept { return std::accumulate(alpha_.begin(), alpha_.end(), 0u); }
  unsigned max_component() const noexcept { return *std::max_element(alpha_.begin(), alpha_.end()); }

  double factorial() const noexcept {
    double f = 1.0;
    for (unsigned a : alpha_)
      for (unsigned k = 2; k <= a; ++k) f *= k;
    return f;
  }

  friend auto operator<=>(const MultiIndex&, const MultiIndex&) = default;

 private:
  std::vector<unsigned> alpha_;
};

/// h_k(u) by the three-term recurrence.
inline double hermite_1d(unsigned k, double u) noexcept {
  if (k == 0) return 1.0;
  double prev = 1.0, cur = u;
  for (unsigned j = 1; j < k; ++j) {
    const double next = u * cur - j * prev;
    prev = cur;
    cur = next;
  }
  return cur;
}

/// h_0(u) .. h_K(u) into out[0..K].
inline void hermite_1d_all(unsigned K, double u, double* out) noexcept {
  out[0] = 1.0;
  if (K == 0) return;
  out[1] = u;
  for (unsigned j = 1; j < K; ++j) out[j + 1] = u * out[j] - j * out[j - 1];
}

inline double hermite_eval(const MultiIndex& alpha, const Vector& x) {
  if (static_cast<std::size_t>(x.size()) != alpha.dim()) throw DimensionError("point and multi-index differ in p");
  double v = 1.0;
  for (std::size_t j = 0; j < alpha.dim(); ++j) v *= hermite_1d(alpha[j], x(static_cast<Eigen::Index>(j)));
  return v;
}

/// Gauss-Hermite rule for the standard normal weight; weights sum to 1.
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

inline QuadratureRule gauss_hermite_rule(unsigned count) {
  if (count == 0) throw DomainError("quadrature needs at least one node");
  QuadratureRule r;
  if (count == 1) {
    r.nodes = {0.0};
    r.weights = {1.0};
    return r;
  }
  // Golub-Welsch on the Jacobi matrix of the monic recurrence, then Newton polish.
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(count, count);
  for (unsigned k = 1; k < count; ++k) J(k, k - 1) = J(k - 1, k) = std::sqrt(static_cast<double>(k));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J, Eigen::EigenvaluesOnly);
  std::vector<double> h(count + 1);
  double log_nfact = std::lgamma(count + 1.0);
  for (unsigned i = 0; i < count; ++i) {
    double x = es.eigenvalues()(i);
    for (int it = 0; it < 3; ++it) {
      hermite_1d_all(count, x, h.data());
      const double dh = count * h[count - 1];
      if (dh == 0.0) break;
      x -= h[count] / dh;
    }
    hermite_1d_all(count, x, h.data());
    const double denom = count * h[count - 1];
    r.nodes.push_back(x);
    r.weights.push_back(std::exp(log_nfact - 2.0 * std::log(std::abs(denom))));
  }
  return r;
}

/// E[H_alpha(g) H_beta(g)] for g ~ N(0, I_p) by tensor Gauss-Hermite quadrature.
inline double hermite_orthogonality_check(const MultiIndex& alpha, const MultiIndex& beta, unsigned quad_nodes) {
  if (alpha.dim() != beta.dim()) throw DimensionError("multi-indices differ in p");
  const unsigned top = std::max(alpha.max_component(), beta.max_component());
  if (top > 12) throw DomainError("component order above 12");
  if (quad_nodes < 2 * top + 1) throw DomainError("need quad_nodes >= 2 * max order + 1");
  const QuadratureRule rule = gauss_hermite_rule(quad_nodes);
  // The integrand factorizes over coordinates, so the tensor rule is a product of 1-D rules.
  double v = 1.0;
  for (std::size_t j = 0; j < alpha.dim(); ++j) {
    double s = 0.0;
    for (unsigned i = 0; i < quad_nodes; ++i)
      s += rule.weights[i] * hermite_1d(alpha[j], rule.nodes[i]) * hermite_1d(beta[j], rule.nodes[i]);
    v *= s;
  }
  return v;
}

struct BoniCheck {
  double lhs = 0.0;         // [E||sum x_a H_a(g)||^q]^{2/q}, Monte Carlo
  double rhs = 0.0;         // sum max(1, q-1)^{|a|} a! ||x_a||^2
  double rel_stderr = 0.0;  // relative standard error of lhs

  bool holds(double k_sigma = 5.0) const noexcept { return lhs <= rhs * (1.0 + k_sigma * rel_stderr); }
};

inline BoniCheck boni_inequality_check(const std::map<MultiIndex, Vector>& coeffs, double q, std::size_t m,
                                       SeedSpec seed) {
  if (coeffs.empty()) throw InputError("empty coefficient set");
  if (!(q >= 2.0)) throw DomainError("q must be >= 2");
  if (m < 2) throw ConfigError("need at least two replicates");
  const std::size_t p = coeffs.begin()->first.dim();
  const Eigen::Index d = coeffs.begin()->second.size();
  if (p > 4) throw DomainError("p above 4");
  unsigned top = 0;
  for (const auto& [a, x] : coeffs) {
    if (a.dim() != p || x.size() != d) throw DimensionError("inconsistent coefficient shapes");
    if (a.order() > 8) throw DomainError("order above 8");
    top = std::max(top, a.max_component());
  }

  BoniCheck out;
  for (const auto& [a, x] : coeffs) out.rhs += std::pow(std::max(1.0, q - 1.0), a.order()) * a.factorial() * x.squaredNorm();

  std::vector<std::pair<std::vector<unsigned>, Vector>> terms;
  for (const auto& [a, x] : coeffs) terms.emplace_back(a.components(), x);

  // Streamed mean and variance of ||S||^q.
  double mean = 0.0, m2 = 0.0;
  std::vector<double> h((top + 1) * p);
  Vector s(d);
  for (std::size_t j = 0; j < m; ++j) {
    Rng rng(seed, j);
    for (std::size_t k = 0; k < p; ++k) hermite_1d_all(top, rng.normal(), h.data() + k * (top + 1));
    s.setZero();
    for (const auto& [a, x] : terms) {
      double w = 1.0;
      for (std::size_t k = 0; k < p; ++k) w *= h[k * (top + 1) + a[k]];
      s += w * x;
    }
    const double v = std::pow(s.norm(), q);
    const double delta = v - mean;
    mean += delta / static_cast<double>(j + 1);
    m2 += delta * (v - mean);
  }
  out.lhs = std::pow(mean, 2.0 / q);
  const double se = std::sqrt(m2 / static_cast<double>(m - 1) / static_cast<double>(m));
  out.rel_stderr = mean > 0.0 ? (2.0 / q) * se / mean : 0.0;
  return out;
}

/// `count` distinct multi-indices of total order <= max_order in dimension p,
/// each with a d-dimensional standard normal coefficient vector.
inline std::map<MultiIndex, Vector> random_coefficients(std::size_t p, unsigned max_order, std::size_t count,
                                                        Eigen::Index d, Rng& rng) {
  if (p == 0 || d <= 0) throw DimensionError("need p >= 1 and d >= 1");
  std::map<MultiIndex, Vector> out;
  std::uniform_int_distribution<unsigned> total(0, max_order);
  std::uniform_int_distribution<std::size_t> coord(0, p - 1);
  std::size_t attempts = 0;
  while (out.size() < count && attempts++ < 100 * count) {
    std::vector<unsigned> a(p, 0u);
    const unsigned k = total(rng);
    for (unsigned i = 0; i < k; ++i) ++a[coord(rng)];
    MultiIndex alpha(std::move(a));
    if (out.count(alpha)) continue;
    Vector x(d);
    for (Eigen::Index j = 0; j < d; ++j) x(j) = rng.normal();
    out.emplace(std::move(alpha), std::move(x));
  }
  return out;
}

struct VelocityEstimate {
  double t = 0.0;
  Matrix values;     // m x p estimate of the velocity field at each X_t row
  Vector bandwidth;  // per-coordinate kernel length-scale
};

/// Silverman's rule per coordinate: h_k = s_k (4 / ((p + 2) m))^{1/(p + 4)}.
inline Vector silverman_bandwidth(const PointCloud& x) {
  const auto m = static_cast<double>(x.size());
  const auto p = static_cast<double>(x.dim());
  if (x.size() < 2) throw DomainError("bandwidth needs at least two points");
  const Vector sd = empirical_covariance(x).diagonal().cwiseSqrt();
  return sd * std::pow(4.0 / ((p + 2.0) * m), 1.0 / (p + 4.0));
}

/// Nadaraya-Watson regression of Y on X with a Gaussian product kernel, evaluated at the rows of X.
inline Matrix nadaraya_watson(const Matrix& X, const Matrix& Y, const Vector& h) {
  const Eigen::Index m = X.rows(), p = X.cols();
  // Column-major scaled regressors so each coordinate is contiguous.
  Eigen::MatrixXd Xs(m, p);
  for (Eigen::Index k = 0; k < p; ++k) Xs.col(k) = X.col(k) / h(k);
  const Eigen::MatrixXd Yc = Y;
  Matrix out(m, Y.cols());
  Eigen::ArrayXd d2(m), w(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    d2.setZero();
    for (Eigen::Index k = 0; k < p; ++k) d2 += (Xs.col(k).array() - Xs(i, k)).square();
    w = (-0.5 * d2).exp();
    out.row(i) = (w.matrix().transpose() * Yc) / w.sum();
  }
  return out;
}

/// Regression target -e^{-t}(X_0 - e^{-t}/sqrt(1 - e^{-2t}) X_inf), the time derivative of X_t.
inline Matrix ou_velocity_target(const PointCloud& xi, const PointCloud& gamma, double t) {
  if (!(t > 0.0)) throw DomainError("velocity field requires t > 0");
  require_same_shape(xi, gamma);
  const double e = std::exp(-t);
  const double c = e / std::sqrt(-std::expm1(-2.0 * t));
  return -e * (xi.points() - c * gamma.points());
}

inline VelocityEstimate estimate_velocity_field(const PointCloud& xi, const PointCloud& gamma, double t,
                                                std::optional<double> bandwidth = std::nullopt) {
  if (!(t > 0.0)) throw DomainError("velocity field requires t > 0");
  require_same_shape(xi, gamma);
  const PointCloud xt = ou_interpolate(xi, gamma, t);
  Vector h;
  if (bandwidth) {
    if (!(*bandwidth > 0.0) || !std::isfinite(*bandwidth)) throw DomainError("bandwidth must be positive");
    h = Vector::Constant(static_cast<Eigen::Index>(xi.dim()), *bandwidth);
  } else {
    h = silverman_bandwidth(xt);
  }
  if (!(h.minCoeff() > 0.0) || !h.allFinite()) throw DomainError("degenerate bandwidth");
  return {t, nadaraya_watson(xt.points(), ou_velocity_target(xi, gamma, t), h), h};
}

/// Mean of ||v_i||^L over the rows, raised to 1/L.
inline double field_norm(const Matrix& values, double L) {
  if (values.rows() == 0) return 0.0;
  double s = 0.0;
  for (Eigen::Index i = 0; i < values.rows(); ++i) s += std::pow(values.row(i).norm(), L);
  return std::pow(s / static_cast<double>(values.rows()), 1.0 / L);
}

}  // namespace gal
