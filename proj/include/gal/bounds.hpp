#pragma once

// Closed-form Gaussian-approximation bounds. All logarithms are natural.
// The unnamed absolute constants are explicit `abs_const_C` parameters.

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <string>

#include "gal/core.hpp"
#include "gal/sampling.hpp"

namespace gal {

/// Sub-Gaussian constants: variance proxy nu0 and exponential-moment radius g.
struct SubGaussianProfile {
  double nu0 = 1.0;
  double g = 1.0;

  double xc() const noexcept { return g * g / 4.0; }

  /// Admissibility condition 0.3 g >= sqrt(p) for dimension p.
  bool admissible(std::size_t p) const noexcept { return 0.3 * g >= std::sqrt(static_cast<double>(p)); }
};

struct BoundInputs {
  std::size_t n = 1;
  std::size_t p = 1;
  double L = 2.0;
  double nu0 = 1.0;
  double sigma_norm = 1.0;  // operator norm of Sigma
  double abs_const_C = 1.0;
};

/// mu_k = sum_i E||Sigma^{-1/2}(xi_i - xi_i')||^k, keyed by the order k.
struct MomentVector {
  std::map<double, double> mu;

  double at(double k) const {
    const auto it = mu.find(k);
    if (it == mu.end()) throw InputError("moment of order " + std::to_string(k) + " is missing");
    return it->second;
  }
};

namespace detail {

inline double log_np(const BoundInputs& in) {
  if (in.n == 0 || in.p == 0) throw DomainError("n and p must be >= 1");
  const double np = static_cast<double>(in.n) * static_cast<double>(in.p);
  if (np < 3.0) throw DomainError("n*p must be >= 3");
  return std::log(np);
}

inline void require_wl_exponent(double L) {
  if (!(L >= 2.0) || !std::isfinite(L)) throw DomainError("bound requires L >= 2");
}

}  // namespace detail

/// C(n, p) = C nu0^2 p (ln np)^{3/2}/sqrt n + 5 nu0^3 p^{3/2} ln(np) ln(2n)/sqrt n.
inline double main_bound_cnp(const BoundInputs& in) {
  const double lnp = detail::log_np(in);
  const double n = static_cast<double>(in.n);
  const double p = static_cast<double>(in.p);
  const double nu2 = in.nu0 * in.nu0;
  return in.abs_const_C * nu2 * p * std::pow(lnp, 1.5) / std::sqrt(n) +
         5.0 * nu2 * in.nu0 * std::pow(p, 1.5) * lnp * std::log(2.0 * n) / std::sqrt(n);
}

/// Radius exceeded by ||xi - gamma|| with probability at most e^{-t}.
inline double main_tail_threshold(const BoundInputs& in, double t) {
  if (!(t >= 0.0)) throw DomainError("t must be >= 0");
  const double lnp = detail::log_np(in);
  return main_bound_cnp(in) * std::sqrt(in.sigma_norm) * std::exp(t / lnp);
}

/// W_L bound in terms of the symmetrized moments mu_2, mu_3, mu_4, mu_{2L}.
inline double wlt_bound(const BoundInputs& in, const MomentVector& mu) {
  detail::require_wl_exponent(in.L);
  if (in.n == 0) throw DomainError("n must be >= 1");
  const double L = in.L;
  const double n = static_cast<double>(in.n);
  const double mu2 = mu.at(2.0), mu3 = mu.at(3.0), mu4 = mu.at(4.0), mu2l = mu.at(2.0 * L);
  const double sqrt_e = std::sqrt(std::numbers::e);
  const double bracket = in.abs_const_C * std::pow(L, 1.5) / std::log(L) * (std::sqrt(mu4) + std::pow(mu2l, 1.0 / L)) +
                         std::numbers::sqrt2 * sqrt_e * std::sqrt(L) * mu2 / std::sqrt(n) +
                         sqrt_e * L * mu3 * std::log(2.0 * n) / 2.0;
  return std::sqrt(in.sigma_norm) * bracket;
}

/// The two pieces of the sub-Gaussian W_L bound: value = C * c_term + free_term.
struct SubGaussianWlTerms {
  double c_term = 0.0;     // coefficient of the absolute constant
  double free_term = 0.0;  // 5 L nu0^3 p^{3/2} ||Sigma||^{1/2} ln(2n)/sqrt n
};

inline SubGaussianWlTerms wlt_subgaussian_terms(const BoundInputs& in) {
  detail::require_wl_exponent(in.L);
  if (in.n == 0 || in.p == 0) throw DomainError("n and p must be >= 1");
  const double L = in.L;
  const double n = static_cast<double>(in.n);
  const double p = static_cast<double>(in.p);
  const double s = std::sqrt(in.sigma_norm);
  const double nu2 = in.nu0 * in.nu0;
  SubGaussianWlTerms t;
  t.c_term = std::pow(L, 1.5) * nu2 * s / std::log(L) * (p / std::sqrt(n) + L / std::pow(n, 1.0 - 1.0 / L));
  t.free_term = 5.0 * L * nu2 * in.nu0 * std::pow(p, 1.5) * s * std::log(2.0 * n) / std::sqrt(n);
  return t;
}

inline double wlt_subgaussian_bound(const BoundInputs& in) {
  const SubGaussianWlTerms t = wlt_subgaussian_terms(in);
  return in.abs_const_C * t.c_term + t.free_term;
}

/// Quantile z(p, x) of ||xi|| for a sub-Gaussian vector.
inline double subgaussian_quantile(const SubGaussianProfile& z, std::size_t p, double x) {
  if (!(x >= 0.0)) throw DomainError("x must be >= 0");
  if (!(z.g > 0.0)) throw DomainError("g must be > 0");
  const double pd = static_cast<double>(p);
  if (x <= z.xc()) return std::sqrt(pd + 2.0 * std::sqrt(pd * x) + 2.0 * x);
  return z.g + 2.0 * (x - z.xc()) / z.g;
}

/// Upper bound on P(||xi|| >= z(p, x)); the 8.4 e^{-xc} term applies only for x < xc.
inline double subgaussian_tail(const SubGaussianProfile& z, std::size_t /*p*/, double x) {
  if (!(x >= 0.0)) throw DomainError("x must be >= 0");
  double v = 2.0 * std::exp(-x);
  if (x < z.xc()) v += 8.4 * std::exp(-z.xc());
  return std::min(1.0, v);
}

/// E||xi||^k <= 4 (sqrt p + sqrt(2k))^k.
inline double subgaussian_moment_bound(std::size_t p, double k) {
  if (!(k >= 2.0)) throw DomainError("moment order must be >= 2");
  return 4.0 * std::pow(std::sqrt(static_cast<double>(p)) + std::sqrt(2.0 * k), k);
}

/// Per-summand form: E||Sigma^{-1/2} xi_i||^k <= (4 nu0^k / n^{k/2}) (sqrt p + sqrt(2k))^k.
inline double summand_moment_bound(std::size_t p, double k, double nu0, std::size_t n) {
  return std::pow(nu0, k) / std::pow(static_cast<double>(n), k / 2.0) * subgaussian_moment_bound(p, k);
}

/// One-dimensional W_L bound (C L d)^{3(d+1)/2} eps under a density-weighted CDF condition.
inline double onedim_wl_const(double L, double d, double eps, double abs_const_C = 1.0) {
  if (!(L >= 1.0) || !(d >= 1.0) || !(eps >= 0.0)) throw DomainError("need L >= 1, d >= 1, eps >= 0");
  return std::pow(abs_const_C * L * d, 1.5 * (d + 1.0)) * eps;
}

/// Deviation e * C(ln n, d) * eps exceeded with probability at most 1/n.
inline double onedim_probability_threshold(double n, double d, double eps, double abs_const_C = 1.0) {
  if (!(n >= std::numbers::e)) throw DomainError("need n >= e so that L = ln n >= 1");
  return std::numbers::e * onedim_wl_const(std::log(n), d, eps, abs_const_C);
}

/// Markov coupling bound min(1, (W_L / Delta)^L) on P(||xi - gamma|| > Delta).
inline double markov_coupling_bound(double wl, double L, double delta) {
  if (!(delta > 0.0) || !(wl >= 0.0) || !(L > 0.0)) throw DomainError("need W_L >= 0, L > 0, Delta > 0");
  return std::min(1.0, std::pow(wl / delta, L));
}

/// Anti-concentration constant C_A = (sqrt(2 ln p) + 2) / sigma_lower.
inline double anti_concentration_const(std::size_t p, double sigma_lower) {
  if (p == 0) throw DomainError("p must be >= 1");
  if (!(sigma_lower > 0.0)) throw DomainError("sigma_lower must be > 0");
  return (std::sqrt(2.0 * std::log(static_cast<double>(p))) + 2.0) / sigma_lower;
}

/// Kolmogorov distance between Gaussian maxima with covariances Sigma, Sigma':
/// C delta ln p max(0, ln(sigma_upper / (delta sigma_lower))), delta = ||Sigma - Sigma'||_inf / lambda_min.
inline double gaussian_comparison_bound(double delta_sigma, double lambda_min, std::size_t p, double sigma_upper,
                                        double sigma_lower, double abs_const_C = 1.0) {
  if (!(lambda_min > 0.0)) throw DomainError("lambda_min must be > 0");
  if (!(delta_sigma >= 0.0)) throw DomainError("delta_sigma must be >= 0");
  if (p == 0 || !(sigma_upper > 0.0) || !(sigma_lower > 0.0)) throw DomainError("need p >= 1 and positive sigmas");
  const double delta = delta_sigma / lambda_min;
  if (delta == 0.0) return 0.0;
  const double outer = std::log(sigma_upper / (delta * sigma_lower));
  return abs_const_C * delta * std::log(static_cast<double>(p)) * std::max(0.0, outer);
}

/// Lower and upper bounds on P(eta + xi < t) from P(eta < t -+ Delta) and P(|xi| >= Delta).
struct ProbabilitySandwich {
  double lower = 0.0;
  double upper = 1.0;
};

inline ProbabilitySandwich weak_convergence_sandwich(double p_eta_below_minus, double p_eta_below_plus,
                                                     double p_xi_tail) {
  return {std::max(0.0, p_eta_below_minus - p_xi_tail), std::min(1.0, p_eta_below_plus + p_xi_tail)};
}

struct FinalDistBound {
  double bound = 0.0;  // Kolmogorov distance of the coordinate maxima
  double shift = 0.0;  // the Delta used in the coupling argument
};

inline FinalDistBound final_dist_bound(std::size_t n, std::size_t p, double nu0, double sigma_upper,
                                       double sigma_lower, double lambda_min, double abs_const_C = 1.0) {
  if (n == 0 || p == 0) throw DomainError("n and p must be >= 1");
  const double np = static_cast<double>(n) * static_cast<double>(p);
  if (np < 3.0) throw DomainError("n*p must be >= 3");
  if (!(sigma_upper > 0.0) || !(sigma_lower > 0.0) || !(lambda_min > 0.0))
    throw DomainError("scale parameters must be > 0");
  const double lnp = std::log(np);
  const double rn = std::sqrt(static_cast<double>(n));
  const double nu3 = nu0 * nu0 * nu0;
  FinalDistBound r;
  r.bound = abs_const_C * (nu3 * (sigma_upper / sigma_lower) * lnp * lnp / rn +
                           nu3 * (sigma_upper * sigma_upper / lambda_min) * std::pow(lnp, 2.5) *
                               std::log(static_cast<double>(n)) / rn);
  r.shift = abs_const_C * std::numbers::e * sigma_upper * std::pow(lnp, 1.5) * nu3 / rn;
  return r;
}

/// Monte-Carlo estimate of mu_k = n E||Sigma^{-1/2}(xi_1 - xi_1')||^k for i.i.d.
/// summands, from m independent pairs.
inline double empirical_mu(const SummandModel& model, const CovarianceSpec& cov, double k, std::size_t m,
                           SeedSpec seed) {
  model.validate();
  if (!(k >= 1.0)) throw DomainError("moment order must be >= 1");
  if (m == 0) throw ConfigError("replicate count must be >= 1");
  if (cov.dim() != model.p) throw DimensionError("covariance dimension differs from model dimension");
  const Matrix whiten = cov.inverse_sqrt();
  const auto p = static_cast<Eigen::Index>(model.p);
  Matrix factor;
  if (model.kind == SummandKind::gaussian)
    factor = model.base_cov ? model.base_cov->sqrt_factor() : Matrix::Identity(p, p);
  Vector a(p), b(p);
  double acc = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    Rng rng(seed, j);
    sample_summand(model, factor, rng, a);
    sample_summand(model, factor, rng, b);
    acc += std::pow((whiten * (a - b)).norm(), k);
  }
  return static_cast<double>(model.n) * acc / static_cast<double>(m);
}

}  // namespace gal
