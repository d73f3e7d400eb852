#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "gal/core.hpp"

namespace gal {

// ---------------------------------------------------------------------------
// Random streams
// ---------------------------------------------------------------------------

/// Identifies one independent random stream. Every random object in the
/// library is a pure function of a SeedSpec (plus a replicate index).
struct SeedSpec {
  std::uint64_t master_seed = 0;
  std::uint64_t stream_id = 0;

  /// Child stream keyed by `key`; distinct keys give distinct streams.
  SeedSpec derive(std::uint64_t key) const noexcept;

  friend bool operator==(const SeedSpec&, const SeedSpec&) = default;
};

namespace detail {

inline constexpr std::uint64_t splitmix64_step(std::uint64_t& state) noexcept {
  state += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t mix(std::uint64_t a, std::uint64_t b) noexcept {
  std::uint64_t s = a ^ (b * 0xD6E8FEB86659FD93ULL);
  std::uint64_t h = splitmix64_step(s);
  return h ^ splitmix64_step(s);
}

}  // namespace detail

inline SeedSpec SeedSpec::derive(std::uint64_t key) const noexcept {
  return {master_seed, detail::mix(stream_id + 0x632BE59BD9B4E019ULL, key)};
}

/// Counter-keyed SplitMix64 generator. Satisfies UniformRandomBitGenerator so
/// it plugs into the <random> distributions.
class Rng {
 public:
  using result_type = std::uint64_t;

  Rng(SeedSpec seed, std::uint64_t counter = 0) noexcept
      : state_(detail::mix(detail::mix(seed.master_seed, seed.stream_id), counter)) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept { return detail::splitmix64_step(state_); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  double normal() { return normal_(*this); }

 private:
  std::uint64_t state_;
  std::normal_distribution<double> normal_;
};

// ---------------------------------------------------------------------------
// Covariance
// ---------------------------------------------------------------------------

/// Covariance of a centered p-dimensional vector: identity, diagonal or full.
class CovarianceSpec {
 public:
  enum class Form { identity, diagonal, full };

  static CovarianceSpec identity(std::size_t p) {
    if (p == 0) throw ConfigError("covariance dimension must be positive");
    CovarianceSpec c;
    c.form_ = Form::identity;
    c.matrix_ = Matrix::Identity(ix(p), ix(p));
    c.factorize();
    return c;
  }

  static CovarianceSpec diagonal(const std::vector<double>& d) {
    if (d.empty()) throw ConfigError("covariance dimension must be positive");
    CovarianceSpec c;
    c.form_ = Form::diagonal;
    c.matrix_ = Matrix::Zero(ix(d.size()), ix(d.size()));
    for (std::size_t k = 0; k < d.size(); ++k) {
      if (!(d[k] >= 0.0) || !std::isfinite(d[k]))
        throw ConfigError("diagonal covariance entries must be finite and >= 0");
      c.matrix_(ix(k), ix(k)) = d[k];
    }
    c.factorize();
    return c;
  }

  static CovarianceSpec full(Matrix m) {
    if (m.rows() == 0 || m.rows() != m.cols()) throw ConfigError("covariance must be a non-empty square matrix");
    if (!m.allFinite()) throw ConfigError("covariance has non-finite entries");
    const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-12 * std::max(1.0, m.cwiseAbs().maxCoeff()))
      throw ConfigError("covariance is not symmetric");
    CovarianceSpec c;
    c.form_ = Form::full;
    c.matrix_ = 0.5 * (m + m.transpose());
    c.factorize();
    return c;
  }

  Form form() const noexcept { return form_; }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(matrix_.rows()); }
  const Matrix& matrix() const noexcept { return matrix_; }

  /// Symmetric square root with near-zero negative eigenvalues clipped to 0.
  const Matrix& sqrt_factor() const noexcept { return sqrt_; }

  double operator_norm() const noexcept { return eigenvalues_.size() ? eigenvalues_.maxCoeff() : 0.0; }
  double lambda_min() const noexcept { return eigenvalues_.size() ? eigenvalues_.minCoeff() : 0.0; }
  const Vector& eigenvalues() const noexcept { return eigenvalues_; }

  /// Smallest / largest coordinate standard deviation sqrt(Sigma_kk).
  double sigma_lower() const { return std::sqrt(matrix_.diagonal().minCoeff()); }
  double sigma_upper() const { return std::sqrt(matrix_.diagonal().maxCoeff()); }

  /// Sigma^{-1/2}; throws DomainError when Sigma is singular.
  Matrix inverse_sqrt() const {
    if (!(lambda_min() > 0.0)) throw DomainError("covariance is singular (lambda_min <= 0)");
    return eigenvectors_ * eigenvalues_.cwiseSqrt().cwiseInverse().asDiagonal() * eigenvectors_.transpose();
  }

  CovarianceSpec scaled(double factor) const {
    CovarianceSpec c = *this;
    c.matrix_ *= factor;
    c.factorize();
    return c;
  }

 private:
  static Eigen::Index ix(std::size_t v) { return static_cast<Eigen::Index>(v); }

  void factorize() {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(matrix_);
    if (es.info() != Eigen::Success) throw ConfigError("covariance eigendecomposition failed");
    Vector lam = es.eigenvalues();
    const double scale = lam.cwiseAbs().maxCoeff();
    for (Eigen::Index k = 0; k < lam.size(); ++k) {
      if (lam(k) < -1e-10 * scale) throw ConfigError("covariance is not positive semi-definite");
      if (lam(k) < 0.0) lam(k) = 0.0;
    }
    eigenvalues_ = lam;
    eigenvectors_ = es.eigenvectors();
    sqrt_ = eigenvectors_ * lam.cwiseSqrt().asDiagonal() * eigenvectors_.transpose();
  }

  Form form_ = Form::identity;
  Matrix matrix_;
  Matrix sqrt_;
  Matrix eigenvectors_;
  Vector eigenvalues_;
};

// ---------------------------------------------------------------------------
// Summand models
// ---------------------------------------------------------------------------

enum class SummandKind { centered_bernoulli, rademacher, uniform, gaussian };

inline std::string_view to_string(SummandKind k) noexcept {
  switch (k) {
    case SummandKind::centered_bernoulli: return "centered_bernoulli";
    case SummandKind::rademacher: return "rademacher";
    case SummandKind::uniform: return "uniform";
    case SummandKind::gaussian: return "gaussian";
  }
  return "?";
}

inline SummandKind summand_kind_from_string(std::string_view s) {
  if (s == "centered_bernoulli") return SummandKind::centered_bernoulli;
  if (s == "rademacher") return SummandKind::rademacher;
  if (s == "uniform") return SummandKind::uniform;
  if (s == "gaussian") return SummandKind::gaussian;
  throw ConfigError("unknown summand kind '" + std::string(s) + "'");
}

/// xi = sum_{i=1}^n xi_i with i.i.d. zero-mean summands, each coordinate of a
/// summand being `scale` times a base draw:
///   centered_bernoulli  Be(0.5) - 0.5          (variance 1/4)
///   rademacher          +-1                    (variance 1)
///   uniform             U(-sqrt 3, sqrt 3)     (variance 1)
///   gaussian            N(0, base_cov)
struct SummandModel {
  SummandKind kind = SummandKind::centered_bernoulli;
  std::size_t n = 1;
  std::size_t p = 1;
  std::optional<double> scale;               // default 1/sqrt(n)
  std::optional<CovarianceSpec> base_cov;    // gaussian only; default identity

  double effective_scale() const { return scale ? *scale : 1.0 / std::sqrt(static_cast<double>(n)); }

  void validate() const {
    if (n == 0) throw ConfigError("summand model needs n >= 1");
    if (p == 0) throw ConfigError("summand model needs p >= 1");
    if (scale && !(std::isfinite(*scale) && *scale >= 0.0)) throw ConfigError("summand scale must be finite and >= 0");
    if (base_cov && base_cov->dim() != p) throw ConfigError("gaussian base covariance has wrong dimension");
  }

  /// Variance of one coordinate of a base draw (before scaling), non-gaussian kinds.
  double base_variance() const noexcept {
    switch (kind) {
      case SummandKind::centered_bernoulli: return 0.25;
      case SummandKind::rademacher:
      case SummandKind::uniform:
      case SummandKind::gaussian: return 1.0;
    }
    return 1.0;
  }
};

/// Exact covariance of one summand xi_i.
inline CovarianceSpec summand_covariance(const SummandModel& model) {
  model.validate();
  const double s2 = model.effective_scale() * model.effective_scale();
  if (model.kind == SummandKind::gaussian) {
    const CovarianceSpec base = model.base_cov ? *model.base_cov : CovarianceSpec::identity(model.p);
    return base.scaled(s2);
  }
  return CovarianceSpec::diagonal(std::vector<double>(model.p, s2 * model.base_variance()));
}

/// Exact covariance of the sum xi = sum_i xi_i.
inline CovarianceSpec sum_covariance(const SummandModel& model) {
  return summand_covariance(model).scaled(static_cast<double>(model.n));
}

namespace detail {

// Number of ones among `count` fair random bits.
inline std::uint64_t fair_bit_count(Rng& rng, std::size_t count) {
  std::uint64_t ones = 0;
  while (count >= 64) {
    ones += static_cast<std::uint64_t>(std::popcount(rng()));
    count -= 64;
  }
  if (count > 0) ones += static_cast<std::uint64_t>(std::popcount(rng() >> (64 - count)));
  return ones;
}

inline void fill_gaussian_row(Rng& rng, const Matrix& factor, double mult, Eigen::Ref<Vector> out) {
  Vector z(factor.rows());
  for (Eigen::Index k = 0; k < z.size(); ++k) z(k) = rng.normal();
  out = mult * (factor * z);
}

}  // namespace detail

/// One draw of a single summand xi_i (used for moment estimation).
inline void sample_summand(const SummandModel& model, const Matrix& gaussian_factor, Rng& rng,
                           Eigen::Ref<Vector> out) {
  const double s = model.effective_scale();
  switch (model.kind) {
    case SummandKind::centered_bernoulli:
      for (Eigen::Index k = 0; k < out.size(); ++k) out(k) = s * ((rng() >> 63) ? 0.5 : -0.5);
      break;
    case SummandKind::rademacher:
      for (Eigen::Index k = 0; k < out.size(); ++k) out(k) = s * ((rng() >> 63) ? 1.0 : -1.0);
      break;
    case SummandKind::uniform:
      for (Eigen::Index k = 0; k < out.size(); ++k) out(k) = s * std::sqrt(3.0) * (2.0 * rng.uniform() - 1.0);
      break;
    case SummandKind::gaussian:
      detail::fill_gaussian_row(rng, gaussian_factor, s, out);
      break;
  }
}

/// m independent replicates of xi = sum_i xi_i. Replicate j is a pure function
/// of (seed, j).
inline PointCloud sample_sum_replicates(const SummandModel& model, std::size_t m, SeedSpec seed) {
  model.validate();
  if (m == 0) throw ConfigError("replicate count must be >= 1");
  const std::size_t n = model.n;
  const std::size_t p = model.p;
  const double s = model.effective_scale();
  const double half_n = 0.5 * static_cast<double>(n);

  Matrix pts(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(p));
  Matrix factor;
  if (model.kind == SummandKind::gaussian)
    factor = model.base_cov ? model.base_cov->sqrt_factor() : Matrix::Identity(pts.cols(), pts.cols());
  Vector buf(static_cast<Eigen::Index>(p));

  for (std::size_t j = 0; j < m; ++j) {
    Rng rng(seed, j);
    auto row = pts.row(static_cast<Eigen::Index>(j));
    switch (model.kind) {
      case SummandKind::centered_bernoulli:
        // sum of n centered Be(0.5) = Bin(n, 1/2) - n/2
        for (std::size_t k = 0; k < p; ++k)
          row(static_cast<Eigen::Index>(k)) = s * (static_cast<double>(detail::fair_bit_count(rng, n)) - half_n);
        break;
      case SummandKind::rademacher:
        for (std::size_t k = 0; k < p; ++k)
          row(static_cast<Eigen::Index>(k)) = s * (2.0 * static_cast<double>(detail::fair_bit_count(rng, n)) - 2.0 * half_n);
        break;
      case SummandKind::uniform:
        for (std::size_t k = 0; k < p; ++k) {
          double acc = 0.0;
          for (std::size_t i = 0; i < n; ++i) acc += 2.0 * rng.uniform() - 1.0;
          row(static_cast<Eigen::Index>(k)) = s * std::sqrt(3.0) * acc;
        }
        break;
      case SummandKind::gaussian:
        // a sum of n i.i.d. N(0, s^2 B) is exactly N(0, n s^2 B)
        detail::fill_gaussian_row(rng, factor, s * std::sqrt(static_cast<double>(n)), buf);
        row = buf.transpose();
        break;
    }
  }
  return PointCloud(std::move(pts));
}

/// m i.i.d. rows from N(0, cov) via the clipped symmetric square root.
inline PointCloud sample_gaussian(const CovarianceSpec& cov, std::size_t m, SeedSpec seed) {
  if (m == 0) throw ConfigError("replicate count must be >= 1");
  const auto p = static_cast<Eigen::Index>(cov.dim());
  Matrix z(static_cast<Eigen::Index>(m), p);
  for (std::size_t j = 0; j < m; ++j) {
    Rng rng(seed, j);
    for (Eigen::Index k = 0; k < p; ++k) z(static_cast<Eigen::Index>(j), k) = rng.normal();
  }
  // rows: z_j^T A with A symmetric
  return PointCloud(Matrix(z * cov.sqrt_factor()));
}

/// Ornstein-Uhlenbeck transition X_t = e^{-t} xi + sqrt(1 - e^{-2t}) gamma.
/// t = +infinity is honoured exactly and returns gamma.
inline PointCloud ou_interpolate(const PointCloud& xi, const PointCloud& gamma, double t) {
  require_same_shape(xi, gamma);
  if (std::isnan(t) || t < 0.0) throw DomainError("OU time must be >= 0");
  if (t == 0.0) return xi;
  if (std::isinf(t)) return gamma;
  const double a = std::exp(-t);
  const double b = std::sqrt(-std::expm1(-2.0 * t));
  return PointCloud(Matrix(a * xi.points() + b * gamma.points()));
}

// ---------------------------------------------------------------------------
// Empirical summaries (shared by tests and experiments)
// ---------------------------------------------------------------------------

inline Vector empirical_mean(const PointCloud& c) { return c.points().colwise().mean().transpose(); }

/// Unbiased sample covariance (divides by m - 1; m == 1 gives zeros).
inline Matrix empirical_covariance(const PointCloud& c) {
  const Matrix centered = c.points().rowwise() - c.points().colwise().mean();
  const double denom = c.size() > 1 ? static_cast<double>(c.size() - 1) : 1.0;
  return (centered.transpose() * centered) / denom;
}

}  // namespace gal
