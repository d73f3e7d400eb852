#include <catch_amalgamated.hpp>

#include <cmath>
#include <limits>

#include "gal/sampling.hpp"

using namespace gal;
using Catch::Approx;

namespace {

double correlation(const PointCloud& c, Eigen::Index a, Eigen::Index b) {
  const Matrix s = empirical_covariance(c);
  return s(a, b) / std::sqrt(s(a, a) * s(b, b));
}

double cross_correlation(const PointCloud& x, const PointCloud& y, Eigen::Index k) {
  const Eigen::VectorXd a = x.points().col(k).array() - x.points().col(k).mean();
  const Eigen::VectorXd b = y.points().col(k).array() - y.points().col(k).mean();
  return a.dot(b) / std::sqrt(a.squaredNorm() * b.squaredNorm());
}

double op_norm(const Matrix& m) {
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(Eigen::MatrixXd(m)).eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace

TEST_CASE("seed derivation is pure and stream-sensitive") {
  const SeedSpec s{42, 7};
  CHECK(s.derive(3) == s.derive(3));
  CHECK_FALSE(s.derive(3) == s.derive(4));
  Rng a(s, 0), b(s, 0), c(s, 1);
  const auto x = a();
  CHECK(x == b());
  CHECK(x != c());
}

TEST_CASE("single centered Bernoulli summand takes values +-1/2") {
  SummandModel m;
  m.n = 1;
  m.p = 1;
  m.scale = 1.0;
  const PointCloud c = sample_sum_replicates(m, 500, {3, 0});
  bool lo = false, hi = false;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double v = c(i, 0);
    REQUIRE((v == -0.5 || v == 0.5));
    lo = lo || v < 0;
    hi = hi || v > 0;
  }
  CHECK((lo && hi));
}

TEST_CASE("Bernoulli sum variance at n = 10000") {
  SummandModel m;
  m.n = 10000;
  m.p = 1;
  const PointCloud c = sample_sum_replicates(m, 10000, {5, 1});
  const double var = empirical_covariance(c)(0, 0);
  CHECK(var >= 0.24);
  CHECK(var <= 0.26);
}

TEST_CASE("gaussian summands: sum covariance is the identity") {
  SummandModel m;
  m.kind = SummandKind::gaussian;
  m.n = 4;
  m.p = 3;
  m.scale = 0.5;
  const std::size_t reps = 20000;
  const PointCloud c = sample_sum_replicates(m, reps, {9, 0});
  const Matrix diff = empirical_covariance(c) - Matrix::Identity(3, 3);
  CHECK(op_norm(diff) <= 5.0 / std::sqrt(static_cast<double>(reps)));
}

TEST_CASE("every summand kind has the analytic sum covariance") {
  for (SummandKind k : {SummandKind::centered_bernoulli, SummandKind::rademacher, SummandKind::uniform,
                        SummandKind::gaussian}) {
    SummandModel m;
    m.kind = k;
    m.n = 9;
    m.p = 2;
    const std::size_t reps = 40000;
    const PointCloud c = sample_sum_replicates(m, reps, {21, static_cast<std::uint64_t>(k)});
    const Matrix expect = sum_covariance(m).matrix();
    INFO("kind " << to_string(k));
    CHECK(op_norm(empirical_covariance(c) - expect) <= 5.0 * expect.diagonal().maxCoeff() / std::sqrt(double(reps)));
    // zero mean within 5 sigma / sqrt(m)
    const double sd = std::sqrt(expect.diagonal().maxCoeff());
    CHECK(empirical_mean(c).cwiseAbs().maxCoeff() <= 5.0 * sd / std::sqrt(double(reps)));
  }
}

TEST_CASE("sampling is deterministic and replicate-local") {
  SummandModel m;
  m.n = 30;
  m.p = 4;
  const PointCloud a = sample_sum_replicates(m, 200, {1, 2});
  const PointCloud b = sample_sum_replicates(m, 200, {1, 2});
  CHECK(a == b);
  // replicate j depends only on (seed, j): a longer run has the same prefix
  const PointCloud longer = sample_sum_replicates(m, 300, {1, 2});
  CHECK(longer.points().topRows(200) == a.points());
  const PointCloud other = sample_sum_replicates(m, 200, {1, 3});
  CHECK_FALSE(a == other);
}

TEST_CASE("distinct streams are uncorrelated") {
  const auto cov = CovarianceSpec::identity(3);
  const std::size_t reps = 20000;
  const PointCloud x = sample_gaussian(cov, reps, SeedSpec{8, 0}.derive(1));
  const PointCloud y = sample_gaussian(cov, reps, SeedSpec{8, 0}.derive(2));
  for (Eigen::Index k = 0; k < 3; ++k) CHECK(std::abs(cross_correlation(x, y, k)) < 4.0 / std::sqrt(double(reps)));
}

TEST_CASE("invalid models are configuration errors") {
  SummandModel m;
  m.n = 0;
  CHECK_THROWS_AS(sample_sum_replicates(m, 10, {}), ConfigError);
  m.n = 3;
  m.p = 0;
  CHECK_THROWS_AS(sample_sum_replicates(m, 10, {}), ConfigError);
  m.p = 2;
  CHECK_THROWS_AS(sample_sum_replicates(m, 0, {}), ConfigError);
}

TEST_CASE("zero covariance gives zero rows") {
  Matrix z = Matrix::Zero(3, 3);
  const PointCloud c = sample_gaussian(CovarianceSpec::full(z), 50, {4, 4});
  CHECK(c.points().isZero(0.0));
}

TEST_CASE("gaussian correlation examples") {
  const std::size_t reps = 100000;
  const PointCloud ind = sample_gaussian(CovarianceSpec::identity(2), reps, {17, 0});
  const double r0 = correlation(ind, 0, 1);
  CHECK(r0 >= -0.01);
  CHECK(r0 <= 0.01);

  Matrix s(2, 2);
  s << 1.0, 0.9, 0.9, 1.0;
  const PointCloud cor = sample_gaussian(CovarianceSpec::full(s), reps, {17, 1});
  const double r = correlation(cor, 0, 1);
  CHECK(r >= 0.89);
  CHECK(r <= 0.91);
}

TEST_CASE("covariance validation and clipping") {
  Matrix bad(2, 2);
  bad << 1.0, 2.0, 2.0, 1.0;  // eigenvalue -1
  CHECK_THROWS_AS(CovarianceSpec::full(bad), ConfigError);

  Matrix asym(2, 2);
  asym << 1.0, 0.1, 0.2, 1.0;
  CHECK_THROWS_AS(CovarianceSpec::full(asym), ConfigError);

  Matrix nearly(2, 2);  // rank one with a tiny negative eigenvalue from rounding
  nearly << 1.0, 1.0 + 1e-12, 1.0 + 1e-12, 1.0;
  const CovarianceSpec c = CovarianceSpec::full(nearly);
  CHECK(c.eigenvalues().minCoeff() == 0.0);
  CHECK(c.operator_norm() == Approx(2.0));

  CHECK_THROWS_AS(CovarianceSpec::diagonal({1.0, -0.5}), ConfigError);
  const CovarianceSpec d = CovarianceSpec::diagonal({4.0, 1.0});
  CHECK(d.sigma_upper() == Approx(2.0));
  CHECK(d.sigma_lower() == Approx(1.0));
  CHECK(d.lambda_min() == Approx(1.0));
  const Matrix w = d.inverse_sqrt();
  CHECK(w(0, 0) == Approx(0.5));
  CHECK_THROWS_AS(CovarianceSpec::diagonal({1.0, 0.0}).inverse_sqrt(), DomainError);
}

TEST_CASE("OU interpolation endpoints are exact") {
  const PointCloud xi = sample_gaussian(CovarianceSpec::identity(2), 40, {1, 1});
  const PointCloud ga = sample_gaussian(CovarianceSpec::identity(2), 40, {1, 2});
  CHECK(ou_interpolate(xi, ga, 0.0) == xi);
  CHECK(ou_interpolate(xi, ga, std::numeric_limits<double>::infinity()) == ga);
  CHECK_THROWS_AS(ou_interpolate(xi, ga, -0.1), DomainError);
  const PointCloud short_ga = sample_gaussian(CovarianceSpec::identity(2), 39, {1, 2});
  CHECK_THROWS_AS(ou_interpolate(xi, short_ga, 1.0), DimensionError);
}

TEST_CASE("OU interpolation preserves a shared covariance") {
  Matrix s(2, 2);
  s << 2.0, 0.5, 0.5, 1.0;
  const auto cov = CovarianceSpec::full(s);
  const std::size_t reps = 50000;
  const PointCloud xi = sample_gaussian(cov, reps, {2, 1});
  const PointCloud ga = sample_gaussian(cov, reps, {2, 2});
  for (double t : {0.1, 0.7, 3.0}) {
    const PointCloud xt = ou_interpolate(xi, ga, t);
    CHECK(op_norm(empirical_covariance(xt) - s) <= 5.0 * cov.operator_norm() / std::sqrt(double(reps)));
  }
}
