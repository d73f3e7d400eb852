#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Dense>

namespace gal {

/// Row-major dense matrix; row i is one sample vector.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

// Error taxonomy. The exit code of each category is part of the CLI contract:
// configuration-like failures exit 2, data/convergence failures 3, IO 4.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  virtual int exit_code() const noexcept { return 2; }
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class SizeError : public Error {
 public:
  using Error::Error;
};

class InputError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

class IoError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 4; }
};

/// Equal-weight empirical measure: m sample vectors in R^p.
class PointCloud {
 public:
  PointCloud() = default;

  explicit PointCloud(Matrix points) : points_(std::move(points)) { validate(); }

  PointCloud(std::size_t m, std::size_t p) : points_(Matrix::Zero(index(m), index(p))) {
    if (m == 0 || p == 0) throw SizeError("point cloud needs m >= 1 and p >= 1");
  }

  std::size_t size() const noexcept { return static_cast<std::size_t>(points_.rows()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(points_.cols()); }
  bool empty() const noexcept { return points_.rows() == 0; }

  const Matrix& points() const noexcept { return points_; }
  Matrix& points() noexcept { return points_; }

  auto row(std::size_t i) const { return points_.row(index(i)); }
  auto row(std::size_t i) { return points_.row(index(i)); }

  double operator()(std::size_t i, std::size_t k) const { return points_(index(i), index(k)); }
  double& operator()(std::size_t i, std::size_t k) { return points_(index(i), index(k)); }

  /// Throws DataError on NaN/Inf and SizeError on an empty matrix.
  void validate() const {
    if (points_.rows() == 0 || points_.cols() == 0) throw SizeError("point cloud is empty");
    if (!points_.allFinite()) throw DataError("point cloud contains non-finite entries");
  }

  friend bool operator==(const PointCloud& a, const PointCloud& b) {
    return a.points_.rows() == b.points_.rows() && a.points_.cols() == b.points_.cols() &&
           a.points_ == b.points_;
  }

 private:
  static Eigen::Index index(std::size_t v) { return static_cast<Eigen::Index>(v); }

  Matrix points_;
};

inline void require_same_shape(const PointCloud& a, const PointCloud& b) {
  if (a.dim() != b.dim()) throw DimensionError("point clouds differ in dimension");
  if (a.size() != b.size()) throw DimensionError("point clouds differ in replicate count");
}

}  // namespace gal
