#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sumlab {

/// Raised when two vectors that must share a dimension do not.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an operation would leave NaN or Inf in a parameter vector.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense vector of model parameters in double precision.
///
/// Construction from external values checks finiteness. The arithmetic
/// operators are unchecked so that hot loops stay cheap; callers that
/// publish a vector (optimizer steps, reconstructions) call ensure_finite().
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(std::size_t dim, double fill = 0.0) : values_(dim, fill) {}
  explicit ParamVector(std::vector<double> values) : values_(std::move(values)) {
    ensure_finite("ParamVector");
  }
  ParamVector(std::initializer_list<double> values) : values_(values) {
    ensure_finite("ParamVector");
  }

  static ParamVector zeros(std::size_t dim) { return ParamVector(dim, 0.0); }

  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double& operator[](std::size_t i) noexcept { return values_[i]; }
  double operator[](std::size_t i) const noexcept { return values_[i]; }

  double* data() noexcept { return values_.data(); }
  const double* data() const noexcept { return values_.data(); }

  std::span<double> span() noexcept { return values_; }
  std::span<const double> span() const noexcept { return values_; }

  auto begin() noexcept { return values_.begin(); }
  auto end() noexcept { return values_.end(); }
  auto begin() const noexcept { return values_.begin(); }
  auto end() const noexcept { return values_.end(); }

  const std::vector<double>& values() const noexcept { return values_; }

  bool all_finite() const noexcept {
    return std::all_of(values_.begin(), values_.end(),
                       [](double v) { return std::isfinite(v); });
  }

  void ensure_finite(const char* where) const {
    if (!all_finite()) {
      throw NumericError(std::string(where) + ": non-finite entry in parameter vector");
    }
  }

  ParamVector& operator+=(const ParamVector& o) {
    check_same_dim(o, "operator+=");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += o.values_[i];
    return *this;
  }
  ParamVector& operator-=(const ParamVector& o) {
    check_same_dim(o, "operator-=");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= o.values_[i];
    return *this;
  }
  ParamVector& operator*=(double a) noexcept {
    for (double& v : values_) v *= a;
    return *this;
  }

  /// this += a * o
  ParamVector& axpy(double a, const ParamVector& o) {
    check_same_dim(o, "axpy");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += a * o.values_[i];
    return *this;
  }

  void check_same_dim(const ParamVector& o, const char* where) const {
    if (o.size() != size()) {
      throw DimensionError(std::string(where) + ": dimension mismatch (" +
                           std::to_string(size()) + " vs " + std::to_string(o.size()) + ")");
    }
  }

  friend bool operator==(const ParamVector&, const ParamVector&) = default;

 private:
  std::vector<double> values_;
};

inline ParamVector operator+(ParamVector a, const ParamVector& b) { return a += b; }
inline ParamVector operator-(ParamVector a, const ParamVector& b) { return a -= b; }
inline ParamVector operator*(double s, ParamVector a) { return a *= s; }
inline ParamVector operator*(ParamVector a, double s) { return a *= s; }

inline double dot(const ParamVector& a, const ParamVector& b) {
  a.check_same_dim(b, "dot");
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

inline double squared_norm(const ParamVector& a) { return dot(a, a); }
inline double norm(const ParamVector& a) { return std::sqrt(squared_norm(a)); }

inline double distance(const ParamVector& a, const ParamVector& b) {
  a.check_same_dim(b, "distance");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

inline double max_abs_diff(const ParamVector& a, const ParamVector& b) {
  a.check_same_dim(b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace sumlab
