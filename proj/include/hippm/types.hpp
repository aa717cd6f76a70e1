#pragma once

#include <Eigen/Dense>

#include <limits>
#include <stdexcept>
#include <string>

namespace hippm {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

inline void check_finite(const Vector& v, const char* what) {
  if (!v.allFinite())
    throw std::invalid_argument(std::string(what) + ": non-finite entries");
}

inline void check_finite(const Matrix& m, const char* what) {
  if (!m.allFinite())
    throw std::invalid_argument(std::string(what) + ": non-finite entries");
}

/// Componentwise clamp of `v` to [lower, upper]; bounds may be +/-inf.
inline Vector clamp_to_box(const Vector& v, const Vector& lower, const Vector& upper) {
  return v.cwiseMax(lower).cwiseMin(upper);
}

}  // namespace hippm
