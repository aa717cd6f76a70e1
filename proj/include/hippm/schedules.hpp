#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "hippm/types.hpp"

namespace hippm {

enum class Criterion { kA, kB };

/// eps_k = 1/(k+2)^(1+delta), the summable tolerance rule. The same rule
/// generates the relative tolerances delta_k under criterion B.
inline double eps_schedule(double delta, long k) {
  require(delta > 0.0, "eps_schedule: invalid schedule, delta must be > 0");
  require(k >= 0, "eps_schedule: k must be >= 0");
  return 1.0 / std::pow(static_cast<double>(k) + 2.0, 1.0 + delta);
}

/// Partial sums of the rule are bounded by the integral tail estimate
/// 1/(delta (K+1)^delta); exposed for the summability property tests.
inline double eps_tail_bound(double delta, long summed_terms) {
  require(delta > 0.0 && summed_terms >= 0, "eps_tail_bound: invalid arguments");
  return 1.0 / (delta * std::pow(static_cast<double>(summed_terms) + 1.0, delta));
}

struct ToleranceSchedule {
  Criterion kind = Criterion::kA;
  double delta_exponent = 1.0;
  std::vector<double> override_values;  // optional explicit prefix

  double value(long k) const {
    if (k >= 0 && static_cast<size_t>(k) < override_values.size())
      return override_values[static_cast<size_t>(k)];
    return eps_schedule(delta_exponent, k);
  }
};

/// Proximal parameter sequences c_k; all modes are nondecreasing and bounded
/// away from zero by c0.
struct ProxParamSchedule {
  enum class Mode { kConstant, kNondecreasingGeometric, kLinearGrowth };

  Mode mode = Mode::kConstant;
  double c0 = 1.0;
  double growth = 1.0;
  double cap = kInf;

  static ProxParamSchedule constant(double c) {
    require(c > 0.0, "ProxParamSchedule: c must be > 0");
    return {Mode::kConstant, c, 1.0, kInf};
  }
  static ProxParamSchedule geometric(double c0, double growth, double cap) {
    require(c0 > 0.0 && growth >= 1.0 && cap >= c0,
            "ProxParamSchedule: need c0 > 0, growth >= 1, cap >= c0");
    return {Mode::kNondecreasingGeometric, c0, growth, cap};
  }
  static ProxParamSchedule linear(double c0) {
    require(c0 > 0.0, "ProxParamSchedule: c0 must be > 0");
    return {Mode::kLinearGrowth, c0, 1.0, kInf};
  }

  bool constant_mode() const {
    return mode == Mode::kConstant ||
           (mode == Mode::kNondecreasingGeometric && growth == 1.0);
  }

  double value(long k) const {
    require(k >= 0, "ProxParamSchedule: k must be >= 0");
    switch (mode) {
      case Mode::kConstant:
        return c0;
      case Mode::kNondecreasingGeometric: {
        double v = c0 * std::pow(growth, static_cast<double>(k));
        return std::min(v, cap);
      }
      case Mode::kLinearGrowth:
        return c0 * (static_cast<double>(k) + 1.0);
    }
    throw std::logic_error("ProxParamSchedule: bad mode");
  }
};

}  // namespace hippm
