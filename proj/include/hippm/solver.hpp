#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

#include "hippm/operators.hpp"
#include "hippm/schedules.hpp"
#include "hippm/types.hpp"

namespace hippm {

enum class Method { kHalpern, kClassical };
enum class ErrorMode { kNatural, kAdversarialFullBudget };

/// Anchored averaging step z^{k+1} = z0/(k+2) + (k+1)/(k+2) * zbar_k,
/// evaluated as zbar + (z0 - zbar)/(k+2) so equal points are a fixed point
/// exactly.
inline Vector halpern_step(const Vector& z0, const Vector& zbar_k, long k) {
  require(k >= 0, "halpern_step: k must be >= 0");
  require(z0.size() == zbar_k.size(), "halpern_step: dimension mismatch");
  const double denom = static_cast<double>(k) + 2.0;
  return zbar_k + (z0 - zbar_k) / denom;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Deterministic unit direction from a seed (Gaussian deviates, normalized).
inline Vector seeded_unit_vector(Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 rng(splitmix64(seed));
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vector u(n);
  do {
    for (Eigen::Index i = 0; i < n; ++i) u[i] = gauss(rng);
  } while (u.norm() == 0.0);
  return u / u.norm();
}

/// z_exact shifted by `budget` along a seed-determined unit direction, so the
/// injected error norm equals the budget exactly.
inline Vector inject_adversarial_error(const Vector& z_exact, double budget,
                                       std::uint64_t direction_seed) {
  require(budget >= 0.0, "inject_adversarial_error: budget must be >= 0");
  if (budget == 0.0) return z_exact;
  return z_exact + budget * seeded_unit_vector(z_exact.size(), direction_seed);
}

struct SolveConfig {
  Vector anchor;                      // z^0, also the iteration start
  long max_iter = 1000;
  double stop_residual = 0.0;
  Method method = Method::kHalpern;
  ProxParamSchedule prox_schedule = ProxParamSchedule::constant(1.0);
  ToleranceSchedule tolerance;
  ErrorMode error_mode = ErrorMode::kNatural;
  std::uint64_t direction_seed = 0;
  long residual_stride = 1;           // reference residual every this many iterations
  bool store_eta = false;             // retain exact eta^k via reference resolvents
  bool track_dist_to_star = true;     // record ||z^k - z*|| when zero_point is known
};

struct IterateRecord {
  long k = 0;
  Vector z;                 // z^k
  Vector zbar;              // zbar^k ~ P_{c_k}(z^k)
  double c = 0.0;           // c_k
  double eps_allowed = 0.0; // scheduled eps_k (A) or delta_k (B)
  double eps_used = 0.0;    // certified bound on ||eta^k||
  double residual = kNaN;   // ||z^k - P_{c_k}(z^k)|| via reference resolvent
  double dist_to_star = kNaN;
  long inner_iterations = 0;
  bool criterion_ok = false;
  Vector eta;               // zbar^k - P_{c_k}(z^k), empty unless stored
};

struct IterateTrace {
  std::vector<IterateRecord> records;
  Vector anchor;
  Vector final_iterate;
  std::optional<Vector> zstar;
  Method method = Method::kHalpern;
  Criterion criterion = Criterion::kA;
  double delta_exponent = 1.0;
  ErrorMode error_mode = ErrorMode::kNatural;
  std::uint64_t direction_seed = 0;
  bool stopped_early = false;

  long size() const { return static_cast<long>(records.size()); }
};

namespace detail {

/// Reuses the dense factorization of (I + cT) across calls with the same c;
/// the solver loops below hit the same parameter thousands of times.
class CachedResolvent {
 public:
  explicit CachedResolvent(const MonotoneOperator& op) : op_(op) {}

  ResolventResult eval(double c, const Vector& y, double tol) {
    if (const auto* aff = std::get_if<AffineOperator>(&op_)) {
      refresh(c, Matrix::Identity(aff->dim(), aff->dim()) + c * aff->M());
      return {lu_.solve(y - c * aff->q()), 0.0, 0};
    }
    if (const auto* ids = std::get_if<ScaledIdentityPlusSkew>(&op_)) {
      refresh(c, (1.0 + c * ids->mu()) * Matrix::Identity(ids->dim(), ids->dim()) +
                     c * ids->S());
      return {lu_.solve(y), 0.0, 0};
    }
    return resolvent(op_, c, y, tol);
  }

 private:
  void refresh(double c, Matrix lhs) {
    if (c != cached_c_) {
      lu_.compute(lhs);
      cached_c_ = c;
    }
  }

  const MonotoneOperator& op_;
  double cached_c_ = kNaN;
  Eigen::PartialPivLU<Matrix> lu_;
};

/// Largest error norm t with t <= delta_k ||(P - z) + t u||, found by
/// fixed-point iteration (a contraction for delta_k < 1), then shrunk one ulp
/// so the criterion-B inequality holds with certainty.
inline double adversarial_budget_b(const Vector& prox, const Vector& z, const Vector& u,
                                   double delta_k) {
  double t = delta_k * (prox - z).norm();
  for (int i = 0; i < 200; ++i) {
    double next = delta_k * (prox - z + t * u).norm();
    if (std::abs(next - t) <= 1e-15 * (1.0 + t)) {
      t = next;
      break;
    }
    t = next;
  }
  while (t > 0.0 && t > delta_k * (prox - z + t * u).norm())
    t = std::nextafter(t, 0.0);
  return t;
}

}  // namespace detail

/// Runs the anchored (Halpern) inexact proximal iteration, or the classical
/// inexact proximal iteration when config.method is kClassical, enforcing
/// criterion A or B through the resolvent error certificates.
inline IterateTrace run_hippm(const MonotoneOperator& op, const SolveConfig& config) {
  require(config.max_iter >= 1, "run_hippm: max_iter must be >= 1");
  require(config.stop_residual >= 0.0, "run_hippm: stop_residual must be >= 0");
  require(config.residual_stride >= 1, "run_hippm: residual_stride must be >= 1");
  check_finite(config.anchor, "run_hippm anchor");
  require(config.anchor.size() == dim(op), "run_hippm: anchor dimension mismatch");

  IterateTrace trace;
  trace.anchor = config.anchor;
  trace.method = config.method;
  trace.criterion = config.tolerance.kind;
  trace.delta_exponent = config.tolerance.delta_exponent;
  trace.error_mode = config.error_mode;
  trace.direction_seed = config.direction_seed;
  if (config.track_dist_to_star) trace.zstar = zero_point(op);
  trace.records.reserve(static_cast<size_t>(config.max_iter));

  detail::CachedResolvent cache(op);
  const bool adversarial = config.error_mode == ErrorMode::kAdversarialFullBudget;
  Vector z = config.anchor;

  for (long k = 0; k < config.max_iter; ++k) {
    const double c_k = config.prox_schedule.value(k);
    const double tol_k = config.tolerance.value(k);
    const bool sample_residual =
        (k % config.residual_stride == 0) || config.stop_residual > 0.0;
    const bool need_reference = adversarial || config.store_eta || sample_residual;

    Vector prox_ref;
    long ref_iters = 0;
    if (need_reference) {
      ResolventResult ref = cache.eval(c_k, z, default_ref_tol(z));
      prox_ref = std::move(ref.point);
      ref_iters = ref.inner_iterations;
    }
    double residual = need_reference ? (z - prox_ref).norm() : kNaN;

    if (config.stop_residual > 0.0 && residual <= config.stop_residual) {
      trace.stopped_early = true;
      break;
    }

    Vector zbar;
    double eps_used = 0.0;
    long inner_iters = ref_iters;

    if (config.tolerance.kind == Criterion::kA) {
      if (adversarial) {
        zbar = inject_adversarial_error(prox_ref, tol_k,
                                        splitmix64(config.direction_seed) ^
                                            static_cast<std::uint64_t>(k));
        eps_used = tol_k;
      } else {
        ResolventResult r = cache.eval(c_k, z, tol_k);
        zbar = std::move(r.point);
        eps_used = r.error_bound;
        inner_iters += r.inner_iterations;
      }
    } else {
      if (adversarial) {
        Vector u = seeded_unit_vector(z.size(), splitmix64(config.direction_seed) ^
                                                    static_cast<std::uint64_t>(k));
        eps_used = detail::adversarial_budget_b(prox_ref, z, u, tol_k);
        zbar = prox_ref + eps_used * u;
      } else {
        // The right side delta_k ||zbar - z|| is observable only after the
        // fact: tighten the resolvent tolerance geometrically until the
        // certificate clears it.
        double tol = tol_k > 0.0 ? tol_k * (1.0 + z.norm()) : default_ref_tol(z);
        bool satisfied = false;
        for (int halvings = 0; halvings <= 60; ++halvings) {
          ResolventResult r;
          try {
            r = cache.eval(c_k, z, tol);
          } catch (const ResolventFloorError&) {
            break;  // tightening further cannot help
          }
          inner_iters += r.inner_iterations;
          if (r.error_bound <= tol_k * (r.point - z).norm()) {
            zbar = std::move(r.point);
            eps_used = r.error_bound;
            satisfied = true;
            break;
          }
          tol /= 2.0;
        }
        if (!satisfied) {
          // z is (numerically) a fixed point; success if the caller asked to
          // stop at this residual, otherwise the criterion is unattainable.
          double res_now = need_reference ? residual : fixed_point_residual(op, c_k, z);
          if (config.stop_residual > 0.0 && res_now <= config.stop_residual) {
            trace.stopped_early = true;
            break;
          }
          throw std::runtime_error("run_hippm: criterion B unattainable at k=" +
                                   std::to_string(k));
        }
      }
    }

    IterateRecord rec;
    rec.k = k;
    rec.z = z;
    rec.zbar = zbar;
    rec.c = c_k;
    rec.eps_allowed = tol_k;
    rec.eps_used = eps_used;
    rec.residual = (k % config.residual_stride == 0) ? residual : kNaN;
    if (trace.zstar) rec.dist_to_star = (z - *trace.zstar).norm();
    rec.inner_iterations = inner_iters;
    rec.criterion_ok =
        config.tolerance.kind == Criterion::kA
            ? eps_used <= tol_k * (1.0 + 1e-12)
            : eps_used <= tol_k * (zbar - z).norm() * (1.0 + 1e-12) + 1e-300;
    if (config.store_eta) rec.eta = zbar - prox_ref;
    trace.records.push_back(std::move(rec));

    z = config.method == Method::kHalpern ? halpern_step(config.anchor, zbar, k)
                                          : zbar;
  }

  trace.final_iterate = std::move(z);
  return trace;
}

}  // namespace hippm
