#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "hippm/operators.hpp"
#include "hippm/schedules.hpp"
#include "hippm/solver.hpp"
#include "hippm/types.hpp"

namespace hippm {

/// Inequality-constrained convex QP over a box:
///   min f0(x) = x'Qx/2 + q'x  s.t.  F(x) = Ax - b <= 0,  x in C (box).
class ConvexProgram {
 public:
  ConvexProgram(Matrix Q, Vector q, Matrix A, Vector b, BoxNormalCone box)
      : Q_(std::move(Q)), q_(std::move(q)), A_(std::move(A)), b_(std::move(b)),
        box_(std::move(box)) {
    require(Q_.rows() == Q_.cols() && Q_.rows() == q_.size(),
            "ConvexProgram: objective dimension mismatch");
    require(A_.cols() == Q_.rows() && A_.rows() == b_.size(),
            "ConvexProgram: constraint dimension mismatch");
    require(box_.dim() == Q_.rows(), "ConvexProgram: box dimension mismatch");
    check_finite(Q_, "ConvexProgram Q");
    check_finite(q_, "ConvexProgram q");
    check_finite(A_, "ConvexProgram A");
    check_finite(b_, "ConvexProgram b");
    require((Q_ - Q_.transpose()).norm() <= 1e-12 * (1.0 + Q_.norm()),
            "ConvexProgram: Q not symmetric");
    Q_ = ((Q_ + Q_.transpose()) / 2.0).eval();
    Eigen::SelfAdjointEigenSolver<Matrix> esq(Q_);
    lambda_min_q_ = esq.eigenvalues().minCoeff();
    lambda_max_q_ = esq.eigenvalues().maxCoeff();
    require(lambda_min_q_ >= -1e-10 * (1.0 + Q_.norm()),
            "ConvexProgram: Q not positive semidefinite");
    lambda_min_q_ = std::max(lambda_min_q_, 0.0);
    Eigen::SelfAdjointEigenSolver<Matrix> esa(A_.transpose() * A_);
    lambda_max_ata_ = std::max(esa.eigenvalues().maxCoeff(), 0.0);
  }

  Eigen::Index n() const { return q_.size(); }
  Eigen::Index m() const { return b_.size(); }
  const Matrix& Q() const { return Q_; }
  const Vector& q() const { return q_; }
  const Matrix& A() const { return A_; }
  const Vector& b() const { return b_; }
  const BoxNormalCone& box() const { return box_; }
  double lambda_min_q() const { return lambda_min_q_; }
  double lambda_max_q() const { return lambda_max_q_; }
  double lambda_max_ata() const { return lambda_max_ata_; }
  double a_spectral_norm() const { return std::sqrt(lambda_max_ata_); }

  double f0(const Vector& x) const { return 0.5 * x.dot(Q_ * x) + q_.dot(x); }
  Vector constraints(const Vector& x) const { return A_ * x - b_; }  // F(x)
  double feas_max(const Vector& x) const { return constraints(x).maxCoeff(); }

 private:
  Matrix Q_;
  Vector q_;
  Matrix A_;
  Vector b_;
  BoxNormalCone box_;
  double lambda_min_q_ = 0.0;
  double lambda_max_q_ = 0.0;
  double lambda_max_ata_ = 0.0;
};

/// Multiplier image Y(x, y, c) = max(0, y + c F(x)) componentwise.
inline Vector multiplier_map(const Vector& x, const Vector& y, double c,
                             const ConvexProgram& prog) {
  require(c > 0.0, "multiplier_map: c must be > 0");
  require(y.size() == prog.m() && x.size() == prog.n(),
          "multiplier_map: dimension mismatch");
  return (y + c * prog.constraints(x)).cwiseMax(0.0);
}

/// Augmented Lagrangian L(x, y, c) = f0(x) + (||max(0, y + cF(x))||^2 - ||y||^2)/(2c).
inline double aug_lagrangian(const Vector& x, const Vector& y, double c,
                             const ConvexProgram& prog) {
  require(c > 0.0, "aug_lagrangian: c must be > 0");
  require(y.size() == prog.m() && x.size() == prog.n(),
          "aug_lagrangian: dimension mismatch");
  require(y.minCoeff() >= 0.0, "aug_lagrangian: y must be nonnegative");
  const Vector shifted = (y + c * prog.constraints(x)).cwiseMax(0.0);
  return prog.f0(x) + (shifted.squaredNorm() - y.squaredNorm()) / (2.0 * c);
}

struct InnerSolveResult {
  Vector x;
  double gap_cert = kInf;   // certified bound on phi(x) - inf phi
  double dist_cert = kInf;  // certified bound on ||x - argmin phi||
  double phi_x = kNaN;
  long iterations = 0;
};

namespace detail {

/// Minimizes phi(x) = L(x, y, c) over the box by accelerated projected
/// gradient with the strongly-convex momentum (sqrt(k)-1)/(sqrt(k)+1).
/// Certificates come from the reduced gradient w (the minimum-norm element of
/// grad phi + N_box): gap <= ||w||^2/(2 lambda_min(Q)) and
/// dist <= ||w||/lambda_min(Q). Stops when `stop(gap, dist)` is true.
template <class StopFn>
InnerSolveResult minimize_aug_lagrangian(const ConvexProgram& prog, const Vector& y,
                                         double c, Vector x_start, long iter_cap,
                                         StopFn stop) {
  const double m = prog.lambda_min_q();
  if (m <= 0.0)
    throw std::runtime_error("inner solve: certificate unavailable, use oracle_mode");
  const double L = prog.lambda_max_q() + c * prog.lambda_max_ata();
  const double step = 1.0 / L;
  const double kappa = L / m;
  const double beta = (std::sqrt(kappa) - 1.0) / (std::sqrt(kappa) + 1.0);
  const BoxNormalCone& box = prog.box();

  auto grad_phi = [&](const Vector& x) -> Vector {
    const Vector mult = (y + c * prog.constraints(x)).cwiseMax(0.0);
    return prog.Q() * x + prog.q() + prog.A().transpose() * mult;
  };
  auto reduced_norm = [&](const Vector& x, const Vector& g) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      double gi = g[i];
      if (x[i] == box.lower()[i] && gi > 0) gi = 0.0;
      else if (x[i] == box.upper()[i] && gi < 0) gi = 0.0;
      s += gi * gi;
    }
    return std::sqrt(s);
  };

  InnerSolveResult out;
  Vector x = box.project(std::move(x_start));
  Vector v = x;
  Vector x_prev = x;
  const long stall_window = std::max<long>(2000, static_cast<long>(50.0 * kappa));
  long best_iter = 0;
  for (long it = 0;; ++it) {
    const Vector gx = grad_phi(x);
    const double w = reduced_norm(x, gx);
    const double gap = w * w / (2.0 * m);
    const double dist = w / m;
    if (gap < 0.5 * out.gap_cert) best_iter = it;
    if (gap < out.gap_cert) {
      out.gap_cert = gap;
      out.dist_cert = dist;
      out.x = x;
    }
    if (stop(out.gap_cert, out.dist_cert)) break;
    if (it - best_iter > stall_window)
      throw std::runtime_error("inner solve: stalled at the floating-point floor");
    if (it >= iter_cap)
      throw std::runtime_error("inner solve: iteration cap exceeded");
    x_prev = x;
    x = box.project(v - step * grad_phi(v));
    // Gradient-mapping restart keeps the constant momentum safe.
    if ((v - x).dot(x - x_prev) > 0.0) v = x;
    else v = x + beta * (x - x_prev);
    out.iterations = it + 1;
  }
  out.phi_x = aug_lagrangian(out.x, y, c, prog);
  return out;
}

}  // namespace detail

/// Inner subproblem solve to a certified gap target (criterion C's
/// eps_k^2/(2 c_k)). oracle_mode ignores the target and runs to reference
/// accuracy, for ex-post criterion checks.
inline InnerSolveResult inner_solve(const ConvexProgram& prog, const Vector& y_k,
                                    double c_k, double gap_target, bool oracle_mode,
                                    const Vector& x_start, long iter_cap = 50'000'000) {
  require(c_k > 0.0, "inner_solve: c must be > 0");
  require(oracle_mode || gap_target > 0.0, "inner_solve: gap target must be > 0");
  require(y_k.size() == prog.m() && y_k.minCoeff() >= 0.0,
          "inner_solve: y must be nonnegative with matching dimension");
  if (oracle_mode) {
    return detail::minimize_aug_lagrangian(
        prog, y_k, c_k, x_start, iter_cap, [&](double gap, double dist) {
          return dist <= 1e-12 && gap <= 1e-13 * (1.0 + std::abs(gap));
        });
  }
  return detail::minimize_aug_lagrangian(
      prog, y_k, c_k, x_start, iter_cap,
      [&](double gap, double /*dist*/) { return gap <= gap_target; });
}

/// Reference evaluation of the dual proximal point (P_c g)(y) =
/// max(0, y + c F(x_c(y))) through an oracle-grade inner solve. The error
/// bound is c ||A|| times the certified distance of the inner minimizer.
inline ResolventResult dual_resolvent_reference(const ConvexProgram& prog, const Vector& y,
                                                double c, double dist_tol = 1e-12) {
  InnerSolveResult inner = detail::minimize_aug_lagrangian(
      prog, y, c, prog.box().project(Vector::Zero(prog.n())), 50'000'000,
      [&](double /*gap*/, double dist) { return dist <= dist_tol; });
  return {multiplier_map(inner.x, y, c, prog), c * prog.a_spectral_norm() * inner.dist_cert,
          inner.iterations};
}

/// Weighted ergodic average xtilde^k = sum_{j=1..k} w_j x^j with
/// w_j = c_{j-1} / sum_{l=1..k} c_{l-1}; x_history[j-1] holds x^j.
inline Vector ergodic_average(const std::vector<Vector>& x_history,
                              const std::vector<double>& c_history, long k) {
  require(k >= 1, "ergodic_average: k must be >= 1");
  require(static_cast<long>(x_history.size()) >= k &&
              static_cast<long>(c_history.size()) >= k,
          "ergodic_average: histories too short");
  double total = 0.0;
  Vector avg = Vector::Zero(x_history[0].size());
  for (long j = 1; j <= k; ++j) total += c_history[static_cast<size_t>(j - 1)];
  for (long j = 1; j <= k; ++j)
    avg += (c_history[static_cast<size_t>(j - 1)] / total) *
           x_history[static_cast<size_t>(j - 1)];
  return avg;
}

struct ALMConfig {
  Vector y0;  // anchor multipliers, >= 0
  ProxParamSchedule prox_schedule = ProxParamSchedule::constant(1.0);
  double delta = 1.0;  // exponent of the eps_k rule
  long max_outer = 1000;
  double inner_oracle_tol = 1e-13;
  bool oracle_mode = false;  // run inner solves at reference accuracy instead
  long inner_iter_cap = 50'000'000;
  std::optional<double> ref_optimum;  // known min(P) = max(D), for gap columns
  std::optional<Vector> ystar;        // known dual solution, for distance columns
};

struct ALMRecord {
  long k = 0;
  Vector y;      // y^k
  Vector ybar;   // ybar^k = Y(x^{k+1}, y^k, c_k)
  Vector x;      // x^{k+1}
  Vector xtilde; // ergodic average of x^1..x^{k+1}
  double c = 0.0;
  double eps_k = 0.0;
  double gap_cert = 0.0;
  double feas_max = kNaN;         // max_i f_i(xtilde)
  double obj_gap = kNaN;          // f0(xtilde) - ref_optimum
  double dist_to_star = kNaN;     // ||y^k - ystar||
  double delta0_running = 0.0;    // max ||y^j|| over j <= k+1
  long inner_iterations = 0;
  bool criterion_ok = false;
};

struct ALMTrace {
  std::vector<ALMRecord> records;
  Vector y0;
  Vector final_y;  // y^{K}, one step past the last record
  double delta = 1.0;
  ProxParamSchedule schedule;
  bool aborted = false;

  long size() const { return static_cast<long>(records.size()); }
};

/// Accelerated inexact augmented Lagrangian loop: inner solve under criterion
/// C, exact multiplier image, anchored multiplier update. Warm-starts each
/// inner solve from the previous x.
inline ALMTrace run_alm(const ConvexProgram& prog, const ALMConfig& config) {
  require(config.max_outer >= 1, "run_alm: max_outer must be >= 1");
  require(config.y0.size() == prog.m(), "run_alm: y0 dimension mismatch");
  check_finite(config.y0, "run_alm y0");
  require(config.y0.size() == 0 || config.y0.minCoeff() >= 0.0,
          "run_alm: y0 must be componentwise nonnegative");

  ALMTrace trace;
  trace.y0 = config.y0;
  trace.delta = config.delta;
  trace.schedule = config.prox_schedule;
  trace.records.reserve(static_cast<size_t>(config.max_outer));

  Vector y = config.y0;
  Vector x = prog.box().project(Vector::Zero(prog.n()));
  Vector xtilde = Vector::Zero(prog.n());
  double weight_total = 0.0;
  double delta0 = y.norm();

  for (long k = 0; k < config.max_outer; ++k) {
    const double c_k = config.prox_schedule.value(k);
    const double eps_k = eps_schedule(config.delta, k);
    const double gap_target = eps_k * eps_k / (2.0 * c_k);

    InnerSolveResult inner;
    try {
      inner = inner_solve(prog, y, c_k, gap_target, config.oracle_mode, x,
                          config.inner_iter_cap);
    } catch (const std::runtime_error&) {
      trace.aborted = true;
      break;
    }
    x = inner.x;

    const Vector ybar = multiplier_map(x, y, c_k, prog);
    const Vector y_next = halpern_step(config.y0, ybar, k);

    weight_total += c_k;
    xtilde += (c_k / weight_total) * (x - xtilde);
    delta0 = std::max({delta0, y.norm(), y_next.norm()});

    ALMRecord rec;
    rec.k = k;
    rec.y = y;
    rec.ybar = ybar;
    rec.x = x;
    rec.xtilde = xtilde;
    rec.c = c_k;
    rec.eps_k = eps_k;
    rec.gap_cert = inner.gap_cert;
    rec.feas_max = prog.feas_max(xtilde);
    if (config.ref_optimum) rec.obj_gap = prog.f0(xtilde) - *config.ref_optimum;
    if (config.ystar) rec.dist_to_star = (y - *config.ystar).norm();
    rec.delta0_running = delta0;
    rec.inner_iterations = inner.iterations;
    rec.criterion_ok = inner.gap_cert <= gap_target * (1.0 + 1e-12);
    trace.records.push_back(std::move(rec));

    y = y_next;
  }
  trace.final_y = std::move(y);
  return trace;
}

struct Thm41Bounds {
  Vector feas_bound;  // componentwise bound on f_i(x^{k+1})
  double obj_bound;   // bound on f0(x^{k+1}) - max(D)
};

/// Pointwise bounds at outer index k, from the multiplier algebra:
///   f_i(x^{k+1}) <= (y^{k+1}_i - y^k_i + (y^{k+1}_i - y^0_i)/(k+1)) / c_k
///   f_0(x^{k+1}) - max(D) <= [eps_k^2 + ||y^k||^2 - ||y^{k+1}||^2
///       - (2k+3)/(k+1)^2 <y^{k+1} - y^0, y^{k+1} - y^0/(2k+3)>] / (2 c_k)
inline Thm41Bounds thm41_bounds(const ALMTrace& trace, long k) {
  require(k >= 0 && k < trace.size(), "thm41_bounds: k out of range");
  const auto& rec = trace.records[static_cast<size_t>(k)];
  const Vector& y_k = rec.y;
  const Vector& y_k1 =
      (k + 1 < trace.size()) ? trace.records[static_cast<size_t>(k + 1)].y : trace.final_y;
  const Vector& y0 = trace.y0;
  const double kk = static_cast<double>(k) + 1.0;
  Thm41Bounds out;
  out.feas_bound = ((y_k1 - y_k) + (y_k1 - y0) / kk) / rec.c;
  const double ip = (y_k1 - y0).dot(y_k1 - y0 / (2.0 * kk + 1.0));
  out.obj_bound = (rec.eps_k * rec.eps_k + y_k.squaredNorm() - y_k1.squaredNorm() -
                   (2.0 * kk + 1.0) / (kk * kk) * ip) /
                  (2.0 * rec.c);
  return out;
}

enum class ALMScheduleKind { kConstantOrIncreasing, kLinear };

struct Thm42Bounds {
  double feas;
  double obj;
};

/// Ergodic bounds at k >= 2 under the eps rule; Delta0 is any valid bound on
/// sup_k ||y^k|| (callers use the trace running max plus headroom).
inline Thm42Bounds thm42_bounds(double Delta0, double delta, double c0,
                                ALMScheduleKind schedule, long k) {
  require(k >= 2, "thm42_bounds: k must be >= 2");
  require(Delta0 >= 0.0 && delta > 0.0 && c0 > 0.0, "thm42_bounds: bad parameters");
  const double kd = static_cast<double>(k);
  const double lnk = std::log(kd);
  const double feas_core = 3.0 * Delta0 + 2.0 * lnk;
  const double obj_core =
      2.0 * (1.0 + delta) / (1.0 + 2.0 * delta) + 13.0 * Delta0 * Delta0 +
      12.0 * Delta0 * Delta0 * lnk;
  if (schedule == ALMScheduleKind::kConstantOrIncreasing)
    return {feas_core / (c0 * kd), obj_core / (2.0 * c0 * kd)};
  return {2.0 * feas_core / (c0 * kd * (kd + 1.0)), obj_core / (c0 * kd * (kd + 1.0))};
}

}  // namespace hippm
