#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <utility>
#include <variant>

#include "hippm/types.hpp"

namespace hippm {

/// One resolvent evaluation. `error_bound` is a certified upper bound on the
/// distance between `point` and the exact resolvent value; it is 0 for
/// operators with a closed-form resolvent.
struct ResolventResult {
  Vector point;
  double error_bound = 0.0;
  long inner_iterations = 0;
};

/// The iterative resolvent hit its floating-point floor before certifying the
/// requested tolerance.
struct ResolventFloorError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// T(z) = M z + q with M + M^T positive semidefinite.
class AffineOperator {
 public:
  AffineOperator(Matrix M, Vector q) : M_(std::move(M)), q_(std::move(q)) {
    require(M_.rows() == M_.cols() && M_.rows() == q_.size(),
            "AffineOperator: dimension mismatch");
    check_finite(M_, "AffineOperator M");
    check_finite(q_, "AffineOperator q");
    Eigen::SelfAdjointEigenSolver<Matrix> es(M_ + M_.transpose());
    if (es.eigenvalues().minCoeff() < -1e-10 * M_.norm())
      throw std::invalid_argument("AffineOperator: M + M^T is not positive semidefinite");
  }

  Eigen::Index dim() const { return q_.size(); }
  const Matrix& M() const { return M_; }
  const Vector& q() const { return q_; }

  ResolventResult resolvent(double c, const Vector& y) const {
    Matrix lhs = Matrix::Identity(dim(), dim()) + c * M_;
    return {lhs.partialPivLu().solve(y - c * q_), 0.0, 0};
  }

  std::optional<Vector> zero_point() const {
    // Mz = -q; minimum-norm least-squares solution, rejected if inconsistent.
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(M_);
    Vector z = cod.solve(-q_);
    if ((M_ * z + q_).norm() > 1e-10 * (1.0 + q_.norm() + M_.norm() * z.norm()))
      return std::nullopt;
    return z;
  }

 private:
  Matrix M_;
  Vector q_;
};

/// Normal cone of the box [lower, upper]; its resolvent is the projection.
class BoxNormalCone {
 public:
  BoxNormalCone(Vector lower, Vector upper)
      : lower_(std::move(lower)), upper_(std::move(upper)) {
    require(lower_.size() == upper_.size(), "BoxNormalCone: dimension mismatch");
    for (Eigen::Index i = 0; i < lower_.size(); ++i) {
      require(!std::isnan(lower_[i]) && !std::isnan(upper_[i]),
              "BoxNormalCone: NaN bound");
      require(lower_[i] <= upper_[i], "BoxNormalCone: lower > upper");
    }
  }

  static BoxNormalCone unbounded(Eigen::Index n) {
    return BoxNormalCone(Vector::Constant(n, -kInf), Vector::Constant(n, kInf));
  }

  Eigen::Index dim() const { return lower_.size(); }
  const Vector& lower() const { return lower_; }
  const Vector& upper() const { return upper_; }

  Vector project(const Vector& v) const { return clamp_to_box(v, lower_, upper_); }

  ResolventResult resolvent(double /*c*/, const Vector& y) const {
    return {project(y), 0.0, 0};
  }

  std::optional<Vector> zero_point() const {
    // Any box point is a zero; the projection of the origin is the
    // deterministic minimum-norm choice.
    return project(Vector::Zero(dim()));
  }

 private:
  Vector lower_;
  Vector upper_;
};

/// T(z) = (mu I + S) z with S skew-symmetric; strongly monotone for mu > 0,
/// in which case T^{-1} is globally Lipschitz with modulus 1/mu.
class ScaledIdentityPlusSkew {
 public:
  ScaledIdentityPlusSkew(double mu, Matrix S) : mu_(mu), S_(std::move(S)) {
    require(mu_ >= 0.0, "ScaledIdentityPlusSkew: mu must be >= 0");
    require(S_.rows() == S_.cols(), "ScaledIdentityPlusSkew: S not square");
    check_finite(S_, "ScaledIdentityPlusSkew S");
    for (Eigen::Index i = 0; i < S_.rows(); ++i)
      for (Eigen::Index j = 0; j <= i; ++j)
        require(S_(i, j) == -S_(j, i), "ScaledIdentityPlusSkew: S not exactly skew");
  }

  Eigen::Index dim() const { return S_.rows(); }
  double mu() const { return mu_; }
  const Matrix& S() const { return S_; }

  /// Lipschitz modulus of T^{-1} at 0 for mu > 0.
  double inverse_lipschitz_modulus() const {
    require(mu_ > 0.0, "inverse_lipschitz_modulus: needs mu > 0");
    return 1.0 / mu_;
  }

  ResolventResult resolvent(double c, const Vector& y) const {
    Matrix lhs = (1.0 + c * mu_) * Matrix::Identity(dim(), dim()) + c * S_;
    return {lhs.partialPivLu().solve(y), 0.0, 0};
  }

  std::optional<Vector> zero_point() const {
    // (mu I + S) z = 0: the origin, which is also the minimum-norm element of
    // null(S) in the mu = 0 case.
    return Vector::Zero(dim());
  }

 private:
  double mu_;
  Matrix S_;
};

/// Subdifferential of x -> x'Qx/2 + q'x + indicator(box). Its resolvent has no
/// closed form and is evaluated by a certified projected-gradient minimizer.
class QuadraticBoxSubdifferential {
 public:
  QuadraticBoxSubdifferential(Matrix Q, Vector q, BoxNormalCone box)
      : Q_(std::move(Q)), q_(std::move(q)), box_(std::move(box)) {
    require(Q_.rows() == Q_.cols() && Q_.rows() == q_.size() && Q_.rows() == box_.dim(),
            "QuadraticBoxSubdifferential: dimension mismatch");
    check_finite(Q_, "QuadraticBoxSubdifferential Q");
    check_finite(q_, "QuadraticBoxSubdifferential q");
    require((Q_ - Q_.transpose()).norm() <= 1e-12 * (1.0 + Q_.norm()),
            "QuadraticBoxSubdifferential: Q not symmetric");
    Q_ = ((Q_ + Q_.transpose()) / 2.0).eval();
    Eigen::SelfAdjointEigenSolver<Matrix> es(Q_);
    lambda_min_ = es.eigenvalues().minCoeff();
    lambda_max_ = es.eigenvalues().maxCoeff();
    require(lambda_min_ >= -1e-10 * (1.0 + Q_.norm()),
            "QuadraticBoxSubdifferential: Q not positive semidefinite");
    lambda_min_ = std::max(lambda_min_, 0.0);
  }

  Eigen::Index dim() const { return q_.size(); }
  const Matrix& Q() const { return Q_; }
  const Vector& q() const { return q_; }
  const BoxNormalCone& box() const { return box_; }
  double lambda_min() const { return lambda_min_; }
  double lambda_max() const { return lambda_max_; }

  /// P_c(y) solves min over the box of z'(I + cQ)z/2 - (y - cq)'z, a
  /// (1 + c lambda_min(Q))-strongly convex problem. Projected gradient with
  /// step 1/(1 + c lambda_max(Q)); the returned error bound is the reduced
  /// gradient norm over the strong-convexity modulus.
  ResolventResult resolvent(double c, const Vector& y, double tol) const {
    if (tol <= 0.0)
      throw std::invalid_argument("QuadraticBoxSubdifferential: exact resolvent unavailable");
    const double m_c = 1.0 + c * lambda_min_;
    const double L_c = 1.0 + c * lambda_max_;
    const double step = 1.0 / L_c;
    Vector z = box_.project(y);
    Vector grad(dim());
    long iters = 0;
    double cert = kInf;
    // No factor-2 certificate improvement inside the stall window means the
    // iteration is cycling at its floating-point floor (plain projected
    // gradient contracts by (1 - 1/kappa) per step, so 50 kappa iterations
    // legitimately improve the certificate by e^-50).
    const long stall_window =
        std::max<long>(1000, static_cast<long>(50.0 * L_c / m_c));
    double best_cert = kInf;
    long best_iter = 0;
    for (;;) {
      grad = z + c * (Q_ * z + q_) - y;
      cert = reduced_gradient_norm(z, grad) / m_c;
      if (cert <= tol) break;
      if (cert < 0.5 * best_cert) {
        best_cert = cert;
        best_iter = iters;
      }
      if (iters - best_iter > stall_window)
        throw ResolventFloorError(
            "QuadraticBoxSubdifferential: resolvent tolerance unattainable at the "
            "floating-point floor");
      if (++iters > kMaxInnerIterations)
        throw std::runtime_error("QuadraticBoxSubdifferential: inner iteration cap exceeded");
      z = box_.project(z - step * grad);
    }
    return {std::move(z), cert, iters};
  }

  /// Minimizer of the quadratic over the box at reference accuracy (an element
  /// of T^{-1}(0)); nullopt if the minimum may not be attained.
  std::optional<Vector> zero_point() const {
    if (lambda_min_ <= 0.0) {
      const bool bounded = box_.lower().allFinite() && box_.upper().allFinite();
      if (!bounded) return std::nullopt;
    }
    Vector z = box_.project(Vector::Zero(dim()));
    if (lambda_max_ == 0.0 && lambda_min_ == 0.0) {
      // Pure linear objective over a bounded box: coordinatewise solution.
      for (Eigen::Index i = 0; i < dim(); ++i)
        z[i] = q_[i] > 0 ? box_.lower()[i] : (q_[i] < 0 ? box_.upper()[i] : z[i]);
      return z;
    }
    const double m = std::max(lambda_min_, 0.0);
    const double step = 1.0 / lambda_max_;
    const long stall_window =
        std::max<long>(1000, static_cast<long>(50.0 * lambda_max_ / std::max(m, 1e-16)));
    double best_cert = kInf;
    long best_iter = 0;
    Vector grad(dim());
    for (long it = 0; it < kMaxInnerIterations; ++it) {
      grad = Q_ * z + q_;
      const double cert = reduced_gradient_norm(z, grad);
      if (m > 0.0 && cert / m <= 1e-13 * (1.0 + z.norm())) return z;
      if (m == 0.0 && cert <= 1e-13 * (1.0 + grad.norm())) return z;
      if (cert < 0.5 * best_cert) {
        best_cert = cert;
        best_iter = it;
      }
      if (it - best_iter > stall_window) return z;  // floating-point floor, best effort
      z = box_.project(z - step * grad);
    }
    return std::nullopt;
  }

  /// Minimum-norm element of grad + N_box(z) for feasible z.
  double reduced_gradient_norm(const Vector& z, const Vector& grad) const {
    double s = 0.0;
    for (Eigen::Index i = 0; i < dim(); ++i) {
      double g = grad[i];
      if (z[i] == box_.lower()[i] && g > 0) g = 0.0;
      else if (z[i] == box_.upper()[i] && g < 0) g = 0.0;
      s += g * g;
    }
    return std::sqrt(s);
  }

 private:
  static constexpr long kMaxInnerIterations = 50'000'000;

  Matrix Q_;
  Vector q_;
  BoxNormalCone box_;
  double lambda_min_ = 0.0;
  double lambda_max_ = 0.0;
};

using MonotoneOperator = std::variant<AffineOperator, BoxNormalCone,
                                      ScaledIdentityPlusSkew, QuadraticBoxSubdifferential>;

inline Eigen::Index dim(const MonotoneOperator& op) {
  return std::visit([](const auto& o) { return o.dim(); }, op);
}

inline bool has_closed_form_resolvent(const MonotoneOperator& op) {
  return !std::holds_alternative<QuadraticBoxSubdifferential>(op);
}

/// Evaluates z ~ P_c(y) = (I + cT)^{-1}(y) with certified error <= tol.
/// `tol` is ignored by the closed-form catalog operators.
inline ResolventResult resolvent(const MonotoneOperator& op, double c, const Vector& y,
                                 double tol = 0.0) {
  require(c > 0.0, "resolvent: c must be positive");
  require(tol >= 0.0, "resolvent: tol must be nonnegative");
  check_finite(y, "resolvent input");
  require(y.size() == dim(op), "resolvent: dimension mismatch");
  return std::visit(
      [&](const auto& o) -> ResolventResult {
        using T = std::decay_t<decltype(o)>;
        if constexpr (std::is_same_v<T, QuadraticBoxSubdifferential>)
          return o.resolvent(c, y, tol);
        else
          return o.resolvent(c, y);
      },
      op);
}

inline double default_ref_tol(const Vector& z) { return 1e-13 * (1.0 + z.norm()); }

/// ||z - P_c(z)||, the fixed-point residual, evaluated through a
/// reference-accuracy resolvent. Pass ref_tol <= 0 for the default
/// 1e-13 * (1 + ||z||).
inline double fixed_point_residual(const MonotoneOperator& op, double c, const Vector& z,
                                   double ref_tol = 0.0) {
  if (ref_tol <= 0.0) ref_tol = default_ref_tol(z);
  require(ref_tol <= 1e-12 * (1.0 + z.norm()),
          "fixed_point_residual: ref_tol not reference grade");
  return (z - resolvent(op, c, z, ref_tol).point).norm();
}

/// An element of T^{-1}(0) when computable for the catalog operator
/// (minimum-norm tie-break), nullopt otherwise.
inline std::optional<Vector> zero_point(const MonotoneOperator& op) {
  return std::visit([](const auto& o) { return o.zero_point(); }, op);
}

}  // namespace hippm
