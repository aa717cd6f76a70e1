#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "hippm/alm.hpp"
#include "test_util.hpp"

using namespace hippm;
using test::vec2;

namespace {

Vector vec1(double a) {
  Vector v(1);
  v << a;
  return v;
}

/// min (x1^2 + x2^2)/2  s.t.  1 - x1 <= 0; solution x* = (1,0), y* = 1,
/// optimum 1/2, Slater holds.
ConvexProgram canonical_qp() {
  Matrix a(1, 2);
  a << -1, 0;
  return ConvexProgram(Matrix::Identity(2, 2), Vector::Zero(2), a, vec1(-1),
                       BoxNormalCone::unbounded(2));
}

/// min ((x1-2)^2 + x2^2)/2  s.t.  x1 <= 10: constraint inactive at the
/// unconstrained optimum (2, 0).
ConvexProgram inactive_qp() {
  Matrix a(1, 2);
  a << 1, 0;
  return ConvexProgram(Matrix::Identity(2, 2), vec2(-2, 0), a, vec1(10),
                       BoxNormalCone::unbounded(2));
}

/// 1-d program f0 = x^2/2, constraint 1 - x <= 0 over C = R.
ConvexProgram one_dim_qp() {
  Matrix q(1, 1);
  q << 1;
  Matrix a(1, 1);
  a << -1;
  return ConvexProgram(q, vec1(0), a, vec1(-1), BoxNormalCone::unbounded(1));
}

ALMConfig canonical_config(long outers) {
  ALMConfig cfg;
  cfg.y0 = vec1(0);
  cfg.max_outer = outers;
  cfg.ref_optimum = 0.5;
  cfg.ystar = vec1(1);
  return cfg;
}

}  // namespace

TEST_CASE("augmented lagrangian values") {
  auto prog = one_dim_qp();
  // y + cF(x) <= 0 componentwise: L = f0 - ||y||^2 / (2c)
  // at x = 3: F = -2; y = 1, c = 1: max(0, -1) = 0
  CHECK(aug_lagrangian(vec1(3), vec1(1), 1.0, prog) ==
        Catch::Approx(4.5 - 0.5).epsilon(1e-15));
  // y = 0, F(x) = 0 at x = 1: L = f0
  CHECK(aug_lagrangian(vec1(1), vec1(0), 1.0, prog) == Catch::Approx(0.5).epsilon(1e-15));
  // x = 0, y = 1, c = 1: L = 0 + (max(0, 1 + 1)^2 - 1)/2 = 1.5
  CHECK(aug_lagrangian(vec1(0), vec1(1), 1.0, prog) == Catch::Approx(1.5).epsilon(1e-15));
  CHECK_THROWS_AS(aug_lagrangian(vec1(0), vec1(-1), 1.0, prog), std::invalid_argument);
}

TEST_CASE("multiplier map clamps at zero") {
  auto prog = one_dim_qp();  // F(x) = 1 - x
  CHECK(multiplier_map(vec1(4), vec1(1), 1.0, prog) == vec1(0));   // F = -3
  CHECK(multiplier_map(vec1(1), vec1(0.7), 1.0, prog) == vec1(0.7));  // F = 0
  CHECK(multiplier_map(vec1(-1), vec1(0.5), 2.0, prog) == vec1(4.5));  // F = 2
}

TEST_CASE("inner solve reaches certified gaps") {
  auto prog = one_dim_qp();
  // phi(x) = x^2/2 + max(0, 1-x)^2/2 at y = 0, c = 1: minimizer 1/2, inf 1/4
  auto r = inner_solve(prog, vec1(0), 1.0, 1e-12, false, vec1(0));
  CHECK(r.x[0] == Catch::Approx(0.5).margin(1e-5));
  CHECK(r.gap_cert <= 1e-12);
  CHECK(r.phi_x == Catch::Approx(0.25).margin(1e-10));

  auto oracle = inner_solve(prog, vec1(0), 1.0, 0.0, true, vec1(0));
  CHECK(oracle.phi_x - 0.25 <= 1e-12);
  CHECK(oracle.gap_cert <= 1e-13 * (1.0 + 0.25));

  // interior unconstrained optimum: multiplier pressure vanishes
  auto prog2 = inactive_qp();
  auto r2 = inner_solve(prog2, vec1(0), 1.0, 1e-14, false, vec2(0, 0));
  CHECK((r2.x - vec2(2, 0)).norm() < 1e-6);

  // certificate needs a positive definite objective Hessian
  Matrix qz = Matrix::Zero(1, 1);
  Matrix a(1, 1);
  a << -1;
  ConvexProgram flat(qz, vec1(1), a, vec1(-1), BoxNormalCone(vec1(0), vec1(2)));
  CHECK_THROWS_WITH(inner_solve(flat, vec1(0), 1.0, 1e-6, false, vec1(0)),
                    Catch::Matchers::ContainsSubstring("certificate unavailable"));
}

TEST_CASE("ergodic average weights") {
  std::vector<Vector> xs = {vec1(0), vec1(2)};
  std::vector<double> cs = {1.0, 1.0};
  CHECK(ergodic_average(xs, cs, 2) == vec1(1));

  std::vector<Vector> xs3 = {vec1(1), vec1(10), vec1(100)};
  std::vector<double> cs3 = {1.0, 2.0, 3.0};
  CHECK(ergodic_average(xs3, cs3, 3)[0] ==
        Catch::Approx((1.0 + 20.0 + 300.0) / 6.0).epsilon(1e-15));

  // Jensen: f0 of the average never exceeds the average of f0
  std::mt19937_64 rng(31);
  auto prog = canonical_qp();
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Vector> pts;
    std::vector<double> ws;
    for (int j = 0; j < 5; ++j) {
      pts.push_back(test::random_vector(rng, 2, 2.0));
      ws.push_back(0.1 + std::uniform_real_distribution<double>()(rng));
    }
    const Vector avg = ergodic_average(pts, ws, 5);
    double rhs = 0.0, total = 0.0;
    for (int j = 0; j < 5; ++j) total += ws[j];
    for (int j = 0; j < 5; ++j) rhs += ws[j] / total * prog.f0(pts[j]);
    CHECK(prog.f0(avg) <= rhs + 1e-12);
  }
  CHECK_THROWS_AS(ergodic_average(xs, cs, 3), std::invalid_argument);
}

TEST_CASE("alm on the canonical instance converges") {
  auto trace = run_alm(canonical_qp(), canonical_config(2000));
  REQUIRE(trace.size() == 2000);
  CHECK_FALSE(trace.aborted);
  const auto& last = trace.records.back();
  CHECK(std::abs(last.y[0] - 1.0) < 5e-3);
  CHECK(std::abs(last.obj_gap) < 5e-3);
  CHECK(last.feas_max < 5e-3);
  for (const auto& r : trace.records) {
    CHECK(r.criterion_ok);
    CHECK(r.y.minCoeff() >= 0.0);
    CHECK(r.ybar.minCoeff() >= 0.0);
  }
  // delta0 running max is nondecreasing
  for (long k = 1; k < trace.size(); ++k)
    CHECK(trace.records[k].delta0_running >= trace.records[k - 1].delta0_running);
  // incremental ergodic average agrees with the direct formula
  std::vector<Vector> xs;
  std::vector<double> cs;
  for (const auto& r : trace.records) {
    xs.push_back(r.x);
    cs.push_back(r.c);
  }
  for (long k : {1L, 7L, 500L, 2000L})
    CHECK((trace.records[k - 1].xtilde - ergodic_average(xs, cs, k)).norm() < 1e-12);
}

TEST_CASE("alm with inactive constraints tracks the unconstrained optimum") {
  ALMConfig cfg;
  cfg.y0 = vec1(0);
  cfg.max_outer = 500;
  cfg.ref_optimum = -2.0;
  auto trace = run_alm(inactive_qp(), cfg);
  const auto& last = trace.records.back();
  CHECK(last.y.norm() < 1e-6);
  CHECK((last.xtilde - vec2(2, 0)).norm() < 2e-2);
  CHECK(last.feas_max < 0.0);
}

TEST_CASE("pointwise bounds hold along the run") {
  auto prog = canonical_qp();
  auto trace = run_alm(prog, canonical_config(400));
  for (long k = 0; k < trace.size(); ++k) {
    const auto& rec = trace.records[k];
    auto b = thm41_bounds(trace, k);
    const Vector fx = prog.constraints(rec.x);
    for (long i = 0; i < fx.size(); ++i)
      CHECK(fx[i] <= b.feas_bound[i] + 1e-9 * (1.0 + std::abs(b.feas_bound[i])));
    CHECK(prog.f0(rec.x) - 0.5 <= b.obj_bound + 1e-9 * (1.0 + std::abs(b.obj_bound)));
  }
}

TEST_CASE("pointwise obj bound reduction at a stationary multiplier") {
  // synthetic trace with y0 = 0 and y^k = y^{k+1} = y*: the inner-product
  // term collapses to (2k+3)/(k+1)^2 ||y*||^2
  ALMTrace t;
  t.y0 = vec1(0);
  const Vector ystar = vec1(2.5);
  ALMRecord r0, r1;
  r0.k = 0;
  r0.y = ystar;
  r0.c = 2.0;
  r0.eps_k = 0.25;
  r1.k = 1;
  r1.y = ystar;
  r1.c = 2.0;
  r1.eps_k = 0.1;
  t.records = {r0, r1};
  t.final_y = ystar;
  const long k = 0;
  auto b = thm41_bounds(t, k);
  const double kk = k + 1.0;
  const double expect =
      (0.25 * 0.25 - (2.0 * kk + 1.0) / (kk * kk) * ystar.squaredNorm()) / (2.0 * 2.0);
  CHECK(b.obj_bound == Catch::Approx(expect).epsilon(1e-15));
  CHECK(b.feas_bound[0] == Catch::Approx(ystar[0] / (kk * 2.0)).epsilon(1e-15));

  // all multipliers zero: the feasibility bound vanishes entirely
  ALMTrace z;
  z.y0 = vec1(0);
  ALMRecord zr = r0;
  zr.y = vec1(0);
  z.records = {zr};
  z.final_y = vec1(0);
  CHECK(thm41_bounds(z, 0).feas_bound.isZero());
}

TEST_CASE("ergodic bound formulas") {
  // feasibility at Delta0 = 1, delta = 1, c0 = 1, k = 8
  auto b = thm42_bounds(1.0, 1.0, 1.0, ALMScheduleKind::kConstantOrIncreasing, 8);
  CHECK(b.feas == Catch::Approx((3.0 + 2.0 * std::log(8.0)) / 8.0).epsilon(1e-15));
  // objective constant at delta = 1 is 2(1+delta)/(1+2delta) = 4/3
  auto b0 = thm42_bounds(0.0, 1.0, 1.0, ALMScheduleKind::kConstantOrIncreasing, 8);
  CHECK(b0.obj == Catch::Approx((4.0 / 3.0) / 16.0).epsilon(1e-15));
  // linear-schedule objective = constant-schedule objective * 2/(k+1)
  for (long k : {2L, 5L, 100L}) {
    auto c = thm42_bounds(1.7, 0.5, 2.0, ALMScheduleKind::kConstantOrIncreasing, k);
    auto l = thm42_bounds(1.7, 0.5, 2.0, ALMScheduleKind::kLinear, k);
    CHECK(l.obj == Catch::Approx(c.obj * 2.0 / (k + 1.0)).epsilon(1e-14));
  }
  CHECK_THROWS_AS(thm42_bounds(1.0, 1.0, 1.0, ALMScheduleKind::kLinear, 1),
                  std::invalid_argument);
}

TEST_CASE("ergodic bounds hold for both schedules") {
  auto prog = canonical_qp();
  for (auto mode : {ALMScheduleKind::kConstantOrIncreasing, ALMScheduleKind::kLinear}) {
    ALMConfig cfg = canonical_config(600);
    cfg.prox_schedule = mode == ALMScheduleKind::kLinear
                            ? ProxParamSchedule::linear(1.0)
                            : ProxParamSchedule::constant(1.0);
    auto trace = run_alm(prog, cfg);
    const double delta0 = 1.1 * trace.records.back().delta0_running;
    for (long r = 1; r < trace.size(); ++r) {
      const long k = r + 1;  // records[r] holds the ergodic point xtilde^{r+1}
      auto b = thm42_bounds(delta0, cfg.delta, 1.0, mode, k);
      CHECK(trace.records[r].feas_max <= b.feas + 1e-12);
      CHECK(trace.records[r].obj_gap <= b.obj + 1e-12);
    }
  }
}

TEST_CASE("dual resolvents certify criterion A on the dual") {
  auto prog = canonical_qp();
  auto trace = run_alm(prog, canonical_config(200));
  for (long k = 0; k < trace.size(); k += 7) {
    const auto& rec = trace.records[k];
    auto ref = dual_resolvent_reference(prog, rec.y, rec.c);
    CHECK((rec.ybar - ref.point).norm() <= rec.eps_k + ref.error_bound + 1e-14);
  }
}

TEST_CASE("alm rejects bad configs") {
  auto prog = canonical_qp();
  ALMConfig cfg;
  cfg.y0 = vec1(-0.5);
  CHECK_THROWS_AS(run_alm(prog, cfg), std::invalid_argument);
  cfg.y0 = vec2(0, 0);
  CHECK_THROWS_AS(run_alm(prog, cfg), std::invalid_argument);
}
