#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "hippm/solver.hpp"
#include "hippm/types.hpp"

namespace hippm {

/// Sum of the tolerance rule series, beta0(delta) = sum_{k>=0} 1/(k+2)^(1+delta),
/// accurate to tail_tol. Direct partial summation; once the Euler-Maclaurin
/// remainder for the tail is far below tail_tol the closed tail estimate is
/// added instead of summing on (the series needs ~10^10 raw terms at delta=1,
/// tail_tol=1e-10).
inline double beta0(double delta, double tail_tol) {
  require(delta > 0.0, "beta0: delta must be > 0");
  require(tail_tol > 0.0, "beta0: tail_tol must be > 0");
  const double s = 1.0 + delta;
  double sum = 0.0;
  double j = 2.0;
  for (;;) {
    // Integral tail bound after summing terms below j: 1/(delta (K+1)^delta)
    // with K+1 = j-1.
    if (std::pow(j - 1.0, -delta) / delta < tail_tol) return sum;
    const double em_remainder = s * (s + 1.0) * (s + 2.0) * std::pow(j, -s - 3.0) / 720.0;
    if (j >= 64.0 && em_remainder < 0.01 * tail_tol) break;
    sum += std::pow(j, -s);
    j += 1.0;
  }
  // Euler-Maclaurin tail for sum_{m>=j} m^{-s}; remainder below is bounded by
  // em_remainder checked above.
  return sum + std::pow(j, 1.0 - s) / (s - 1.0) + std::pow(j, -s) / 2.0 +
         s * std::pow(j, -s - 1.0) / 12.0;
}

struct EnvelopeParams {
  double delta = 1.0;
  double beta0 = 0.0;   // sum of the tolerance series
  double kappa0 = 0.0;  // 2 (beta0 + dist0)
  double dist0 = 0.0;   // ||z^0 - z*||

  static EnvelopeParams make(double delta, double dist0, double tail_tol = 1e-12) {
    require(dist0 >= 0.0, "EnvelopeParams: dist0 must be >= 0");
    EnvelopeParams p;
    p.delta = delta;
    p.beta0 = hippm::beta0(delta, tail_tol);
    p.dist0 = dist0;
    p.kappa0 = 2.0 * (p.beta0 + dist0);
    return p;
  }

  /// For tolerance sequences that do not follow the rule: beta0 is the
  /// sequence sum (the Theta_k branches stay tied to `delta` and are not
  /// meaningful here).
  static EnvelopeParams from_sum(double eps_sum, double dist0) {
    require(eps_sum >= 0.0 && dist0 >= 0.0, "EnvelopeParams: negative inputs");
    EnvelopeParams p;
    p.delta = kNaN;
    p.beta0 = eps_sum;
    p.dist0 = dist0;
    p.kappa0 = 2.0 * (eps_sum + dist0);
    return p;
  }
};

/// The five-branch Theta_k of the residual envelope under the tolerance rule
/// with constant c. Branch boundaries are snapped within 1e-12 of delta = 1, 2
/// (the log-factor branches are the correct limits).
inline double theta_k(const EnvelopeParams& p, long k) {
  require(k >= 1, "theta_k: defined for k >= 1");
  const double kk = static_cast<double>(k) + 1.0;
  const double kap = p.kappa0;
  const double bet = p.beta0;
  const double d = p.delta;
  require(d > 0.0, "theta_k: delta must be > 0");
  if (std::abs(d - 1.0) <= 1e-12) {
    return 4.0 * kap * (1.0 + 2.0 * bet) / (kk * kk) + 4.0 * kap / (kk * kk * kk) +
           8.0 * kap * std::log(kk) / (kk * kk) + 8.0 * kap / kk;
  }
  if (std::abs(d - 2.0) <= 1e-12) {
    return 8.0 * kap * (1.0 + bet) / (kk * kk) + 4.0 * kap / std::pow(kk, 4.0) +
           4.0 * kap / (kk * kk * kk) + 8.0 * kap * std::log(kk) / (kk * kk);
  }
  if (d < 1.0) {
    return 8.0 * kap * bet / (kk * kk) + 4.0 * kap / std::pow(kk, 2.0 + d) +
           4.0 * kap * (3.0 - d) / ((1.0 - d) * std::pow(kk, 1.0 + d)) +
           8.0 * kap / ((2.0 - d) * std::pow(kk, d));
  }
  if (d < 2.0) {
    return 8.0 * kap * (1.0 / (d - 1.0) + bet) / (kk * kk) +
           4.0 * kap / std::pow(kk, 2.0 + d) + 4.0 * kap / std::pow(kk, 1.0 + d) +
           8.0 * kap / ((2.0 - d) * std::pow(kk, d));
  }
  return 8.0 * kap * (1.0 / (d - 1.0) + 1.0 / (d - 2.0) + bet) / (kk * kk) +
         4.0 * kap / std::pow(kk, 2.0 + d) + 4.0 * kap / std::pow(kk, 1.0 + d);
}

/// Residual envelope 2 dist0/(k+1) + sqrt(Theta_k).
inline double theta_envelope(const EnvelopeParams& p, long k) {
  return 2.0 * p.dist0 / (static_cast<double>(k) + 1.0) + std::sqrt(theta_k(p, k));
}

/// Envelope for exact resolvents (all eta^k = 0): 2 dist0/(k+1).
inline double envelope_exact(double dist0, long k) {
  require(k >= 0, "envelope_exact: k must be >= 0");
  return 2.0 * dist0 / (static_cast<double>(k) + 1.0);
}

/// Closed upper bound on Delta_k from the tolerance history, evaluated
/// literally term by term. eps_history[j] = eps_j for j = 0..k-1; the j = -1
/// index uses the eps_{-1} := eps_0 convention.
inline double deltak_upper(const EnvelopeParams& p, std::span<const double> eps_history,
                           long k) {
  require(k >= 1, "deltak_upper: defined for k >= 1");
  require(static_cast<long>(eps_history.size()) >= k, "deltak_upper: missing history");
  auto eps = [&](long j) { return eps_history[static_cast<size_t>(std::max(j, 0L))]; };
  const double kk = static_cast<double>(k) + 1.0;
  const double kap = p.kappa0;
  double sum_j = 0.0;      // sum_{j=1}^{k-1} j eps_{j-1}
  double sum_jp1sq = 0.0;  // sum_{j=1}^{k-1} (j+1)^2 eps_{j-1}
  for (long j = 1; j <= k - 1; ++j) {
    sum_j += static_cast<double>(j) * eps(j - 1);
    sum_jp1sq += std::pow(static_cast<double>(j) + 1.0, 2.0) * eps(j - 1);
  }
  return 4.0 * kap * eps(k - 1) * static_cast<double>(k) / (kk * kk) +
         8.0 * kap * p.beta0 / (kk * kk) + 8.0 * kap * sum_j / (kk * kk) +
         4.0 * kap * eps(k - 1) + 8.0 * kap * sum_jp1sq / (kk * kk);
}

/// The exact Delta_k of the residual identity, evaluated from a trace that
/// stored the eta vectors (constant c). P_c(z^j) is recovered as
/// zbar^j - eta^j. Can be negative.
inline double deltak_exact(const IterateTrace& trace, long k) {
  require(k >= 1, "deltak_exact: defined for k >= 1");
  require(trace.size() > k, "deltak_exact: trace too short");
  for (long j = 0; j <= k; ++j)
    if (trace.records[static_cast<size_t>(j)].eta.size() == 0)
      throw std::invalid_argument("deltak_exact: trace lacks eta storage");

  auto rec = [&](long j) -> const IterateRecord& {
    return trace.records[static_cast<size_t>(j)];
  };
  const Vector& z0 = trace.anchor;
  const double kk = static_cast<double>(k) + 1.0;
  const Vector zero = Vector::Zero(z0.size());
  auto eta = [&](long j) -> const Vector& { return j < 0 ? zero : rec(j).eta; };
  auto prox = [&](long j) { return (rec(j).zbar - rec(j).eta).eval(); };

  double t1 = 4.0 * static_cast<double>(k) / (kk * kk) * (rec(k).z - z0).dot(eta(k - 1));
  double t2 = 0.0, t3 = 0.0, t5 = 0.0, t6 = 0.0;
  for (long j = 0; j <= k - 1; ++j) {
    const double jd = static_cast<double>(j);
    const Vector z0mzj = z0 - rec(j).z;
    const Vector pmz = prox(j) - rec(j).z;
    const Vector weighted_eta = ((jd + 1.0) / (jd + 2.0)) * eta(j);
    t2 += z0mzj.dot(weighted_eta);
    t3 += jd * z0mzj.dot(weighted_eta - eta(j - 1));
    t5 += std::pow(jd + 1.0, 3.0) / (jd + 2.0) * pmz.dot(eta(j - 1) - eta(j));
    t6 += (jd + 1.0) / (jd + 2.0) * pmz.dot(eta(j - 1));
  }
  double t4 = 4.0 * static_cast<double>(k) / kk * (rec(k).z - prox(k)).dot(eta(k - 1));
  double t7 = 0.0;
  for (long j = 1; j <= k; ++j) {
    const double jd = static_cast<double>(j);
    t7 += jd * jd / (jd + 1.0) * eta(j - 1).squaredNorm();
  }
  return t1 + 4.0 / (kk * kk) * t2 + 4.0 / (kk * kk) * t3 + t4 - 4.0 / (kk * kk) * t5 +
         4.0 / (kk * kk) * t6 - 4.0 / (kk * kk) * t7;
}

struct MasterIdentityCheck {
  double lhs = 0.0;       // residual^2 at k (from stored zbar - eta)
  double rhs = 0.0;       // 4 dist0^2/(k+1)^2 + Delta_k
  double delta_k = 0.0;
  bool radicand_clamped = false;  // rhs < 0 before clamping (flagged, see below)
  bool ok = false;
};

/// residual^2 <= 4 dist0^2/(k+1)^2 + Delta_k(exact). The radicand can be
/// negative in isolation; it is clamped to 0 for reporting and flagged (the
/// left side certifies the true radicand is nonnegative).
inline MasterIdentityCheck master_identity_check(const IterateTrace& trace, long k,
                                                 double dist0, double slack = 1e-10) {
  MasterIdentityCheck out;
  out.delta_k = deltak_exact(trace, k);
  const auto& r = trace.records[static_cast<size_t>(k)];
  out.lhs = (r.z - (r.zbar - r.eta)).squaredNorm();
  const double kk = static_cast<double>(k) + 1.0;
  out.rhs = 4.0 * dist0 * dist0 / (kk * kk) + out.delta_k;
  if (out.rhs < 0.0) {
    out.radicand_clamped = true;
    out.rhs = 0.0;
  }
  const double scale = 1.0 + out.lhs + std::abs(out.rhs);
  out.ok = out.lhs <= out.rhs + slack * scale;
  return out;
}

/// Least-squares slope of log(residual) vs log(k+1) over [k_min, k_max] with
/// geometric subsampling. nullopt means the residuals reached zero (or below)
/// inside the window: converged before window.
inline std::optional<double> fit_rate(const IterateTrace& trace, long k_min, long k_max) {
  require(k_min >= 10 && k_max >= 2 * k_min, "fit_rate: need k_max >= 2 k_min >= 20");
  std::vector<std::pair<double, double>> pts;  // (log(k+1), log(residual))
  for (const auto& r : trace.records) {
    if (r.k < k_min || r.k > k_max || std::isnan(r.residual)) continue;
    if (r.residual <= 0.0) return std::nullopt;
    pts.emplace_back(std::log(static_cast<double>(r.k) + 1.0), std::log(r.residual));
  }
  if (pts.size() < 2) throw std::invalid_argument("fit_rate: too few residuals in window");

  // Geometric subsampling over the available points so late iterations do not
  // dominate the fit.
  std::vector<std::pair<double, double>> sel;
  const size_t target = 256;
  if (pts.size() <= target) {
    sel = pts;
  } else {
    const double lo = pts.front().first, hi = pts.back().first;
    size_t cursor = 0;
    for (size_t i = 0; i < target; ++i) {
      const double want = lo + (hi - lo) * static_cast<double>(i) / (target - 1);
      while (cursor + 1 < pts.size() && pts[cursor].first < want) ++cursor;
      if (sel.empty() || sel.back().first != pts[cursor].first) sel.push_back(pts[cursor]);
    }
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (auto [x, y] : sel) {
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double n = static_cast<double>(sel.size());
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

/// Slope of the theoretical envelope itself over a window, for the rate-band
/// checks (delta < 2: -delta/2; delta > 2: -1).
inline double envelope_slope(const EnvelopeParams& p, long k_min, long k_max,
                             int points = 256) {
  require(k_min >= 1 && k_max > k_min, "envelope_slope: bad window");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int i = 0; i < points; ++i) {
    const double t = static_cast<double>(i) / (points - 1);
    const long k = static_cast<long>(std::llround(
        std::exp(std::log(static_cast<double>(k_min)) +
                 t * (std::log(static_cast<double>(k_max)) -
                      std::log(static_cast<double>(k_min))))));
    const double x = std::log(static_cast<double>(k) + 1.0);
    const double y = std::log(theta_envelope(p, k));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double n = points;
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

struct LinearRateParams {
  double a = 0.0;                 // Lipschitz modulus of T^{-1} at 0
  std::vector<double> mu_k;       // a / sqrt(a^2 + c_k^2)
  std::vector<double> theta_k;    // (mu_k + delta_k)/(1 - delta_k)

  static LinearRateParams make(double a, std::span<const double> c_hist,
                               std::span<const double> delta_hist) {
    require(a > 0.0, "LinearRateParams: a must be > 0");
    require(c_hist.size() == delta_hist.size(), "LinearRateParams: history mismatch");
    LinearRateParams p;
    p.a = a;
    p.mu_k.reserve(c_hist.size());
    p.theta_k.reserve(c_hist.size());
    for (size_t i = 0; i < c_hist.size(); ++i) {
      const double mu = a / std::sqrt(a * a + c_hist[i] * c_hist[i]);
      p.mu_k.push_back(mu);
      p.theta_k.push_back((mu + delta_hist[i]) / (1.0 - delta_hist[i]));
    }
    return p;
  }

  static LinearRateParams from_trace(double a, const IterateTrace& trace) {
    std::vector<double> c_hist, d_hist;
    for (const auto& r : trace.records) {
      c_hist.push_back(r.c);
      d_hist.push_back(trace.criterion == Criterion::kB ? r.eps_allowed : 0.0);
    }
    return make(a, c_hist, d_hist);
  }
};

struct LinearRateReport {
  bool ok = false;
  long k_bar = -1;           // smallest index from which every row contracts
  double max_violation = 0.0;  // max over all rows of lhs - rhs (diagnostic)
};

/// Finds the smallest k_bar such that ||zbar^k - zstar|| <= theta_k ||z^k - zstar||
/// for every trace row k >= k_bar.
inline LinearRateReport linear_rate_check(const IterateTrace& trace,
                                          const LinearRateParams& params,
                                          const Vector& zbar_star) {
  require(params.theta_k.size() >= trace.records.size(),
          "linear_rate_check: params shorter than trace");
  LinearRateReport rep;
  long first_ok_suffix = trace.size();
  for (long k = trace.size() - 1; k >= 0; --k) {
    const auto& r = trace.records[static_cast<size_t>(k)];
    const double lhs = (r.zbar - zbar_star).norm();
    const double rhs = params.theta_k[static_cast<size_t>(k)] * (r.z - zbar_star).norm();
    const double viol = lhs - rhs;
    rep.max_violation = std::max(rep.max_violation, viol);
    if (viol <= 1e-12 * (1.0 + rhs))
      first_ok_suffix = k;
    else
      break;
  }
  if (first_ok_suffix < trace.size()) {
    rep.ok = true;
    rep.k_bar = first_ok_suffix;
  }
  return rep;
}

struct BoundRow {
  long k = 0;
  double observed = kNaN;
  double envelope = kNaN;
  double dk_upper = kNaN;
  double dk_exact = kNaN;
  bool satisfied = true;
};

struct BoundReport {
  std::vector<BoundRow> rows;
  bool all_pass = true;
  long first_failure = -1;
};

/// Checks observed residuals against the envelope on every sampled row.
/// `exact_mode` uses 2 dist0/(k+1); otherwise the Theta_k envelope (criterion
/// A with constant c). dk columns are filled from the tolerance history.
inline BoundReport check_envelope(const IterateTrace& trace, const EnvelopeParams& params,
                                  bool exact_mode, double rel_slack = 1e-9) {
  BoundReport report;
  std::vector<double> eps_hist;
  for (const auto& r : trace.records) eps_hist.push_back(r.eps_allowed);
  for (const auto& r : trace.records) {
    if (r.k < 1 || std::isnan(r.residual)) continue;
    BoundRow row;
    row.k = r.k;
    row.observed = r.residual;
    row.envelope =
        exact_mode ? envelope_exact(params.dist0, r.k) : theta_envelope(params, r.k);
    if (!exact_mode) row.dk_upper = deltak_upper(params, eps_hist, r.k);
    row.satisfied = row.observed <= row.envelope * (1.0 + rel_slack);
    if (!row.satisfied && report.first_failure < 0) report.first_failure = r.k;
    report.all_pass = report.all_pass && row.satisfied;
    report.rows.push_back(row);
  }
  return report;
}

}  // namespace hippm
