#include "nfar/mixing.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>

#include "nfar/errors.hpp"

namespace nfar {

CovarianceOperatorDisc discretize_covariance(const StationaryKernel& k,
                                             GridSpec grid) {
  validate(grid);
  if (grid.size > 40) {
    throw ConfigError("covariance discretization limited to S <= 40, got " +
                      std::to_string(grid.size));
  }
  const int s = grid.size;
  const int n = s * s;
  const double w = 1.0 / n;

  CovarianceOperatorDisc q;
  q.grid = grid;
  q.matrix.resize(n, n);
  for (int r = 0; r < n; ++r) {
    const int i = r / s, j = r % s;
    for (int c = r; c < n; ++c) {
      const int i2 = c / s, j2 = c % s;
      const double val =
          k(static_cast<double>(i - i2) / s, static_cast<double>(j - j2) / s) *
          w;
      q.matrix(r, c) = val;
      q.matrix(c, r) = val;
    }
  }
  q.trace = q.matrix.trace();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(q.matrix);
  if (solver.info() != Eigen::Success) {
    throw Error("covariance eigendecomposition failed");
  }
  // Eigen returns ascending order; flip to nonincreasing. Euclidean
  // orthonormal vectors are scaled by S to be quadrature-orthonormal.
  q.eigvals = solver.eigenvalues().reverse();
  q.eigvecs = solver.eigenvectors().rowwise().reverse() * s;
  return q;
}

namespace {

struct TauBound {
  double sup = 0.0;
  bool bounded = false;
  double slope = 0.0;
  double intercept = 0.0;
};

// Grid search of |tau| over [-20, 20] (step 1e-3). If the max sits at the
// domain edge the growth is estimated linearly from the edge values.
TauBound scan_nonlinearity(Nonlinearity tau) {
  constexpr double lo = -20.0, hi = 20.0, step = 1e-3;
  const int n = static_cast<int>((hi - lo) / step) + 1;
  double best = 0.0;
  int best_idx = 0;
  for (int i = 0; i < n; ++i) {
    const double x = lo + i * step;
    const double v = std::fabs(nonlinearity(tau, x));
    if (v > best) {
      best = v;
      best_idx = i;
    }
  }
  TauBound out;
  out.sup = best;
  out.bounded = best_idx != 0 && best_idx != n - 1;
  if (!out.bounded) {
    const double edge = lo + best_idx * step;
    const double inner = edge - (best_idx == n - 1 ? 1.0 : -1.0);
    const double v_edge = std::fabs(nonlinearity(tau, edge));
    const double v_inner = std::fabs(nonlinearity(tau, inner));
    out.slope = std::max(0.0, v_edge - v_inner);
    out.intercept = std::max(0.0, v_edge - out.slope * std::fabs(edge));
  }
  return out;
}

} // namespace

DriftReport check_assumption_m2(const NfarModel& m,
                                const CovarianceOperatorDisc& q) {
  const TauBound tb = scan_nonlinearity(m.tau);

  DriftReport rep;
  rep.lambda_max = q.lambda_max();
  rep.trace = q.trace;
  rep.tau_sup = tb.sup;
  rep.tau_bounded = tb.bounded;
  if (tb.bounded) {
    rep.c1 = 0.0;
    rep.c2 = m.amplitude * tb.sup;
  } else {
    rep.c1 = m.amplitude * tb.slope;
    rep.c2 = m.amplitude * tb.intercept;
    rep.note = "|tau| grows toward the search-domain edge; linear growth "
               "c1|x| + c2 assumed";
  }
  rep.rho = rep.c1 * rep.lambda_max;
  rep.kappa = rep.c2 * rep.lambda_max + std::sqrt(rep.trace);
  rep.condition_passes = rep.rho < 1.0;
  return rep;
}

ExampleCondReport check_example_condition_values(
    const Eigen::MatrixXd& f_values, const CovarianceOperatorDisc& q,
    int m_terms, double tau_sup_sq) {
  const int s = q.grid.size;
  const int n = s * s;
  if (f_values.rows() != n || f_values.cols() != n) {
    throw ShapeError("kernel value matrix must be S^2 x S^2");
  }
  if (m_terms < 1 || m_terms > n) {
    throw ConfigError("number of expansion terms must be in [1, S^2]");
  }

  ExampleCondReport rep;
  rep.tau_sup_sq = tau_sup_sq;

  // Keep only eigendirections with lambda_i >= 1e-12; dividing by smaller
  // eigenvalues is pure roundoff noise.
  int usable = 0;
  while (usable < m_terms && q.eigvals(usable) >= 1e-12) {
    ++usable;
  }
  rep.truncated = usable < m_terms;
  rep.terms_used = usable;
  if (rep.truncated) {
    rep.note = "expansion truncated at " + std::to_string(usable) +
               " terms (eigenvalues below 1e-12)";
  }

  // f_ij = (1/S^4) e_i^T F e_j with quadrature-normalized eigenvectors.
  const double w2 = 1.0 / (static_cast<double>(n) * n);
  const Eigen::MatrixXd basis = q.eigvecs.leftCols(usable);
  const Eigen::MatrixXd coeff = w2 * basis.transpose() * f_values * basis;

  rep.partial_sums.resize(static_cast<std::size_t>(usable));
  double running = 0.0;
  for (int m_cur = 1; m_cur <= usable; ++m_cur) {
    const int i = m_cur - 1;
    // Add the new row and column of the m x m block.
    for (int j = 0; j < m_cur; ++j) {
      running += coeff(i, j) * coeff(i, j) / (q.eigvals(i) * q.eigvals(i));
      if (j < i) {
        running += coeff(j, i) * coeff(j, i) / (q.eigvals(j) * q.eigvals(j));
      }
    }
    rep.partial_sums[static_cast<std::size_t>(i)] = running;
  }

  for (int i = 0; i < usable; ++i) {
    for (int j = 0; j < usable; ++j) {
      const double c2 = coeff(i, j) * coeff(i, j);
      if (i == j) {
        rep.diag_energy += c2;
      } else {
        rep.offdiag_energy += c2;
      }
    }
  }

  // Linear growth of s_m signals divergence; saturating tails do not. The
  // verdict compares the tail increment against the average increment.
  if (usable >= 8) {
    const auto& ps = rep.partial_sums;
    const double avg_inc = ps.back() / usable;
    const int tail = usable / 4;
    const double tail_inc =
        (ps.back() - ps[static_cast<std::size_t>(usable - 1 - tail)]) / tail;
    rep.diverges = tail_inc > 0.2 * avg_inc && ps.back() > 0.0;
  } else {
    rep.diverges = false;
  }
  return rep;
}

ExampleCondReport check_example_condition(const NfarModel& m,
                                          const CovarianceOperatorDisc& q,
                                          int m_terms) {
  // f(u, v) = amplitude * K(u - v): the same values as the covariance
  // matrix without quadrature weights, scaled by the amplitude.
  const int n = q.grid.point_count();
  const Eigen::MatrixXd f_values =
      q.matrix * (m.amplitude * static_cast<double>(n));
  const TauBound tb = scan_nonlinearity(m.tau);
  // Parseval: sup_x sum_i tau_i(x)^2 <= ||tau||_inf^2.
  return check_example_condition_values(f_values, q, m_terms,
                                        tb.sup * tb.sup);
}

DriftTestResult empirical_drift_test(const NfarPath& path,
                                     const DriftReport& report) {
  if (path.length() < 500) {
    throw ConfigError("drift test needs a path of length >= 500");
  }
  DriftTestResult res;
  res.valid_rho = report.rho >= 0.0 && report.rho < 1.0;
  res.pairs = path.length() - 1;

  double sum = 0.0, sum_sq = 0.0;
  for (int t = 0; t + 1 < path.length(); ++t) {
    const double gap =
        std::sqrt(l2_norm_sq(path.fields[static_cast<std::size_t>(t + 1)])) -
        report.rho *
            std::sqrt(l2_norm_sq(path.fields[static_cast<std::size_t>(t)]));
    sum += gap;
    sum_sq += gap * gap;
  }
  const double n = res.pairs;
  res.mean_gap = sum / n;
  const double var = std::max(0.0, (sum_sq - sum * sum / n) / (n - 1.0));
  res.stderr_gap = std::sqrt(var / n);
  res.margin = report.kappa + 3.0 * res.stderr_gap - res.mean_gap;
  res.pass = res.valid_rho && res.margin >= 0.0;
  return res;
}

MixingDecayResult mixing_decay_estimate(const NfarPath& path, int max_lag) {
  if (max_lag < 1) {
    throw ConfigError("max_lag must be >= 1");
  }
  if (path.length() < 20 * max_lag) {
    throw ConfigError("mixing decay needs path length >= 20 * max_lag");
  }
  const int n = path.length();
  std::vector<double> phi(static_cast<std::size_t>(n));
  for (int t = 0; t < n; ++t) {
    double acc = 0.0;
    for (double x : path.fields[static_cast<std::size_t>(t)].values()) {
      acc += x;
    }
    phi[static_cast<std::size_t>(t)] =
        acc / path.fields[static_cast<std::size_t>(t)].values().size();
  }
  double mean = 0.0;
  for (double x : phi) mean += x;
  mean /= n;
  double var = 0.0;
  for (double x : phi) var += (x - mean) * (x - mean);
  var /= n;

  MixingDecayResult res;
  if (var <= 1e-14) {
    res.status = MixingDecayResult::Status::Degenerate;
    return res;
  }

  res.autocorr.resize(static_cast<std::size_t>(max_lag));
  for (int lag = 1; lag <= max_lag; ++lag) {
    double acc = 0.0;
    for (int t = 0; t + lag < n; ++t) {
      acc += (phi[static_cast<std::size_t>(t)] - mean) *
             (phi[static_cast<std::size_t>(t + lag)] - mean);
    }
    res.autocorr[static_cast<std::size_t>(lag - 1)] = acc / (n * var);
  }

  // Least-squares fit of log|acf| against lag, restricted to lags where
  // the autocorrelation is distinguishable from noise.
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0, syy = 0.0;
  int used = 0;
  for (int lag = 1; lag <= max_lag; ++lag) {
    const double a = std::fabs(res.autocorr[static_cast<std::size_t>(lag - 1)]);
    if (a <= 0.02) continue;
    const double x = lag, y = std::log(a);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    syy += y * y;
    ++used;
  }
  res.lags_used = used;
  if (used < 2) {
    res.status = MixingDecayResult::Status::TooFastToFit;
    return res;
  }
  const double denom = used * sxx - sx * sx;
  const double slope = (used * sxy - sx * sy) / denom;
  res.rate = -slope;
  const double ss_tot = syy - sy * sy / used;
  const double intercept = (sy - slope * sx) / used;
  double ss_res = 0.0;
  for (int lag = 1; lag <= max_lag; ++lag) {
    const double a = std::fabs(res.autocorr[static_cast<std::size_t>(lag - 1)]);
    if (a <= 0.02) continue;
    const double e = std::log(a) - (intercept + slope * lag);
    ss_res += e * e;
  }
  res.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
  res.status = MixingDecayResult::Status::Fitted;
  return res;
}

} // namespace nfar
