#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nfar/grid.hpp"
#include "nfar/model.hpp"

namespace nfar {

/// Quadrature discretization of the noise covariance operator on an S x S
/// grid: matrix entries K((i-k)/S, (j-l)/S) / S^2, acting on flattened
/// fields by plain matrix-vector product. Eigenvectors are normalized in
/// the quadrature inner product <f,g> = (1/S^2) sum f g.
///
/// Everything here is numerical evidence at grid resolution S, not a
/// statement about the continuum operator.
struct CovarianceOperatorDisc {
  GridSpec grid;
  Eigen::MatrixXd matrix;    // S^2 x S^2, symmetric
  Eigen::VectorXd eigvals;   // nonincreasing
  Eigen::MatrixXd eigvecs;   // columns, quadrature-orthonormal
  double trace = 0.0;

  double lambda_max() const { return eigvals(0); }
};

/// Builds and eigendecomposes the discretized covariance. S is capped at
/// 40 (the dense matrix is S^2 x S^2).
CovarianceOperatorDisc discretize_covariance(const StationaryKernel& k,
                                             GridSpec grid);

/// Drift constants for the chain: rho = c1 * lambda_max must be < 1 for
/// the geometric drift bound to hold, kappa = c2 * lambda_max +
/// sqrt(trace).
struct DriftReport {
  double c1 = 0.0;
  double c2 = 0.0;
  double rho = 0.0;
  double kappa = 0.0;
  double lambda_max = 0.0;
  double trace = 0.0;
  double tau_sup = 0.0;       // grid-search max of |tau|
  bool tau_bounded = false;   // max attained in the interior
  bool condition_passes = false; // rho < 1
  std::string note;
};

/// Bounds the composition factor m0(x) = amplitude * tau(x(.)) by grid
/// search of |tau| over [-20, 20] (step 1e-3). A bounded nonlinearity
/// gives c1 = 0, c2 = amplitude * sup|tau|; a linearly growing one (max
/// at the domain edge) is fitted as c1 = amplitude * slope, c2 =
/// amplitude * intercept. Failure to satisfy rho < 1 is reported in the
/// verdict, not thrown.
DriftReport check_assumption_m2(const NfarModel& m,
                                const CovarianceOperatorDisc& q);

/// Diagnostic for the eigen-expansion sufficient condition: coefficients
/// f_ij of the linear kernel against the covariance eigenfunctions, the
/// partial sums s_m = sum_{i,j <= m} f_ij^2 / lambda_i^2, and a Parseval
/// bound on sup_x sum_i tau_i(x)^2.
struct ExampleCondReport {
  std::vector<double> partial_sums; // s_1 .. s_m
  double tau_sup_sq = 0.0;          // ||tau||_inf^2 bound
  double diag_energy = 0.0;         // sum_i f_ii^2
  double offdiag_energy = 0.0;      // sum_{i != j} f_ij^2
  int terms_used = 0;               // after near-zero eigenvalue truncation
  bool truncated = false;
  bool diverges = false;            // partial sums grow linearly in m
  std::string note;
};

/// Runs the diagnostic for the model's own linear kernel
/// f(u,v) = amplitude * K(u - v).
ExampleCondReport check_example_condition(const NfarModel& m,
                                          const CovarianceOperatorDisc& q,
                                          int m_terms);

/// Same diagnostic for an arbitrary kernel, supplied as its S^2 x S^2
/// value matrix f(u_r, v_c).
ExampleCondReport check_example_condition_values(
    const Eigen::MatrixXd& f_values, const CovarianceOperatorDisc& q,
    int m_terms, double tau_sup_sq);

struct DriftTestResult {
  bool pass = false;
  bool valid_rho = false;   // rho in [0,1); a rho >= 1 pass is vacuous
  double mean_gap = 0.0;    // mean_t [ ||X_{t+1}|| - rho ||X_t|| ]
  double stderr_gap = 0.0;
  double margin = 0.0;      // kappa + 3*stderr - mean_gap
  int pairs = 0;
};

/// Empirical check of the one-step drift bound
/// mean_t [ ||X_{t+1}||_H - rho ||X_t||_H ] <= kappa + 3 * stderr
/// on a simulated path (length >= 500 required).
DriftTestResult empirical_drift_test(const NfarPath& path,
                                     const DriftReport& report);

struct MixingDecayResult {
  enum class Status { Fitted, TooFastToFit, Degenerate };
  Status status = Status::Degenerate;
  double rate = 0.0; // fitted c in |acf(j)| ~ exp(-c j)
  double r2 = 0.0;
  std::vector<double> autocorr; // lags 1..max_lag
  int lags_used = 0;
};

/// Autocorrelation decay of the scalar functional phi(Z_t) = spatial
/// mean: fits log|acf(j)| ~ -c*j over lags with |acf| > 0.02. This is a
/// mixing proxy, not an estimate of the beta coefficient itself (which is
/// a supremum over sigma-algebras). Path length must be >= 20 * max_lag.
MixingDecayResult mixing_decay_estimate(const NfarPath& path, int max_lag);

} // namespace nfar
