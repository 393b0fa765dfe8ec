#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "riwm/qcore.hpp"

// Exact quantum oracle for every quantity the simulated experiment estimates:
// projective correlators, the Bell-CHSH parameter, the local-correlation term
// Delta, the RI quantity, the covariance-matrix inequality chain, and the
// decoherence purity expansion.

namespace riwm {

enum class Party { A, B };

/// Measurement angles, weak-coupling lengths and pointer width for the
/// four-coupling protocol. Lengths (g, sigma) share one unit.
struct MeasurementSettings {
  double alpha1 = 0.0;
  double alpha2 = 0.0;
  double beta1 = 0.0;
  double beta2 = 0.0;
  double delta = 0.0;
  // coupling length per (party, stage); stage 1 shifts x, stage 2 shifts y
  std::array<std::array<double, 2>, 2> g{};  // [party][stage-1]
  double sigma = 2.5;

  double coupling(Party k, int stage) const { return g[static_cast<int>(k)][stage - 1]; }

  /// alpha1 = 0, alpha2 = pi/4 + delta, beta1 = pi/8, beta2 = 3pi/8 + delta,
  /// all couplings equal to g_over_sigma * sigma.
  static MeasurementSettings paper_default(double delta, double g_over_sigma = 0.2,
                                           double sigma = 2.5);

  /// Throws when any g/sigma exceeds 0.5 (simulator validity guard).
  void validate() const;
  /// True when all couplings are inside the weak regime g/sigma <= 0.2.
  bool weak_regime() const;
};

/// Tr[rho Pi(alpha) (x) Pi(beta)], in [0, 1].
double correlator(const PolarizationState& rho, double alpha, double beta);

/// Bell-CHSH parameter in its projector form
///   B = 4 (P11 - P12 + P21 + P22 - <Pi(alpha2)>_A - <Pi(beta1)>_B) + 2,
/// identical to <A1B1> - <A1B2> + <A2B1> + <A2B2> for dichotomic
/// A_i = 2 Pi(alpha_i) - 1, B_j = 2 Pi(beta_j) - 1.
double chsh_theory(const PolarizationState& rho, const MeasurementSettings& s);

/// Symmetrized covariance <{Pi(a1), Pi(a2)}>/2 - <Pi(a1)><Pi(a2)> on Alice's
/// reduced state.
double rq_theory(const PolarizationState& rho, double alpha1, double alpha2);

/// Delta = r^Q / (2 Delta_{A2} Delta_{A1}); nullopt when an Alice variance is
/// degenerate (< 1e-8).
std::optional<double> delta_theory(const PolarizationState& rho,
                                   const MeasurementSettings& s);

/// RI = |B / 2 sqrt(2)|^2 + Delta^2; nullopt propagates Delta degeneracy.
std::optional<double> ri_theory(const PolarizationState& rho,
                                const MeasurementSettings& s);

/// Covariance matrices and the derivation-chain inequalities evaluated
/// exactly on a state. Observable order in lambda_full is (B1, B2, A1, A2).
struct CovarianceReport {
  bool defined = false;  // false when an Alice variance is degenerate
  Eigen::Matrix4d lambda_full;                  // full symmetrized covariance
  std::array<Eigen::Matrix3d, 2> lambda_sub;    // (B_j, A_1, A_2) for j = 1, 2
  double rq = 0.0;
  Eigen::Matrix2d pearson;  // pearson(j, i) between B_{j+1} and A_{i+1}
  std::vector<double> min_eigenvalues;  // lambda_full then the two submatrices

  struct Check {
    std::string name;
    double lhs;
    double rhs;
    bool holds(double tol = 1e-9) const { return lhs <= rhs + tol; }
  };
  std::vector<Check> chain;  // submatrix bounds (per Bob setting), CHSH bound, RI bound
};

CovarianceReport covariance_report(const PolarizationState& rho,
                                   const MeasurementSettings& s);

/// Decoherence parameter Omega = 1 - exp(-g^2 / 8 sigma^2).
double decoherence_omega(double g, double sigma);

/// Truncated series for the output polarization purity of a pure singlet
/// after the four couplings:
///   1 - 4 Omega + (Omega^2 / 2) (22 + six cos[4 (angle difference)] terms).
double purity_expansion(double omega, double alpha1, double alpha2, double beta1,
                        double beta2);

}  // namespace riwm
