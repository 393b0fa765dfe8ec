#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "riwm/wmsim.hpp"

// Calibration, beam-shift correction, moment extraction and the operative
// B / Delta / RI estimators with their statistical and calibration
// uncertainty budgets.
//
// Axis indexing follows wmsim: 0 = x_A, 1 = y_A, 2 = x_B, 3 = y_B.

namespace riwm {

struct CalibrationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FitResult {
  double center = 0.0;
  double se = 0.0;  // standard error over disjoint subsets
};

/// Subset-averaged centroid of one axis marginal. Throws when the marginal
/// holds fewer than 1000 counts.
FitResult fit_centers(const CoincidenceTensor& tensor, int axis, int n_subsets = 10,
                      std::uint64_t seed = 0x5eed0c11u);

/// Per-axis calibration constants: unperturbed and shifted marginal centers,
/// wave-plate beam shifts, their subset standard errors, and the derived
/// coupling lengths g = center1 - center0.
struct CalibrationRecord {
  std::array<double, 4> center0{};      // zeta~_{K,0}
  std::array<double, 4> center1{};      // zeta~_{K,1}
  std::array<double, 4> hwp_shift{};    // zeta~_{K,shift}
  std::array<double, 4> sigma0{};
  std::array<double, 4> sigma1{};
  std::array<double, 4> sigma_shift{};

  double g(int axis) const { return center1[axis] - center0[axis]; }
};

/// Builds the record from the two separable-input acquisitions (|H_A V_B> and
/// |V_A H_B>, wave plates at calibration zero). H is shifted along x, V along
/// y. Throws CalibrationError when a derived g is negative beyond error
/// (swapped inputs) or below 3x its standard error (coupling unresolved).
CalibrationRecord calibrate(const CoincidenceTensor& acq_hv, const CoincidenceTensor& acq_vh,
                            int n_subsets = 10, std::uint64_t seed = 0x5eed0c11u);

struct ShiftCorrection {
  std::array<double, 4> shift{};
  std::array<double, 4> se{};
};

/// Crystals-out beam-shift measurement: per-axis centroid difference between
/// the measurement-angle run and the mean of the two zero-angle reference
/// runs.
ShiftCorrection shift_correction(const CoincidenceTensor& acq_meas,
                                 const CoincidenceTensor& acq_ref_hv,
                                 const CoincidenceTensor& acq_ref_vh,
                                 int n_subsets = 10, std::uint64_t seed = 0x5eed0c11u);

/// Sample moments of the acquisition in physical length units, together with
/// the covariance matrix of the 9 moment features the estimators consume:
///   u = (x_A, y_A, x_B, y_B, x_A x_B, x_A y_B, y_A x_B, y_A y_B, x_A y_A).
struct MomentSet {
  Eigen::Matrix<double, 9, 1> u = Eigen::Matrix<double, 9, 1>::Zero();
  Eigen::Matrix<double, 9, 9> cov_u = Eigen::Matrix<double, 9, 9>::Zero();  // covariance of the mean u
  Eigen::Matrix4d axis_cov = Eigen::Matrix4d::Zero();  // per-event position (co)variances
  std::int64_t n_events = 0;
  double pitch = 1.0;  // grid pitch, used as the finite-difference length scale

  double mean(int axis) const { return u(axis); }
  double variance(int axis) const { return axis_cov(axis, axis); }
};

/// One pass over the nonzero cells; throws for an empty tensor.
MomentSet moments(const CoincidenceTensor& tensor);

struct QuantityEstimate {
  double value = 0.0;
  double sigma_stat = 0.0;
  double sigma_cal = 0.0;

  double sigma_total() const { return std::sqrt(sigma_stat * sigma_stat + sigma_cal * sigma_cal); }
};

/// Operative Bell-CHSH estimator
///   B = 4 (P11 - P12 + P21 + P22 - <Pi(alpha2)>_A - <Pi(beta1)>_B) + 2
/// from centered, g-normalized pointer moments. Throws when any g is zero.
QuantityEstimate chsh_estimate(const MomentSet& m, const CalibrationRecord& cal);

/// Delta = C_{xy,A} / (2 sqrt(S_{x,A} S_{y,A})); the covariance C_{xy,A} is
/// shift-independent by construction. Throws on non-positive S values.
QuantityEstimate delta_estimate(const MomentSet& m, const CalibrationRecord& cal);

struct EstimateSet {
  QuantityEstimate B, Delta, RI, RI_B, RI_Delta;
};

/// RI = (B / 2 sqrt(2))^2 + Delta^2 with the split RI = RI_B + RI_Delta.
/// Takes the moments and calibration record (rather than the two component
/// estimates) so that sigma_RI can be propagated through the joint dependence
/// of B and Delta on the same moments.
EstimateSet ri_estimate(const MomentSet& m, const CalibrationRecord& cal);

/// EstimateSet as a JSON record with the table-column field names
/// (delta, B, sigma_B, sigma_B_stat, sigma_B_cal, Delta, ..., RI, ...,
/// RI_B, ..., RI_Delta, ...).
std::string estimates_json(const EstimateSet& est, double delta);

}  // namespace riwm
