#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "riwm/estimation.hpp"

// The six-acquisition measurement protocol: calibration, main acquisition,
// crystals-out shift references, estimation and file artifacts, plus the
// delta sweep and the self-verification battery.

namespace riwm {

struct ExperimentConfig {
  double visibility = 0.983;
  double sigma = 2.5;          // pointer width, in pitch units
  double g_over_sigma = 0.2;   // all four couplings
  int n_pixels = 24;
  double pitch = 1.0;
  std::vector<double> delta_list;  // defaults to the nine protocol points
  std::int64_t n_events = 1000000;  // per acquisition
  std::uint64_t seed = 20240917u;
  Eigen::Vector4d injected_hwp_shifts = Eigen::Vector4d::Zero();
  std::string out_dir = "out";

  ExperimentConfig();

  PixelGrid grid() const;
  MeasurementSettings settings(double delta) const;

  /// Flat key-value text file (lengths in pitch units, angles in radians);
  /// unknown keys are an error.
  static ExperimentConfig from_file(const std::string& path);
  void validate() const;
};

/// Deterministic per-acquisition seed derived from the master seed and the
/// acquisition name (e.g. "calib-HV@+0.000000").
std::uint64_t substream_seed(std::uint64_t master, const std::string& name);

/// Theory-oracle values emitted next to each estimate row.
struct TheoryRecord {
  double delta = 0.0;
  double B = 0.0;
  double Delta = 0.0;
  double RI = 0.0;
  double purity_out = 0.0;  // reduced polarization purity after the couplings
};

TheoryRecord theory_record(const ExperimentConfig& cfg, double delta);

struct RunResult {
  EstimateSet estimates;
  TheoryRecord theory;
  CalibrationRecord calibration;
  std::string run_dir;
};

/// Runs the six acquisitions for one delta, estimates, and writes the tensors,
/// the calibration record, estimates.json and theory.json under
/// out_dir/delta_<value>/. Partial outputs are removed on failure.
RunResult run_protocol(const ExperimentConfig& cfg, double delta);

/// Fixed header of tables.csv, guarded by a golden test.
extern const char* const kTableHeader;
extern const char* const kCurveHeader;

struct SweepResult {
  std::vector<RunResult> rows;
  std::string table_path;
  std::string curve_path;
};

/// One run_protocol per delta in the list; writes tables.csv and a dense
/// theory_curve.csv into out_dir.
SweepResult sweep(const ExperimentConfig& cfg);

struct VerifyOptions {
  int n_states = 10000;
  std::uint64_t seed = 7u;
  double tol = 1e-9;
};

struct VerifyResult {
  bool passed = false;
  std::string report;
};

/// Randomized positivity/inequality-chain battery plus the decoherence
/// purity-expansion ratio test.
VerifyResult verify(const VerifyOptions& opt);

}  // namespace riwm
