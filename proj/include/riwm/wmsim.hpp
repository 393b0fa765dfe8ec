#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "riwm/qcore.hpp"
#include "riwm/theory.hpp"

// Closed-form simulation of the four weak von Neumann couplings on Gaussian
// pointer modes, exact pixel-grid probability tensors, seeded multinomial
// coincidence generation and exact output-state decoherence.
//
// Coordinate convention: axis 0 = x_A, 1 = y_A, 2 = x_B, 3 = y_B. Stage 1
// couples to x, stage 2 to y of the respective party.

namespace riwm {

/// Square pixel grid applied identically to all four detector axes.
struct PixelGrid {
  int n_pixels = 24;
  double pitch = 1.0;
  double origin = 0.0;  // physical coordinate of the low edge of pixel 0

  double span() const { return n_pixels * pitch; }
  double center() const { return origin + 0.5 * span(); }
  double edge(int i) const { return origin + i * pitch; }
  double bin_center(int i) const { return origin + (i + 0.5) * pitch; }
  std::size_t cells() const {
    const std::size_t n = static_cast<std::size_t>(n_pixels);
    return n * n * n * n;
  }
  std::size_t index(int xa, int ya, int xb, int yb) const {
    const std::size_t n = static_cast<std::size_t>(n_pixels);
    return ((static_cast<std::size_t>(xa) * n + ya) * n + xb) * n + yb;
  }

  /// Throws unless n_pixels >= 2 and pitch > 0.
  void validate() const;
};

/// One coherent branch: complex amplitude, polarization basis indices in the
/// current A and B frames, and the accumulated pointer displacements.
struct Branch {
  Complex amp;
  int pol_a = 0;
  int pol_b = 0;
  Eigen::Vector4d shift = Eigen::Vector4d::Zero();
};

/// Coherent superposition of polarization branches entangled with displaced
/// Gaussian pointers, written in per-party orthonormal polarization frames.
struct BranchState {
  std::vector<Branch> branches;
  Matrix2 frame_a = Matrix2::Identity();  // columns = basis states in the lab {H, V} basis
  Matrix2 frame_b = Matrix2::Identity();
  double sigma = 2.5;
  unsigned applied_mask = 0;  // bit per (party, stage) coupling already applied

  double norm_squared() const;
  /// Lab-basis two-qubit polarization vector of one branch.
  Eigen::Vector4cd polarization_vector(const Branch& b) const;
};

struct WeightedBranchState {
  double weight;
  BranchState state;
};

/// Single-branch product state |pol_a pol_b> (0 = H, 1 = V) with unshifted
/// pointers; used for the calibration acquisitions.
BranchState product_branch_state(int pol_a, int pol_b, double sigma);

/// Bell states in branch form: 0 = psi-, 1 = psi+, 2 = phi+, 3 = phi-.
BranchState bell_branch_state(int which, double sigma);

/// Werner mixture V |psi-><psi-| + (1 - V) I/4 as at most four weighted pure
/// Bell components. Throws for visibility outside [0, 1].
std::vector<WeightedBranchState> initial_state(double visibility, double sigma);

/// Applies exp(-i g Pi(theta) P_zeta) for the given party and stage: the
/// Pi(theta) eigencomponent gains +g on the stage coordinate, the orthogonal
/// one is unshifted, and the party frame becomes the Pi(theta) eigenframe.
/// Throws on duplicate (party, stage) application or g < 0.
BranchState apply_weak_coupling(const BranchState& state, Party party, int stage,
                                double theta, double g);

/// Rigid translation of every component by the given per-axis offsets
/// (models the beam deviation induced by rotated wave plates).
std::vector<WeightedBranchState> inject_hwp_shift(std::vector<WeightedBranchState> components,
                                                  const Eigen::Vector4d& shifts);

/// Exact joint detection probabilities on the pixel grid.
struct ProbabilityTensor {
  std::vector<double> p;  // grid.cells() entries, indexed by PixelGrid::index
  PixelGrid grid;
  double truncated_mass = 0.0;

  double sum() const;
  /// First moment of one axis, in physical units of bin centers.
  double moment1(int axis) const;
};

/// Assembles the probability tensor from branch-pair interference terms with
/// closed-form displaced-Gaussian bin integrals. The beam is centered at
/// grid.center(). Throws when the grid coverage guard is violated (span below
/// 4 sigma around the beam center, or truncated mass above 1e-4).
ProbabilityTensor pixel_distribution(const std::vector<WeightedBranchState>& components,
                                     const PixelGrid& grid);

/// Coincidence counts N(X_A, Y_A, X_B, Y_B).
struct CoincidenceTensor {
  std::vector<std::int64_t> counts;
  PixelGrid grid;
  std::int64_t total = 0;
  std::map<std::string, std::string> meta;  // settings passthrough for the file header

  void save(std::ostream& os) const;
  void save_file(const std::string& path) const;
  static CoincidenceTensor load(std::istream& is);
  static CoincidenceTensor load_file(const std::string& path);
};

/// Deterministic multinomial draw of n_events cells. Throws for n_events < 0.
CoincidenceTensor sample_coincidences(const ProbabilityTensor& probs,
                                      std::int64_t n_events, std::uint64_t seed);

/// Deterministic multinomial thinning into k disjoint subsets summing to the
/// input tensor; distributionally equivalent to chronological subsets of an
/// i.i.d. acquisition.
std::vector<CoincidenceTensor> split_subsets(const CoincidenceTensor& tensor, int k,
                                             std::uint64_t seed);

struct ReducedState {
  PolarizationState state;
  double purity;
};

/// Exact partial trace over the four pointer coordinates, using the Gaussian
/// overlap <f_d | f_d'> = exp(-(d - d')^2 / 8 sigma^2) per coordinate.
ReducedState reduced_polarization_state(const std::vector<WeightedBranchState>& components);

/// Exact continuous (pre-pixel) pointer moments <zeta_axis> and
/// <zeta_a zeta_b>, for oracle tests of the weak-correlator relations.
double pointer_moment1(const std::vector<WeightedBranchState>& components, int axis);
double pointer_moment2(const std::vector<WeightedBranchState>& components, int axis_a,
                       int axis_b);

/// Convenience: apply the four couplings of a settings block to every
/// component (A then B ordering; the operators commute across parties).
std::vector<WeightedBranchState> apply_protocol_couplings(
    std::vector<WeightedBranchState> components, const MeasurementSettings& s);

}  // namespace riwm
