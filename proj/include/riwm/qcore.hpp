#pragma once

#include <Eigen/Dense>
#include <complex>
#include <stdexcept>

// Minimal exact linear-algebra kernel for two-qubit polarization states and
// real-Bloch-plane polarization observables. All values are immutable after
// construction and all operations are pure functions.

namespace riwm {

using Complex = std::complex<double>;
using Matrix2 = Eigen::Matrix2cd;
using Matrix4 = Eigen::Matrix4cd;
using MatrixX = Eigen::MatrixXcd;

inline constexpr double kHermitianTol = 1e-12;
inline constexpr double kPsdTol = 1e-10;

enum class Subsystem { A, B };

Matrix2 identity2();
Matrix2 pauli_z();
Matrix2 pauli_x();

/// sigma_z(theta) = cos(2 theta) sigma_z + sin(2 theta) sigma_x.
/// Polarization double-angle convention: period pi, eigenvalues +-1.
Matrix2 pauli_direction(double theta);

/// Pi(theta) = (I + sigma_z(theta)) / 2, rank-1 projector onto the
/// linear-polarization direction theta.
Matrix2 projector(double theta);

/// Kronecker product, A-subsystem slots first.
template <typename DerivedA, typename DerivedB>
MatrixX tensor_product(const Eigen::MatrixBase<DerivedA>& a,
                       const Eigen::MatrixBase<DerivedB>& b) {
  MatrixX out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

/// Partial trace of a 4x4 two-qubit operator down to the kept qubit.
/// Throws std::invalid_argument for non-4x4 input.
Matrix2 partial_trace(const MatrixX& rho, Subsystem keep);

/// Tr(rho obs), checked real. Throws if the imaginary residue exceeds 1e-10
/// (which signals a non-Hermitian observable).
double expectation(const MatrixX& rho, const MatrixX& obs);

bool is_hermitian(const MatrixX& m, double tol = kHermitianTol);

/// Smallest eigenvalue of the Hermitian part of m.
double min_eigenvalue(const MatrixX& m);

/// Two-qubit polarization density matrix, A (x) B ordering with basis {H, V}
/// per qubit. visibility records the Werner weight of the source model; it is
/// NaN when the state does not come from the Werner family.
struct PolarizationState {
  Matrix4 rho;
  double visibility;

  /// Checks Hermiticity, unit trace, positivity and (for visibility 1)
  /// purity. Throws std::invalid_argument on violation.
  void validate() const;

  double purity() const;

  static PolarizationState singlet();
  /// V |psi-><psi-| + (1 - V) I/4. Throws for V outside [0, 1].
  static PolarizationState werner(double visibility);
};

/// |psi-> = (|HV> - |VH>)/sqrt(2) as a 4-vector in the {HH,HV,VH,VV} basis.
Eigen::Vector4cd singlet_vector();

}  // namespace riwm
