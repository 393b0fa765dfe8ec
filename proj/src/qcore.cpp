#include "riwm/qcore.hpp"

#include <cmath>

namespace riwm {

Matrix2 identity2() { return Matrix2::Identity(); }

Matrix2 pauli_z() {
  Matrix2 m;
  m << 1, 0, 0, -1;
  return m;
}

Matrix2 pauli_x() {
  Matrix2 m;
  m << 0, 1, 1, 0;
  return m;
}

Matrix2 pauli_direction(double theta) {
  return std::cos(2 * theta) * pauli_z() + std::sin(2 * theta) * pauli_x();
}

Matrix2 projector(double theta) {
  return 0.5 * (identity2() + pauli_direction(theta));
}

Matrix2 partial_trace(const MatrixX& rho, Subsystem keep) {
  if (rho.rows() != 4 || rho.cols() != 4)
    throw std::invalid_argument("partial_trace: expected a 4x4 two-qubit operator");
  Matrix2 out = Matrix2::Zero();
  // index (i, j) with i = 2*iA + iB
  for (int p = 0; p < 2; ++p)
    for (int q = 0; q < 2; ++q)
      for (int t = 0; t < 2; ++t) {
        if (keep == Subsystem::A)
          out(p, q) += rho(2 * p + t, 2 * q + t);
        else
          out(p, q) += rho(2 * t + p, 2 * t + q);
      }
  return out;
}

double expectation(const MatrixX& rho, const MatrixX& obs) {
  if (rho.rows() != obs.rows() || rho.cols() != obs.cols() || rho.rows() != rho.cols())
    throw std::invalid_argument("expectation: dimension mismatch");
  const Complex tr = (rho * obs).trace();
  if (std::abs(tr.imag()) > 1e-10)
    throw std::runtime_error("expectation: imaginary residue above 1e-10, observable not Hermitian?");
  return tr.real();
}

bool is_hermitian(const MatrixX& m, double tol) {
  if (m.rows() != m.cols()) return false;
  return (m - m.adjoint()).cwiseAbs().maxCoeff() <= tol;
}

double min_eigenvalue(const MatrixX& m) {
  const MatrixX h = 0.5 * (m + m.adjoint());
  Eigen::SelfAdjointEigenSolver<MatrixX> es(h, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

void PolarizationState::validate() const {
  if (!is_hermitian(rho)) throw std::invalid_argument("PolarizationState: rho not Hermitian");
  if (std::abs(rho.trace().real() - 1.0) > kHermitianTol)
    throw std::invalid_argument("PolarizationState: trace != 1");
  if (min_eigenvalue(rho) < -kPsdTol)
    throw std::invalid_argument("PolarizationState: negative eigenvalue");
  if (!std::isnan(visibility)) {
    if (visibility < 0.0 || visibility > 1.0)
      throw std::invalid_argument("PolarizationState: visibility outside [0, 1]");
    if (visibility == 1.0 && std::abs(purity() - 1.0) > kHermitianTol)
      throw std::invalid_argument("PolarizationState: visibility 1 requires purity 1");
  }
}

double PolarizationState::purity() const { return (rho * rho).trace().real(); }

Eigen::Vector4cd singlet_vector() {
  Eigen::Vector4cd v = Eigen::Vector4cd::Zero();
  v(1) = 1.0 / std::sqrt(2.0);
  v(2) = -1.0 / std::sqrt(2.0);
  return v;
}

PolarizationState PolarizationState::singlet() {
  const Eigen::Vector4cd v = singlet_vector();
  return {v * v.adjoint(), 1.0};
}

PolarizationState PolarizationState::werner(double visibility) {
  if (visibility < 0.0 || visibility > 1.0)
    throw std::invalid_argument("werner: visibility outside [0, 1]");
  const Eigen::Vector4cd v = singlet_vector();
  Matrix4 rho = visibility * (v * v.adjoint()).eval() +
                (1.0 - visibility) * 0.25 * Matrix4::Identity();
  return {rho, visibility};
}

}  // namespace riwm
