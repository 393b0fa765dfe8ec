#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "riwm/qcore.hpp"

using namespace riwm;

namespace {

PolarizationState random_state(std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix4 g;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) g(i, j) = Complex(gauss(rng), gauss(rng));
  Matrix4 rho = g * g.adjoint();
  rho /= rho.trace().real();
  return {rho, std::numeric_limits<double>::quiet_NaN()};
}

}  // namespace

TEST_CASE("projectors at the cardinal angles") {
  CHECK((projector(0.0) - (Matrix2() << 1, 0, 0, 0).finished()).norm() == doctest::Approx(0.0));
  CHECK((projector(M_PI / 2) - (Matrix2() << 0, 0, 0, 1).finished()).norm() ==
        doctest::Approx(0.0).epsilon(1e-12));
  const Matrix2 plus = 0.5 * (identity2() + pauli_x());
  CHECK((projector(M_PI / 4) - plus).norm() < 1e-12);
}

TEST_CASE("projector algebra: completeness, idempotence, pi periodicity") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> angle(0.0, 2 * M_PI);
  for (int k = 0; k < 100; ++k) {
    const double t = angle(rng);
    const Matrix2 p = projector(t);
    CHECK((p + projector(t + M_PI / 2) - identity2()).norm() < 1e-12);
    CHECK((p * p - p).norm() < 1e-12);
    CHECK((p - projector(t + M_PI)).norm() < 1e-12);
    const Matrix2 s = pauli_direction(t);
    CHECK((s * s - identity2()).norm() < 1e-12);
    CHECK(is_hermitian(p));
  }
}

TEST_CASE("tensor product and partial trace are mutually consistent") {
  std::mt19937_64 rng(23);
  for (int k = 0; k < 50; ++k) {
    // build a product state from two single-qubit density matrices
    std::normal_distribution<double> gauss(0.0, 1.0);
    Matrix2 ga, gb;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) {
        ga(i, j) = Complex(gauss(rng), gauss(rng));
        gb(i, j) = Complex(gauss(rng), gauss(rng));
      }
    Matrix2 ra = ga * ga.adjoint();
    ra /= ra.trace().real();
    Matrix2 rb = gb * gb.adjoint();
    rb /= rb.trace().real();
    const Matrix4 rho = tensor_product(ra, rb);
    CHECK((partial_trace(rho, Subsystem::A) - ra).norm() < 1e-12);
    CHECK((partial_trace(rho, Subsystem::B) - rb).norm() < 1e-12);
  }
}

TEST_CASE("partial traces of random states are valid single-qubit states") {
  std::mt19937_64 rng(37);
  for (int k = 0; k < 200; ++k) {
    const PolarizationState rho = random_state(rng);
    for (Subsystem sub : {Subsystem::A, Subsystem::B}) {
      const Matrix2 red = partial_trace(rho.rho, sub);
      CHECK(is_hermitian(red, 1e-10));
      CHECK(red.trace().real() == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(min_eigenvalue(red) >= -1e-10);
    }
  }
}

TEST_CASE("singlet state") {
  const PolarizationState psi = PolarizationState::singlet();
  psi.validate();
  CHECK(psi.purity() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK((partial_trace(psi.rho, Subsystem::A) - 0.5 * identity2()).norm() < 1e-12);
  CHECK((partial_trace(psi.rho, Subsystem::B) - 0.5 * identity2()).norm() < 1e-12);
  // antisymmetry: <HH|psi> = <VV|psi> = 0
  CHECK(std::abs(psi.rho(0, 0)) < 1e-15);
  CHECK(std::abs(psi.rho(3, 3)) < 1e-15);
}

TEST_CASE("Werner family") {
  for (double v : {0.0, 0.3, 0.983, 1.0}) {
    const PolarizationState w = PolarizationState::werner(v);
    w.validate();
    CHECK(w.purity() == doctest::Approx((1.0 + 3.0 * v * v) / 4.0).epsilon(1e-12));
  }
  CHECK((PolarizationState::werner(0.0).rho - 0.25 * Matrix4::Identity()).norm() < 1e-12);
  CHECK_THROWS(PolarizationState::werner(1.2));
  CHECK_THROWS(PolarizationState::werner(-0.1));
}

TEST_CASE("expectation guards") {
  const PolarizationState psi = PolarizationState::singlet();
  CHECK(expectation(psi.rho, Matrix4::Identity()) == doctest::Approx(1.0));
  Matrix4 bad = Matrix4::Zero();
  bad(1, 2) = Complex(0.0, 1.0);  // not Hermitian; trace picks up an imaginary part
  bad(2, 1) = Complex(0.0, 1.0);  // on the singlet coherences
  CHECK_THROWS(expectation(psi.rho, bad));
  CHECK_THROWS(expectation(psi.rho, Matrix2::Identity()));
}

TEST_CASE("state validation rejects malformed inputs") {
  PolarizationState s = PolarizationState::singlet();
  s.rho(0, 1) = Complex(0.3, 0.0);
  CHECK_THROWS(s.validate());

  PolarizationState mixed = PolarizationState::werner(0.5);
  mixed.visibility = 1.0;  // claims pure but isn't
  CHECK_THROWS(mixed.validate());

  PolarizationState scaled = PolarizationState::singlet();
  scaled.rho *= 2.0;
  CHECK_THROWS(scaled.validate());
}
