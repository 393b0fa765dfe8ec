#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "riwm/theory.hpp"

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

MeasurementSettings random_settings(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> angle(0.0, M_PI);
  MeasurementSettings s;
  s.alpha1 = angle(rng);
  s.alpha2 = angle(rng);
  s.beta1 = angle(rng);
  s.beta2 = angle(rng);
  return s;
}

const double kDeltaGrid[9] = {-M_PI / 2, -3 * M_PI / 8, -M_PI / 4, -M_PI / 8, 0.0,
                              M_PI / 8,  M_PI / 4,      3 * M_PI / 8, M_PI / 2};

}  // namespace

TEST_CASE("paper settings") {
  const MeasurementSettings s = MeasurementSettings::paper_default(0.1);
  CHECK(s.alpha1 == 0.0);
  CHECK(s.alpha2 == doctest::Approx(M_PI / 4 + 0.1));
  CHECK(s.beta1 == doctest::Approx(M_PI / 8));
  CHECK(s.beta2 == doctest::Approx(3 * M_PI / 8 + 0.1));
  CHECK(s.coupling(Party::A, 1) == doctest::Approx(0.2 * 2.5));
  s.validate();
  CHECK(s.weak_regime());

  MeasurementSettings strong = MeasurementSettings::paper_default(0.0, 0.6);
  CHECK_THROWS(strong.validate());
  CHECK_FALSE(MeasurementSettings::paper_default(0.0, 0.3).weak_regime());
}

TEST_CASE("singlet correlator closed form") {
  const PolarizationState psi = PolarizationState::singlet();
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> angle(0.0, 2 * M_PI);
  for (int k = 0; k < 50; ++k) {
    const double a = angle(rng), b = angle(rng);
    const double expected = 0.5 * std::sin(a - b) * std::sin(a - b);
    CHECK(correlator(psi, a, b) == doctest::Approx(expected).epsilon(1e-10));
  }
}

TEST_CASE("CHSH closed form on the singlet and Werner scaling") {
  for (double d : kDeltaGrid) {
    const MeasurementSettings s = MeasurementSettings::paper_default(d);
    const double expected = -std::sqrt(2.0) * (1.0 + std::cos(2 * d));
    CHECK(chsh_theory(PolarizationState::singlet(), s) ==
          doctest::Approx(expected).epsilon(1e-10));
    for (double v : {0.3, 0.983}) {
      CHECK(chsh_theory(PolarizationState::werner(v), s) ==
            doctest::Approx(v * expected).epsilon(1e-10));
    }
  }
  // Tsirelson saturation at delta = 0
  CHECK(chsh_theory(PolarizationState::singlet(), MeasurementSettings::paper_default(0.0)) ==
        doctest::Approx(-2.0 * std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("operative B equals the dichotomic CHSH combination") {
  std::mt19937_64 rng(17);
  for (int k = 0; k < 500; ++k) {
    const PolarizationState rho = random_state(rng);
    const MeasurementSettings s = random_settings(rng);
    auto dichotomic = [&](double a, double b) {
      const Matrix2 da = 2.0 * projector(a) - identity2();
      const Matrix2 db = 2.0 * projector(b) - identity2();
      return expectation(rho.rho, tensor_product(da, db));
    };
    const double b_ref = dichotomic(s.alpha1, s.beta1) - dichotomic(s.alpha1, s.beta2) +
                         dichotomic(s.alpha2, s.beta1) + dichotomic(s.alpha2, s.beta2);
    CHECK(chsh_theory(rho, s) == doctest::Approx(b_ref).epsilon(1e-9));
  }
}

TEST_CASE("r^Q, Delta and RI closed forms at the paper settings") {
  const PolarizationState psi = PolarizationState::singlet();
  for (double d : kDeltaGrid) {
    const MeasurementSettings s = MeasurementSettings::paper_default(d);
    CHECK(rq_theory(psi, s.alpha1, s.alpha2) ==
          doctest::Approx(-std::sin(2 * d) / 4.0).epsilon(1e-10));
    const auto dd = delta_theory(psi, s);
    REQUIRE(dd.has_value());
    CHECK(*dd == doctest::Approx(-std::sin(2 * d) / 2.0).epsilon(1e-10));
    const auto ri = ri_theory(psi, s);
    REQUIRE(ri.has_value());
    CHECK(*ri == doctest::Approx(std::cos(d) * std::cos(d)).epsilon(1e-10));
  }
}

TEST_CASE("Werner RI curve") {
  const double v = 0.983;
  const PolarizationState w = PolarizationState::werner(v);
  for (double d : kDeltaGrid) {
    const auto ri = ri_theory(w, MeasurementSettings::paper_default(d));
    REQUIRE(ri.has_value());
    const double c = std::cos(d), sn = std::sin(d);
    CHECK(*ri == doctest::Approx(v * v * c * c * c * c + sn * sn * c * c).epsilon(1e-10));
  }
}

TEST_CASE("Tsirelson and RI bounds hold for random states") {
  std::mt19937_64 rng(29);
  for (int k = 0; k < 2000; ++k) {
    const PolarizationState rho = random_state(rng);
    const MeasurementSettings s = random_settings(rng);
    CHECK(std::abs(chsh_theory(rho, s)) <= 2.0 * std::sqrt(2.0) + 1e-9);
    const auto ri = ri_theory(rho, s);
    if (ri) {
      CHECK(*ri >= -1e-9);
      CHECK(*ri <= 1.0 + 1e-9);
    }
  }
}

TEST_CASE("covariance report: positivity and the inequality chain") {
  std::mt19937_64 rng(31);
  for (int k = 0; k < 1000; ++k) {
    const PolarizationState rho = random_state(rng);
    const MeasurementSettings s = random_settings(rng);
    const CovarianceReport rep = covariance_report(rho, s);
    for (double e : rep.min_eigenvalues) CHECK(e >= -1e-9);
    if (!rep.defined) continue;
    REQUIRE(rep.chain.size() == 4);
    for (const auto& c : rep.chain) CHECK(c.holds(1e-6));
    // Pearson coefficients are bona fide correlations
    for (int j = 0; j < 2; ++j)
      for (int i = 0; i < 2; ++i) CHECK(std::abs(rep.pearson(j, i)) <= 1.0 + 1e-9);
  }
}

TEST_CASE("chain saturates on the singlet at delta = 0") {
  const CovarianceReport rep =
      covariance_report(PolarizationState::singlet(), MeasurementSettings::paper_default(0.0));
  REQUIRE(rep.defined);
  CHECK(rep.rq == doctest::Approx(0.0).epsilon(1e-12));
  // |B| = 2 sqrt(2) meets the bound sqrt(2)(sqrt(1+r) + sqrt(1-r)) with r = 0
  CHECK(rep.chain[2].lhs == doctest::Approx(rep.chain[2].rhs).epsilon(1e-10));
  // RI = 1 exactly
  CHECK(rep.chain[3].lhs == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("degenerate Alice variance is reported, not divided by") {
  // H on Alice with alpha1 = 0 has zero variance
  const Matrix2 h = (Matrix2() << 1, 0, 0, 0).finished();
  const PolarizationState rho{tensor_product(h, (0.5 * identity2()).eval()),
                              std::numeric_limits<double>::quiet_NaN()};
  MeasurementSettings s = MeasurementSettings::paper_default(0.0);
  CHECK_FALSE(delta_theory(rho, s).has_value());
  CHECK_FALSE(ri_theory(rho, s).has_value());
  CHECK_FALSE(covariance_report(rho, s).defined);
}

TEST_CASE("decoherence parameter and purity expansion") {
  CHECK(decoherence_omega(0.0, 2.5) == 0.0);
  CHECK(decoherence_omega(0.5, 2.5) ==
        doctest::Approx(1.0 - std::exp(-0.25 / (8.0 * 6.25))).epsilon(1e-12));
  // monotone in g
  CHECK(decoherence_omega(0.5, 2.5) > decoherence_omega(0.25, 2.5));

  const MeasurementSettings s = MeasurementSettings::paper_default(0.0);
  CHECK(purity_expansion(0.0, s.alpha1, s.alpha2, s.beta1, s.beta2) == 1.0);
  CHECK_THROWS(purity_expansion(1.0, 0, 0, 0, 0));
  CHECK_THROWS(purity_expansion(-0.1, 0, 0, 0, 0));
}
