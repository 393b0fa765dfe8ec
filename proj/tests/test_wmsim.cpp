#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <sstream>

#include "riwm/wmsim.hpp"

using namespace riwm;

namespace {

const PixelGrid kGrid{24, 1.0, 0.0};
constexpr double kSigma = 2.5;

std::vector<WeightedBranchState> coupled_werner(double v, const MeasurementSettings& s) {
  return apply_protocol_couplings(initial_state(v, s.sigma), s);
}

}  // namespace

TEST_CASE("grid geometry") {
  CHECK(kGrid.span() == 24.0);
  CHECK(kGrid.center() == 12.0);
  CHECK(kGrid.bin_center(11) == doctest::Approx(11.5));
  CHECK(kGrid.cells() == 24u * 24u * 24u * 24u);
  CHECK(kGrid.index(0, 0, 0, 1) == 1u);
  CHECK(kGrid.index(1, 0, 0, 0) == 24u * 24u * 24u);
  CHECK_THROWS(PixelGrid{1, 1.0, 0.0}.validate());
  CHECK_THROWS((PixelGrid{24, -1.0, 0.0}).validate());
}

TEST_CASE("initial states are normalized") {
  for (int which = 0; which < 4; ++which)
    CHECK(bell_branch_state(which, kSigma).norm_squared() == doctest::Approx(1.0));
  CHECK_THROWS(bell_branch_state(4, kSigma));
  CHECK(product_branch_state(0, 1, kSigma).norm_squared() == doctest::Approx(1.0));
  CHECK_THROWS(product_branch_state(2, 0, kSigma));

  for (double v : {0.0, 0.5, 0.983, 1.0}) {
    double total = 0.0;
    for (const auto& c : initial_state(v, kSigma)) {
      CHECK(c.state.norm_squared() == doctest::Approx(1.0));
      total += c.weight;
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK_THROWS(initial_state(1.1, kSigma));
}

TEST_CASE("uncoupled reduced state reproduces the Werner matrix") {
  for (double v : {0.0, 0.5, 0.983, 1.0}) {
    const ReducedState red = reduced_polarization_state(initial_state(v, kSigma));
    CHECK((red.state.rho - PolarizationState::werner(v).rho).norm() < 1e-12);
    CHECK(red.purity == doctest::Approx((1.0 + 3.0 * v * v) / 4.0).epsilon(1e-12));
  }
}

TEST_CASE("weak coupling mechanics") {
  const double g = 0.5;
  BranchState s = product_branch_state(0, 0, kSigma);

  SUBCASE("eigenstate: single branch, exact shift") {
    const BranchState out = apply_weak_coupling(s, Party::A, 1, 0.0, g);
    REQUIRE(out.branches.size() == 1);
    CHECK(out.branches[0].shift(0) == doctest::Approx(g));
    CHECK(out.norm_squared() == doctest::Approx(1.0));
    CHECK(pointer_moment1({{1.0, out}}, 0) == doctest::Approx(g).epsilon(1e-12));
  }

  SUBCASE("orthogonal eigenstate: no shift") {
    const BranchState out = apply_weak_coupling(s, Party::A, 1, M_PI / 2, g);
    REQUIRE(out.branches.size() == 1);
    CHECK(out.branches[0].shift.norm() == doctest::Approx(0.0));
  }

  SUBCASE("superposition splits into two branches, norm preserved") {
    const BranchState out = apply_weak_coupling(s, Party::A, 1, M_PI / 4, g);
    REQUIRE(out.branches.size() == 2);
    CHECK(out.norm_squared() == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("duplicate application throws") {
    const BranchState once = apply_weak_coupling(s, Party::A, 1, 0.3, g);
    CHECK_THROWS(apply_weak_coupling(once, Party::A, 1, 0.3, g));
    // other stages and the other party still fine
    CHECK_NOTHROW(apply_weak_coupling(once, Party::A, 2, 0.3, g));
    CHECK_NOTHROW(apply_weak_coupling(once, Party::B, 1, 0.3, g));
  }

  SUBCASE("negative coupling rejected") {
    CHECK_THROWS(apply_weak_coupling(s, Party::A, 1, 0.0, -0.1));
  }
}

TEST_CASE("first pointer moments are exactly g <Pi>") {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> angle(0.0, M_PI);
  for (int k = 0; k < 30; ++k) {
    MeasurementSettings s;
    s.alpha1 = angle(rng);
    s.alpha2 = angle(rng);
    s.beta1 = angle(rng);
    s.beta2 = angle(rng);
    s.sigma = kSigma;
    for (auto& party : s.g) party = {0.5, 0.5};
    const double v = 0.983;
    const auto comps = coupled_werner(v, s);
    const PolarizationState rho = PolarizationState::werner(v);

    const Matrix2 ra = partial_trace(rho.rho, Subsystem::A);
    const Matrix2 rb = partial_trace(rho.rho, Subsystem::B);
    CHECK(pointer_moment1(comps, 0) ==
          doctest::Approx(0.5 * expectation(ra, projector(s.alpha1))).epsilon(1e-10));
    CHECK(pointer_moment1(comps, 1) ==
          doctest::Approx(0.5 * expectation(ra, projector(s.alpha2))).epsilon(1e-10));
    CHECK(pointer_moment1(comps, 2) ==
          doctest::Approx(0.5 * expectation(rb, projector(s.beta1))).epsilon(1e-10));
    CHECK(pointer_moment1(comps, 3) ==
          doctest::Approx(0.5 * expectation(rb, projector(s.beta2))).epsilon(1e-10));

    // cross-party second moments are exact products of projectors
    const double p11 =
        expectation(rho.rho, tensor_product(projector(s.alpha1), projector(s.beta1)));
    CHECK(pointer_moment2(comps, 0, 2) == doctest::Approx(0.25 * p11).epsilon(1e-10));
  }
}

TEST_CASE("same-party sequential moment gives the symmetrized product exactly") {
  // <x_A y_A> = g1 g2 <{Pi(alpha1), Pi(alpha2)}>/2: the second coupling picks
  // up exactly the symmetrized operator product, with no decoherence bias
  for (double v : {1.0, 0.983}) {
    const MeasurementSettings s = MeasurementSettings::paper_default(0.3, 0.2, kSigma);
    const auto comps = coupled_werner(v, s);
    const Matrix4 rho = PolarizationState::werner(v).rho;
    {
      const double g2 = s.coupling(Party::A, 1) * s.coupling(Party::A, 2);
      const Matrix2 ra = partial_trace(rho, Subsystem::A);
      const Matrix2 p1 = projector(s.alpha1), p2 = projector(s.alpha2);
      const double sym = expectation(ra, (0.5 * (p1 * p2 + p2 * p1)).eval());
      CHECK(pointer_moment2(comps, 0, 1) == doctest::Approx(g2 * sym).epsilon(1e-12));
    }
    {
      const double g2 = s.coupling(Party::B, 1) * s.coupling(Party::B, 2);
      const Matrix2 rb = partial_trace(rho, Subsystem::B);
      const Matrix2 p1 = projector(s.beta1), p2 = projector(s.beta2);
      const double sym = expectation(rb, (0.5 * (p1 * p2 + p2 * p1)).eval());
      CHECK(pointer_moment2(comps, 2, 3) == doctest::Approx(g2 * sym).epsilon(1e-12));
    }
  }
}

TEST_CASE("hwp shift injection is a rigid translation") {
  const MeasurementSettings s = MeasurementSettings::paper_default(0.0, 0.2, kSigma);
  auto comps = coupled_werner(0.983, s);
  const double before = pointer_moment1(comps, 0);
  const double before_y = pointer_moment1(comps, 1);
  Eigen::Vector4d shift;
  shift << 0.125, 0.0, 0.0, 0.0;
  comps = inject_hwp_shift(std::move(comps), shift);
  CHECK(pointer_moment1(comps, 0) == doctest::Approx(before + 0.125).epsilon(1e-12));
  CHECK(pointer_moment1(comps, 1) == doctest::Approx(before_y).epsilon(1e-12));
}

TEST_CASE("pixel distribution: normalization, moments, refinement") {
  const MeasurementSettings s = MeasurementSettings::paper_default(0.3, 0.2, kSigma);
  const auto comps = coupled_werner(0.983, s);
  const ProbabilityTensor probs = pixel_distribution(comps, kGrid);

  CHECK(probs.truncated_mass >= 0.0);
  CHECK(probs.truncated_mass <= 1e-4);
  CHECK(probs.sum() == doctest::Approx(1.0).epsilon(2e-4));
  for (double p : probs.p) CHECK(p >= 0.0);

  // pixel moments track the exact continuous moments
  for (int axis = 0; axis < 4; ++axis) {
    const double exact = kGrid.center() + pointer_moment1(comps, axis);
    CHECK(probs.moment1(axis) == doctest::Approx(exact).epsilon(1e-3));
  }

  // halving the pitch tightens the first-moment error on every axis
  const PixelGrid fine{48, 0.5, 0.0};
  const ProbabilityTensor probs_fine = pixel_distribution(comps, fine);
  for (int axis = 0; axis < 4; ++axis) {
    const double exact = kGrid.center() + pointer_moment1(comps, axis);
    const double coarse_err = std::abs(probs.moment1(axis) - exact);
    const double fine_err = std::abs(probs_fine.moment1(axis) - exact);
    CHECK(fine_err <= coarse_err + 1e-12);
  }
}

TEST_CASE("coverage guard rejects undersized grids") {
  const auto comps = initial_state(1.0, kSigma);
  // half-span 6 and 4 are both below the 4 sigma = 10 requirement
  CHECK_THROWS(pixel_distribution(comps, PixelGrid{12, 1.0, 0.0}));
  CHECK_THROWS(pixel_distribution(comps, PixelGrid{8, 1.0, 0.0}));
}

TEST_CASE("coincidence sampling") {
  const auto comps = coupled_werner(0.983, MeasurementSettings::paper_default(0.0, 0.2, kSigma));
  const ProbabilityTensor probs = pixel_distribution(comps, kGrid);

  const CoincidenceTensor t = sample_coincidences(probs, 50000, 99);
  CHECK(t.total == 50000);
  std::int64_t sum = 0;
  for (auto c : t.counts) {
    CHECK(c >= 0);
    sum += c;
  }
  CHECK(sum == 50000);

  SUBCASE("deterministic per seed") {
    const CoincidenceTensor again = sample_coincidences(probs, 50000, 99);
    CHECK(again.counts == t.counts);
    const CoincidenceTensor other = sample_coincidences(probs, 50000, 100);
    CHECK(other.counts != t.counts);
  }

  SUBCASE("edge cases") {
    const CoincidenceTensor empty = sample_coincidences(probs, 0, 1);
    CHECK(empty.total == 0);
    for (auto c : empty.counts) CHECK(c == 0);
    CHECK_THROWS(sample_coincidences(probs, -1, 1));
  }

  SUBCASE("empirical marginals follow the distribution") {
    const CoincidenceTensor big = sample_coincidences(probs, 400000, 7);
    for (int axis = 0; axis < 4; ++axis) {
      // standard error of the mean ~ sigma / sqrt(N) ~ 0.004
      CHECK(std::abs(probs.moment1(axis) -
                     [&] {
                       double m = 0.0;
                       const int n = kGrid.n_pixels;
                       std::size_t idx = 0;
                       std::vector<double> marg(n, 0.0);
                       for (int a = 0; a < n; ++a)
                         for (int b = 0; b < n; ++b)
                           for (int c = 0; c < n; ++c)
                             for (int d = 0; d < n; ++d, ++idx) {
                               const int bins[4] = {a, b, c, d};
                               marg[bins[axis]] += static_cast<double>(big.counts[idx]);
                             }
                       for (int i = 0; i < n; ++i)
                         m += marg[i] * kGrid.bin_center(i) / static_cast<double>(big.total);
                       return m;
                     }()) < 0.02);
    }
  }
}

TEST_CASE("subset splitting partitions the counts") {
  const auto comps = initial_state(0.983, kSigma);
  const ProbabilityTensor probs = pixel_distribution(comps, kGrid);
  const CoincidenceTensor t = sample_coincidences(probs, 30000, 3);

  const auto subsets = split_subsets(t, 10, 77);
  REQUIRE(subsets.size() == 10);
  std::vector<std::int64_t> recombined(t.counts.size(), 0);
  std::int64_t total = 0;
  for (const auto& s : subsets) {
    total += s.total;
    for (std::size_t i = 0; i < s.counts.size(); ++i) recombined[i] += s.counts[i];
  }
  CHECK(total == t.total);
  CHECK(recombined == t.counts);

  const auto identity = split_subsets(t, 1, 77);
  CHECK(identity[0].counts == t.counts);
  CHECK_THROWS(split_subsets(t, 0, 1));
}

TEST_CASE("tensor serialization round trip") {
  const auto comps = coupled_werner(0.983, MeasurementSettings::paper_default(0.0, 0.2, kSigma));
  CoincidenceTensor t = sample_coincidences(pixel_distribution(comps, kGrid), 20000, 5);
  t.meta["acquisition"] = "main";
  t.meta["note"] = "round trip";

  std::stringstream ss;
  t.save(ss);
  const CoincidenceTensor back = CoincidenceTensor::load(ss);
  CHECK(back.counts == t.counts);
  CHECK(back.total == t.total);
  CHECK(back.grid.n_pixels == t.grid.n_pixels);
  CHECK(back.grid.pitch == t.grid.pitch);
  CHECK(back.grid.origin == t.grid.origin);
  CHECK(back.meta.at("acquisition") == "main");

  SUBCASE("malformed input is rejected") {
    std::stringstream bad("n_pixels 24\npitch 1\norigin 0\ntotal 5\ndata\n0 0 0 0 4\nend\n");
    CHECK_THROWS(CoincidenceTensor::load(bad));  // counts do not sum to total
    std::stringstream bad2("n_pixels 24\ntotal 0\ndata\n");
    CHECK_THROWS(CoincidenceTensor::load(bad2));  // missing end marker
  }
}

TEST_CASE("output purity under decoherence") {
  // pure singlet, paper angles at delta = 0
  const MeasurementSettings s = MeasurementSettings::paper_default(0.0, 0.2, kSigma);
  const double g = s.coupling(Party::A, 1);
  const double omega = decoherence_omega(g, kSigma);

  const double pure_out = reduced_polarization_state(coupled_werner(1.0, s)).purity;
  const double expanded = purity_expansion(omega, s.alpha1, s.alpha2, s.beta1, s.beta2);
  CHECK(pure_out == doctest::Approx(expanded).epsilon(5e-6));  // O(Omega^3) residual

  // Werner 0.983 lands in the paper's ~0.96 output-purity window
  const double werner_out = reduced_polarization_state(coupled_werner(0.983, s)).purity;
  CHECK(werner_out > 0.955);
  CHECK(werner_out < 0.965);

  // zero coupling leaves the input purity untouched
  MeasurementSettings s0 = s;
  for (auto& party : s0.g) party = {0.0, 0.0};
  CHECK(reduced_polarization_state(coupled_werner(1.0, s0)).purity ==
        doctest::Approx(1.0).epsilon(1e-12));
}
