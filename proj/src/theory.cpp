#include "riwm/theory.hpp"

#include <cmath>

namespace riwm {

namespace {
constexpr double kDegenerateStd = 1e-8;

struct ProjectorStats {
  std::array<double, 2> a;   // <Pi(alpha_i)> on Alice
  std::array<double, 2> b;   // <Pi(beta_j)> on Bob
  double p[2][2];            // <Pi(alpha_i) (x) Pi(beta_j)>
  double rq_a;               // symmetrized covariance of Alice's projectors
  double rq_b;               // same for Bob
};

ProjectorStats projector_stats(const PolarizationState& rho, const MeasurementSettings& s) {
  ProjectorStats st{};
  const std::array<double, 2> alphas{s.alpha1, s.alpha2};
  const std::array<double, 2> betas{s.beta1, s.beta2};
  const Matrix2 rho_a = partial_trace(rho.rho, Subsystem::A);
  const Matrix2 rho_b = partial_trace(rho.rho, Subsystem::B);
  for (int i = 0; i < 2; ++i) {
    st.a[i] = expectation(rho_a, projector(alphas[i]));
    st.b[i] = expectation(rho_b, projector(betas[i]));
  }
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      st.p[i][j] = expectation(rho.rho, tensor_product(projector(alphas[i]), projector(betas[j])));
  st.rq_a = rq_theory(rho, s.alpha1, s.alpha2);
  const Matrix2 pb1 = projector(s.beta1), pb2 = projector(s.beta2);
  st.rq_b = expectation(rho_b, 0.5 * (pb1 * pb2 + pb2 * pb1).eval()) - st.b[0] * st.b[1];
  return st;
}
}  // namespace

MeasurementSettings MeasurementSettings::paper_default(double delta, double g_over_sigma,
                                                       double sigma) {
  MeasurementSettings s;
  s.alpha1 = 0.0;
  s.alpha2 = M_PI / 4 + delta;
  s.beta1 = M_PI / 8;
  s.beta2 = 3 * M_PI / 8 + delta;
  s.delta = delta;
  s.sigma = sigma;
  for (auto& party : s.g) party = {g_over_sigma * sigma, g_over_sigma * sigma};
  return s;
}

void MeasurementSettings::validate() const {
  if (sigma <= 0.0) throw std::invalid_argument("MeasurementSettings: sigma must be positive");
  for (const auto& party : g)
    for (double gv : party) {
      if (gv < 0.0) throw std::invalid_argument("MeasurementSettings: negative coupling");
      if (gv / sigma > 0.5)
        throw std::invalid_argument("MeasurementSettings: g/sigma > 0.5 outside simulator validity");
    }
}

bool MeasurementSettings::weak_regime() const {
  for (const auto& party : g)
    for (double gv : party)
      if (gv / sigma > 0.2 + 1e-12) return false;
  return true;
}

double correlator(const PolarizationState& rho, double alpha, double beta) {
  return expectation(rho.rho, tensor_product(projector(alpha), projector(beta)));
}

double chsh_theory(const PolarizationState& rho, const MeasurementSettings& s) {
  const ProjectorStats st = projector_stats(rho, s);
  return 4.0 * (st.p[0][0] - st.p[0][1] + st.p[1][0] + st.p[1][1] - st.a[1] - st.b[0]) + 2.0;
}

double rq_theory(const PolarizationState& rho, double alpha1, double alpha2) {
  const Matrix2 rho_a = partial_trace(rho.rho, Subsystem::A);
  const Matrix2 p1 = projector(alpha1), p2 = projector(alpha2);
  const double anticomm = expectation(rho_a, 0.5 * (p1 * p2 + p2 * p1).eval());
  return anticomm - expectation(rho_a, p1) * expectation(rho_a, p2);
}

std::optional<double> delta_theory(const PolarizationState& rho,
                                   const MeasurementSettings& s) {
  const Matrix2 rho_a = partial_trace(rho.rho, Subsystem::A);
  const double a1 = expectation(rho_a, projector(s.alpha1));
  const double a2 = expectation(rho_a, projector(s.alpha2));
  const double sd1 = std::sqrt(std::max(0.0, a1 - a1 * a1));
  const double sd2 = std::sqrt(std::max(0.0, a2 - a2 * a2));
  if (sd1 < kDegenerateStd || sd2 < kDegenerateStd) return std::nullopt;
  return rq_theory(rho, s.alpha1, s.alpha2) / (2.0 * sd2 * sd1);
}

std::optional<double> ri_theory(const PolarizationState& rho,
                                const MeasurementSettings& s) {
  const auto d = delta_theory(rho, s);
  if (!d) return std::nullopt;
  const double b = chsh_theory(rho, s) / (2.0 * std::sqrt(2.0));
  return b * b + *d * *d;
}

CovarianceReport covariance_report(const PolarizationState& rho,
                                   const MeasurementSettings& s) {
  const ProjectorStats st = projector_stats(rho, s);
  CovarianceReport rep;
  rep.rq = st.rq_a;

  std::array<double, 2> va, vb;
  double c[2][2];  // c[j][i] = C(B_j, A_i)
  for (int i = 0; i < 2; ++i) va[i] = st.a[i] - st.a[i] * st.a[i];
  for (int j = 0; j < 2; ++j) vb[j] = st.b[j] - st.b[j] * st.b[j];
  for (int j = 0; j < 2; ++j)
    for (int i = 0; i < 2; ++i) c[j][i] = st.p[i][j] - st.a[i] * st.b[j];

  // full covariance matrix in (B1, B2, A1, A2) order
  rep.lambda_full << vb[0], st.rq_b, c[0][0], c[0][1],
                     st.rq_b, vb[1], c[1][0], c[1][1],
                     c[0][0], c[1][0], va[0], st.rq_a,
                     c[0][1], c[1][1], st.rq_a, va[1];
  for (int j = 0; j < 2; ++j) {
    rep.lambda_sub[j] << vb[j], c[j][0], c[j][1],
                         c[j][0], va[0], st.rq_a,
                         c[j][1], st.rq_a, va[1];
  }
  rep.min_eigenvalues = {
      Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d>(rep.lambda_full, Eigen::EigenvaluesOnly)
          .eigenvalues().minCoeff(),
      Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(rep.lambda_sub[0], Eigen::EigenvaluesOnly)
          .eigenvalues().minCoeff(),
      Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(rep.lambda_sub[1], Eigen::EigenvaluesOnly)
          .eigenvalues().minCoeff()};

  const std::array<double, 2> sa{std::sqrt(std::max(0.0, va[0])), std::sqrt(std::max(0.0, va[1]))};
  const std::array<double, 2> sb{std::sqrt(std::max(0.0, vb[0])), std::sqrt(std::max(0.0, vb[1]))};
  if (sa[0] < kDegenerateStd || sa[1] < kDegenerateStd ||
      sb[0] < kDegenerateStd || sb[1] < kDegenerateStd) {
    rep.defined = false;
    return rep;
  }
  rep.defined = true;
  for (int j = 0; j < 2; ++j)
    for (int i = 0; i < 2; ++i) rep.pearson(j, i) = c[j][i] / (sb[j] * sa[i]);

  const double rtilde = st.rq_a / (sa[0] * sa[1]);
  // Submatrix positivity bounds: per Bob setting, the Pearson pair combination
  // that assembles into the CHSH sum. The +/- pairing follows the saturation
  // pattern at the delta = 0 paper settings.
  const double comb1 = rep.pearson(0, 0) + rep.pearson(0, 1);
  const double comb2 = rep.pearson(1, 0) - rep.pearson(1, 1);
  rep.chain.push_back({"submatrix bound, Bob setting 1", comb1 * comb1, 2.0 * (1.0 + rtilde)});
  rep.chain.push_back({"submatrix bound, Bob setting 2", comb2 * comb2, 2.0 * (1.0 - rtilde)});
  const double b = chsh_theory(rho, s);
  rep.chain.push_back({"CHSH bound", std::abs(b),
                       std::sqrt(2.0) * (std::sqrt(std::max(0.0, 1.0 + rtilde)) +
                                         std::sqrt(std::max(0.0, 1.0 - rtilde)))});
  const double ri = std::pow(b / (2.0 * std::sqrt(2.0)), 2) + std::pow(rtilde / 2.0, 2);
  rep.chain.push_back({"RI bound", ri, 1.0});
  return rep;
}

double decoherence_omega(double g, double sigma) {
  return 1.0 - std::exp(-g * g / (8.0 * sigma * sigma));
}

double purity_expansion(double omega, double alpha1, double alpha2, double beta1,
                        double beta2) {
  if (omega < 0.0 || omega >= 1.0)
    throw std::invalid_argument("purity_expansion: omega outside [0, 1)");
  const double cs = std::cos(4 * (alpha1 - alpha2)) + std::cos(4 * (alpha1 - beta1)) +
                    std::cos(4 * (alpha2 - beta1)) + std::cos(4 * (alpha1 - beta2)) +
                    std::cos(4 * (alpha2 - beta2)) + std::cos(4 * (beta1 - beta2));
  return 1.0 - 4.0 * omega + 0.5 * omega * omega * (22.0 + cs);
}

}  // namespace riwm
