#include "riwm/estimation.hpp"

#include <cmath>
#include <nlohmann/json.hpp>

namespace riwm {

namespace {

// axes shifted in the |H_A V_B> calibration acquisition (H -> x, V -> y)
constexpr bool kShiftedInHV[4] = {true, false, false, true};

double marginal_centroid(const CoincidenceTensor& t, int axis) {
  const int n = t.grid.n_pixels;
  std::vector<std::int64_t> marg(n, 0);
  const std::size_t strides[4] = {static_cast<std::size_t>(n) * n * n,
                                  static_cast<std::size_t>(n) * n,
                                  static_cast<std::size_t>(n), 1};
  for (std::size_t i = 0; i < t.counts.size(); ++i)
    if (t.counts[i] != 0) marg[(i / strides[axis]) % n] += t.counts[i];
  double s = 0.0;
  std::int64_t tot = 0;
  for (int i = 0; i < n; ++i) {
    s += static_cast<double>(marg[i]) * t.grid.bin_center(i);
    tot += marg[i];
  }
  if (tot == 0) throw std::runtime_error("marginal_centroid: empty tensor");
  return s / static_cast<double>(tot);
}

}  // namespace

FitResult fit_centers(const CoincidenceTensor& tensor, int axis, int n_subsets,
                      std::uint64_t seed) {
  if (axis < 0 || axis > 3) throw std::invalid_argument("fit_centers: axis must be 0..3");
  if (n_subsets < 2) throw std::invalid_argument("fit_centers: need at least 2 subsets");
  if (tensor.total < 1000)
    throw std::runtime_error("fit_centers: fewer than 1000 counts on the marginal");

  const auto subsets = split_subsets(tensor, n_subsets, seed);
  std::vector<double> centers;
  centers.reserve(n_subsets);
  for (const auto& s : subsets)
    if (s.total > 0) centers.push_back(marginal_centroid(s, axis));
  if (centers.size() < 2) throw std::runtime_error("fit_centers: not enough populated subsets");

  const double k = static_cast<double>(centers.size());
  double mean = 0.0;
  for (double c : centers) mean += c;
  mean /= k;
  double var = 0.0;
  for (double c : centers) var += (c - mean) * (c - mean);
  var /= (k - 1.0);
  return {mean, std::sqrt(var / k)};
}

CalibrationRecord calibrate(const CoincidenceTensor& acq_hv, const CoincidenceTensor& acq_vh,
                            int n_subsets, std::uint64_t seed) {
  CalibrationRecord cal;
  for (int axis = 0; axis < 4; ++axis) {
    const CoincidenceTensor& shifted = kShiftedInHV[axis] ? acq_hv : acq_vh;
    const CoincidenceTensor& unshifted = kShiftedInHV[axis] ? acq_vh : acq_hv;
    const FitResult f1 = fit_centers(shifted, axis, n_subsets, seed);
    const FitResult f0 = fit_centers(unshifted, axis, n_subsets, seed);
    cal.center0[axis] = f0.center;
    cal.center1[axis] = f1.center;
    cal.sigma0[axis] = f0.se;
    cal.sigma1[axis] = f1.se;
    const double g = cal.g(axis);
    const double se = std::hypot(f0.se, f1.se);
    if (g < -3.0 * se)
      throw CalibrationError(
          "calibrate: negative coupling on axis " + std::to_string(axis) +
          "; H/V calibration inputs appear swapped");
    if (std::abs(g) < 3.0 * se)
      throw CalibrationError("calibrate: coupling on axis " + std::to_string(axis) +
                             " not resolved above 3x its standard error");
  }
  return cal;
}

ShiftCorrection shift_correction(const CoincidenceTensor& acq_meas,
                                 const CoincidenceTensor& acq_ref_hv,
                                 const CoincidenceTensor& acq_ref_vh,
                                 int n_subsets, std::uint64_t seed) {
  ShiftCorrection out;
  for (int axis = 0; axis < 4; ++axis) {
    const FitResult m = fit_centers(acq_meas, axis, n_subsets, seed);
    const FitResult r1 = fit_centers(acq_ref_hv, axis, n_subsets, seed);
    const FitResult r2 = fit_centers(acq_ref_vh, axis, n_subsets, seed);
    out.shift[axis] = m.center - 0.5 * (r1.center + r2.center);
    out.se[axis] = std::sqrt(m.se * m.se + 0.25 * r1.se * r1.se + 0.25 * r2.se * r2.se);
  }
  return out;
}

MomentSet moments(const CoincidenceTensor& tensor) {
  if (tensor.total < 1) throw std::runtime_error("moments: empty tensor");
  const int n = tensor.grid.n_pixels;
  MomentSet m;
  m.n_events = tensor.total;
  m.pitch = tensor.grid.pitch;

  Eigen::Matrix<double, 9, 1> s1 = Eigen::Matrix<double, 9, 1>::Zero();
  Eigen::Matrix<double, 9, 9> s2 = Eigen::Matrix<double, 9, 9>::Zero();
  Eigen::Vector4d p1 = Eigen::Vector4d::Zero();
  Eigen::Matrix4d p2 = Eigen::Matrix4d::Zero();

  std::size_t idx = 0;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c)
        for (int d = 0; d < n; ++d, ++idx) {
          const std::int64_t cnt = tensor.counts[idx];
          if (cnt == 0) continue;
          const double w = static_cast<double>(cnt);
          Eigen::Vector4d pos;
          pos << tensor.grid.bin_center(a), tensor.grid.bin_center(b),
              tensor.grid.bin_center(c), tensor.grid.bin_center(d);
          Eigen::Matrix<double, 9, 1> f;
          f << pos(0), pos(1), pos(2), pos(3),
              pos(0) * pos(2), pos(0) * pos(3), pos(1) * pos(2), pos(1) * pos(3),
              pos(0) * pos(1);
          s1 += w * f;
          s2 += w * (f * f.transpose());
          p1 += w * pos;
          p2 += w * (pos * pos.transpose());
        }

  const double N = static_cast<double>(tensor.total);
  m.u = s1 / N;
  m.cov_u = (s2 / N - m.u * m.u.transpose()) / N;
  const Eigen::Vector4d mean = p1 / N;
  m.axis_cov = p2 / N - mean * mean.transpose();
  return m;
}

namespace {

using Moment9 = Eigen::Matrix<double, 9, 1>;

// CHSH terms: (raw-product feature, Alice axis, Bob axis, sign)
struct CrossTerm {
  int feature;
  int axis_a;
  int axis_b;
  double sign;
};
constexpr CrossTerm kCrossTerms[4] = {
    {4, 0, 2, +1.0},  // P11
    {5, 0, 3, -1.0},  // P12
    {6, 1, 2, +1.0},  // P21
    {7, 1, 3, +1.0},  // P22
};

double corrected_center(const CalibrationRecord& cal, int axis) {
  return cal.center0[axis] + cal.hwp_shift[axis];
}

double chsh_value(const Moment9& u, const CalibrationRecord& cal) {
  double acc = 0.0;
  for (const CrossTerm& t : kCrossTerms) {
    const double ca = corrected_center(cal, t.axis_a);
    const double cb = corrected_center(cal, t.axis_b);
    const double centered = u(t.feature) - ca * u(t.axis_b) - cb * u(t.axis_a) + ca * cb;
    acc += t.sign * centered / (cal.g(t.axis_a) * cal.g(t.axis_b));
  }
  acc -= (u(1) - corrected_center(cal, 1)) / cal.g(1);  // <Pi(alpha2)>_A
  acc -= (u(2) - corrected_center(cal, 2)) / cal.g(2);  // <Pi(beta1)>_B
  return 4.0 * acc + 2.0;
}

Moment9 chsh_grad_u(const CalibrationRecord& cal) {
  Moment9 g = Moment9::Zero();
  for (const CrossTerm& t : kCrossTerms) {
    const double inv = t.sign / (cal.g(t.axis_a) * cal.g(t.axis_b));
    g(t.feature) += inv;
    g(t.axis_b) -= corrected_center(cal, t.axis_a) * inv;
    g(t.axis_a) -= corrected_center(cal, t.axis_b) * inv;
  }
  g(1) -= 1.0 / cal.g(1);
  g(2) -= 1.0 / cal.g(2);
  return 4.0 * g;
}

double delta_value(const Moment9& u, const CalibrationRecord& cal) {
  // C_{xy,A} = <X_A Y_A> - <X_A><Y_A>; constant shifts cancel exactly
  const double c = u(8) - u(0) * u(1);
  double s[2];
  for (int axis = 0; axis < 2; ++axis) {
    const double lo = corrected_center(cal, axis);
    const double hi = cal.center1[axis] + cal.hwp_shift[axis];
    s[axis] = (u(axis) - lo) * (hi - u(axis));
    if (s[axis] <= 0.0)
      throw std::runtime_error("delta_estimate: non-positive S value, degenerate settings");
  }
  return c / (2.0 * std::sqrt(s[0] * s[1]));
}

// central finite differences in the moment vector; length features use step
// 1e-6 * pitch, product features the same step squared
Moment9 grad_u_fd(double (*f)(const Moment9&, const CalibrationRecord&), const Moment9& u,
                  const CalibrationRecord& cal, double pitch) {
  Moment9 g;
  for (int i = 0; i < 9; ++i) {
    const double h = 1e-6 * (i < 4 ? pitch : pitch * pitch);
    Moment9 up = u, dn = u;
    up(i) += h;
    dn(i) -= h;
    g(i) = (f(up, cal) - f(dn, cal)) / (2.0 * h);
  }
  return g;
}

double stat_sigma(const Moment9& grad, const MomentSet& m) {
  return std::sqrt(std::max(0.0, double(grad.transpose() * m.cov_u * grad)));
}

// quadrature over the 12 calibration constants, central finite differences
template <typename F>
double cal_sigma(F&& value, const CalibrationRecord& cal, double pitch) {
  const double h = 1e-6 * pitch;
  double acc = 0.0;
  auto add = [&](std::array<double, 4> CalibrationRecord::*field, const std::array<double, 4>& sig) {
    for (int axis = 0; axis < 4; ++axis) {
      CalibrationRecord up = cal, dn = cal;
      (up.*field)[axis] += h;
      (dn.*field)[axis] -= h;
      const double d = (value(up) - value(dn)) / (2.0 * h);
      acc += d * d * sig[axis] * sig[axis];
    }
  };
  add(&CalibrationRecord::center0, cal.sigma0);
  add(&CalibrationRecord::center1, cal.sigma1);
  add(&CalibrationRecord::hwp_shift, cal.sigma_shift);
  return std::sqrt(acc);
}

}  // namespace

QuantityEstimate chsh_estimate(const MomentSet& m, const CalibrationRecord& cal) {
  for (int axis = 0; axis < 4; ++axis)
    if (cal.g(axis) == 0.0) throw std::invalid_argument("chsh_estimate: zero coupling");
  QuantityEstimate e;
  e.value = chsh_value(m.u, cal);
  e.sigma_stat = stat_sigma(chsh_grad_u(cal), m);
  e.sigma_cal = cal_sigma([&](const CalibrationRecord& c) { return chsh_value(m.u, c); },
                          cal, m.pitch);
  return e;
}

QuantityEstimate delta_estimate(const MomentSet& m, const CalibrationRecord& cal) {
  QuantityEstimate e;
  e.value = delta_value(m.u, cal);
  const double pitch = m.pitch;
  e.sigma_stat = stat_sigma(grad_u_fd(&delta_value, m.u, cal, pitch), m);
  e.sigma_cal = cal_sigma([&](const CalibrationRecord& c) { return delta_value(m.u, c); },
                          cal, pitch);
  return e;
}

EstimateSet ri_estimate(const MomentSet& m, const CalibrationRecord& cal) {
  EstimateSet out;
  out.B = chsh_estimate(m, cal);
  out.Delta = delta_estimate(m, cal);

  const double b = out.B.value;
  const double d = out.Delta.value;
  out.RI_B.value = b * b / 8.0;
  out.RI_Delta.value = d * d;
  out.RI.value = out.RI_B.value + out.RI_Delta.value;

  const double pitch = m.pitch;
  const Moment9 gb = chsh_grad_u(cal);
  const Moment9 gd = grad_u_fd(&delta_value, m.u, cal, pitch);
  const Moment9 g_rib = (b / 4.0) * gb;
  const Moment9 g_rid = 2.0 * d * gd;
  out.RI_B.sigma_stat = stat_sigma(g_rib, m);
  out.RI_Delta.sigma_stat = stat_sigma(g_rid, m);
  out.RI.sigma_stat = stat_sigma(g_rib + g_rid, m);  // joint, not quadrature

  auto rib_v = [&](const CalibrationRecord& c) {
    const double bb = chsh_value(m.u, c);
    return bb * bb / 8.0;
  };
  auto rid_v = [&](const CalibrationRecord& c) {
    const double dd = delta_value(m.u, c);
    return dd * dd;
  };
  out.RI_B.sigma_cal = cal_sigma(rib_v, cal, pitch);
  out.RI_Delta.sigma_cal = cal_sigma(rid_v, cal, pitch);
  out.RI.sigma_cal = cal_sigma([&](const CalibrationRecord& c) { return rib_v(c) + rid_v(c); },
                               cal, pitch);
  return out;
}

std::string estimates_json(const EstimateSet& est, double delta) {
  nlohmann::ordered_json j;
  j["delta"] = delta;
  auto put = [&](const std::string& name, const QuantityEstimate& q) {
    j[name] = q.value;
    j["sigma_" + name] = q.sigma_total();
    j["sigma_" + name + "_stat"] = q.sigma_stat;
    j["sigma_" + name + "_cal"] = q.sigma_cal;
  };
  put("B", est.B);
  put("Delta", est.Delta);
  put("RI", est.RI);
  put("RI_B", est.RI_B);
  put("RI_Delta", est.RI_Delta);
  return j.dump(2) + "\n";
}

}  // namespace riwm
