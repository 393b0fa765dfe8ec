#include "riwm/protocol.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;

namespace riwm {

const char* const kTableHeader =
    "delta,B,sigma_B,sigma_B_stat,sigma_B_cal,"
    "Delta,sigma_Delta,sigma_Delta_stat,sigma_Delta_cal,"
    "RI,sigma_RI,sigma_RI_stat,sigma_RI_cal,"
    "RI_B,sigma_RI_B,RI_Delta,sigma_RI_Delta,"
    "B_theory,Delta_theory,RI_theory";
const char* const kCurveHeader = "delta,B_theory,Delta_theory,RI_theory";

ExperimentConfig::ExperimentConfig() {
  delta_list = {-M_PI / 2, -3 * M_PI / 8, -M_PI / 4, -M_PI / 8, 0.0,
                M_PI / 8,  M_PI / 4,      3 * M_PI / 8, M_PI / 2};
}

PixelGrid ExperimentConfig::grid() const {
  return PixelGrid{n_pixels, pitch, 0.0};
}

MeasurementSettings ExperimentConfig::settings(double delta) const {
  return MeasurementSettings::paper_default(delta, g_over_sigma, sigma * pitch);
}

void ExperimentConfig::validate() const {
  if (visibility < 0.0 || visibility > 1.0)
    throw std::invalid_argument("ExperimentConfig: visibility outside [0, 1]");
  if (sigma <= 0.0) throw std::invalid_argument("ExperimentConfig: sigma must be positive");
  if (g_over_sigma <= 0.0 || g_over_sigma > 0.5)
    throw std::invalid_argument("ExperimentConfig: g_over_sigma outside (0, 0.5]");
  if (delta_list.empty()) throw std::invalid_argument("ExperimentConfig: empty delta list");
  if (n_events < 0) throw std::invalid_argument("ExperimentConfig: negative n_events");
  grid().validate();
  settings(0.0).validate();
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("ExperimentConfig: cannot open " + path);
  ExperimentConfig cfg;
  std::string line;
  while (std::getline(is, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    if (key == "visibility") ls >> cfg.visibility;
    else if (key == "sigma") ls >> cfg.sigma;
    else if (key == "g_over_sigma") ls >> cfg.g_over_sigma;
    else if (key == "n_pixels") ls >> cfg.n_pixels;
    else if (key == "pitch") ls >> cfg.pitch;
    else if (key == "n_events") ls >> cfg.n_events;
    else if (key == "seed") ls >> cfg.seed;
    else if (key == "out_dir") ls >> cfg.out_dir;
    else if (key == "delta_list") {
      cfg.delta_list.clear();
      double d;
      while (ls >> d) cfg.delta_list.push_back(d);
    } else if (key == "hwp_shift") {
      for (int i = 0; i < 4; ++i)
        if (!(ls >> cfg.injected_hwp_shifts(i)))
          throw std::runtime_error("ExperimentConfig: hwp_shift needs 4 values");
    } else {
      throw std::runtime_error("ExperimentConfig: unknown key '" + key + "' in " + path);
    }
    if (ls.fail() && !ls.eof())
      throw std::runtime_error("ExperimentConfig: malformed value for key '" + key + "'");
  }
  return cfg;
}

std::uint64_t substream_seed(std::uint64_t master, const std::string& name) {
  std::uint64_t h = 1469598103934665603ULL ^ master;
  for (unsigned char c : name) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  h ^= h >> 33;
  h *= 0xff51afd7ed558ccdULL;
  h ^= h >> 33;
  return h;
}

TheoryRecord theory_record(const ExperimentConfig& cfg, double delta) {
  TheoryRecord t;
  t.delta = delta;
  const PolarizationState rho = PolarizationState::werner(cfg.visibility);
  const MeasurementSettings s = cfg.settings(delta);
  t.B = chsh_theory(rho, s);
  t.Delta = delta_theory(rho, s).value_or(std::nan(""));
  t.RI = ri_theory(rho, s).value_or(std::nan(""));
  auto components = apply_protocol_couplings(initial_state(cfg.visibility, s.sigma), s);
  t.purity_out = reduced_polarization_state(components).purity;
  return t;
}

namespace {

std::string delta_tag(double delta) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%+.6f", delta);
  return buf;
}

MeasurementSettings calibration_settings(const ExperimentConfig& cfg) {
  MeasurementSettings s = cfg.settings(0.0);
  s.alpha1 = 0.0;
  s.alpha2 = M_PI / 2;
  s.beta1 = 0.0;
  s.beta2 = M_PI / 2;
  s.delta = 0.0;
  return s;
}

CoincidenceTensor acquire(const std::vector<WeightedBranchState>& components,
                          const ExperimentConfig& cfg, double delta,
                          const std::string& name) {
  const ProbabilityTensor probs = pixel_distribution(components, cfg.grid());
  const std::string stream = name + "@" + delta_tag(delta);
  CoincidenceTensor t =
      sample_coincidences(probs, cfg.n_events, substream_seed(cfg.seed, stream));
  t.meta["acquisition"] = name;
  t.meta["delta"] = delta_tag(delta);
  t.meta["visibility"] = std::to_string(cfg.visibility);
  t.meta["g_over_sigma"] = std::to_string(cfg.g_over_sigma);
  t.meta["sigma"] = std::to_string(cfg.sigma);
  t.meta["seed"] = std::to_string(cfg.seed);
  return t;
}

void write_calibration_json(const CalibrationRecord& cal, const std::string& path) {
  nlohmann::ordered_json j;
  static const char* axes[4] = {"xA", "yA", "xB", "yB"};
  for (int k = 0; k < 4; ++k) {
    nlohmann::ordered_json a;
    a["center0"] = cal.center0[k];
    a["center1"] = cal.center1[k];
    a["hwp_shift"] = cal.hwp_shift[k];
    a["sigma0"] = cal.sigma0[k];
    a["sigma1"] = cal.sigma1[k];
    a["sigma_shift"] = cal.sigma_shift[k];
    a["g"] = cal.g(k);
    j[axes[k]] = a;
  }
  std::ofstream os(path);
  os << j.dump(2) << "\n";
}

void write_theory_json(const TheoryRecord& t, const std::string& path) {
  nlohmann::ordered_json j;
  j["delta"] = t.delta;
  j["B_theory"] = t.B;
  j["Delta_theory"] = t.Delta;
  j["RI_theory"] = t.RI;
  j["purity_out"] = t.purity_out;
  std::ofstream os(path);
  os << j.dump(2) << "\n";
}

}  // namespace

RunResult run_protocol(const ExperimentConfig& cfg, double delta) {
  cfg.validate();
  if (cfg.n_events <= 0)
    throw std::invalid_argument("run_protocol: n_events must be positive");

  const fs::path run_dir = fs::path(cfg.out_dir) / ("delta_" + delta_tag(delta));
  fs::create_directories(run_dir);
  try {
    const double sigma = cfg.sigma * cfg.pitch;
    const MeasurementSettings s_cal = calibration_settings(cfg);
    const MeasurementSettings s_meas = cfg.settings(delta);

    // crystals in: two separable calibration inputs, wave plates at zero
    std::vector<WeightedBranchState> hv{{1.0, product_branch_state(0, 1, sigma)}};
    std::vector<WeightedBranchState> vh{{1.0, product_branch_state(1, 0, sigma)}};
    const CoincidenceTensor acq_hv =
        acquire(apply_protocol_couplings(hv, s_cal), cfg, delta, "calib-HV");
    const CoincidenceTensor acq_vh =
        acquire(apply_protocol_couplings(vh, s_cal), cfg, delta, "calib-VH");

    // main acquisition at the measurement angles
    auto main_components = apply_protocol_couplings(initial_state(cfg.visibility, sigma), s_meas);
    main_components = inject_hwp_shift(std::move(main_components), cfg.injected_hwp_shifts);
    const CoincidenceTensor acq_main = acquire(main_components, cfg, delta, "main");

    // crystals out: one run at measurement angles (wave-plate shift present),
    // two zero-angle references
    const CoincidenceTensor acq_nc1 =
        acquire(inject_hwp_shift(initial_state(cfg.visibility, sigma), cfg.injected_hwp_shifts),
                cfg, delta, "nocrystal-1");
    const CoincidenceTensor acq_nc2 =
        acquire({{1.0, product_branch_state(0, 1, sigma)}}, cfg, delta, "nocrystal-2");
    const CoincidenceTensor acq_nc3 =
        acquire({{1.0, product_branch_state(1, 0, sigma)}}, cfg, delta, "nocrystal-3");

    acq_hv.save_file((run_dir / "calib_hv.tensor").string());
    acq_vh.save_file((run_dir / "calib_vh.tensor").string());
    acq_main.save_file((run_dir / "main.tensor").string());
    acq_nc1.save_file((run_dir / "nocrystal_1.tensor").string());
    acq_nc2.save_file((run_dir / "nocrystal_2.tensor").string());
    acq_nc3.save_file((run_dir / "nocrystal_3.tensor").string());

    const std::uint64_t subset_seed =
        substream_seed(cfg.seed, "subsets@" + delta_tag(delta));
    CalibrationRecord cal = calibrate(acq_hv, acq_vh, 10, subset_seed);
    const ShiftCorrection sc = shift_correction(acq_nc1, acq_nc2, acq_nc3, 10, subset_seed);
    for (int k = 0; k < 4; ++k) {
      cal.hwp_shift[k] = sc.shift[k];
      cal.sigma_shift[k] = sc.se[k];
    }

    RunResult res;
    res.run_dir = run_dir.string();
    res.calibration = cal;
    res.estimates = ri_estimate(moments(acq_main), cal);
    res.theory = theory_record(cfg, delta);

    write_calibration_json(cal, (run_dir / "calibration.json").string());
    {
      std::ofstream os(run_dir / "estimates.json");
      os << estimates_json(res.estimates, delta);
    }
    write_theory_json(res.theory, (run_dir / "theory.json").string());
    return res;
  } catch (...) {
    fs::remove_all(run_dir);
    throw;
  }
}

namespace {

void append_csv(std::ostream& os, std::initializer_list<double> values) {
  char buf[64];
  bool first = true;
  for (double v : values) {
    std::snprintf(buf, sizeof buf, "%.10g", v);
    os << (first ? "" : ",") << buf;
    first = false;
  }
  os << "\n";
}

}  // namespace

SweepResult sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  fs::create_directories(cfg.out_dir);
  SweepResult out;
  out.table_path = (fs::path(cfg.out_dir) / "tables.csv").string();
  out.curve_path = (fs::path(cfg.out_dir) / "theory_curve.csv").string();

  std::ofstream table(out.table_path);
  table << kTableHeader << "\n";
  for (double delta : cfg.delta_list) {
    RunResult r = run_protocol(cfg, delta);
    const EstimateSet& e = r.estimates;
    append_csv(table, {delta,
                       e.B.value, e.B.sigma_total(), e.B.sigma_stat, e.B.sigma_cal,
                       e.Delta.value, e.Delta.sigma_total(), e.Delta.sigma_stat, e.Delta.sigma_cal,
                       e.RI.value, e.RI.sigma_total(), e.RI.sigma_stat, e.RI.sigma_cal,
                       e.RI_B.value, e.RI_B.sigma_total(),
                       e.RI_Delta.value, e.RI_Delta.sigma_total(),
                       r.theory.B, r.theory.Delta, r.theory.RI});
    out.rows.push_back(std::move(r));
  }

  std::ofstream curve(out.curve_path);
  curve << kCurveHeader << "\n";
  const PolarizationState rho = PolarizationState::werner(cfg.visibility);
  const int n_curve = 201;
  for (int i = 0; i < n_curve; ++i) {
    const double d = -M_PI / 2 + M_PI * i / (n_curve - 1);
    const MeasurementSettings s = cfg.settings(d);
    append_csv(curve, {d, chsh_theory(rho, s),
                       delta_theory(rho, s).value_or(std::nan("")),
                       ri_theory(rho, s).value_or(std::nan(""))});
  }
  return out;
}

namespace {

PolarizationState random_density_matrix(std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix4 g;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) g(i, j) = Complex(gauss(rng), gauss(rng));
  Matrix4 rho = g * g.adjoint();
  rho /= rho.trace().real();
  return {rho, std::numeric_limits<double>::quiet_NaN()};
}

}  // namespace

VerifyResult verify(const VerifyOptions& opt) {
  std::ostringstream rep;
  bool all_ok = true;
  auto line = [&](bool ok, const std::string& name, const std::string& detail) {
    rep << (ok ? "[PASS] " : "[FAIL] ") << name << ": " << detail << "\n";
    all_ok = all_ok && ok;
  };

  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> angle(0.0, M_PI);
  double worst_eig = 1e300;
  double worst_chain = -1e300;
  double worst_b = 0.0;
  double ri_min = 1e300, ri_max = -1e300;
  int undefined = 0;
  for (int k = 0; k < opt.n_states; ++k) {
    const PolarizationState rho = random_density_matrix(rng);
    MeasurementSettings s;
    s.alpha1 = angle(rng);
    s.alpha2 = angle(rng);
    s.beta1 = angle(rng);
    s.beta2 = angle(rng);
    const CovarianceReport rep_k = covariance_report(rho, s);
    for (double e : rep_k.min_eigenvalues) worst_eig = std::min(worst_eig, e);
    worst_b = std::max(worst_b, std::abs(chsh_theory(rho, s)));
    if (!rep_k.defined) {
      ++undefined;
      continue;
    }
    for (const auto& c : rep_k.chain) worst_chain = std::max(worst_chain, c.lhs - c.rhs);
    const auto ri = ri_theory(rho, s);
    if (ri) {
      ri_min = std::min(ri_min, *ri);
      ri_max = std::max(ri_max, *ri);
    }
  }
  {
    std::ostringstream d;
    d << "worst min eigenvalue " << worst_eig << " over " << opt.n_states << " states";
    line(worst_eig >= -opt.tol, "covariance positivity", d.str());
  }
  {
    std::ostringstream d;
    d << "worst lhs - rhs = " << worst_chain << " (" << undefined << " degenerate states skipped)";
    line(worst_chain <= opt.tol, "inequality chain", d.str());
  }
  {
    std::ostringstream d;
    d << "max |B| = " << worst_b;
    line(worst_b <= 2.0 * std::sqrt(2.0) + opt.tol, "Tsirelson bound", d.str());
  }
  {
    std::ostringstream d;
    d << "RI range [" << ri_min << ", " << ri_max << "]";
    line(ri_min >= -opt.tol && ri_max <= 1.0 + opt.tol, "RI bound", d.str());
  }

  // decoherence expansion: residual against the exact reduced purity must
  // scale as the cube of Omega (factor ~8 when Omega is halved via g/sqrt(2))
  {
    const double sigma = 2.5;
    const MeasurementSettings s = MeasurementSettings::paper_default(0.3, 0.2, sigma);
    bool ratio_ok = true;
    std::ostringstream d;
    for (double gos : {0.05, 0.1, 0.2}) {
      auto residual = [&](double g) {
        MeasurementSettings sg = s;
        for (auto& party : sg.g) party = {g, g};
        auto comps = apply_protocol_couplings(initial_state(1.0, sigma), sg);
        const double exact = reduced_polarization_state(comps).purity;
        const double omega = decoherence_omega(g, sigma);
        return std::abs(exact - purity_expansion(omega, sg.alpha1, sg.alpha2, sg.beta1, sg.beta2));
      };
      const double r1 = residual(gos * sigma);
      const double r2 = residual(gos * sigma / std::sqrt(2.0));  // Omega -> Omega/2
      const double ratio = r1 / r2;
      d << "g/sigma=" << gos << " ratio=" << ratio << "  ";
      ratio_ok = ratio_ok && ratio >= 6.0 && ratio <= 10.0;
    }
    line(ratio_ok, "purity expansion O(Omega^3) residual", d.str());
  }
  {
    auto comps = initial_state(1.0, 2.5);  // no couplings: Omega = 0
    const double exact = reduced_polarization_state(comps).purity;
    const double expanded = purity_expansion(0.0, 0, 1, 2, 3);
    std::ostringstream d;
    d << "exact " << exact << " vs expansion " << expanded;
    line(std::abs(exact - expanded) < 1e-12, "purity expansion at Omega = 0", d.str());
  }

  VerifyResult out;
  out.passed = all_ok;
  out.report = rep.str() + (all_ok ? "ALL CHECKS PASSED\n" : "CHECKS FAILED\n");
  return out;
}

}  // namespace riwm
