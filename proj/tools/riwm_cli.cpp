#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "riwm/protocol.hpp"

namespace {

struct CommonFlags {
  std::string config;
  double delta = 0.0;
  std::int64_t events = 0;
  std::uint64_t seed = 0;
  double visibility = 0.0;
  double g_over_sigma = 0.0;
  std::string out;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool with_delta) {
  cmd->add_option("--config", f.config, "flat key-value config file");
  if (with_delta) cmd->add_option("--delta", f.delta, "mismatch angle delta (radians)");
  cmd->add_option("--events", f.events, "coincidence events per acquisition");
  cmd->add_option("--seed", f.seed, "master seed");
  cmd->add_option("--visibility", f.visibility, "Werner visibility V");
  cmd->add_option("--g-over-sigma", f.g_over_sigma, "coupling strength g/sigma");
  cmd->add_option("--out", f.out, "output directory");
}

riwm::ExperimentConfig build_config(const CLI::App* cmd, const CommonFlags& f) {
  riwm::ExperimentConfig cfg;
  if (!f.config.empty()) cfg = riwm::ExperimentConfig::from_file(f.config);
  if (cmd->count("--events")) cfg.n_events = f.events;
  if (cmd->count("--seed")) cfg.seed = f.seed;
  if (cmd->count("--visibility")) cfg.visibility = f.visibility;
  if (cmd->count("--g-over-sigma")) cfg.g_over_sigma = f.g_over_sigma;
  if (cmd->count("--out")) cfg.out_dir = f.out;
  return cfg;
}

void print_estimates(const riwm::RunResult& r) {
  auto row = [](const char* name, const riwm::QuantityEstimate& q, double theory) {
    std::printf("%-8s %+10.4f +/- %.4f (stat %.4f, cal %.4f)   theory %+10.4f\n", name,
                q.value, q.sigma_total(), q.sigma_stat, q.sigma_cal, theory);
  };
  std::printf("delta = %+.6f rad\n", r.theory.delta);
  row("B", r.estimates.B, r.theory.B);
  row("Delta", r.estimates.Delta, r.theory.Delta);
  row("RI", r.estimates.RI, r.theory.RI);
  row("RI_B", r.estimates.RI_B, r.theory.RI - r.theory.Delta * r.theory.Delta);
  row("RI_Delta", r.estimates.RI_Delta, r.theory.Delta * r.theory.Delta);
  std::printf("artifacts: %s\n", r.run_dir.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weak-measurement simulation of the relativistic-independence bound test"};
  app.require_subcommand(1);

  CommonFlags run_f, sweep_f, verify_f, theory_f;
  CLI::App* run_cmd = app.add_subcommand("run", "six-acquisition protocol at one delta");
  add_common(run_cmd, run_f, true);
  CLI::App* sweep_cmd = app.add_subcommand("sweep", "protocol over the delta list; emits tables.csv");
  add_common(sweep_cmd, sweep_f, false);
  CLI::App* verify_cmd = app.add_subcommand("verify", "randomized bound and purity-expansion checks");
  add_common(verify_cmd, verify_f, false);
  int verify_states = 10000;
  verify_cmd->add_option("--states", verify_states, "number of random states");
  CLI::App* theory_cmd = app.add_subcommand("theory", "oracle curves only; emits theory_curve.csv");
  add_common(theory_cmd, theory_f, false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) {
      const riwm::ExperimentConfig cfg = build_config(run_cmd, run_f);
      print_estimates(riwm::run_protocol(cfg, run_f.delta));
    } else if (sweep_cmd->parsed()) {
      const riwm::ExperimentConfig cfg = build_config(sweep_cmd, sweep_f);
      const riwm::SweepResult res = riwm::sweep(cfg);
      for (const auto& r : res.rows) {
        std::printf("delta %+0.4f  B %+0.4f+/-%0.4f  RI %0.4f+/-%0.4f  (theory %0.4f)\n",
                    r.theory.delta, r.estimates.B.value, r.estimates.B.sigma_total(),
                    r.estimates.RI.value, r.estimates.RI.sigma_total(), r.theory.RI);
      }
      std::printf("wrote %s and %s\n", res.table_path.c_str(), res.curve_path.c_str());
    } else if (verify_cmd->parsed()) {
      riwm::VerifyOptions opt;
      opt.n_states = verify_states;
      if (verify_cmd->count("--seed")) opt.seed = verify_f.seed;
      const riwm::VerifyResult res = riwm::verify(opt);
      std::fputs(res.report.c_str(), stdout);
      const std::string out_dir = verify_cmd->count("--out") ? verify_f.out : std::string("out");
      std::filesystem::create_directories(out_dir);
      const std::string path = (std::filesystem::path(out_dir) / "verify_report.txt").string();
      std::ofstream os(path);
      os << res.report;
      std::printf("wrote %s\n", path.c_str());
      return res.passed ? 0 : 1;
    } else if (theory_cmd->parsed()) {
      riwm::ExperimentConfig cfg = build_config(theory_cmd, theory_f);
      cfg.validate();
      std::filesystem::create_directories(cfg.out_dir);
      const std::string path =
          (std::filesystem::path(cfg.out_dir) / "theory_curve.csv").string();
      std::ofstream os(path);
      os << riwm::kCurveHeader << "\n";
      const riwm::PolarizationState rho = riwm::PolarizationState::werner(cfg.visibility);
      for (int i = 0; i <= 200; ++i) {
        const double d = -M_PI / 2 + M_PI * i / 200.0;
        const riwm::MeasurementSettings s = cfg.settings(d);
        char buf[160];
        std::snprintf(buf, sizeof buf, "%.10g,%.10g,%.10g,%.10g\n", d,
                      riwm::chsh_theory(rho, s),
                      riwm::delta_theory(rho, s).value_or(std::nan("")),
                      riwm::ri_theory(rho, s).value_or(std::nan("")));
        os << buf;
      }
      std::printf("wrote %s\n", path.c_str());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
