#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "ebbeam/ebbeam.hpp"

namespace {

struct Overrides {
  std::optional<double> dt;
  std::optional<int> mesh;
  std::optional<double> t_final;
};

void add_overrides(CLI::App* app, Overrides& o) {
  app->add_option("--dt", o.dt, "time step (overrides the config)")->check(CLI::PositiveNumber);
  app->add_option("--mesh", o.mesh, "element count (overrides the config)")->check(CLI::PositiveNumber);
  app->add_option("--t-final", o.t_final, "final time (overrides the config)")->check(CLI::PositiveNumber);
}

int require_valid(const ebbeam::ExperimentConfig& cfg) {
  const auto report = ebbeam::validate(cfg.system);
  if (report.physically_valid()) return ebbeam::exit_ok;
  std::cerr << "invalid system:\n" << report.summary();
  return ebbeam::exit_invalid_system;
}

std::string fmt(double v) { return ebbeam::csv::format(v); }

int run_simulate(const std::string& config, const std::string& out, const Overrides& o) {
  auto cfg = ebbeam::load_config(config);
  if (o.dt) cfg.simulation.dt = *o.dt;
  if (o.mesh) cfg.simulation.mesh = *o.mesh;
  if (o.t_final) cfg.simulation.t_final = *o.t_final;
  if (int rc = require_valid(cfg)) return rc;
  const auto s = ebbeam::simulate(cfg, out);
  std::cout << "steps " << s.steps << ", energy " << fmt(s.energy_initial) << " -> " << fmt(s.energy_final)
            << "\nmax identity violation " << fmt(s.max_identity_violation) << "\nmax energy increase "
            << fmt(s.max_energy_increase) << "\ncertificate channel1: " << s.provenance1
            << "\ncertificate channel2: " << s.provenance2 << "\n";
  const bool ok = s.max_identity_violation <= 1e-10 && s.max_energy_increase <= 1e-12;
  return ok ? ebbeam::exit_ok : ebbeam::exit_check_failed;
}

int run_converge(const std::string& axis, const std::string& config, const std::string& out, const Overrides& o) {
  auto cfg = ebbeam::load_config(config);
  if (int rc = require_valid(cfg)) return rc;
  std::vector<ebbeam::ConvergenceRow> rows;
  if (axis == "space") {
    if (o.dt) cfg.space.dt = *o.dt;
    if (o.mesh) cfg.space.reference_mesh = *o.mesh;
    if (o.t_final) cfg.space.t_final = *o.t_final;
    rows = ebbeam::converge_space(cfg);
  } else {
    if (o.dt) {
      const double scale = *o.dt / cfg.time.dts.front();
      for (double& d : cfg.time.dts) d *= scale;
    }
    if (o.mesh) cfg.time.mesh = *o.mesh;
    if (o.t_final) cfg.time.t_final = *o.t_final;
    rows = ebbeam::converge_time(cfg);
  }
  std::filesystem::create_directories(out);
  const auto path = (std::filesystem::path(out) / ("convergence_" + axis + ".csv")).string();
  ebbeam::write_convergence_csv(path, rows);
  std::printf("%-14s %-14s %-24s %s\n", "dt", "h", "error", "rate");
  for (const auto& r : rows)
    std::printf("%-14.6g %-14.6g %-24.17g %s\n", r.dt, r.h, r.error, r.rate ? fmt(*r.rate).c_str() : "-");
  return ebbeam::exit_ok;
}

int run_spectrum(const std::string& config, int n_max, const std::string& out, const Overrides& o) {
  auto cfg = ebbeam::load_config(config);
  if (o.mesh) cfg.spectrum.mesh = *o.mesh;
  if (int rc = require_valid(cfg)) return rc;
  const auto r = ebbeam::spectrum(cfg, n_max, out);
  bool ok = true;
  for (const auto& root : r.roots) ok = ok && root.residual <= 1e-9 && root.lambda.real() < 0.0;
  std::printf("%4s %-24s %-24s %-10s\n", "n", "re_lambda", "im_lambda", "residual");
  for (const auto& root : r.roots)
    std::printf("%4d %-24.17g %-24.17g %-10.3e\n", root.n, root.lambda.real(), root.lambda.imag(), root.residual);
  for (const auto& m : r.matches)
    std::printf("mode %d: FEM %.12g%+.12gi, relative difference %.3e\n", m.n, m.fem.real(), m.fem.imag(), m.rel_error);
  return ok ? ebbeam::exit_ok : ebbeam::exit_check_failed;
}

int run_kyp_check(const std::string& config, const std::string& write_to) {
  auto cfg = ebbeam::load_config(config);
  const auto rows = ebbeam::kyp_check(cfg);
  ebbeam::print_kyp_table(std::cout, rows);
  bool ok = true;
  for (const auto& r : rows) ok = ok && r.ok;
  if (!write_to.empty()) {
    auto doc = ebbeam::read_json_file(config);
    ebbeam::write_certificates(doc, cfg.system);
    std::ofstream f(write_to);
    if (!f) throw ebbeam::Error("cannot open " + write_to + " for writing");
    f << doc.dump(2) << "\n";
  }
  return ok ? ebbeam::exit_ok : ebbeam::exit_check_failed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Boundary-controlled Euler-Bernoulli beam: simulation, convergence studies, spectrum, KYP checks"};
  app.require_subcommand(1);
  std::string config, out, axis, write_to;
  int n_max = 30;
  Overrides o;

  auto* sim = app.add_subcommand("simulate", "run the Crank-Nicolson simulation");
  sim->add_option("--config", config, "JSON config")->required()->check(CLI::ExistingFile);
  sim->add_option("--out", out, "output directory")->required();
  add_overrides(sim, o);

  auto* conv = app.add_subcommand("converge", "self-convergence study in space or time");
  conv->add_option("--axis", axis, "space or time")->required()->check(CLI::IsMember({"space", "time"}));
  conv->add_option("--config", config, "JSON config")->required()->check(CLI::ExistingFile);
  conv->add_option("--out", out, "output directory")->required();
  add_overrides(conv, o);

  auto* spec = app.add_subcommand("spectrum", "closed-loop eigenvalues by Newton's method");
  spec->add_option("--config", config, "JSON config")->required()->check(CLI::ExistingFile);
  spec->add_option("--n-max", n_max, "number of modes")->check(CLI::PositiveNumber);
  spec->add_option("--out", out, "output directory")->required();
  add_overrides(spec, o);

  auto* kyp = app.add_subcommand("kyp-check", "SPR margin and KYP certificate of each channel");
  kyp->add_option("--config", config, "JSON config")->required()->check(CLI::ExistingFile);
  kyp->add_option("--write-certificate", write_to, "write the config with certificates to this file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? ebbeam::exit_ok : ebbeam::exit_usage;
  }

  try {
    if (sim->parsed()) return run_simulate(config, out, o);
    if (conv->parsed()) return run_converge(axis, config, out, o);
    if (spec->parsed()) return run_spectrum(config, n_max, out, o);
    if (kyp->parsed()) return run_kyp_check(config, write_to);
  } catch (const ebbeam::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return ebbeam::exit_usage;
  } catch (const ebbeam::PreconditionViolation& e) {
    std::cerr << "error: " << e.what() << "\n";
    return ebbeam::exit_usage;
  } catch (const ebbeam::Error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return ebbeam::exit_numerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return ebbeam::exit_error;
  }
  return ebbeam::exit_error;
}
