#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <future>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "ebbeam/config.hpp"
#include "ebbeam/controller.hpp"
#include "ebbeam/csv.hpp"
#include "ebbeam/errors.hpp"
#include "ebbeam/fem.hpp"
#include "ebbeam/spectral.hpp"
#include "ebbeam/stepper.hpp"
#include "ebbeam/validation.hpp"

namespace ebbeam {

/// Process exit codes of the command line tool.
enum ExitCode : int {
  exit_ok = 0,
  exit_error = 1,          ///< unexpected failure
  exit_usage = 2,          ///< bad command line or configuration
  exit_invalid_system = 3, ///< validation failed
  exit_check_failed = 4,   ///< a requested check did not pass
  exit_numerical = 5,      ///< solver failure (no convergence, singular system, ...)
};

/// Attaches a kyp_solve certificate to every channel that lacks one; delta
/// defaults to the sampled SPR margin.
inline void ensure_certificates(ControlSystem& system, const KypSettings& settings = {}) {
  auto fill = [&](ControllerChannel& ch, const std::optional<double>& delta) {
    if (ch.certificate || ch.spr.dim() == 0) return;
    const double d = delta ? *delta : spr_margin(ch.spr, settings.spr_omega_max, settings.spr_samples);
    KypOptions o;
    o.eps_grid = settings.eps_grid;
    ch.certificate = kyp_solve(ch.spr, std::min(d, ch.spr.d), o);
  };
  fill(system.channel1, settings.delta1);
  fill(system.channel2, settings.delta2);
}

inline DiscreteState initial_state(const ExperimentConfig& cfg, const Mesh& mesh) {
  DiscreteState s;
  s.U = hermite_interpolant([&](double x) { return cfg.ic.u0(x); },
                            [&](double x) { return cfg.ic.u0.derivative(x, 1); }, mesh);
  s.V = hermite_interpolant([&](double x) { return cfg.ic.v0(x); },
                            [&](double x) { return cfg.ic.v0.derivative(x, 1); }, mesh);
  s.zeta1 = cfg.ic.zeta1.size() == cfg.system.channel1.spr.dim()
                ? cfg.ic.zeta1
                : Eigen::VectorXd::Zero(cfg.system.channel1.spr.dim());
  s.zeta2 = cfg.ic.zeta2.size() == cfg.system.channel2.spr.dim()
                ? cfg.ic.zeta2
                : Eigen::VectorXd::Zero(cfg.system.channel2.spr.dim());
  return s;
}

inline long long step_count(double t_final, double dt) {
  if (!(dt > 0.0)) throw PreconditionViolation("dt must be positive");
  if (!(t_final >= dt)) throw PreconditionViolation("t_final must be at least dt");
  return static_cast<long long>(std::floor(t_final / dt + 1e-9));
}

struct SimulationSummary {
  long long steps = 0;
  double dt = 0.0;
  int mesh = 0;
  double energy_initial = 0.0;
  double energy_final = 0.0;
  double max_identity_violation = 0.0;  ///< max |actual - predicted| / energy_initial
  double max_energy_increase = 0.0;     ///< max (E^{n+1} - E^n) / energy_initial, <= 0 when monotone
  std::string provenance1;
  std::string provenance2;
};

inline void write_summary_csv(const std::string& path, const SimulationSummary& s) {
  csv::Writer w(path, {"key", "value"});
  w.cell(std::string("steps")).cell(s.steps).end_row();
  w.cell(std::string("dt")).cell(s.dt).end_row();
  w.cell(std::string("mesh")).cell(s.mesh).end_row();
  w.cell(std::string("energy_initial")).cell(s.energy_initial).end_row();
  w.cell(std::string("energy_final")).cell(s.energy_final).end_row();
  w.cell(std::string("max_identity_violation")).cell(s.max_identity_violation).end_row();
  w.cell(std::string("max_energy_increase")).cell(s.max_energy_increase).end_row();
  auto quoted = [](const std::string& v) {
    std::string out = "\"";
    for (char c : v) out += c == '"' ? std::string("\"\"") : std::string(1, c);
    return out + "\"";
  };
  w.cell(std::string("certificate1")).cell(quoted(s.provenance1)).end_row();
  w.cell(std::string("certificate2")).cell(quoted(s.provenance2)).end_row();
}

/// Runs the configured simulation. With a non-empty out_dir it writes
/// trajectory.csv, summary.csv and (if enabled) snapshots.csv.
inline SimulationSummary simulate(ExperimentConfig cfg, const std::string& out_dir = "") {
  ensure_certificates(cfg.system, cfg.kyp);
  const auto& sim = cfg.simulation;
  const Mesh mesh(sim.mesh, cfg.system.beam.length);
  const AssembledSystem sys = assemble(cfg.system, mesh);
  const SteppingOperator op = build_stepper(sys, cfg.system, sim.dt);
  const long long steps = step_count(sim.t_final, sim.dt);

  std::optional<TrajectoryWriter> traj;
  std::optional<csv::Writer> snaps;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    traj.emplace((std::filesystem::path(out_dir) / "trajectory.csv").string(), sim.flush_every);
    if (sim.snapshot_every > 0)
      snaps.emplace((std::filesystem::path(out_dir) / "snapshots.csv").string(),
                    std::vector<std::string>{"step", "t", "x", "u"});
  }
  auto snapshot = [&](const DiscreteState& s) {
    if (!snaps || s.step_index % sim.snapshot_every != 0) return;
    snaps->cell(s.step_index).cell(s.t).cell(0.0).cell(0.0).end_row();
    for (int m = 1; m <= mesh.elements(); ++m)
      snaps->cell(s.step_index).cell(s.t).cell(mesh.node(m)).cell(s.U(2 * m - 2)).end_row();
  };

  SimulationSummary out;
  out.steps = steps;
  out.dt = sim.dt;
  out.mesh = sim.mesh;
  out.provenance1 = cfg.system.channel1.certificate ? cfg.system.channel1.certificate->provenance : "none (n = 0)";
  out.provenance2 = cfg.system.channel2.certificate ? cfg.system.channel2.certificate->provenance : "none (n = 0)";
  DiscreteState s = initial_state(cfg, mesh);
  double e = discrete_norm_sq(s, sys, cfg.system);
  out.energy_initial = e;
  out.max_energy_increase = -std::numeric_limits<double>::infinity();
  const double scale = e > 0.0 ? e : 1.0;
  if (traj) traj->write(s, e);
  snapshot(s);
  for (long long k = 0; k < steps; ++k) {
    DiscreteState next = step(op, s);
    next.t = static_cast<double>(next.step_index) * sim.dt;
    const double en = discrete_norm_sq(next, sys, cfg.system);
    const double predicted = dissipation_decrement(s, next, cfg.system, sim.dt);
    const double actual = e - en;
    out.max_identity_violation = std::max(out.max_identity_violation, std::abs(actual - predicted) / scale);
    out.max_energy_increase = std::max(out.max_energy_increase, (en - e) / scale);
    if (traj) traj->write(next, en, &predicted, &actual);
    snapshot(next);
    s = std::move(next);
    e = en;
  }
  out.energy_final = e;
  if (steps == 0) out.max_energy_increase = 0.0;
  if (traj) traj->flush();
  if (!out_dir.empty()) write_summary_csv((std::filesystem::path(out_dir) / "summary.csv").string(), out);
  return out;
}

struct ConvergenceRow {
  double dt = 0.0;
  double h = 0.0;
  double error = 0.0;
  std::optional<double> rate;
};

inline void fill_rates(std::vector<ConvergenceRow>& rows) {
  for (std::size_t i = 1; i < rows.size(); ++i)
    rows[i].rate = std::log2(rows[i - 1].error / rows[i].error);
}

inline void write_convergence_csv(const std::string& path, const std::vector<ConvergenceRow>& rows) {
  csv::Writer w(path, {"dt", "h", "error", "rate"});
  for (const auto& r : rows) {
    w.cell(r.dt).cell(r.h).cell(r.error);
    if (r.rate) w.cell(*r.rate); else w.empty();
    w.end_row();
  }
}

namespace detail {

// States at every `stride`-th step up to `steps` (inclusive of step 0).
inline std::vector<DiscreteState> run_levels(const ExperimentConfig& cfg, const AssembledSystem& sys, double dt,
                                             long long steps, long long stride) {
  const SteppingOperator op = build_stepper(sys, cfg.system, dt);
  std::vector<DiscreteState> out;
  out.reserve(static_cast<std::size_t>(steps / stride + 1));
  DiscreteState s = initial_state(cfg, sys.mesh);
  out.push_back(s);
  for (long long k = 1; k <= steps; ++k) {
    s = step(op, s);
    if (k % stride == 0) out.push_back(s);
  }
  return out;
}

inline DiscreteState prolong_state(const DiscreteState& s, const Mesh& coarse, const Mesh& fine) {
  DiscreteState out = s;
  out.U = prolong(s.U, coarse, fine);
  out.V = prolong(s.V, coarse, fine);
  return out;
}

inline DiscreteState difference(const DiscreteState& a, const DiscreteState& b) {
  DiscreteState d;
  d.U = a.U - b.U;
  d.V = a.V - b.V;
  d.zeta1 = a.zeta1 - b.zeta1;
  d.zeta2 = a.zeta2 - b.zeta2;
  return d;
}

}  // namespace detail

/// Self-convergence in h at fixed dt against a nested finer reference mesh.
/// error = sqrt(dt sum_n ||z_h^n - z_ref^n||^2) in the reference energy norm,
/// coarse solutions being represented exactly on the reference mesh.
inline std::vector<ConvergenceRow> converge_space(ExperimentConfig cfg) {
  ensure_certificates(cfg.system, cfg.kyp);
  const auto& st = cfg.space;
  if (st.meshes.empty()) throw PreconditionViolation("converge_space: empty mesh list");
  for (std::size_t i = 1; i < st.meshes.size(); ++i)
    if (st.meshes[i] <= st.meshes[i - 1] || st.meshes[i] % st.meshes[i - 1] != 0)
      throw MeshMismatch("converge_space: meshes must be strictly refining and nested");
  const int ref_mesh = st.reference_mesh > 0 ? st.reference_mesh : 2 * st.meshes.back();
  if (ref_mesh % st.meshes.back() != 0) throw MeshMismatch("converge_space: reference mesh does not nest");
  if (st.reference_dt_divisor < 1) throw PreconditionViolation("converge_space: reference_dt_divisor must be >= 1");
  const double L = cfg.system.beam.length;
  const long long steps = step_count(st.t_final, st.dt);

  const Mesh fine(ref_mesh, L);
  const AssembledSystem ref_sys = assemble(cfg.system, fine);
  const auto ref = detail::run_levels(cfg, ref_sys, st.dt / st.reference_dt_divisor,
                                      steps * st.reference_dt_divisor, st.reference_dt_divisor);

  std::vector<std::future<ConvergenceRow>> jobs;
  for (int P : st.meshes) {
    jobs.push_back(std::async(std::launch::async, [&, P] {
      const Mesh coarse(P, L);
      const AssembledSystem sys = assemble(cfg.system, coarse);
      const auto tr = detail::run_levels(cfg, sys, st.dt, steps, 1);
      double acc = 0.0;
      for (std::size_t k = 0; k < tr.size(); ++k) {
        const auto d = detail::difference(detail::prolong_state(tr[k], coarse, fine), ref[k]);
        acc += st.dt * discrete_norm_sq(d, ref_sys, cfg.system);
      }
      return ConvergenceRow{st.dt, coarse.h(), std::sqrt(acc), std::nullopt};
    }));
  }
  std::vector<ConvergenceRow> rows;
  for (auto& j : jobs) rows.push_back(j.get());
  fill_rates(rows);
  return rows;
}

/// Self-convergence in dt on a fixed mesh against dt_min / divisor, compared at
/// the time levels of each run up to the largest common multiple of all steps
/// not exceeding t_final.
inline std::vector<ConvergenceRow> converge_time(ExperimentConfig cfg) {
  ensure_certificates(cfg.system, cfg.kyp);
  const auto& st = cfg.time;
  if (st.dts.empty()) throw PreconditionViolation("converge_time: empty dt list");
  const double dt_min = st.dts.back();
  std::vector<long long> ratio;
  for (std::size_t i = 0; i < st.dts.size(); ++i) {
    const double r = st.dts[i] / dt_min;
    const long long ri = std::llround(r);
    if (std::abs(r - static_cast<double>(ri)) > 1e-9 * r || (i > 0 && !(st.dts[i] < st.dts[i - 1])))
      throw PreconditionViolation("converge_time: dts must decrease and be integer multiples of the smallest");
    ratio.push_back(ri);
  }
  if (st.reference_dt_divisor < 1) throw PreconditionViolation("converge_time: reference_dt_divisor must be >= 1");
  const long long coarse_ratio = ratio.front();
  const long long levels = step_count(st.t_final, st.dts.front());  // steps of the coarsest run
  const double dt_ref = dt_min / st.reference_dt_divisor;
  const long long ref_per_min = st.reference_dt_divisor;
  const long long ref_steps = levels * coarse_ratio * ref_per_min;

  const Mesh mesh(st.mesh, cfg.system.beam.length);
  const AssembledSystem sys = assemble(cfg.system, mesh);
  const auto ref = detail::run_levels(cfg, sys, dt_ref, ref_steps, ref_per_min);  // at dt_min levels

  std::vector<std::future<ConvergenceRow>> jobs;
  for (std::size_t i = 0; i < st.dts.size(); ++i) {
    jobs.push_back(std::async(std::launch::async, [&, i] {
      const double dt = st.dts[i];
      const long long steps = levels * coarse_ratio / ratio[i];
      const auto tr = detail::run_levels(cfg, sys, dt, steps, 1);
      double acc = 0.0;
      for (std::size_t k = 0; k < tr.size(); ++k) {
        const auto d = detail::difference(tr[k], ref[k * static_cast<std::size_t>(ratio[i])]);
        acc += dt * discrete_norm_sq(d, sys, cfg.system);
      }
      return ConvergenceRow{dt, mesh.h(), std::sqrt(acc), std::nullopt};
    }));
  }
  std::vector<ConvergenceRow> rows;
  for (auto& j : jobs) rows.push_back(j.get());
  fill_rates(rows);
  return rows;
}

struct DiscreteMatch {
  int n = 0;
  Complex newton;
  Complex fem;
  double rel_error = 0.0;
};

/// Nearest FEM eigenvalue (upper half plane) to each of the first `count` roots.
inline std::vector<DiscreteMatch> match_discrete(const std::vector<SpectralRoot>& roots,
                                                 const std::vector<Complex>& fem, int count) {
  std::vector<DiscreteMatch> out;
  for (int i = 0; i < count && i < static_cast<int>(roots.size()); ++i) {
    const Complex target = roots[static_cast<std::size_t>(i)].lambda;
    Complex best = fem.empty() ? Complex(std::nan(""), 0.0) : fem.front();
    for (const auto& l : fem)
      if (l.imag() > 0.0 && std::abs(l - target) < std::abs(best - target)) best = l;
    out.push_back({roots[static_cast<std::size_t>(i)].n, target, best, std::abs(best - target) / std::abs(target)});
  }
  return out;
}

struct SpectrumResult {
  std::vector<SpectralRoot> roots;
  std::vector<DiscreteMatch> matches;  ///< empty unless a mesh was configured
};

/// Newton roots for n = 1..n_max, spectrum.csv, and discrete.csv when a mesh is set.
inline SpectrumResult spectrum(const ExperimentConfig& cfg, int n_max, const std::string& out_dir = "") {
  const SpectralProblem p = transform_tables(cfg.system);
  SpectrumResult r;
  r.roots = newton_roots(n_max, p);
  if (cfg.spectrum.mesh > 0) {
    const Mesh mesh(cfg.spectrum.mesh, cfg.system.beam.length);
    const auto fem = discrete_spectrum(assemble(cfg.system, mesh), cfg.system);
    r.matches = match_discrete(r.roots, fem, cfg.spectrum.compare_modes);
  }
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    write_spectrum_csv((std::filesystem::path(out_dir) / "spectrum.csv").string(), r.roots, p);
    if (!r.matches.empty()) {
      csv::Writer w((std::filesystem::path(out_dir) / "discrete.csv").string(),
                    {"n", "re_lambda_newton", "im_lambda_newton", "re_lambda_fem", "im_lambda_fem", "rel_error"});
      for (const auto& m : r.matches)
        w.cell(m.n).cell(m.newton.real()).cell(m.newton.imag()).cell(m.fem.real()).cell(m.fem.imag())
            .cell(m.rel_error).end_row();
    }
  }
  return r;
}

struct KypCheckRow {
  std::string channel;
  double margin = 0.0;
  bool spr = false;
  std::string message;
  std::optional<KypCertificate> certificate;
  KypResidual residual;
  bool ok = false;
};

/// SPR margin and certificate (configured or computed) for both channels.
/// Attaches computed certificates to cfg.system.
inline std::vector<KypCheckRow> kyp_check(ExperimentConfig& cfg, double tol = 1e-10) {
  std::vector<KypCheckRow> rows;
  auto one = [&](const char* name, ControllerChannel& ch, const std::optional<double>& delta) {
    KypCheckRow r;
    r.channel = name;
    if (ch.spr.dim() == 0) {
      r.margin = ch.spr.d;
      r.spr = ch.spr.d > 0.0;
      r.ok = true;
      r.message = "no controller dynamics";
      rows.push_back(r);
      return;
    }
    try {
      r.margin = spr_margin(ch.spr, cfg.kyp.spr_omega_max, cfg.kyp.spr_samples);
      r.spr = true;
      if (!ch.certificate) {
        KypOptions o;
        o.eps_grid = cfg.kyp.eps_grid;
        o.tol = tol;
        ch.certificate = kyp_solve(ch.spr, std::min(delta ? *delta : r.margin, ch.spr.d), o);
      }
      r.certificate = ch.certificate;
      r.residual = kyp_residual(ch.spr, *ch.certificate);
      r.ok = r.residual.lyapunov <= tol && r.residual.coupling <= tol &&
             linalg::min_symmetric_eigenvalue(ch.certificate->P) > 0.0;
      r.message = ch.certificate->provenance;
    } catch (const Error& e) {
      r.message = e.what();
      r.ok = false;
    }
    rows.push_back(r);
  };
  one("channel1", cfg.system.channel1, cfg.kyp.delta1);
  one("channel2", cfg.system.channel2, cfg.kyp.delta2);
  return rows;
}

inline void print_kyp_table(std::ostream& os, const std::vector<KypCheckRow>& rows) {
  os << "channel   n  spr_margin               eps   delta                    lyapunov_res  coupling_res  status\n";
  for (const auto& r : rows) {
    char buf[256];
    const int n = r.certificate ? static_cast<int>(r.certificate->P.rows()) : 0;
    std::snprintf(buf, sizeof buf, "%-9s %2d  %-23.17g  %-5g %-23.17g  %-12.3e  %-12.3e  %s\n", r.channel.c_str(), n,
                  r.margin, r.certificate ? r.certificate->eps : 0.0, r.certificate ? r.certificate->delta : 0.0,
                  r.residual.lyapunov, r.residual.coupling, r.ok ? "ok" : "FAIL");
    os << buf;
    os << "  " << r.message << "\n";
  }
}

}  // namespace ebbeam
