#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ebbeam/errors.hpp"
#include "ebbeam/model.hpp"
#include "ebbeam/polynomial.hpp"

namespace ebbeam {

/// Clamped initial data: u0, v0 polynomials in x (ascending coefficients),
/// controller states (zero when omitted).
struct InitialCondition {
  Polynomial u0{{0.0, 0.0, 1.0, -2.0, 1.0}};  // x^2 (1 - x)^2
  Polynomial v0{{0.0}};
  Eigen::VectorXd zeta1;
  Eigen::VectorXd zeta2;
};

struct SimulationSettings {
  double dt = 0.01;
  int mesh = 100;
  double t_final = 50.0;
  int flush_every = 100;
  int snapshot_every = 0;  ///< 0 disables deflection snapshots
};

struct SpaceStudySettings {
  std::vector<int> meshes{16, 32, 64, 128};
  double dt = 1e-2;
  double t_final = 1.0;
  int reference_mesh = 0;       ///< 0: twice the finest mesh
  int reference_dt_divisor = 1; ///< reference runs with dt / divisor
};

struct TimeStudySettings {
  std::vector<double> dts{6.4e-6, 3.2e-6, 1.6e-6, 8e-7, 4e-7, 2e-7};
  int mesh = 50;
  double t_final = 4.1e-4;
  int reference_dt_divisor = 4;
};

struct SpectrumSettings {
  int n_max = 30;
  int mesh = 0;          ///< > 0 enables the FEM cross-check
  int compare_modes = 5;
};

struct KypSettings {
  std::optional<double> delta1;  ///< default: spr margin
  std::optional<double> delta2;
  std::vector<double> eps_grid{2.0, 1.0, 0.5, 0.1, 0.01};
  double spr_omega_max = 1e4;
  int spr_samples = 2000;
};

struct ExperimentConfig {
  ControlSystem system;
  InitialCondition ic;
  SimulationSettings simulation;
  SpaceStudySettings space;
  TimeStudySettings time;
  SpectrumSettings spectrum;
  KypSettings kyp;
  std::string source;  ///< path it was read from, if any
};

namespace config_detail {

using nlohmann::json;

inline std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

[[noreturn]] inline void fail(const std::string& path, const std::string& msg) {
  throw ConfigError(path + ": " + msg);
}

inline const json& need(const json& j, const std::string& path, const std::string& key) {
  if (!j.is_object()) fail(path, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) fail(join(path, key), "missing key");
  return *it;
}

inline double number(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  return j.get<double>();
}

inline int integer(const json& j, const std::string& path) {
  if (!j.is_number_integer()) fail(path, "expected an integer");
  return j.get<int>();
}

inline std::vector<double> numbers(const json& j, const std::string& path) {
  if (!j.is_array()) fail(path, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(number(j[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

inline Eigen::VectorXd vector(const json& j, const std::string& path, Eigen::Index n) {
  const auto v = numbers(j, path);
  if (static_cast<Eigen::Index>(v.size()) != n)
    fail(path, "expected " + std::to_string(n) + " entries, got " + std::to_string(v.size()));
  return Eigen::Map<const Eigen::VectorXd>(v.data(), n);
}

// Row-major flat list or list of rows.
inline Eigen::MatrixXd matrix(const json& j, const std::string& path, Eigen::Index n) {
  Eigen::MatrixXd m(n, n);
  if (j.is_array() && !j.empty() && j[0].is_array()) {
    if (static_cast<Eigen::Index>(j.size()) != n) fail(path, "expected " + std::to_string(n) + " rows");
    for (Eigen::Index r = 0; r < n; ++r)
      m.row(r) = vector(j[static_cast<std::size_t>(r)], path + "[" + std::to_string(r) + "]", n).transpose();
    return m;
  }
  const auto v = numbers(j, path);
  if (static_cast<Eigen::Index>(v.size()) != n * n)
    fail(path, "expected " + std::to_string(n * n) + " row-major entries, got " + std::to_string(v.size()));
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = 0; c < n; ++c) m(r, c) = v[static_cast<std::size_t>(r * n + c)];
  return m;
}

// A number (constant) or {"breakpoints": [...], "coefficients": [[...], ...]}
// with one ascending polynomial per interval in the global variable x.
inline CoefficientField field(const json& j, const std::string& path, double length) {
  if (j.is_number()) return CoefficientField::constant(j.get<double>(), 0.0, length);
  if (!j.is_object()) fail(path, "expected a number or an object with breakpoints and coefficients");
  const auto bps = numbers(need(j, path, "breakpoints"), join(path, "breakpoints"));
  const json& cj = need(j, path, "coefficients");
  if (!cj.is_array()) fail(join(path, "coefficients"), "expected an array of coefficient arrays");
  if (bps.size() != cj.size() + 1)
    fail(join(path, "coefficients"), "need one coefficient array per interval (" + std::to_string(bps.size() - 1) + ")");
  std::vector<Polynomial> pieces;
  for (std::size_t i = 0; i < cj.size(); ++i) {
    const auto c = numbers(cj[i], join(path, "coefficients") + "[" + std::to_string(i) + "]");
    if (c.empty()) fail(join(path, "coefficients") + "[" + std::to_string(i) + "]", "empty polynomial");
    // re-expand the global polynomial around the left breakpoint
    pieces.push_back(CoefficientField::polynomial(Polynomial(c), bps[i], bps[i + 1]).pieces().front());
  }
  try {
    return CoefficientField(bps, std::move(pieces));
  } catch (const PreconditionViolation& e) {
    fail(path, e.what());
  }
}

inline SprChannel channel(const json& j, const std::string& path) {
  SprChannel ch;
  const int n = integer(need(j, path, "n"), join(path, "n"));
  if (n < 0) fail(join(path, "n"), "must be non-negative");
  ch.A = n == 0 ? Eigen::MatrixXd::Zero(0, 0) : matrix(need(j, path, "A"), join(path, "A"), n);
  ch.b = n == 0 ? Eigen::VectorXd::Zero(0) : vector(need(j, path, "b"), join(path, "b"), n);
  ch.c = n == 0 ? Eigen::VectorXd::Zero(0) : vector(need(j, path, "c"), join(path, "c"), n);
  ch.d = number(need(j, path, "d"), join(path, "d"));
  ch.k = number(need(j, path, "k"), join(path, "k"));
  return ch;
}

inline std::optional<KypCertificate> certificate(const json& j, const std::string& path, const SprChannel& ch) {
  auto it = j.find("certificate");
  if (it == j.end() || it->is_null()) return std::nullopt;
  const std::string cp = join(path, "certificate");
  const Eigen::Index n = ch.dim();
  Eigen::MatrixXd P = n == 0 ? Eigen::MatrixXd::Zero(0, 0) : matrix(need(*it, cp, "P"), join(cp, "P"), n);
  Eigen::VectorXd q = n == 0 ? Eigen::VectorXd::Zero(0) : vector(need(*it, cp, "q"), join(cp, "q"), n);
  const double eps = number(need(*it, cp, "eps"), join(cp, "eps"));
  const double delta = number(need(*it, cp, "delta"), join(cp, "delta"));
  std::string prov = "config";
  if (auto pv = it->find("provenance"); pv != it->end() && pv->is_string()) prov = pv->get<std::string>();
  try {
    return make_certificate(ch, std::move(P), std::move(q), eps, delta, prov);
  } catch (const PreconditionViolation& e) {
    fail(cp, e.what());
  }
}

inline Polynomial clamped_polynomial(const json& j, const std::string& path) {
  Polynomial p(numbers(j, path));
  if (p.coefficient(0) != 0.0 || p.coefficient(1) != 0.0)
    fail(path, "initial data must satisfy u(0) = u_x(0) = 0 (constant and linear coefficients must be zero)");
  return p;
}

inline std::vector<int> integers(const json& j, const std::string& path) {
  if (!j.is_array()) fail(path, "expected an array of integers");
  std::vector<int> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(integer(j[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

template <class T, class F>
void optional_key(const json& j, const std::string& path, const std::string& key, T& target, F&& conv) {
  if (!j.is_object()) return;
  auto it = j.find(key);
  if (it != j.end()) target = conv(*it, join(path, key));
}

inline json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

inline json vector_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

}  // namespace config_detail

/// Parses the JSON schema documented in the README.
inline ExperimentConfig parse_config(const nlohmann::json& j) {
  using namespace config_detail;
  ExperimentConfig cfg;
  const json& beam = need(j, "", "beam");
  BeamModel& b = cfg.system.beam;
  b.length = number(need(beam, "beam", "length"), "beam.length");
  if (!(b.length > 0.0)) fail("beam.length", "must be positive");
  b.tip_mass = number(need(beam, "beam", "tip_mass"), "beam.tip_mass");
  b.tip_inertia = number(need(beam, "beam", "tip_inertia"), "beam.tip_inertia");
  b.mu = field(need(beam, "beam", "mu"), "beam.mu", b.length);
  b.lambda = field(need(beam, "beam", "lambda"), "beam.lambda", b.length);

  const json& c1 = need(j, "", "channel1");
  const json& c2 = need(j, "", "channel2");
  cfg.system.channel1.spr = channel(c1, "channel1");
  cfg.system.channel2.spr = channel(c2, "channel2");
  cfg.system.channel1.certificate = certificate(c1, "channel1", cfg.system.channel1.spr);
  cfg.system.channel2.certificate = certificate(c2, "channel2", cfg.system.channel2.spr);

  cfg.ic.zeta1 = Eigen::VectorXd::Zero(cfg.system.channel1.spr.dim());
  cfg.ic.zeta2 = Eigen::VectorXd::Zero(cfg.system.channel2.spr.dim());
  if (auto it = j.find("initial_condition"); it != j.end()) {
    const std::string p = "initial_condition";
    optional_key(*it, p, "u0", cfg.ic.u0, clamped_polynomial);
    optional_key(*it, p, "v0", cfg.ic.v0, clamped_polynomial);
    const auto n1 = cfg.system.channel1.spr.dim();
    const auto n2 = cfg.system.channel2.spr.dim();
    optional_key(*it, p, "zeta1", cfg.ic.zeta1, [&](const json& v, const std::string& path) { return vector(v, path, n1); });
    optional_key(*it, p, "zeta2", cfg.ic.zeta2, [&](const json& v, const std::string& path) { return vector(v, path, n2); });
  }
  if (auto it = j.find("simulation"); it != j.end()) {
    const std::string p = "simulation";
    optional_key(*it, p, "dt", cfg.simulation.dt, number);
    optional_key(*it, p, "mesh", cfg.simulation.mesh, integer);
    optional_key(*it, p, "t_final", cfg.simulation.t_final, number);
    optional_key(*it, p, "flush_every", cfg.simulation.flush_every, integer);
    optional_key(*it, p, "snapshot_every", cfg.simulation.snapshot_every, integer);
  }
  if (auto it = j.find("convergence"); it != j.end()) {
    if (auto s = it->find("space"); s != it->end()) {
      const std::string p = "convergence.space";
      optional_key(*s, p, "meshes", cfg.space.meshes, integers);
      optional_key(*s, p, "dt", cfg.space.dt, number);
      optional_key(*s, p, "t_final", cfg.space.t_final, number);
      optional_key(*s, p, "reference_mesh", cfg.space.reference_mesh, integer);
      optional_key(*s, p, "reference_dt_divisor", cfg.space.reference_dt_divisor, integer);
    }
    if (auto t = it->find("time"); t != it->end()) {
      const std::string p = "convergence.time";
      optional_key(*t, p, "dts", cfg.time.dts, numbers);
      optional_key(*t, p, "mesh", cfg.time.mesh, integer);
      optional_key(*t, p, "t_final", cfg.time.t_final, number);
      optional_key(*t, p, "reference_dt_divisor", cfg.time.reference_dt_divisor, integer);
    }
  }
  if (auto it = j.find("spectrum"); it != j.end()) {
    const std::string p = "spectrum";
    optional_key(*it, p, "n_max", cfg.spectrum.n_max, integer);
    optional_key(*it, p, "mesh", cfg.spectrum.mesh, integer);
    optional_key(*it, p, "compare_modes", cfg.spectrum.compare_modes, integer);
  }
  if (auto it = j.find("kyp"); it != j.end()) {
    const std::string p = "kyp";
    optional_key(*it, p, "delta1", cfg.kyp.delta1, [](const json& v, const std::string& path) { return std::optional<double>(number(v, path)); });
    optional_key(*it, p, "delta2", cfg.kyp.delta2, [](const json& v, const std::string& path) { return std::optional<double>(number(v, path)); });
    optional_key(*it, p, "eps_grid", cfg.kyp.eps_grid, numbers);
    optional_key(*it, p, "spr_omega_max", cfg.kyp.spr_omega_max, number);
    optional_key(*it, p, "spr_samples", cfg.kyp.spr_samples, integer);
  }
  return cfg;
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

inline ExperimentConfig load_config(const std::string& path) {
  ExperimentConfig cfg = parse_config(read_json_file(path));
  cfg.source = path;
  return cfg;
}

/// Stores the attached certificates under channelX.certificate, keeping every
/// other key of the document.
inline void write_certificates(nlohmann::json& doc, const ControlSystem& system) {
  using namespace config_detail;
  auto put = [&](const char* key, const ControllerChannel& ch) {
    if (!ch.certificate) return;
    const KypCertificate& c = *ch.certificate;
    doc[key]["certificate"] = {{"P", matrix_json(c.P)}, {"q", vector_json(c.q)}, {"eps", c.eps},
                               {"delta", c.delta}, {"provenance", c.provenance}};
  };
  put("channel1", system.channel1);
  put("channel2", system.channel2);
}

}  // namespace ebbeam
