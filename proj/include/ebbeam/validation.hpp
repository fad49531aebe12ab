#pragma once

#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "ebbeam/controller.hpp"
#include "ebbeam/errors.hpp"
#include "ebbeam/linalg.hpp"
#include "ebbeam/model.hpp"

namespace ebbeam {

enum class CheckStatus { pass, fail, certificate_required, warning };

inline const char* to_string(CheckStatus s) {
  switch (s) {
    case CheckStatus::pass: return "pass";
    case CheckStatus::fail: return "fail";
    case CheckStatus::certificate_required: return "certificate required";
    case CheckStatus::warning: return "warning";
  }
  return "?";
}

struct Check {
  std::string name;
  CheckStatus status = CheckStatus::pass;
  double value = 0.0;      ///< measured quantity (min, abscissa, residual, ...)
  double tolerance = 0.0;  ///< threshold it was compared against
  std::string detail;
};

struct ValidationOptions {
  double tol_kyp = 1e-10;
  double hurwitz_margin = 1e-12;  ///< require max Re eig(A) < -hurwitz_margin
  int positivity_samples = 1001;
  double smoothness_tol = 1e-6;   ///< relative jump allowed at breakpoints (orders 0, 1)
  double domain_tol = 1e-12;
  double spr_omega_max = 1e4;
  int spr_samples = 2000;
};

struct ValidationReport {
  std::vector<Check> checks;
  ValidationOptions tolerances;

  /// True when nothing failed and no certificate is missing.
  bool ok() const noexcept {
    for (const auto& c : checks)
      if (c.status == CheckStatus::fail || c.status == CheckStatus::certificate_required) return false;
    return true;
  }

  /// True when no check failed (missing certificates allowed).
  bool physically_valid() const noexcept {
    for (const auto& c : checks)
      if (c.status == CheckStatus::fail) return false;
    return true;
  }

  const Check* find(const std::string& name) const noexcept {
    for (const auto& c : checks)
      if (c.name == name) return &c;
    return nullptr;
  }

  std::string summary() const {
    std::ostringstream os;
    for (const auto& c : checks) {
      os << c.name << ": " << to_string(c.status) << " (value " << c.value << ", tol " << c.tolerance
         << ")";
      if (!c.detail.empty()) os << " " << c.detail;
      os << "\n";
    }
    return os.str();
  }
};

namespace detail {

inline void check_field(ValidationReport& r, const std::string& name, const CoefficientField& f,
                        double length, const ValidationOptions& o) {
  const bool domain_ok = std::abs(f.begin()) <= o.domain_tol && std::abs(f.end() - length) <= o.domain_tol;
  r.checks.push_back({name + ".domain", domain_ok ? CheckStatus::pass : CheckStatus::fail,
                      std::max(std::abs(f.begin()), std::abs(f.end() - length)), o.domain_tol,
                      domain_ok ? "" : "field must be defined on [0, L]"});
  double mn = std::numeric_limits<double>::infinity();
  const int ns = std::max(o.positivity_samples, 2);
  for (int i = 0; i < ns; ++i) {
    const double x = f.begin() + (f.end() - f.begin()) * i / (ns - 1);
    mn = std::min(mn, f(x));
  }
  // Each piece is also probed at its own interval ends.
  for (std::size_t i = 0; i < f.pieces().size(); ++i) {
    mn = std::min(mn, f.piece_derivative(i, f.breakpoints()[i], 0));
    mn = std::min(mn, f.piece_derivative(i, f.breakpoints()[i + 1], 0));
  }
  r.checks.push_back({name + ".positive", mn > 0.0 ? CheckStatus::pass : CheckStatus::fail, mn, 0.0,
                      "minimum over sample grid"});
  for (std::size_t i = 1; i + 1 < f.breakpoints().size(); ++i) {
    const double xb = f.breakpoints()[i];
    for (int order = 0; order <= 1; ++order) {
      const double left = f.piece_derivative(i - 1, xb, order);
      const double right = f.piece_derivative(i, xb, order);
      const double jump = std::abs(left - right) / std::max(1.0, std::abs(right));
      if (jump > o.smoothness_tol) {
        std::ostringstream os;
        os << "derivative order " << order << " jumps at x = " << xb;
        r.checks.push_back({name + ".smoothness", CheckStatus::warning, jump, o.smoothness_tol, os.str()});
      }
    }
  }
}

inline void check_channel(ValidationReport& r, const std::string& name, const ControllerChannel& ch,
                          const ValidationOptions& o) {
  const SprChannel& s = ch.spr;
  bool dims = true;
  try {
    s.check_dimensions();
  } catch (const PreconditionViolation&) {
    dims = false;
  }
  r.checks.push_back({name + ".dimensions", dims ? CheckStatus::pass : CheckStatus::fail,
                      static_cast<double>(s.A.rows()), 0.0, ""});
  if (!dims) return;
  r.checks.push_back({name + ".k", s.k > 0.0 ? CheckStatus::pass : CheckStatus::fail, s.k, 0.0, "k > 0"});
  r.checks.push_back({name + ".d", s.d >= 0.0 ? CheckStatus::pass : CheckStatus::fail, s.d, 0.0, "d >= 0"});
  const double abscissa = linalg::spectral_abscissa(s.A);
  const bool hurwitz = abscissa < -o.hurwitz_margin;
  r.checks.push_back({name + ".hurwitz", hurwitz ? CheckStatus::pass : CheckStatus::fail,
                      s.dim() == 0 ? -std::numeric_limits<double>::infinity() : abscissa,
                      -o.hurwitz_margin, "max Re eig(A)"});
  if (hurwitz) {
    try {
      const double m = spr_margin(s, o.spr_omega_max, o.spr_samples);
      r.checks.push_back({name + ".spr_margin", CheckStatus::pass, m, 0.0, "min Re G(i w)"});
    } catch (const Error& e) {
      r.checks.push_back({name + ".spr_margin", CheckStatus::fail, 0.0, 0.0, e.what()});
    }
  }
  if (!ch.certificate) {
    r.checks.push_back({name + ".kyp", CheckStatus::certificate_required, 0.0, o.tol_kyp,
                        "no certificate attached"});
    return;
  }
  const KypCertificate& c = *ch.certificate;
  try {
    const KypResidual res = kyp_residual(s, c);
    const double worst = std::max(res.lyapunov, res.coupling);
    std::ostringstream os;
    os << "lyapunov " << res.lyapunov << ", coupling " << res.coupling << "; " << c.provenance;
    r.checks.push_back({name + ".kyp", worst <= o.tol_kyp ? CheckStatus::pass : CheckStatus::fail, worst,
                        o.tol_kyp, os.str()});
    const double lmin = linalg::min_symmetric_eigenvalue(c.P);
    r.checks.push_back({name + ".P_positive", lmin > 0.0 ? CheckStatus::pass : CheckStatus::fail,
                        s.dim() == 0 ? 0.0 : lmin, 0.0, "smallest eigenvalue of P"});
    const bool delta_ok = c.delta > 0.0 && c.delta <= s.d;
    r.checks.push_back({name + ".delta", delta_ok ? CheckStatus::pass : CheckStatus::fail, c.delta, s.d,
                        "0 < delta <= d"});
  } catch (const PreconditionViolation& e) {
    r.checks.push_back({name + ".kyp", CheckStatus::fail, 0.0, o.tol_kyp, e.what()});
  }
}

}  // namespace detail

/// Checks every standing assumption on a control system. Never throws for
/// invalid data; the report says what failed.
inline ValidationReport validate(const ControlSystem& system, const ValidationOptions& options = {}) {
  ValidationReport r;
  r.tolerances = options;
  const BeamModel& b = system.beam;
  r.checks.push_back({"beam.length", b.length > 0.0 ? CheckStatus::pass : CheckStatus::fail, b.length, 0.0, "L > 0"});
  r.checks.push_back({"beam.tip_mass", b.tip_mass > 0.0 ? CheckStatus::pass : CheckStatus::fail, b.tip_mass, 0.0, "M > 0"});
  r.checks.push_back({"beam.tip_inertia", b.tip_inertia > 0.0 ? CheckStatus::pass : CheckStatus::fail, b.tip_inertia, 0.0, "J > 0"});
  if (b.length > 0.0) {
    detail::check_field(r, "beam.mu", b.mu, b.length, options);
    detail::check_field(r, "beam.lambda", b.lambda, b.length, options);
  }
  detail::check_channel(r, "channel1", system.channel1, options);
  detail::check_channel(r, "channel2", system.channel2, options);
  return r;
}

}  // namespace ebbeam
