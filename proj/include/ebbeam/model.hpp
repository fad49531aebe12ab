#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <string>
#include <utility>

#include "ebbeam/errors.hpp"
#include "ebbeam/polynomial.hpp"

namespace ebbeam {

/// Geometry and material data of the clamped beam with a rigid tip body.
struct BeamModel {
  CoefficientField mu;      ///< mass per unit length
  CoefficientField lambda;  ///< flexural rigidity
  double length = 1.0;      ///< L
  double tip_mass = 1.0;    ///< M
  double tip_inertia = 1.0; ///< J
};

/// One linear boundary controller
///   zeta' = A zeta + b y,   Theta = k w + c . zeta + d y
/// where (w, y) is (u_x(L), u_xt(L)) for the slope channel and
/// (u(L), u_t(L)) for the deflection channel.
struct SprChannel {
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  Eigen::VectorXd c;
  double d = 0.0;
  double k = 0.0;

  int dim() const noexcept { return static_cast<int>(A.rows()); }

  void check_dimensions() const {
    if (A.rows() != A.cols() || b.size() != A.rows() || c.size() != A.rows())
      throw PreconditionViolation("SprChannel: A must be n x n and b, c of length n");
  }
};

/// Positivity certificate (P, q, eps, delta) for one channel:
///   P A + A^T P = -q q^T - eps P,   P b = c - q * sqrt(2 (d - delta)).
struct KypCertificate {
  Eigen::MatrixXd P;
  Eigen::VectorXd q;
  double eps = 0.0;
  double delta = 0.0;
  double delta_tilde = 0.0;  ///< sqrt(2 (d - delta))
  std::string provenance;    ///< who produced it (user config, kyp_solve path, ...)
};

/// Builds a certificate and its derived delta_tilde; rejects delta > d.
inline KypCertificate make_certificate(const SprChannel& channel, Eigen::MatrixXd P,
                                       Eigen::VectorXd q, double eps, double delta,
                                       std::string provenance = "user") {
  if (!(delta <= channel.d))
    throw PreconditionViolation("KypCertificate: delta must not exceed d (delta_tilde undefined)");
  if (P.rows() != channel.dim() || P.cols() != channel.dim() || q.size() != channel.dim())
    throw PreconditionViolation("KypCertificate: P must be n x n and q of length n");
  KypCertificate cert;
  cert.P = std::move(P);
  cert.q = std::move(q);
  cert.eps = eps;
  cert.delta = delta;
  cert.delta_tilde = std::sqrt(2.0 * (channel.d - delta));
  cert.provenance = std::move(provenance);
  return cert;
}

struct ControllerChannel {
  SprChannel spr;
  std::optional<KypCertificate> certificate;
};

/// Beam plus both boundary controllers. channel1 acts on the tip slope
/// (measures u_xt(L)), channel2 on the tip deflection (measures u_t(L)).
struct ControlSystem {
  BeamModel beam;
  ControllerChannel channel1;
  ControllerChannel channel2;

  bool has_certificates() const noexcept {
    return channel1.certificate.has_value() && channel2.certificate.has_value();
  }
};

}  // namespace ebbeam
