#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ebbeam/errors.hpp"
#include "ebbeam/linalg.hpp"
#include "ebbeam/model.hpp"

namespace ebbeam {

using Complex = std::complex<double>;

/// G(s) = ((sI - A)^{-1} b) . c + d, evaluated with one LU solve.
inline Complex transfer_eval(const SprChannel& channel, Complex s) {
  channel.check_dimensions();
  const Eigen::Index n = channel.A.rows();
  if (n == 0) return {channel.d, 0.0};
  Eigen::MatrixXcd m = -channel.A.cast<Complex>();
  m.diagonal().array() += s;
  Eigen::PartialPivLU<Eigen::MatrixXcd> lu(m);
  if (!(lu.rcond() > 1e-14)) {
    std::ostringstream os;
    os << "transfer_eval: resolvent at s = " << s << " is numerically singular (rcond "
       << lu.rcond() << ")";
    throw SingularResolvent(os.str());
  }
  const Eigen::VectorXcd x = lu.solve(channel.b.cast<Complex>());
  return (channel.c.cast<Complex>().transpose() * x)(0) + channel.d;
}

/// Minimum of Re G(i w) over w = 0 and a log-spaced grid on
/// [1e-6 * omega_max, omega_max], together with the limit Re G(i inf) = d.
/// Throws NotSpr when the minimum is not strictly positive.
inline double spr_margin(const SprChannel& channel, double omega_max = 1e4, int samples = 2000) {
  if (samples < 2) throw PreconditionViolation("spr_margin: need at least two samples");
  if (!(omega_max > 0.0)) throw PreconditionViolation("spr_margin: omega_max must be positive");
  double margin = channel.d;
  margin = std::min(margin, transfer_eval(channel, {0.0, 0.0}).real());
  const double lo = std::log10(omega_max * 1e-6);
  const double hi = std::log10(omega_max);
  for (int i = 0; i < samples - 1; ++i) {
    const double t = samples > 2 ? static_cast<double>(i) / (samples - 2) : 1.0;
    const double w = std::pow(10.0, lo + t * (hi - lo));
    margin = std::min(margin, transfer_eval(channel, {0.0, w}).real());
  }
  if (!(margin > 0.0)) {
    std::ostringstream os;
    os << "spr_margin: min Re G(i w) = " << margin << " is not strictly positive";
    throw NotSpr(os.str());
  }
  return margin;
}

/// Orthogonal Kalman reduction of a channel to a minimal realization with the
/// same transfer function. `basis` maps minimal coordinates into the original
/// state space (orthonormal columns).
struct MinimalRealization {
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  Eigen::VectorXd c;
  Eigen::MatrixXd basis;
  int controllability_rank = 0;
  int observability_rank = 0;
  bool minimal = true;

  int dim() const noexcept { return static_cast<int>(A.rows()); }
};

inline MinimalRealization minimal_realization(const SprChannel& channel, double rank_tol = 1e-8) {
  channel.check_dimensions();
  const Eigen::Index n = channel.A.rows();
  MinimalRealization out;
  if (n == 0) {
    out.A = Eigen::MatrixXd::Zero(0, 0);
    out.b = out.c = Eigen::VectorXd::Zero(0);
    out.basis = Eigen::MatrixXd::Zero(0, 0);
    return out;
  }
  const auto ctrb = linalg::range_basis(linalg::normalized_krylov(channel.A, channel.b), rank_tol);
  const auto obsv_full =
      linalg::range_basis(linalg::normalized_krylov(channel.A.transpose(), channel.c), rank_tol);
  out.controllability_rank = ctrb.rank;
  out.observability_rank = obsv_full.rank;

  // Controllable part, then its observable part.
  const Eigen::MatrixXd& qc = ctrb.basis;
  const Eigen::MatrixXd ac = qc.transpose() * channel.A * qc;
  const Eigen::VectorXd bc = qc.transpose() * channel.b;
  const Eigen::VectorXd cc = qc.transpose() * channel.c;
  const auto obsv = linalg::range_basis(linalg::normalized_krylov(ac.transpose(), cc), rank_tol);
  const Eigen::MatrixXd& qo = obsv.basis;

  out.basis = qc * qo;
  out.A = qo.transpose() * ac * qo;
  out.b = qo.transpose() * bc;
  out.c = qo.transpose() * cc;
  out.minimal = out.dim() == n;
  return out;
}

struct KypResidual {
  double lyapunov = 0.0;  ///< ||P A + A^T P + q q^T + eps P||_F
  double coupling = 0.0;  ///< ||P b - c + q delta_tilde||_2
};

inline KypResidual kyp_residual(const SprChannel& channel, const KypCertificate& cert) {
  channel.check_dimensions();
  if (cert.P.rows() != channel.dim() || cert.P.cols() != channel.dim() ||
      cert.q.size() != channel.dim())
    throw PreconditionViolation("kyp_residual: certificate dimensions do not match the channel");
  if (channel.dim() == 0) return {};
  const Eigen::MatrixXd& P = cert.P;
  KypResidual r;
  r.lyapunov = (P * channel.A + channel.A.transpose() * P + cert.q * cert.q.transpose() +
                cert.eps * P)
                   .norm();
  r.coupling = (P * channel.b - channel.c + cert.q * cert.delta_tilde).norm();
  return r;
}

struct KypOptions {
  std::vector<double> eps_grid{2.0, 1.0, 0.5, 0.1, 0.01};
  double tol = 1e-10;
  double rank_tol = 1e-8;
};

namespace detail {

struct MinimalKyp {
  Eigen::MatrixXd P;
  Eigen::VectorXd q;
};

// Stabilizing (then anti-stabilizing) solution of
//   Ah^T P + P Ah + (P b - c)(P b - c)^T / r = 0,  r > 0,
// from the Hamiltonian invariant subspace, polished by Newton steps.
inline std::optional<Eigen::MatrixXd> positive_real_riccati(const Eigen::MatrixXd& ah,
                                                            const Eigen::VectorXd& b,
                                                            const Eigen::VectorXd& c, double r) {
  const Eigen::Index n = ah.rows();
  const Eigen::MatrixXd a0 = ah - b * c.transpose() / r;
  const Eigen::MatrixXd rr = b * b.transpose() / r;
  const Eigen::MatrixXd qq = c * c.transpose() / r;
  Eigen::MatrixXd ham(2 * n, 2 * n);
  ham << a0, rr, -qq, -a0.transpose();
  Eigen::ComplexEigenSolver<Eigen::MatrixXd> es(ham);
  if (es.info() != Eigen::Success) return std::nullopt;

  auto residual = [&](const Eigen::MatrixXd& p) -> Eigen::MatrixXd {
    return a0.transpose() * p + p * a0 + p * rr * p + qq;
  };

  for (int side : {-1, +1}) {
    std::vector<Eigen::Index> cols;
    for (Eigen::Index i = 0; i < 2 * n; ++i) {
      const double re = es.eigenvalues()(i).real();
      if (side * re > 0.0) cols.push_back(i);
    }
    if (static_cast<Eigen::Index>(cols.size()) != n) continue;
    Eigen::MatrixXcd x1(n, n), x2(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      x1.col(j) = es.eigenvectors().col(cols[static_cast<std::size_t>(j)]).head(n);
      x2.col(j) = es.eigenvectors().col(cols[static_cast<std::size_t>(j)]).tail(n);
    }
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(x1);
    if (!(lu.rcond() > 1e-14)) continue;
    const Eigen::MatrixXcd pc = x2 * lu.inverse();
    Eigen::MatrixXd p = pc.real();
    p = 0.5 * (p + p.transpose());
    for (int it = 0; it < 4; ++it) {
      const Eigen::MatrixXd f = residual(p);
      if (f.norm() < 1e-15 * std::max(1.0, p.norm())) break;
      try {
        const Eigen::MatrixXd delta = linalg::solve_lyapunov(a0 + rr * p, f);
        p += delta;
      } catch (const SingularSystem&) {
        break;
      }
    }
    if (linalg::min_symmetric_eigenvalue(p) > 0.0) return p;
  }
  return std::nullopt;
}

// delta_tilde = 0: find q with  L(q q^T) b = c  where L solves Ah^T P + P Ah = -Q.
inline std::optional<MinimalKyp> tight_kyp_newton(const Eigen::MatrixXd& ah,
                                                  const Eigen::VectorXd& b,
                                                  const Eigen::VectorXd& c,
                                                  const Eigen::VectorXd& q0) {
  const Eigen::Index n = ah.rows();
  Eigen::VectorXd q = q0;
  auto p_of = [&](const Eigen::VectorXd& qv) {
    return linalg::solve_lyapunov(ah, qv * qv.transpose());
  };
  auto f_of = [&](const Eigen::VectorXd& qv) -> Eigen::VectorXd { return p_of(qv) * b - c; };
  Eigen::VectorXd f = f_of(q);
  for (int it = 0; it < 60; ++it) {
    if (f.norm() <= 1e-14 * std::max(1.0, c.norm())) break;
    Eigen::MatrixXd jac(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::MatrixXd dq = Eigen::MatrixXd::Zero(n, n);
      dq.col(i) += q;
      dq.row(i) += q.transpose();
      jac.col(i) = linalg::solve_lyapunov(ah, dq) * b;
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(jac);
    if (!lu.isInvertible()) return std::nullopt;
    const Eigen::VectorXd step = lu.solve(-f);
    double t = 1.0;
    Eigen::VectorXd trial = q + step;
    Eigen::VectorXd ft = f_of(trial);
    while (ft.norm() > f.norm() && t > 1e-4) {
      t *= 0.5;
      trial = q + t * step;
      ft = f_of(trial);
    }
    q = trial;
    f = ft;
  }
  MinimalKyp out{p_of(q), q};
  if (linalg::min_symmetric_eigenvalue(out.P) <= 0.0) return std::nullopt;
  return out;
}

// KYP on a minimal realization for one fixed eps.
inline std::optional<MinimalKyp> solve_minimal_kyp(const MinimalRealization& m, double d,
                                                   double delta, double eps) {
  const Eigen::Index n = m.A.rows();
  const double r = 2.0 * (d - delta);  // delta_tilde^2
  const double dt = std::sqrt(std::max(r, 0.0));
  if (n == 0) return MinimalKyp{Eigen::MatrixXd::Zero(0, 0), Eigen::VectorXd::Zero(0)};
  const Eigen::MatrixXd ah = m.A + 0.5 * eps * Eigen::MatrixXd::Identity(n, n);

  if (n == 1) {
    const double a = ah(0, 0);
    const double beta = m.b(0);
    const double gamma = m.c(0);
    double p = 0.0;
    if (r <= 0.0) {
      if (beta == 0.0) return std::nullopt;
      p = gamma / beta;
      const double q2 = -2.0 * a * p;
      if (!(p > 0.0) || q2 < -1e-14 * std::abs(p)) return std::nullopt;
      Eigen::MatrixXd pm(1, 1);
      pm(0, 0) = p;
      Eigen::VectorXd qm(1);
      qm(0) = std::sqrt(std::max(q2, 0.0));
      return MinimalKyp{pm, qm};
    }
    // beta^2 p^2 + (2 a r - 2 beta gamma) p + gamma^2 = 0
    const double qa = beta * beta;
    const double qb = 2.0 * a * r - 2.0 * beta * gamma;
    const double qc = gamma * gamma;
    if (qa == 0.0) {
      if (qb == 0.0) return std::nullopt;
      p = -qc / qb;
    } else {
      const double disc = qb * qb - 4.0 * qa * qc;
      if (disc < 0.0) return std::nullopt;
      const double sq = std::sqrt(disc);
      // Numerically stable pair of roots; prefer the smaller positive one.
      const double t = -0.5 * (qb + std::copysign(sq, qb));
      double r1 = t / qa;
      double r2 = t != 0.0 ? qc / t : r1;
      if (r1 > r2) std::swap(r1, r2);
      p = r1 > 0.0 ? r1 : r2;
    }
    if (!(p > 0.0)) return std::nullopt;
    Eigen::MatrixXd pm(1, 1);
    pm(0, 0) = p;
    Eigen::VectorXd qm(1);
    qm(0) = (gamma - p * beta) / dt;
    return MinimalKyp{pm, qm};
  }

  if (!(linalg::spectral_abscissa(ah) < -1e-12)) return std::nullopt;
  if (r > 0.0) {
    const auto p = positive_real_riccati(ah, m.b, m.c, r);
    if (!p) return std::nullopt;
    const Eigen::VectorXd q = (m.c - *p * m.b) / dt;
    return MinimalKyp{*p, q};
  }
  // Tight case: continue from a nearly tight Riccati solution.
  const double r_small = 1e-6 * std::max(1.0, d);
  const auto p0 = positive_real_riccati(ah, m.b, m.c, r_small);
  if (!p0) return std::nullopt;
  const Eigen::VectorXd q0 = (m.c - *p0 * m.b) / std::sqrt(r_small);
  return tight_kyp_newton(ah, m.b, m.c, q0);
}

}  // namespace detail

/// Constructs a KYP certificate for `channel` with the given delta.
///
/// Minimal realizations are solved directly for each eps of the grid (largest
/// first). Non-minimal ones are reduced first; the certificate found on the
/// minimal realization is embedded as P = T Pm T^T + gamma (I - T T^T),
/// q = T qm with gamma = lambda_min(Pm), and re-verified on the full channel.
inline KypCertificate kyp_solve(const SprChannel& channel, double delta,
                                const KypOptions& options = {}) {
  channel.check_dimensions();
  if (!(delta > 0.0) || !(delta <= channel.d)) {
    std::ostringstream os;
    os << "kyp_solve: need 0 < delta <= d (delta = " << delta << ", d = " << channel.d << ")";
    throw PreconditionViolation(os.str());
  }
  const Eigen::Index n = channel.A.rows();
  if (n > 0 && !(linalg::spectral_abscissa(channel.A) < -1e-12))
    throw PreconditionViolation("kyp_solve: A is not Hurwitz");

  const MinimalRealization m = minimal_realization(channel, options.rank_tol);
  const Eigen::MatrixXd& t = m.basis;

  for (double eps : options.eps_grid) {
    const auto sol = detail::solve_minimal_kyp(m, channel.d, delta, eps);
    if (!sol) continue;
    Eigen::MatrixXd p;
    Eigen::VectorXd q;
    double gamma = 0.0;
    if (m.minimal) {
      // basis is orthogonal: back to the original coordinates.
      p = t * sol->P * t.transpose();
      q = t * sol->q;
    } else {
      gamma = m.dim() > 0 ? linalg::min_symmetric_eigenvalue(sol->P) : 1.0;
      p = t * sol->P * t.transpose() +
          gamma * (Eigen::MatrixXd::Identity(n, n) - t * t.transpose());
      q = t * sol->q;
    }
    p = 0.5 * (p + p.transpose());
    std::ostringstream prov;
    prov << "kyp_solve: ";
    if (m.minimal) {
      prov << "minimal realization (n=" << n << ")";
    } else {
      prov << "reduced n=" << n << " -> " << m.dim() << " (controllability rank "
           << m.controllability_rank << ", observability rank " << m.observability_rank
           << "), embedded with gamma=" << gamma;
    }
    prov << ", eps=" << eps << ", delta=" << delta;
    KypCertificate cert = make_certificate(channel, std::move(p), std::move(q), eps, delta, prov.str());
    const KypResidual res = kyp_residual(channel, cert);
    if (res.lyapunov <= options.tol && res.coupling <= options.tol &&
        (n == 0 || linalg::min_symmetric_eigenvalue(cert.P) > 0.0))
      return cert;
  }
  std::ostringstream os;
  os << "kyp_solve: no eps in the grid yields residuals <= " << options.tol
     << (m.minimal ? "" : " after embedding the minimal-realization certificate");
  throw NoCertificateFound(os.str());
}

}  // namespace ebbeam
