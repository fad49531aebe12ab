#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <future>
#include <numbers>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ebbeam/controller.hpp"
#include "ebbeam/csv.hpp"
#include "ebbeam/errors.hpp"
#include "ebbeam/fem.hpp"
#include "ebbeam/model.hpp"
#include "ebbeam/quadrature.hpp"

namespace ebbeam {

/// Beam data in the transformed variable
///   y(x) = (1/h) int_0^x (mu/Lambda)^{1/4},   h = int_0^L (mu/Lambda)^{1/4},
/// with the coefficient functions of the transformed eigenvalue equation.
class SpectralProblem {
 public:
  const ControlSystem& system() const noexcept { return system_; }
  const BeamModel& beam() const noexcept { return system_.beam; }
  double h_spec() const noexcept { return h_; }
  double I_const() const noexcept { return I_; }
  bool constant_coefficients() const noexcept { return constant_; }

  /// y(x) by adaptive quadrature from the nearest tabulated point.
  double y_of_x(double x) const {
    const double L = beam().length;
    if (x < -1e-12 * L || x > L * (1.0 + 1e-12)) throw OutOfRange("y_of_x: x outside [0, L]");
    x = std::clamp(x, 0.0, L);
    if (x == L) return 1.0;
    const std::size_t i = std::min(static_cast<std::size_t>(x / L * (grid_x_.size() - 1)), grid_x_.size() - 2);
    return grid_y_[i] + integrate_adaptive([&](double s) { return rho_quarter(s); }, grid_x_[i], x, 1e-15) / h_;
  }

  /// Inverse of y_of_x: bracketed on the table, then safeguarded Newton.
  double x_of_y(double y) const {
    if (y < -1e-12 || y > 1.0 + 1e-12) throw OutOfRange("x_of_y: y outside [0, 1]");
    y = std::clamp(y, 0.0, 1.0);
    auto it = std::upper_bound(grid_y_.begin(), grid_y_.end(), y);
    std::size_t i = it == grid_y_.begin() ? 0 : static_cast<std::size_t>(it - grid_y_.begin()) - 1;
    i = std::min(i, grid_y_.size() - 2);
    double lo = grid_x_[i], hi = grid_x_[i + 1];
    double x = lo + (hi - lo) * (y - grid_y_[i]) / (grid_y_[i + 1] - grid_y_[i]);
    for (int it2 = 0; it2 < 60; ++it2) {
      const double f = y_of_x(x) - y;
      if (std::abs(f) <= 1e-15) break;
      if (f > 0.0) hi = x; else lo = x;
      double nx = x - f * h_ / rho_quarter(x);
      if (!(nx > lo && nx < hi)) nx = 0.5 * (lo + hi);
      if (std::abs(nx - x) <= 1e-16 * std::max(1.0, std::abs(x))) { x = nx; break; }
      x = nx;
    }
    return x;
  }

  /// alpha_3 = h (mu/Lambda)^{-1/4} (3/2 mu'/mu + 1/2 Lambda'/Lambda), at y = y(x).
  double alpha3(double x) const {
    const D d = derivs(x);
    return h_ * std::pow(d.rho, -0.25) * g(d);
  }

  double alpha2(double x) const {
    const D d = derivs(x);
    return (-9.0 / 16.0 * std::pow(d.rho, -1.5) * d.rho1 * d.rho1 + std::pow(d.rho, -0.5) * d.rho2 +
            1.5 * d.l1 / d.l * std::pow(d.rho, -0.5) * d.rho1 + d.l2 / d.l * std::sqrt(d.rho)) /
           (h_ * h_);
  }

  /// alpha2 - 3/8 alpha3^2 - 3/2 d(alpha3)/dy.
  double tilde_alpha2(double x) const {
    const D d = derivs(x);
    const double a3 = h_ * std::pow(d.rho, -0.25) * g(d);
    const double g1 = 1.5 * (d.m2 / d.m - d.m1 * d.m1 / (d.m * d.m)) +
                      0.5 * (d.l2 / d.l - d.l1 * d.l1 / (d.l * d.l));
    const double da3_dx = h_ * (-0.25 * std::pow(d.rho, -1.25) * d.rho1 * g(d) + std::pow(d.rho, -0.25) * g1);
    const double dy_dx = std::pow(d.rho, 0.25) / h_;
    return alpha2(x) - 0.375 * a3 * a3 - 1.5 * da3_dx / dy_dx;
  }

  /// exp(-1/4 int_0^y alpha_3) in closed form.
  double alpha3_prefactor(double x) const {
    const auto w = [&](double s) { return std::pow(beam().mu(s), 1.5) * std::sqrt(beam().lambda(s)); };
    return std::pow(w(x) / w(0.0), -0.25);
  }

 private:
  friend SpectralProblem transform_tables(const ControlSystem&);

  struct D {
    double m, m1, m2, l, l1, l2, rho, rho1, rho2;
  };

  D derivs(double x) const {
    D d{};
    const auto& mu = beam().mu;
    const auto& la = beam().lambda;
    d.m = mu.derivative(x, 0);
    d.m1 = mu.derivative(x, 1);
    d.m2 = mu.derivative(x, 2);
    d.l = la.derivative(x, 0);
    d.l1 = la.derivative(x, 1);
    d.l2 = la.derivative(x, 2);
    d.rho = d.m / d.l;
    d.rho1 = (d.m1 * d.l - d.m * d.l1) / (d.l * d.l);
    d.rho2 = (d.m2 * d.l - d.m * d.l2) / (d.l * d.l) - 2.0 * d.l1 * (d.m1 * d.l - d.m * d.l1) / (d.l * d.l * d.l);
    return d;
  }

  static double g(const D& d) { return 1.5 * d.m1 / d.m + 0.5 * d.l1 / d.l; }

  double rho_quarter(double x) const { return std::pow(beam().mu(x) / beam().lambda(x), 0.25); }

  ControlSystem system_;
  double h_ = 1.0;
  double I_ = 0.0;
  bool constant_ = true;
  std::vector<double> grid_x_;
  std::vector<double> grid_y_;
};

/// Computes h, I and the y(x) table.
inline SpectralProblem transform_tables(const ControlSystem& system) {
  SpectralProblem p;
  p.system_ = system;
  const BeamModel& b = system.beam;
  if (!(b.length > 0.0)) throw PreconditionViolation("transform_tables: L must be positive");
  p.constant_ = b.mu.is_constant() && b.lambda.is_constant();

  std::vector<double> cuts{0.0, b.length};
  for (const auto* f : {&b.mu, &b.lambda})
    for (double bp : f->breakpoints())
      if (bp > 0.0 && bp < b.length) cuts.push_back(bp);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  auto piecewise = [&](auto&& f, double lo, double hi) {
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
      const double a = std::max(lo, cuts[i]);
      const double c = std::min(hi, cuts[i + 1]);
      if (c > a) acc += integrate_adaptive(f, a, c, 1e-15);
    }
    return acc;
  };
  const auto rq = [&](double s) { return p.rho_quarter(s); };

  const int G = 1024;
  p.grid_x_.resize(G + 1);
  p.grid_y_.resize(G + 1);
  double acc = 0.0;
  p.grid_x_[0] = 0.0;
  p.grid_y_[0] = 0.0;
  for (int i = 1; i <= G; ++i) {
    p.grid_x_[static_cast<std::size_t>(i)] = i == G ? b.length : b.length * i / G;
    acc += piecewise(rq, p.grid_x_[static_cast<std::size_t>(i - 1)], p.grid_x_[static_cast<std::size_t>(i)]);
    p.grid_y_[static_cast<std::size_t>(i)] = acc;
  }
  p.h_ = acc;
  for (double& y : p.grid_y_) y /= p.h_;
  p.grid_y_.back() = 1.0;

  if (p.constant_) {
    p.I_ = 0.0;
  } else {
    p.I_ = piecewise([&](double x) { return p.tilde_alpha2(x) * p.rho_quarter(x) / p.h_; }, 0.0, b.length);
  }
  return p;
}

/// Beam-only problem (no controller dynamics).
inline SpectralProblem transform_tables(const BeamModel& beam) {
  ControlSystem s;
  s.beam = beam;
  for (auto* ch : {&s.channel1.spr, &s.channel2.spr}) {
    ch->A = Eigen::MatrixXd::Zero(0, 0);
    ch->b = ch->c = Eigen::VectorXd::Zero(0);
  }
  return transform_tables(s);
}

namespace detail {

template <class Real>
std::complex<Real> transfer(const SprChannel& ch, std::complex<Real> s) {
  using C = std::complex<Real>;
  using Mat = Eigen::Matrix<C, Eigen::Dynamic, Eigen::Dynamic>;
  using Vec = Eigen::Matrix<C, Eigen::Dynamic, 1>;
  const Eigen::Index n = ch.A.rows();
  if (n == 0) return C(static_cast<Real>(ch.d));
  Mat m = -ch.A.cast<Real>().template cast<C>();
  for (Eigen::Index i = 0; i < n; ++i) m(i, i) += s;
  Eigen::PartialPivLU<Mat> lu(m);
  if (!(static_cast<double>(lu.rcond()) > 1e-14)) {
    std::ostringstream os;
    os << "char_det: lambda = (" << static_cast<double>(s.real()) << ", " << static_cast<double>(s.imag())
       << ") is numerically an eigenvalue of a controller matrix";
    throw SingularResolvent(os.str());
  }
  const Vec x = lu.solve(ch.b.cast<Real>().template cast<C>());
  C acc(0);
  for (Eigen::Index i = 0; i < n; ++i) acc += static_cast<Real>(ch.c(i)) * x(i);
  return acc + static_cast<Real>(ch.d);
}

// Determinant with the e^{tau y} column scaled by e^{-tau}.
template <class Real>
std::complex<Real> det_colscaled(std::complex<Real> tau, const SpectralProblem& p) {
  using C = std::complex<Real>;
  if (!p.constant_coefficients())
    throw PreconditionViolation("char_det: the exact determinant needs constant mu and Lambda");
  const BeamModel& b = p.beam();
  const Real L = static_cast<Real>(b.length);
  const Real Lam = static_cast<Real>(b.lambda(0.0));
  const Real h = static_cast<Real>(p.h_spec());
  const C lambda = C(0, 1) * tau * tau / (h * h);
  const auto& s = p.system();
  const C K1 = static_cast<Real>(s.channel1.spr.k) + lambda * transfer<Real>(s.channel1.spr, lambda) +
               lambda * lambda * static_cast<Real>(b.tip_inertia);
  const C K2 = static_cast<Real>(s.channel2.spr.k) + lambda * transfer<Real>(s.channel2.spr, lambda) +
               lambda * lambda * static_cast<Real>(b.tip_mass);
  const C om[4] = {C(1, 0), C(0, 1), C(-1, 0), C(0, -1)};
  Eigen::Matrix<C, 4, 4> m;
  for (int j = 0; j < 4; ++j) {
    const C r = om[j] * tau;
    const C scale = j == 0 ? std::exp(-tau) : C(1);
    const C e = j == 0 ? C(1) : std::exp(r);
    m(0, j) = scale;
    m(1, j) = r * scale;
    m(2, j) = (Lam / (L * L) * r * r + K1 / L * r) * e;
    m(3, j) = (-Lam / (L * L * L) * r * r * r + K2) * e;
  }
  return m.determinant();
}

}  // namespace detail

/// Holomorphic normalization det(tau) e^{-tau} tau^{-10}; same zeros as the
/// determinant, used by Newton.
inline Complex char_det_normalized(Complex tau, const SpectralProblem& p) {
  return detail::det_colscaled<double>(tau, p) * std::pow(tau, -10);
}

/// det(tau) e^{-Re tau} |tau|^{-10}.
inline Complex char_det(Complex tau, const SpectralProblem& p) {
  const Complex phase = std::polar(1.0, tau.imag()) * std::pow(tau / std::abs(tau), 10);
  return char_det_normalized(tau, p) * phase;
}

/// Unscaled determinant in the requested precision (overflows for large |tau|).
template <class Real>
std::complex<Real> char_det_unscaled(std::complex<Real> tau, const SpectralProblem& p) {
  return detail::det_colscaled<Real>(tau, p) * std::exp(tau);
}

/// i [((2n-1) pi / (2h))^2 + (4 h M^{-1} mu(L)^{3/4} Lambda(L)^{1/4} - I) / (2 h^2)].
inline Complex asymptotic_lambda(int n, const SpectralProblem& p) {
  if (n < 1) throw PreconditionViolation("asymptotic_lambda: mode index starts at 1");
  const BeamModel& b = p.beam();
  const double h = p.h_spec();
  const double lead = (2.0 * n - 1.0) * std::numbers::pi / (2.0 * h);
  const double off = 4.0 * h / b.tip_mass * std::pow(b.mu(b.length), 0.75) * std::pow(b.lambda(b.length), 0.25) -
                     p.I_const();
  return {0.0, lead * lead + off / (2.0 * h * h)};
}

/// Leading-order mode shape in y, up to a constant factor.
inline double eigenfunction_asymptotic(int n, double y, const SpectralProblem& p) {
  if (n < 1) throw PreconditionViolation("eigenfunction_asymptotic: mode index starts at 1");
  const double k = (n - 0.5) * std::numbers::pi;
  const double sign = n % 2 == 0 ? 1.0 : -1.0;
  const double pre = p.constant_coefficients() ? 1.0 : p.alpha3_prefactor(p.x_of_y(y));
  return pre * (std::exp(-k * y) - std::cos(k * y) + std::sin(k * y) + sign * std::exp(k * (y - 1.0)));
}

struct SpectralRoot {
  int n = 0;
  Complex tau;
  Complex lambda;
  double residual = 0.0;  ///< |char_det| at the root
  int iterations = 0;
  std::vector<double> residual_history;  ///< |char_det| before each Newton step and at the end
};

struct NewtonOptions {
  double tol_root = 1e-9;
  double step_tol = 1e-12;  ///< relative |dtau|
  int max_iterations = 50;
  double duplicate_radius = 0.1;
};

/// Maps tau into the sector -pi/4 < arg tau <= pi/4 (lambda is unchanged up to
/// the tau -> i tau, -tau symmetries of the fundamental system).
inline Complex canonical_tau(Complex tau) {
  for (int k = 0; k < 4; ++k) {
    const double a = std::arg(tau);
    if (a > -std::numbers::pi / 4 && a <= std::numbers::pi / 4) break;
    tau *= Complex(0.0, -1.0);
  }
  return tau;
}

/// Newton's method on the normalized determinant for mode n.
inline SpectralRoot newton_root(int n, const SpectralProblem& p, const NewtonOptions& o = {}) {
  if (n < 1) throw PreconditionViolation("newton_root: mode index starts at 1");
  if (!p.constant_coefficients())
    throw PreconditionViolation("newton_root: needs constant mu and Lambda");
  const BeamModel& b = p.beam();
  const double h = p.h_spec();
  const double k = (n - 0.5) * std::numbers::pi;
  const double off = 4.0 * h / b.tip_mass * std::pow(b.mu(b.length), 0.75) * std::pow(b.lambda(b.length), 0.25) -
                     p.I_const();
  const double h0 = std::clamp(off / (4.0 * k), -std::numbers::pi / 4, std::numbers::pi / 4);
  Complex tau(k + h0, 0.0);

  SpectralRoot r;
  r.n = n;
  auto f = [&](Complex t) { return char_det_normalized(t, p); };
  Complex ft = f(tau);
  for (int it = 0; it < o.max_iterations; ++it) {
    r.residual_history.push_back(std::abs(ft));
    const double dd = 1e-6 * std::abs(tau);
    const Complex fp = (f(tau + dd) - f(tau - dd)) / (2.0 * dd);
    if (fp == Complex(0.0)) break;
    const Complex delta = ft / fp;
    double t = 1.0;
    Complex next = tau - delta;
    Complex fn = f(next);
    for (int half = 0; half < 30 && std::abs(fn) > std::abs(ft); ++half) {
      t *= 0.5;
      next = tau - t * delta;
      fn = f(next);
    }
    tau = next;
    ft = fn;
    r.iterations = it + 1;
    if (std::abs(t * delta) <= o.step_tol * std::abs(tau) && std::abs(ft) <= o.tol_root) {
      r.residual_history.push_back(std::abs(ft));
      r.tau = canonical_tau(tau);
      r.lambda = Complex(0.0, 1.0) * r.tau * r.tau / (h * h);
      r.residual = std::abs(char_det(r.tau, p));
      return r;
    }
  }
  std::ostringstream os;
  os << "newton_root: mode " << n << " did not converge in " << o.max_iterations
     << " iterations (last tau " << tau << ", |det| " << std::abs(ft) << ")";
  throw NoConvergence(os.str());
}

/// Roots for n = 1..n_max, searched concurrently; rejects two modes landing on
/// the same root.
inline std::vector<SpectralRoot> newton_roots(int n_max, const SpectralProblem& p, const NewtonOptions& o = {}) {
  if (n_max < 1) throw PreconditionViolation("newton_roots: n_max must be at least 1");
  std::vector<SpectralRoot> roots(static_cast<std::size_t>(n_max));
  const unsigned workers = std::max(1u, std::min(std::thread::hardware_concurrency(), static_cast<unsigned>(n_max)));
  std::vector<std::future<void>> jobs;
  for (unsigned w = 0; w < workers; ++w) {
    jobs.push_back(std::async(std::launch::async, [&, w] {
      for (int n = static_cast<int>(w) + 1; n <= n_max; n += static_cast<int>(workers))
        roots[static_cast<std::size_t>(n - 1)] = newton_root(n, p, o);
    }));
  }
  for (auto& j : jobs) j.get();
  for (std::size_t i = 0; i < roots.size(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (std::abs(roots[i].tau - roots[j].tau) < o.duplicate_radius) {
        std::ostringstream os;
        os << "newton_roots: modes " << roots[j].n << " and " << roots[i].n << " converged to the same root "
           << roots[i].tau;
        throw DuplicateRoot(os.str());
      }
  return roots;
}

/// Writes n, re_tau, im_tau, re_lambda, im_lambda, residual, abs_err_asym.
inline void write_spectrum_csv(const std::string& path, const std::vector<SpectralRoot>& roots,
                               const SpectralProblem& p) {
  csv::Writer w(path, {"n", "re_tau", "im_tau", "re_lambda", "im_lambda", "residual", "abs_err_asym"});
  for (const auto& r : roots) {
    w.cell(r.n).cell(r.tau.real()).cell(r.tau.imag()).cell(r.lambda.real()).cell(r.lambda.imag());
    w.cell(r.residual).cell(std::abs(r.lambda - asymptotic_lambda(r.n, p)));
    w.end_row();
  }
}

namespace detail {

// First-order generator in energy coordinates x1 = R U, x2 = L^T V with
// K = R^T R and A = L L^T; similar to the (U, V) form but close to normal.
struct EnergyGenerator {
  Eigen::MatrixXd g;
  Eigen::MatrixXd r;  ///< upper triangular, U = R^{-1} x1
};

inline EnergyGenerator discrete_generator(const AssembledSystem& sys, const ControlSystem& system) {
  const SprChannel& c1 = system.channel1.spr;
  const SprChannel& c2 = system.channel2.spr;
  const int N = sys.N();
  const int n1 = c1.dim();
  const int n2 = c2.dim();
  const int S = 2 * N + n1 + n2;
  Eigen::LLT<Eigen::MatrixXd> la(Eigen::MatrixXd(sys.A_mat));
  if (la.info() != Eigen::Success) throw EigensolverFailure("discrete_spectrum: mass matrix is not positive definite");
  Eigen::LLT<Eigen::MatrixXd> lk(Eigen::MatrixXd(sys.K_mat));
  if (lk.info() != Eigen::Success)
    throw EigensolverFailure("discrete_spectrum: stiffness matrix is not positive definite");
  const Eigen::MatrixXd lkm = lk.matrixL();
  const Eigen::MatrixXd G = la.matrixL().solve(lkm).transpose();
  Eigen::MatrixXd D = la.matrixL().solve(Eigen::MatrixXd(sys.B_mat));
  D = la.matrixL().solve(D.transpose().eval()).transpose().eval();
  const Eigen::VectorXd w1 = la.matrixL().solve(Eigen::VectorXd::Unit(N, N - 1));
  const Eigen::VectorXd w2 = la.matrixL().solve(Eigen::VectorXd::Unit(N, N - 2));

  EnergyGenerator out;
  out.r = lkm.transpose();
  Eigen::MatrixXd& g = out.g;
  g = Eigen::MatrixXd::Zero(S, S);
  g.block(0, N, N, N) = G;
  g.block(N, 0, N, N) = -G.transpose();
  g.block(N, N, N, N) = -D;
  if (n1 > 0) {
    g.block(N, 2 * N, N, n1) = -w1 * c1.c.transpose();
    g.block(2 * N, 2 * N, n1, n1) = c1.A;
    g.block(2 * N, N, n1, N) = c1.b * w1.transpose();
  }
  if (n2 > 0) {
    g.block(N, 2 * N + n1, N, n2) = -w2 * c2.c.transpose();
    g.block(2 * N + n1, 2 * N + n1, n2, n2) = c2.A;
    g.block(2 * N + n1, N, n2, N) = c2.b * w2.transpose();
  }
  return out;
}

inline bool spectrum_order(const Complex& a, const Complex& b) {
  if (std::abs(a.imag()) != std::abs(b.imag())) return std::abs(a.imag()) < std::abs(b.imag());
  if (a.imag() != b.imag()) return a.imag() > b.imag();
  return a.real() < b.real();
}

}  // namespace detail

/// Eigenvalues of the first-order form of the FEM-controller system, sorted by |Im|.
inline std::vector<Complex> discrete_spectrum(const AssembledSystem& sys, const ControlSystem& system) {
  const Eigen::MatrixXd g = detail::discrete_generator(sys, system).g;
  Eigen::EigenSolver<Eigen::MatrixXd> es(g, false);
  if (es.info() != Eigen::Success) throw EigensolverFailure("discrete_spectrum: eigensolver did not converge");
  std::vector<Complex> out(es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size());
  std::sort(out.begin(), out.end(), detail::spectrum_order);
  return out;
}

struct DiscreteMode {
  Complex lambda;
  Eigen::VectorXcd U;  ///< displacement dofs of the eigenvector
};

/// Eigenpairs with Im lambda > 0, sorted by Im lambda.
inline std::vector<DiscreteMode> discrete_modes(const AssembledSystem& sys, const ControlSystem& system) {
  const auto gen = detail::discrete_generator(sys, system);
  Eigen::EigenSolver<Eigen::MatrixXd> es(gen.g, true);
  const Eigen::MatrixXcd rc = gen.r.cast<Complex>();
  if (es.info() != Eigen::Success) throw EigensolverFailure("discrete_modes: eigensolver did not converge");
  std::vector<DiscreteMode> out;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    if (es.eigenvalues()(i).imag() <= 0.0) continue;
    const Eigen::VectorXcd x1 = es.eigenvectors().col(i).head(sys.N());
    out.push_back({es.eigenvalues()(i), rc.triangularView<Eigen::Upper>().solve(x1)});
  }
  std::sort(out.begin(), out.end(), [](const DiscreteMode& a, const DiscreteMode& b) {
    return detail::spectrum_order(a.lambda, b.lambda);
  });
  return out;
}

/// Real, sup-normalized nodal values u(x_1..x_P) of a complex mode (phase
/// fixed by the largest entry; the sign makes u(L) non-negative).
inline Eigen::VectorXd normalized_mode_values(const DiscreteMode& mode) {
  const Eigen::Index P = mode.U.size() / 2;
  Eigen::VectorXcd vals(P);
  for (Eigen::Index m = 0; m < P; ++m) vals(m) = mode.U(2 * m);
  Eigen::Index imax = 0;
  vals.cwiseAbs().maxCoeff(&imax);
  const Complex phase = std::abs(vals(imax)) > 0.0 ? std::conj(vals(imax)) / std::abs(vals(imax)) : Complex(1.0);
  Eigen::VectorXd re = (vals * phase).real();
  const double sup = re.cwiseAbs().maxCoeff();
  if (sup > 0.0) re /= sup;
  if (re(P - 1) < 0.0) re = -re;
  return re;
}

}  // namespace ebbeam
