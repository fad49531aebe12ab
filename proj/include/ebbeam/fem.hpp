#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "ebbeam/errors.hpp"
#include "ebbeam/model.hpp"
#include "ebbeam/quadrature.hpp"

namespace ebbeam {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// Uniform mesh x_m = m L / P, m = 0..P.
class Mesh {
 public:
  Mesh(int elements, double length) : elements_(elements), length_(length) {
    if (elements < 1) throw PreconditionViolation("Mesh: need at least one element");
    if (!(length > 0.0)) throw PreconditionViolation("Mesh: length must be positive");
  }

  int elements() const noexcept { return elements_; }
  double length() const noexcept { return length_; }
  double h() const noexcept { return length_ / elements_; }
  int dofs() const noexcept { return 2 * elements_; }
  double node(int m) const noexcept { return m == elements_ ? length_ : m * length_ / elements_; }

  /// Element containing x (the left one at interior nodes, except x = 0).
  int element_of(double x) const {
    if (x < -1e-12 * length_ || x > length_ * (1.0 + 1e-12)) {
      std::ostringstream os;
      os << "Mesh: x = " << x << " outside [0, " << length_ << "]";
      throw OutOfRange(os.str());
    }
    int e = static_cast<int>(std::floor(x / h()));
    return std::clamp(e, 0, elements_ - 1);
  }

 private:
  int elements_;
  double length_;
};

namespace hermite {

/// Shape functions on [0, 1] in the order (value left, slope left, value right,
/// slope right), with slopes scaled by the element length `he`; derivatives are
/// with respect to x.
inline std::array<double, 4> shape(double xi, double he, int order) {
  const double x2 = xi * xi;
  const double x3 = x2 * xi;
  switch (order) {
    case 0:
      return {1.0 - 3.0 * x2 + 2.0 * x3, he * (xi - 2.0 * x2 + x3), 3.0 * x2 - 2.0 * x3, he * (x3 - x2)};
    case 1:
      return {(-6.0 * xi + 6.0 * x2) / he, 1.0 - 4.0 * xi + 3.0 * x2, (6.0 * xi - 6.0 * x2) / he,
              3.0 * x2 - 2.0 * xi};
    case 2:
      return {(-6.0 + 12.0 * xi) / (he * he), (-4.0 + 6.0 * xi) / he, (6.0 - 12.0 * xi) / (he * he),
              (6.0 * xi - 2.0) / he};
    case 3:
      return {12.0 / (he * he * he), 6.0 / (he * he), -12.0 / (he * he * he), 6.0 / (he * he)};
    default:
      return {0.0, 0.0, 0.0, 0.0};
  }
}

}  // namespace hermite

/// Value (order 0), slope (1) or curvature (2) of basis function w_j at x.
/// j is 1-based: w_{2m-1} carries the value and w_{2m} the slope at node m.
inline double basis_eval(int j, double x, const Mesh& mesh, int order) {
  if (j < 1 || j > mesh.dofs()) {
    std::ostringstream os;
    os << "basis_eval: dof index " << j << " outside 1.." << mesh.dofs();
    throw OutOfRange(os.str());
  }
  if (order < 0 || order > 3) throw OutOfRange("basis_eval: derivative order must be 0..3");
  const int m = (j + 1) / 2;
  const bool slope = j % 2 == 0;
  const int e = mesh.element_of(x);
  if (e != m - 1 && e != m) {
    // also handles x exactly at a node shared with a non-supporting element
    return 0.0;
  }
  const double he = mesh.h();
  const double xi = (x - mesh.node(e)) / he;
  const auto s = hermite::shape(xi, he, order);
  const int local = (e == m - 1 ? 2 : 0) + (slope ? 1 : 0);
  return s[static_cast<std::size_t>(local)];
}

/// Value or derivative of the Hermite function with free dofs U (clamped at 0).
inline double hermite_eval(const Eigen::VectorXd& U, const Mesh& mesh, double x, int order) {
  if (U.size() != mesh.dofs()) throw PreconditionViolation("hermite_eval: dof vector has wrong length");
  const int e = mesh.element_of(x);
  const double he = mesh.h();
  const double xi = (x - mesh.node(e)) / he;
  const auto s = hermite::shape(xi, he, order);
  const double u0 = e == 0 ? 0.0 : U(2 * e - 2);
  const double s0 = e == 0 ? 0.0 : U(2 * e - 1);
  return s[0] * u0 + s[1] * s0 + s[2] * U(2 * e) + s[3] * U(2 * e + 1);
}

/// Nodal values and slopes of (f, f') at x_1..x_P.
template <class F, class DF>
Eigen::VectorXd hermite_interpolant(F&& f, DF&& df, const Mesh& mesh) {
  Eigen::VectorXd U(mesh.dofs());
  for (int m = 1; m <= mesh.elements(); ++m) {
    U(2 * m - 2) = f(mesh.node(m));
    U(2 * m - 1) = df(mesh.node(m));
  }
  return U;
}

/// Represents a coarse Hermite function exactly on a nested finer mesh.
inline Eigen::VectorXd prolong(const Eigen::VectorXd& U, const Mesh& coarse, const Mesh& fine) {
  if (fine.elements() % coarse.elements() != 0 ||
      std::abs(fine.length() - coarse.length()) > 1e-14 * coarse.length()) {
    std::ostringstream os;
    os << "prolong: mesh with " << coarse.elements() << " elements does not nest in one with "
       << fine.elements();
    throw MeshMismatch(os.str());
  }
  const int r = fine.elements() / coarse.elements();
  Eigen::VectorXd out(fine.dofs());
  for (int m = 1; m <= fine.elements(); ++m) {
    if (m % r == 0) {
      out(2 * m - 2) = U(2 * (m / r) - 2);
      out(2 * m - 1) = U(2 * (m / r) - 1);
      continue;
    }
    const double x = fine.node(m);
    out(2 * m - 2) = hermite_eval(U, coarse, x, 0);
    out(2 * m - 1) = hermite_eval(U, coarse, x, 1);
  }
  return out;
}

struct AssemblyOptions {
  int quadrature_points = 0;  ///< 0 selects the smallest exact rule
};

/// Galerkin matrices of the semi-discrete system A U'' + B U' + K U + C(zeta) = 0.
/// Free dofs are interleaved (value, slope) for nodes 1..P; the last two are
/// u(L) and u_x(L).
struct AssembledSystem {
  SparseMatrix A_mat;
  SparseMatrix B_mat;
  SparseMatrix K_mat;
  Mesh mesh{1, 1.0};
  int quadrature_points = 0;

  int N() const noexcept { return mesh.dofs(); }
  int dof_u_L() const noexcept { return N() - 2; }   ///< 0-based
  int dof_ux_L() const noexcept { return N() - 1; }  ///< 0-based
};

/// Largest |i - j| over stored nonzeros.
inline int bandwidth(const SparseMatrix& m) {
  int bw = 0;
  for (int k = 0; k < m.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(m, k); it; ++it)
      if (it.value() != 0.0) bw = std::max(bw, static_cast<int>(std::abs(it.row() - it.col())));
  return bw;
}

namespace detail {

inline int required_points(const CoefficientField& mu, const CoefficientField& lambda) {
  // mass integrand: deg mu + 6, stiffness: deg Lambda + 2; n points are exact to 2n - 1.
  const int mass = (mu.degree() + 6) / 2 + 1;
  const int stiff = (lambda.degree() + 2) / 2 + 1;
  return std::max({mass, stiff, 2});
}

}  // namespace detail

inline AssembledSystem assemble(const ControlSystem& system, const Mesh& mesh,
                                const AssemblyOptions& options = {}) {
  const BeamModel& beam = system.beam;
  if (std::abs(mesh.length() - beam.length) > 1e-12 * beam.length)
    throw PreconditionViolation("assemble: mesh length differs from beam length");
  const int needed = detail::required_points(beam.mu, beam.lambda);
  int nq = options.quadrature_points;
  if (nq == 0) nq = needed;
  if (nq < needed) {
    std::ostringstream os;
    os << "assemble: " << nq << " Gauss points cannot integrate coefficient degrees (mu "
       << beam.mu.degree() << ", lambda " << beam.lambda.degree() << ") exactly; need " << needed;
    throw QuadratureDegreeTooLow(os.str(), needed);
  }
  const QuadratureRule rule = gauss_legendre(nq);
  const int P = mesh.elements();
  const int N = mesh.dofs();
  const double he = mesh.h();

  std::vector<Eigen::Triplet<double>> ta, tk;
  ta.reserve(static_cast<std::size_t>(16 * P + 2));
  tk.reserve(static_cast<std::size_t>(16 * P + 2));

  std::vector<double> cuts;
  for (int e = 0; e < P; ++e) {
    const double xa = mesh.node(e);
    const double xb = mesh.node(e + 1);
    cuts.assign({xa, xb});
    for (const auto* f : {&beam.mu, &beam.lambda})
      for (double bp : f->breakpoints())
        if (bp > xa + 1e-14 * he && bp < xb - 1e-14 * he) cuts.push_back(bp);
    std::sort(cuts.begin(), cuts.end());

    Eigen::Matrix4d me = Eigen::Matrix4d::Zero();
    Eigen::Matrix4d ke = Eigen::Matrix4d::Zero();
    for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
      const double a = cuts[c];
      const double b = cuts[c + 1];
      const double mid = 0.5 * (a + b);
      const std::size_t pm = beam.mu.piece_index(mid);
      const std::size_t pl = beam.lambda.piece_index(mid);
      const double half = 0.5 * (b - a);
      for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
        const double x = mid + half * rule.nodes[q];
        const double w = half * rule.weights[q];
        const double xi = (x - xa) / he;
        const auto s0 = hermite::shape(xi, he, 0);
        const auto s2 = hermite::shape(xi, he, 2);
        const double muv = beam.mu.piece_derivative(pm, x, 0);
        const double lav = beam.lambda.piece_derivative(pl, x, 0);
        for (int i = 0; i < 4; ++i)
          for (int j = 0; j < 4; ++j) {
            me(i, j) += w * muv * s0[static_cast<std::size_t>(i)] * s0[static_cast<std::size_t>(j)];
            ke(i, j) += w * lav * s2[static_cast<std::size_t>(i)] * s2[static_cast<std::size_t>(j)];
          }
      }
    }
    for (int i = 0; i < 4; ++i) {
      const int gi = 2 * e + i - 2;
      if (gi < 0) continue;
      for (int j = 0; j < 4; ++j) {
        const int gj = 2 * e + j - 2;
        if (gj < 0) continue;
        ta.emplace_back(gi, gj, me(i, j));
        tk.emplace_back(gi, gj, ke(i, j));
      }
    }
  }
  ta.emplace_back(N - 2, N - 2, beam.tip_mass);
  ta.emplace_back(N - 1, N - 1, beam.tip_inertia);
  tk.emplace_back(N - 2, N - 2, system.channel2.spr.k);
  tk.emplace_back(N - 1, N - 1, system.channel1.spr.k);

  AssembledSystem out;
  out.mesh = mesh;
  out.quadrature_points = nq;
  out.A_mat.resize(N, N);
  out.K_mat.resize(N, N);
  out.B_mat.resize(N, N);
  out.A_mat.setFromTriplets(ta.begin(), ta.end());
  out.K_mat.setFromTriplets(tk.begin(), tk.end());
  std::vector<Eigen::Triplet<double>> tb;
  if (system.channel2.spr.d != 0.0) tb.emplace_back(N - 2, N - 2, system.channel2.spr.d);
  if (system.channel1.spr.d != 0.0) tb.emplace_back(N - 1, N - 1, system.channel1.spr.d);
  out.B_mat.setFromTriplets(tb.begin(), tb.end());
  // exactly symmetric in floating point
  out.A_mat = SparseMatrix(0.5 * (out.A_mat + SparseMatrix(out.A_mat.transpose())));
  out.K_mat = SparseMatrix(0.5 * (out.K_mat + SparseMatrix(out.K_mat.transpose())));
  out.A_mat.makeCompressed();
  out.K_mat.makeCompressed();
  out.B_mat.makeCompressed();
  return out;
}

/// C(zeta): c2 . zeta2 at u(L), c1 . zeta1 at u_x(L), zero elsewhere.
inline Eigen::VectorXd control_vector(const Eigen::VectorXd& zeta1, const Eigen::VectorXd& zeta2,
                                      const ControlSystem& system, const Mesh& mesh) {
  const auto& c1 = system.channel1.spr.c;
  const auto& c2 = system.channel2.spr.c;
  if (zeta1.size() != c1.size() || zeta2.size() != c2.size())
    throw PreconditionViolation("control_vector: controller state dimensions do not match");
  const int N = mesh.dofs();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(N);
  out(N - 2) = c2.dot(zeta2);
  out(N - 1) = c1.dot(zeta1);
  return out;
}

/// Writes "row,col,value" lines (0-based, header row first).
inline void write_coo(std::ostream& os, const SparseMatrix& m) {
  os << "row,col,value\n";
  char buf[64];
  for (int k = 0; k < m.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(m, k); it; ++it) {
      std::snprintf(buf, sizeof buf, "%.17g", it.value());
      os << it.row() << ',' << it.col() << ',' << buf << '\n';
    }
}

}  // namespace ebbeam
