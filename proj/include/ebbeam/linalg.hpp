#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "ebbeam/errors.hpp"

namespace ebbeam::linalg {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Largest real part over the eigenvalues of a square matrix (-inf if empty).
inline double spectral_abscissa(const MatrixXd& a) {
  if (a.rows() == 0) return -std::numeric_limits<double>::infinity();
  Eigen::EigenSolver<MatrixXd> es(a, /*computeEigenvectors=*/false);
  if (es.info() != Eigen::Success) throw EigensolverFailure("spectral_abscissa: eigensolver failed");
  return es.eigenvalues().real().maxCoeff();
}

/// Orthonormal basis of the column space of `m`, with the numerical rank decided
/// by singular values above rel_tol * sigma_max.
struct RangeBasis {
  MatrixXd basis;  // rows(m) x rank
  int rank = 0;
  Eigen::VectorXd singular_values;
};

inline RangeBasis range_basis(const MatrixXd& m, double rel_tol = 1e-8) {
  RangeBasis out;
  if (m.rows() == 0 || m.cols() == 0) {
    out.basis = MatrixXd::Zero(m.rows(), 0);
    return out;
  }
  Eigen::JacobiSVD<MatrixXd> svd(m, Eigen::ComputeFullU);
  out.singular_values = svd.singularValues();
  const double smax = out.singular_values.size() > 0 ? out.singular_values(0) : 0.0;
  for (Eigen::Index i = 0; i < out.singular_values.size(); ++i) {
    if (smax > 0.0 && out.singular_values(i) > rel_tol * smax) ++out.rank;
  }
  out.basis = svd.matrixU().leftCols(out.rank);
  return out;
}

/// Krylov matrix [v, Av, ..., A^{n-1} v] with every column scaled to unit length
/// (zero columns stay zero), so the rank decision is insensitive to eigenvalue
/// magnitudes.
inline MatrixXd normalized_krylov(const MatrixXd& a, const VectorXd& v) {
  const Eigen::Index n = a.rows();
  MatrixXd k(n, n);
  VectorXd col = v;
  for (Eigen::Index j = 0; j < n; ++j) {
    const double nrm = col.norm();
    k.col(j) = nrm > 0.0 ? VectorXd(col / nrm) : col;
    col = a * k.col(j);
  }
  return k;
}

/// Solves A^T X + X A = -Q for symmetric Q through the Kronecker form.
/// Intended for controller-sized matrices (n up to a few dozen).
inline MatrixXd solve_lyapunov(const MatrixXd& a, const MatrixXd& q) {
  const Eigen::Index n = a.rows();
  if (n == 0) return MatrixXd::Zero(0, 0);
  const MatrixXd id = MatrixXd::Identity(n, n);
  MatrixXd kron(n * n, n * n);
  // vec(A^T X) = (I kron A^T) vec(X);  vec(X A) = (A^T kron I) vec(X).
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      kron.block(i * n, j * n, n, n) = id(i, j) * a.transpose() + a(j, i) * id;
    }
  }
  const VectorXd rhs = -Eigen::Map<const VectorXd>(q.data(), n * n);
  Eigen::FullPivLU<MatrixXd> lu(kron);
  if (!lu.isInvertible()) throw SingularSystem("solve_lyapunov: operator is singular");
  VectorXd x = lu.solve(rhs);
  MatrixXd xm = Eigen::Map<MatrixXd>(x.data(), n, n);
  return 0.5 * (xm + xm.transpose());
}

/// Smallest eigenvalue of the symmetric part of `p` (+inf if empty).
inline double min_symmetric_eigenvalue(const MatrixXd& p) {
  if (p.rows() == 0) return std::numeric_limits<double>::infinity();
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (p + p.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

}  // namespace ebbeam::linalg
