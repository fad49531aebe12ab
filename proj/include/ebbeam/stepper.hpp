#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <cmath>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "ebbeam/csv.hpp"
#include "ebbeam/errors.hpp"
#include "ebbeam/fem.hpp"
#include "ebbeam/model.hpp"

namespace ebbeam {

/// (U, V, zeta1, zeta2) at time t after step_index steps.
struct DiscreteState {
  Eigen::VectorXd U;
  Eigen::VectorXd V;
  Eigen::VectorXd zeta1;
  Eigen::VectorXd zeta2;
  double t = 0.0;
  long long step_index = 0;

  static DiscreteState zero(int N, int n1, int n2) {
    DiscreteState s;
    s.U = Eigen::VectorXd::Zero(N);
    s.V = Eigen::VectorXd::Zero(N);
    s.zeta1 = Eigen::VectorXd::Zero(n1);
    s.zeta2 = Eigen::VectorXd::Zero(n2);
    return s;
  }

  double u_L() const { return U(U.size() - 2); }
  double ux_L() const { return U(U.size() - 1); }
  double tip_momentum(double M) const { return M * V(V.size() - 2); }   ///< psi
  double tip_ang_momentum(double J) const { return J * V(V.size() - 1); }  ///< xi
};

enum class TimeDirection { forward, backward };

/// Factored Crank-Nicolson update for a fixed step; immutable and shareable.
class SteppingOperator {
 public:
  double dt() const noexcept { return dt_; }  ///< signed: negative when stepping backward
  int N() const noexcept { return N_; }
  int n1() const noexcept { return n1_; }
  int n2() const noexcept { return n2_; }
  int size() const noexcept { return 2 * N_ + n1_ + n2_; }
  double factorization_residual() const noexcept { return factor_residual_; }

  Eigen::VectorXd pack(const DiscreteState& s) const {
    Eigen::VectorXd z(size());
    z << s.U, s.V, s.zeta1, s.zeta2;
    return z;
  }

  void unpack(const Eigen::VectorXd& z, DiscreteState& s) const {
    s.U = z.segment(0, N_);
    s.V = z.segment(N_, N_);
    s.zeta1 = z.segment(2 * N_, n1_);
    s.zeta2 = z.segment(2 * N_ + n1_, n2_);
  }

  /// Solves lhs z' = rhs z; residuals of the refinement sweeps are formed in extended precision.
  Eigen::VectorXd apply(const Eigen::VectorXd& z) const {
    using LVec = Eigen::Matrix<long double, Eigen::Dynamic, 1>;
    const LVec b = rhs_ext_ * z.cast<long double>();
    Eigen::VectorXd out = lu_->solve(b.cast<double>().eval());
    for (int sweep = 0; sweep < 2; ++sweep) {
      const LVec r = b - lhs_ext_ * out.cast<long double>();
      out += lu_->solve(r.cast<double>().eval());
    }
    return out;
  }

  const SparseMatrix& lhs() const noexcept { return lhs_; }
  const SparseMatrix& rhs() const noexcept { return rhs_; }

 private:
  friend SteppingOperator build_stepper(const AssembledSystem&, const ControlSystem&, double,
                                        TimeDirection);
  double dt_ = 0.0;
  int N_ = 0, n1_ = 0, n2_ = 0;
  SparseMatrix lhs_;
  SparseMatrix rhs_;
  Eigen::SparseMatrix<long double> lhs_ext_;
  Eigen::SparseMatrix<long double> rhs_ext_;
  std::shared_ptr<Eigen::SparseLU<SparseMatrix>> lu_;
  double factor_residual_ = 0.0;
};

/// Builds and factors the monolithic system for (U, V, zeta1, zeta2)^{n+1}.
/// `backward` uses the step -dt, which inverts a forward step.
inline SteppingOperator build_stepper(const AssembledSystem& sys, const ControlSystem& system,
                                      double dt, TimeDirection direction = TimeDirection::forward) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw PreconditionViolation("build_stepper: dt must be positive");
  const SprChannel& ch1 = system.channel1.spr;
  const SprChannel& ch2 = system.channel2.spr;
  ch1.check_dimensions();
  ch2.check_dimensions();
  const int N = sys.N();
  const int n1 = ch1.dim();
  const int n2 = ch2.dim();
  const int S = 2 * N + n1 + n2;
  const double h2 = 0.5 * (direction == TimeDirection::forward ? dt : -dt);
  const int iV = N, i1 = 2 * N, i2 = 2 * N + n1;
  const int uL = N - 2, uxL = N - 1;

  // Rows are scaled by 1 / h2 so that K enters unscaled: with K's large,
  // cancelling entries, rounding h2 K would shift the conserved energy.
  const double sc = 1.0 / h2;
  std::vector<Eigen::Triplet<double>> tl, tr;
  for (int i = 0; i < N; ++i) {
    tl.emplace_back(i, i, sc);
    tl.emplace_back(i, iV + i, -1.0);
    tr.emplace_back(i, i, sc);
    tr.emplace_back(i, iV + i, 1.0);
  }
  auto add_block = [](std::vector<Eigen::Triplet<double>>& t, const SparseMatrix& m, int r0, int c0,
                      double s) {
    for (int k = 0; k < m.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(m, k); it; ++it)
        t.emplace_back(r0 + static_cast<int>(it.row()), c0 + static_cast<int>(it.col()), s * it.value());
  };
  add_block(tl, sys.K_mat, iV, 0, 1.0);
  add_block(tl, sys.A_mat, iV, iV, sc);
  add_block(tl, sys.B_mat, iV, iV, 1.0);
  add_block(tr, sys.K_mat, iV, 0, -1.0);
  add_block(tr, sys.A_mat, iV, iV, sc);
  add_block(tr, sys.B_mat, iV, iV, -1.0);
  for (int j = 0; j < n1; ++j) {
    tl.emplace_back(iV + uxL, i1 + j, ch1.c(j));
    tr.emplace_back(iV + uxL, i1 + j, -ch1.c(j));
  }
  for (int j = 0; j < n2; ++j) {
    tl.emplace_back(iV + uL, i2 + j, ch2.c(j));
    tr.emplace_back(iV + uL, i2 + j, -ch2.c(j));
  }
  auto controller = [&](const SprChannel& ch, int r0, int vdof) {
    for (int i = 0; i < ch.dim(); ++i) {
      for (int j = 0; j < ch.dim(); ++j) {
        const double a = ch.A(i, j);
        const double id = i == j ? sc : 0.0;
        if (id - a != 0.0) tl.emplace_back(r0 + i, r0 + j, id - a);
        if (id + a != 0.0) tr.emplace_back(r0 + i, r0 + j, id + a);
      }
      tl.emplace_back(r0 + i, iV + vdof, -ch.b(i));
      tr.emplace_back(r0 + i, iV + vdof, ch.b(i));
    }
  };
  controller(ch1, i1, uxL);
  controller(ch2, i2, uL);

  SteppingOperator op;
  op.dt_ = 2.0 * h2;
  op.N_ = N;
  op.n1_ = n1;
  op.n2_ = n2;
  op.lhs_.resize(S, S);
  op.rhs_.resize(S, S);
  op.lhs_.setFromTriplets(tl.begin(), tl.end());
  op.rhs_.setFromTriplets(tr.begin(), tr.end());
  op.lhs_.makeCompressed();
  op.rhs_.makeCompressed();
  op.lhs_ext_ = op.lhs_.cast<long double>();
  op.rhs_ext_ = op.rhs_.cast<long double>();
  op.lu_ = std::make_shared<Eigen::SparseLU<SparseMatrix>>();
  op.lu_->analyzePattern(op.lhs_);
  op.lu_->factorize(op.lhs_);
  if (op.lu_->info() != Eigen::Success)
    throw SingularSystem("build_stepper: factorization failed: " + op.lu_->lastErrorMessage());

  // Factorization check on a fixed pseudo-random vector.
  Eigen::VectorXd probe(S);
  unsigned long long seed = 0x9E3779B97F4A7C15ull;
  for (int i = 0; i < S; ++i) {
    seed = seed * 6364136223846793005ull + 1442695040888963407ull;
    probe(i) = static_cast<double>(seed >> 11) / 9007199254740992.0 - 0.5;
  }
  // normwise backward error in the infinity norm
  const Eigen::VectorXd x = op.lu_->solve(probe);
  double lhs_norm = 0.0;
  {
    Eigen::VectorXd rows = Eigen::VectorXd::Zero(S);
    for (Eigen::Index k = 0; k < op.lhs_.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(op.lhs_, k); it; ++it) rows(it.row()) += std::abs(it.value());
    lhs_norm = rows.maxCoeff();
  }
  op.factor_residual_ = (op.lhs_ * x - probe).lpNorm<Eigen::Infinity>() /
                        (lhs_norm * x.lpNorm<Eigen::Infinity>() + probe.lpNorm<Eigen::Infinity>());
  if (!(op.factor_residual_ <= 1e-12)) {
    std::ostringstream os;
    os << "build_stepper: factorization backward error " << op.factor_residual_ << " exceeds 1e-12";
    throw SingularSystem(os.str());
  }
  return op;
}

/// One Crank-Nicolson step.
inline DiscreteState step(const SteppingOperator& op, const DiscreteState& state) {
  if (state.U.size() != op.N() || state.V.size() != op.N() || state.zeta1.size() != op.n1() ||
      state.zeta2.size() != op.n2())
    throw PreconditionViolation("step: state dimensions do not match the operator");
  const Eigen::VectorXd z = op.apply(op.pack(state));
  if (!z.allFinite()) throw NonFiniteState("step: non-finite entry after step " + std::to_string(state.step_index + 1));
  DiscreteState out;
  op.unpack(z, out);
  out.step_index = state.step_index + (op.dt() > 0.0 ? 1 : -1);
  out.t = state.t + op.dt();
  return out;
}

namespace detail {

// Certificate data for one channel; an empty channel without certificate
// contributes pure damping (delta = d, delta_tilde = 0).
struct ChannelEnergy {
  Eigen::MatrixXd P;
  Eigen::VectorXd q;
  double eps = 0.0;
  double delta = 0.0;
  double delta_tilde = 0.0;
};

inline ChannelEnergy channel_energy(const ControllerChannel& ch, const char* name) {
  ChannelEnergy e;
  if (ch.certificate) {
    e.P = ch.certificate->P;
    e.q = ch.certificate->q;
    e.eps = ch.certificate->eps;
    e.delta = ch.certificate->delta;
    e.delta_tilde = ch.certificate->delta_tilde;
    return e;
  }
  if (ch.spr.dim() != 0)
    throw MissingCertificate(std::string("energy needs a KYP certificate for ") + name);
  e.P = Eigen::MatrixXd::Zero(0, 0);
  e.q = Eigen::VectorXd::Zero(0);
  e.delta = ch.spr.d;
  return e;
}

}  // namespace detail

namespace detail {

inline long double quadratic_form(const SparseMatrix& m, const Eigen::VectorXd& x) {
  long double acc = 0.0L;
  for (Eigen::Index k = 0; k < m.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(m, k); it; ++it)
      acc += static_cast<long double>(x(it.row())) * it.value() * x(it.col());
  return acc;
}

inline long double quadratic_form(const Eigen::MatrixXd& m, const Eigen::VectorXd& x) {
  long double acc = 0.0L;
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) acc += static_cast<long double>(x(i)) * m(i, j) * x(j);
  return acc;
}

}  // namespace detail

/// 1/2 U^T K U + 1/2 V^T A V + 1/2 sum zeta^T P zeta.
inline double discrete_norm_sq(const DiscreteState& s, const AssembledSystem& sys,
                               const ControlSystem& system) {
  const auto e1 = detail::channel_energy(system.channel1, "channel1");
  const auto e2 = detail::channel_energy(system.channel2, "channel2");
  long double v = 0.5L * detail::quadratic_form(sys.K_mat, s.U) + 0.5L * detail::quadratic_form(sys.A_mat, s.V);
  if (s.zeta1.size() > 0) v += 0.5L * detail::quadratic_form(e1.P, s.zeta1);
  if (s.zeta2.size() > 0) v += 0.5L * detail::quadratic_form(e2.P, s.zeta2);
  return static_cast<double>(v);
}

/// Predicted drop ||z^n||^2 - ||z^{n+1}||^2 of one step (exact for the scheme).
inline double dissipation_decrement(const DiscreteState& s0, const DiscreteState& s1,
                                    const ControlSystem& system, double dt) {
  const auto e1 = detail::channel_energy(system.channel1, "channel1");
  const auto e2 = detail::channel_energy(system.channel2, "channel2");
  const Eigen::Index N = s0.U.size();
  auto channel = [&](const detail::ChannelEnergy& e, const Eigen::VectorXd& z0,
                     const Eigen::VectorXd& z1, double rate) {
    double acc = e.delta * rate * rate;
    double inner = e.delta_tilde * rate;
    if (z0.size() > 0) {
      const Eigen::VectorXd zbar = 0.5 * (z0 + z1);
      inner += e.q.dot(zbar);
      acc += 0.5 * e.eps * zbar.dot(e.P * zbar);
    }
    return acc + 0.5 * inner * inner;
  };
  const double rate1 = (s1.U(N - 1) - s0.U(N - 1)) / dt;
  const double rate2 = (s1.U(N - 2) - s0.U(N - 2)) / dt;
  return dt * (channel(e1, s0.zeta1, s1.zeta1, rate1) + channel(e2, s0.zeta2, s1.zeta2, rate2));
}

/// Trajectory CSV: step,t,energy,u_L,ux_L,decrement_predicted,decrement_actual.
class TrajectoryWriter {
 public:
  TrajectoryWriter(const std::string& path, int flush_every = 100)
      : w_(path, {"step", "t", "energy", "u_L", "ux_L", "decrement_predicted", "decrement_actual"}),
        flush_every_(flush_every > 0 ? flush_every : 1) {}

  /// The first row has empty decrement columns.
  void write(const DiscreteState& s, double energy, const double* predicted = nullptr,
             const double* actual = nullptr) {
    w_.cell(s.step_index).cell(s.t).cell(energy).cell(s.u_L()).cell(s.ux_L());
    if (predicted) w_.cell(*predicted); else w_.empty();
    if (actual) w_.cell(*actual); else w_.empty();
    w_.end_row();
    if (++rows_ % flush_every_ == 0) w_.flush();
  }

  void flush() { w_.flush(); }

 private:
  csv::Writer w_;
  int flush_every_;
  long long rows_ = 0;
};

}  // namespace ebbeam
