#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "ebbeam/controller.hpp"
#include "ebbeam/stepper.hpp"
#include "reference_system.hpp"

using namespace ebbeam;

namespace {

ControlSystem certified_reference_system() {
  auto s = testdata::reference_system();
  s.channel1.certificate = kyp_solve(s.channel1.spr, 0.02);
  s.channel2.certificate = kyp_solve(s.channel2.spr, 0.02);
  return s;
}

DiscreteState smooth_state(const Mesh& mesh, int n1, int n2) {
  DiscreteState s = DiscreteState::zero(mesh.dofs(), n1, n2);
  s.U = hermite_interpolant([](double x) { return x * x * (1 - x) * (1 - x); },
                            [](double x) { return 2 * x * (1 - x) * (1 - x) - 2 * x * x * (1 - x); }, mesh);
  s.V = hermite_interpolant([](double x) { return 0.3 * x * x; }, [](double x) { return 0.6 * x; }, mesh);
  for (int i = 0; i < n1; ++i) s.zeta1(i) = 0.01 * (i + 1);
  for (int i = 0; i < n2; ++i) s.zeta2(i) = -0.02 * (i + 1);
  return s;
}

DiscreteState random_state(const Mesh& mesh, int n1, int n2, unsigned seed) {
  std::mt19937 gen(seed);
  std::normal_distribution<double> g;
  DiscreteState s = DiscreteState::zero(mesh.dofs(), n1, n2);
  for (auto* v : {&s.U, &s.V, &s.zeta1, &s.zeta2})
    for (Eigen::Index i = 0; i < v->size(); ++i) (*v)(i) = g(gen);
  return s;
}

}  // namespace

TEST(BuildStepper, RejectsNonPositiveStep) {
  const auto s = testdata::reference_system();
  const auto sys = assemble(s, Mesh(4, 1.0));
  EXPECT_THROW(build_stepper(sys, s, 0.0), PreconditionViolation);
  EXPECT_THROW(build_stepper(sys, s, -1.0), PreconditionViolation);
}

TEST(BuildStepper, FactorizationResidualIsSmall) {
  const auto s = testdata::reference_system();
  const auto op = build_stepper(assemble(s, Mesh(30, 1.0)), s, 0.01);
  EXPECT_LE(op.factorization_residual(), 1e-12);
  EXPECT_EQ(op.size(), 2 * 60 + 20);
}

TEST(Step, ZeroStateStaysZero) {
  const auto s = testdata::reference_system();
  const auto op = build_stepper(assemble(s, Mesh(10, 1.0)), s, 0.01);
  DiscreteState z = DiscreteState::zero(20, 10, 10);
  for (int k = 0; k < 10; ++k) z = step(op, z);
  EXPECT_EQ(z.U.norm() + z.V.norm() + z.zeta1.norm() + z.zeta2.norm(), 0.0);
  EXPECT_EQ(z.step_index, 10);
  EXPECT_NEAR(z.t, 0.1, 1e-15);
}

TEST(Step, DisplacementUpdateIsTrapezoidal) {
  const auto s = testdata::reference_system();
  const Mesh mesh(20, 1.0);
  const double dt = 0.01;
  const auto op = build_stepper(assemble(s, mesh), s, dt);
  DiscreteState z = smooth_state(mesh, 10, 10);
  for (int k = 0; k < 50; ++k) {
    const DiscreteState n = step(op, z);
    const double r = ((n.U - z.U) / dt - 0.5 * (n.V + z.V)).norm();
    EXPECT_LE(r, 1e-12 * std::max(1.0, n.V.norm()));
    z = n;
  }
}

TEST(Step, SingleElementUncontrolledConservesEnergy) {
  const auto s = testdata::uncontrolled_system();
  const auto sys = assemble(s, Mesh(1, 1.0));
  const auto op = build_stepper(sys, s, 0.05);
  DiscreteState z = DiscreteState::zero(2, 0, 0);
  z.U << 0.3, -0.1;
  z.V << 0.0, 0.2;
  const double e0 = discrete_norm_sq(z, sys, s);
  double worst = 0.0;
  for (int k = 0; k < 100000; ++k) {
    z = step(op, z);
    if (k % 1000 == 999) worst = std::max(worst, std::abs(discrete_norm_sq(z, sys, s) / e0 - 1.0));
  }
  EXPECT_LE(worst, 1e-12);
}

TEST(Step, UncontrolledBeamConservesEnergy) {
  const auto s = testdata::uncontrolled_system();
  const Mesh mesh(40, 1.0);
  const auto sys = assemble(s, mesh);
  const auto op = build_stepper(sys, s, 0.01);
  DiscreteState z = smooth_state(mesh, 0, 0);
  const double e0 = discrete_norm_sq(z, sys, s);
  for (int k = 0; k < 2000; ++k) {
    const DiscreteState n = step(op, z);
    EXPECT_NEAR(discrete_norm_sq(n, sys, s) / e0, discrete_norm_sq(z, sys, s) / e0, 1e-12);
    EXPECT_EQ(dissipation_decrement(z, n, s, 0.01), 0.0);
    z = n;
  }
  EXPECT_NEAR(discrete_norm_sq(z, sys, s) / e0, 1.0, 1e-11);
}

TEST(Step, ReferenceSystemEnergyIdentityAndMonotonicity) {
  const auto s = certified_reference_system();
  const Mesh mesh(30, 1.0);
  const auto sys = assemble(s, mesh);
  const double dt = 0.01;
  const auto op = build_stepper(sys, s, dt);
  DiscreteState z = smooth_state(mesh, 10, 10);
  const double e0 = discrete_norm_sq(z, sys, s);
  double e = e0;
  for (int k = 0; k < 1000; ++k) {
    const DiscreteState n = step(op, z);
    const double en = discrete_norm_sq(n, sys, s);
    EXPECT_LE(en, e * (1 + 1e-14));
    EXPECT_NEAR((e - en) / e0, dissipation_decrement(z, n, s, dt) / e0, 1e-10);
    z = n;
    e = en;
  }
  EXPECT_LT(e, e0);
}

TEST(Step, MonotoneForLargeSteps) {
  const auto s = certified_reference_system();
  const Mesh mesh(16, 1.0);
  const auto sys = assemble(s, mesh);
  for (double dt : {0.5, 5.0}) {
    const auto op = build_stepper(sys, s, dt);
    DiscreteState z = random_state(mesh, 10, 10, 3);
    double e = discrete_norm_sq(z, sys, s);
    for (int k = 0; k < 100; ++k) {
      z = step(op, z);
      const double en = discrete_norm_sq(z, sys, s);
      EXPECT_LE(en, e * (1 + 1e-13));
      e = en;
    }
  }
}

TEST(Step, IsLinear) {
  const auto s = testdata::reference_system();
  const Mesh mesh(12, 1.0);
  const auto op = build_stepper(assemble(s, mesh), s, 0.02);
  const auto a = random_state(mesh, 10, 10, 1);
  const auto b = random_state(mesh, 10, 10, 2);
  const double al = 1.7, be = -0.4;
  DiscreteState c = a;
  c.U = al * a.U + be * b.U;
  c.V = al * a.V + be * b.V;
  c.zeta1 = al * a.zeta1 + be * b.zeta1;
  c.zeta2 = al * a.zeta2 + be * b.zeta2;
  const auto sa = step(op, a), sb = step(op, b), sc = step(op, c);
  const Eigen::VectorXd lhs = op.pack(sc);
  const Eigen::VectorXd rhs = al * op.pack(sa) + be * op.pack(sb);
  EXPECT_LE((lhs - rhs).norm(), 1e-12 * rhs.norm());
}

TEST(Step, BackwardStepInvertsUncontrolledStep) {
  const auto s = testdata::uncontrolled_system();
  const Mesh mesh(12, 1.0);
  const auto sys = assemble(s, mesh);
  const auto fwd = build_stepper(sys, s, 0.01);
  const auto bwd = build_stepper(sys, s, 0.01, TimeDirection::backward);
  const auto z = random_state(mesh, 0, 0, 5);
  const auto back = step(bwd, step(fwd, z));
  EXPECT_LE((bwd.pack(back) - bwd.pack(z)).norm(), 1e-10 * bwd.pack(z).norm());
  EXPECT_EQ(back.step_index, 0);
  EXPECT_NEAR(back.t, 0.0, 1e-15);
}

TEST(Step, RejectsMismatchedState) {
  const auto s = testdata::reference_system();
  const auto op = build_stepper(assemble(s, Mesh(4, 1.0)), s, 0.01);
  EXPECT_THROW(step(op, DiscreteState::zero(6, 10, 10)), PreconditionViolation);
}

TEST(DiscreteNorm, ZeroAndControllerOnly) {
  auto s = testdata::reference_system();
  const auto cert = make_certificate(s.channel1.spr, Eigen::MatrixXd::Identity(10, 10), Eigen::VectorXd::Zero(10), 2.0, 0.02);
  s.channel1.certificate = cert;
  s.channel2.certificate = cert;
  const Mesh mesh(4, 1.0);
  const auto sys = assemble(s, mesh);
  DiscreteState z = DiscreteState::zero(8, 10, 10);
  EXPECT_EQ(discrete_norm_sq(z, sys, s), 0.0);
  z.zeta1(0) = 1.0;
  EXPECT_DOUBLE_EQ(discrete_norm_sq(z, sys, s), 0.5);
}

TEST(DiscreteNorm, MatchesContinuousEnergyForConstantCoefficients) {
  auto s = testdata::uncontrolled_system();
  const Mesh mesh(8, 1.0);
  const auto sys = assemble(s, mesh);
  // u = x^3 and v = x^2 are represented exactly.
  DiscreteState z = DiscreteState::zero(16, 0, 0);
  z.U = hermite_interpolant([](double x) { return x * x * x; }, [](double x) { return 3 * x * x; }, mesh);
  z.V = hermite_interpolant([](double x) { return x * x; }, [](double x) { return 2 * x; }, mesh);
  const double k = 0.01, M = 0.1, J = 0.1;
  const double exact = 0.5 * 12.0 + 0.5 * 0.2 + 0.5 * M * 1.0 + 0.5 * J * 4.0 + 0.5 * k * 9.0 + 0.5 * k * 1.0;
  EXPECT_NEAR(discrete_norm_sq(z, sys, s), exact, 1e-12 * exact);
}

TEST(DiscreteNorm, MissingCertificate) {
  const auto s = testdata::reference_system();
  const auto sys = assemble(s, Mesh(4, 1.0));
  EXPECT_THROW(discrete_norm_sq(DiscreteState::zero(8, 10, 10), sys, s), MissingCertificate);
  EXPECT_THROW(dissipation_decrement(DiscreteState::zero(8, 10, 10), DiscreteState::zero(8, 10, 10), s, 0.1),
               MissingCertificate);
}

TEST(Decrement, FrozenBoundaryGivesZero) {
  const auto s = certified_reference_system();
  const Mesh mesh(6, 1.0);
  DiscreteState a = random_state(mesh, 10, 10, 9);
  DiscreteState b = random_state(mesh, 10, 10, 10);
  b.U(10) = a.U(10);
  b.U(11) = a.U(11);
  a.zeta1.setZero();
  a.zeta2.setZero();
  b.zeta1.setZero();
  b.zeta2.setZero();
  EXPECT_EQ(dissipation_decrement(a, b, s, 0.1), 0.0);
}

TEST(TrajectoryWriter, WritesHeaderAndRows) {
  const auto path = (std::filesystem::temp_directory_path() / "ebbeam_traj_test.csv").string();
  {
    TrajectoryWriter w(path, 1);
    DiscreteState z = DiscreteState::zero(4, 0, 0);
    w.write(z, 1.5);
    const double p = 0.25, a = 0.25;
    z.step_index = 1;
    w.write(z, 1.25, &p, &a);
  }
  std::ifstream in(path);
  std::string header, r0, r1;
  std::getline(in, header);
  std::getline(in, r0);
  std::getline(in, r1);
  EXPECT_EQ(header, "step,t,energy,u_L,ux_L,decrement_predicted,decrement_actual");
  EXPECT_EQ(r0, "0,0,1.5,0,0,,");
  EXPECT_EQ(r1, "1,0,1.25,0,0,0.25,0.25");
  std::filesystem::remove(path);
}
