#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "ebbeam/linalg.hpp"
#include "ebbeam/polynomial.hpp"
#include "ebbeam/quadrature.hpp"

using namespace ebbeam;

TEST(Polynomial, EvaluatesValueAndDerivatives) {
  const Polynomial p({1.0, -2.0, 0.0, 3.0});  // 1 - 2s + 3s^3
  EXPECT_DOUBLE_EQ(p(2.0), 1.0 - 4.0 + 24.0);
  EXPECT_DOUBLE_EQ(p.derivative(2.0, 1), -2.0 + 36.0);
  EXPECT_DOUBLE_EQ(p.derivative(2.0, 2), 36.0);
  EXPECT_DOUBLE_EQ(p.derivative(2.0, 3), 18.0);
  EXPECT_DOUBLE_EQ(p.derivative(2.0, 4), 0.0);
  EXPECT_EQ(p.degree(), 3);
}

TEST(Polynomial, TrimsTrailingZeros) {
  EXPECT_EQ(Polynomial({2.0, 0.0, 0.0}).degree(), 0);
  EXPECT_THROW(Polynomial({1.0}).derivative(0.0, -1), PreconditionViolation);
}

TEST(CoefficientField, GlobalPolynomialIsShiftedPerPiece) {
  const Polynomial p({1.0, 1.0, 1.0});  // 1 + x + x^2
  const auto f = CoefficientField::polynomial(p, 0.5, 2.0);
  for (double x : {0.5, 0.9, 1.7, 2.0}) {
    EXPECT_NEAR(f(x), p(x), 1e-14);
    EXPECT_NEAR(f.derivative(x, 1), p.derivative(x, 1), 1e-14);
  }
}

TEST(CoefficientField, PiecewiseLookupAndDomain) {
  const CoefficientField f({0.0, 1.0, 2.0}, {Polynomial({1.0}), Polynomial({5.0, 2.0})});
  EXPECT_DOUBLE_EQ(f(0.5), 1.0);
  EXPECT_DOUBLE_EQ(f(1.5), 6.0);
  EXPECT_DOUBLE_EQ(f(1.0), 5.0);  // right-hand piece at the breakpoint
  EXPECT_DOUBLE_EQ(f.derivative(1.5, 4), 0.0);
  EXPECT_THROW(f(2.5), OutOfRange);
  EXPECT_FALSE(f.is_constant());
  EXPECT_TRUE(CoefficientField::constant(3.0, 0.0, 1.0).is_constant());
  EXPECT_THROW(CoefficientField({0.0, 0.0}, {Polynomial({1.0})}), PreconditionViolation);
}

TEST(Quadrature, GaussLegendreIsExactToDegree2nMinus1) {
  for (int n = 1; n <= 12; ++n) {
    const auto rule = gauss_legendre(n);
    for (int deg = 0; deg <= 2 * n - 1; ++deg) {
      const double exact = (std::pow(2.0, deg + 1) - std::pow(-1.0, deg + 1)) / (deg + 1);  // on [-1, 2]
      const double got = integrate(rule, [&](double x) { return std::pow(x, deg); }, -1.0, 2.0);
      EXPECT_NEAR(got, exact, 1e-12 * std::max(1.0, std::abs(exact))) << "n=" << n << " deg=" << deg;
    }
  }
}

TEST(Quadrature, AdaptiveMatchesClosedForm) {
  EXPECT_NEAR(integrate_adaptive([](double x) { return std::sin(x); }, 0.0, std::numbers::pi), 2.0, 1e-13);
  EXPECT_NEAR(integrate_adaptive([](double x) { return std::sqrt(x); }, 0.0, 1.0, 1e-14), 2.0 / 3.0, 1e-12);
}

TEST(Linalg, LyapunovSolution) {
  Eigen::MatrixXd a(2, 2);
  a << -1.0, 2.0, 0.0, -3.0;
  const Eigen::MatrixXd q = Eigen::MatrixXd::Identity(2, 2);
  const Eigen::MatrixXd x = linalg::solve_lyapunov(a, q);
  EXPECT_LT((a.transpose() * x + x * a + q).norm(), 1e-14);
}

TEST(Linalg, RangeBasisRank) {
  Eigen::MatrixXd m(3, 3);
  m << 1, 2, 3, 2, 4, 6, 1, 1, 1;
  EXPECT_EQ(linalg::range_basis(m).rank, 2);
  EXPECT_EQ(linalg::range_basis(linalg::normalized_krylov(-Eigen::MatrixXd::Identity(4, 4), Eigen::VectorXd::Ones(4))).rank, 1);
}
