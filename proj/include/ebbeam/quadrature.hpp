#pragma once

#include <cmath>
#include <numbers>
#include <utility>
#include <vector>

#include "ebbeam/errors.hpp"

namespace ebbeam {

struct QuadratureRule {
  std::vector<double> nodes;    // on [-1, 1]
  std::vector<double> weights;  // sum to 2
};

namespace detail {

// P_n(x) and P_n'(x) by the three-term recurrence.
inline std::pair<double, double> legendre(int n, double x) {
  double p0 = 1.0;
  double p1 = x;
  if (n == 0) return {1.0, 0.0};
  for (int k = 2; k <= n; ++k) {
    const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
    p0 = p1;
    p1 = p2;
  }
  return {p1, n * (x * p1 - p0) / (x * x - 1.0)};
}

}  // namespace detail

/// n-point Gauss-Legendre rule on [-1, 1], exact for degree <= 2n - 1.
inline QuadratureRule gauss_legendre(int n) {
  if (n < 1) throw PreconditionViolation("gauss_legendre: need at least one point");
  QuadratureRule rule;
  rule.nodes.assign(static_cast<std::size_t>(n), 0.0);
  rule.weights.assign(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < n / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    for (int iter = 0; iter < 100; ++iter) {
      const auto [p, dp] = detail::legendre(n, x);
      const double dx = p / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    const double dp = detail::legendre(n, x).second;
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[static_cast<std::size_t>(i)] = -x;
    rule.nodes[static_cast<std::size_t>(n - 1 - i)] = x;
    rule.weights[static_cast<std::size_t>(i)] = w;
    rule.weights[static_cast<std::size_t>(n - 1 - i)] = w;
  }
  if (n % 2 == 1) {
    // Middle node x = 0: P_n'(0) = n P_{n-1}(0).
    const double dp = n * detail::legendre(n - 1, 0.0).first;
    rule.weights[static_cast<std::size_t>(n / 2)] = 2.0 / (dp * dp);
  }
  return rule;
}

/// Applies a rule on [a, b].
template <class F>
double integrate(const QuadratureRule& rule, F&& f, double a, double b) {
  const double half = 0.5 * (b - a);
  const double mid = 0.5 * (a + b);
  double acc = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i)
    acc += rule.weights[i] * f(mid + half * rule.nodes[i]);
  return half * acc;
}

namespace detail {

template <class F>
double adaptive_step(const QuadratureRule& lo, const QuadratureRule& hi, F& f, double a, double b,
                     double coarse, double tol, int depth) {
  const double fine = integrate(hi, f, a, b);
  if (std::abs(fine - coarse) <= tol || depth <= 0) return fine;
  const double m = 0.5 * (a + b);
  const double left = integrate(lo, f, a, m);
  const double right = integrate(lo, f, m, b);
  return adaptive_step(lo, hi, f, a, m, left, 0.5 * tol, depth - 1) +
         adaptive_step(lo, hi, f, m, b, right, 0.5 * tol, depth - 1);
}

}  // namespace detail

/// Adaptive Gauss-Legendre quadrature: compares 10- and 20-point rules and
/// bisects until they agree to `tol` (absolute).
template <class F>
double integrate_adaptive(F&& f, double a, double b, double tol = 1e-13, int max_depth = 30) {
  static const QuadratureRule lo = gauss_legendre(10);
  static const QuadratureRule hi = gauss_legendre(20);
  if (a == b) return 0.0;
  const double coarse = integrate(lo, f, a, b);
  return detail::adaptive_step(lo, hi, f, a, b, coarse, tol, max_depth);
}

}  // namespace ebbeam
