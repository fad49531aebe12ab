#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ebbeam/errors.hpp"

namespace ebbeam {

/// Polynomial in ascending powers of its argument.
class Polynomial {
 public:
  Polynomial() = default;
  explicit Polynomial(std::vector<double> coefficients)
      : coefficients_(std::move(coefficients)) {
    trim();
  }

  static Polynomial constant(double value) { return Polynomial({value}); }

  const std::vector<double>& coefficients() const noexcept { return coefficients_; }

  /// Degree of the polynomial; the zero polynomial has degree 0.
  int degree() const noexcept {
    return coefficients_.empty() ? 0 : static_cast<int>(coefficients_.size()) - 1;
  }

  double operator()(double s) const { return derivative(s, 0); }

  /// k-th derivative at s (Horner on the differentiated coefficients).
  double derivative(double s, int order) const {
    if (order < 0) throw PreconditionViolation("Polynomial: negative derivative order");
    const int n = static_cast<int>(coefficients_.size());
    if (order >= n) return 0.0;
    double acc = 0.0;
    for (int j = n - 1; j >= order; --j) {
      double factor = 1.0;
      for (int m = 0; m < order; ++m) factor *= static_cast<double>(j - m);
      acc = acc * s + factor * coefficients_[static_cast<std::size_t>(j)];
    }
    return acc;
  }

  /// Coefficient of s^k (zero past the degree).
  double coefficient(int k) const noexcept {
    return k < static_cast<int>(coefficients_.size()) && k >= 0
               ? coefficients_[static_cast<std::size_t>(k)]
               : 0.0;
  }

 private:
  void trim() {
    while (coefficients_.size() > 1 && coefficients_.back() == 0.0) coefficients_.pop_back();
  }

  std::vector<double> coefficients_;
};

/// Piecewise-polynomial coefficient field on [x_0, x_m].
///
/// Piece i lives on [x_i, x_{i+1}] and is stored in the local variable
/// s = x - x_i. Derivatives of every order are exact on each piece; at an
/// interior breakpoint the right-hand piece is used.
class CoefficientField {
 public:
  CoefficientField() : CoefficientField(constant(1.0, 0.0, 1.0)) {}

  CoefficientField(std::vector<double> breakpoints, std::vector<Polynomial> pieces)
      : breakpoints_(std::move(breakpoints)), pieces_(std::move(pieces)) {
    if (breakpoints_.size() < 2)
      throw PreconditionViolation("CoefficientField: need at least two breakpoints");
    if (pieces_.size() + 1 != breakpoints_.size())
      throw PreconditionViolation("CoefficientField: need one polynomial per interval");
    for (std::size_t i = 0; i + 1 < breakpoints_.size(); ++i) {
      if (!(breakpoints_[i + 1] > breakpoints_[i]))
        throw PreconditionViolation("CoefficientField: breakpoints must be strictly increasing");
    }
  }

  static CoefficientField constant(double value, double a, double b) {
    return CoefficientField({a, b}, {Polynomial::constant(value)});
  }

  /// A single polynomial given in global coordinates on [a, b].
  static CoefficientField polynomial(const Polynomial& p, double a, double b) {
    return CoefficientField({a, b}, {shift(p, a)});
  }

  double begin() const noexcept { return breakpoints_.front(); }
  double end() const noexcept { return breakpoints_.back(); }
  const std::vector<double>& breakpoints() const noexcept { return breakpoints_; }
  const std::vector<Polynomial>& pieces() const noexcept { return pieces_; }

  int degree() const noexcept {
    int d = 0;
    for (const auto& p : pieces_) d = std::max(d, p.degree());
    return d;
  }

  bool is_constant() const noexcept {
    for (const auto& p : pieces_) {
      if (p.degree() != 0 || p.coefficient(0) != pieces_.front().coefficient(0)) return false;
    }
    return true;
  }

  std::size_t piece_index(double x) const {
    const double slack = 1e-12 * std::max(1.0, std::abs(end() - begin()));
    if (x < begin() - slack || x > end() + slack) {
      std::ostringstream os;
      os << "CoefficientField: x = " << x << " outside [" << begin() << ", " << end() << "]";
      throw OutOfRange(os.str());
    }
    auto it = std::upper_bound(breakpoints_.begin(), breakpoints_.end(), x);
    std::size_t idx = it == breakpoints_.begin() ? 0 : static_cast<std::size_t>(it - breakpoints_.begin()) - 1;
    return std::min(idx, pieces_.size() - 1);
  }

  double operator()(double x) const { return derivative(x, 0); }

  double derivative(double x, int order) const {
    const std::size_t i = piece_index(x);
    return pieces_[i].derivative(x - breakpoints_[i], order);
  }

  /// Evaluates piece i (possibly outside its own interval, for one-sided limits).
  double piece_derivative(std::size_t i, double x, int order) const {
    return pieces_.at(i).derivative(x - breakpoints_[i], order);
  }

 private:
  // p(x) re-expanded in s = x - a.
  static Polynomial shift(const Polynomial& p, double a) {
    const int n = p.degree() + 1;
    std::vector<double> out(static_cast<std::size_t>(n), 0.0);
    for (int k = 0; k < n; ++k) {
      double fact = 1.0;
      for (int m = 2; m <= k; ++m) fact *= m;
      out[static_cast<std::size_t>(k)] = p.derivative(a, k) / fact;
    }
    return Polynomial(std::move(out));
  }

  std::vector<double> breakpoints_;
  std::vector<Polynomial> pieces_;
};

}  // namespace ebbeam
