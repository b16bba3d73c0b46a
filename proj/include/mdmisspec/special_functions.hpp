#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <sstream>

#include "mdmisspec/error.hpp"

namespace mdm {

/// ln Gamma(x) for x > 0. Lanczos approximation (g = 7, 9 terms) with reflection below 1/2.
inline double log_gamma(double x) {
  if (!(x > 0.0) || !std::isfinite(x)) {
    std::ostringstream os;
    os << "log_gamma requires x > 0 (got " << x << ")";
    fail(ErrorCode::domain, os.str());
  }
  if (x == 1.0 || x == 2.0) return 0.0;
  if (x < 0.5) {
    // Gamma(x) Gamma(1-x) = pi / sin(pi x); both factors positive on (0, 1/2).
    return std::log(std::numbers::pi / std::sin(std::numbers::pi * x)) - log_gamma(1.0 - x);
  }
  static constexpr std::array<double, 9> kCoef = {
      0.99999999999980993,  676.5203681218851,     -1259.1392167224028,
      771.32342877765313,   -176.61502916214059,   12.507343278686905,
      -0.13857109526572012, 9.9843695780195716e-6, 1.5056327351493116e-7};
  constexpr double g = 7.0;
  const double z = x - 1.0;
  double series = kCoef[0];
  for (std::size_t i = 1; i < kCoef.size(); ++i) series += kCoef[i] / (z + static_cast<double>(i));
  const double t = z + g + 0.5;
  return 0.5 * std::log(2.0 * std::numbers::pi) + (z + 0.5) * std::log(t) - t + std::log(series);
}

namespace detail {

// Continued fraction for I_x(a, b) (modified Lentz), converges fast for x < (a+1)/(a+b+2).
inline double beta_continued_fraction(double x, double a, double b) {
  constexpr int kMaxIter = 100000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) return h;
  }
  std::ostringstream os;
  os << "incomplete beta continued fraction did not converge (x=" << x << ", a=" << a
     << ", b=" << b << ")";
  fail(ErrorCode::numerical, os.str());
}

}  // namespace detail

/// Regularized incomplete beta I_x(a, b), taking x and 1 - x separately so callers can
/// pass a complement without cancellation.
inline double reg_inc_beta(double x, double one_minus_x, double a, double b) {
  if (!(a > 0.0) || !(b > 0.0) || !std::isfinite(a) || !std::isfinite(b)) {
    std::ostringstream os;
    os << "reg_inc_beta requires a, b > 0 (got a=" << a << ", b=" << b << ")";
    fail(ErrorCode::domain, os.str());
  }
  if (!(x >= 0.0 && x <= 1.0)) {
    std::ostringstream os;
    os << "reg_inc_beta requires x in [0, 1] (got " << x << ")";
    fail(ErrorCode::domain, os.str());
  }
  if (x == 0.0) return 0.0;
  if (one_minus_x == 0.0) return 1.0;
  const double log_front = log_gamma(a + b) - log_gamma(a) - log_gamma(b) + a * std::log(x) +
                           b * std::log(one_minus_x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * detail::beta_continued_fraction(x, a, b) / a;
  }
  return 1.0 - front * detail::beta_continued_fraction(one_minus_x, b, a) / b;
}

inline double reg_inc_beta(double x, double a, double b) {
  return reg_inc_beta(x, 1.0 - x, a, b);
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Student t with `dof` degrees of freedom.
class StudentT {
 public:
  explicit StudentT(double dof) : dof_(dof) {
    if (!(dof > 0.0) || std::isnan(dof)) {
      std::ostringstream os;
      os << "Student t degrees of freedom must be positive (got " << dof << ")";
      fail(ErrorCode::domain, os.str());
    }
  }
  double dof() const { return dof_; }

 private:
  double dof_;
};

inline double t_cdf(const StudentT& t, double x) {
  if (std::isnan(x)) fail(ErrorCode::domain, "t_cdf of NaN");
  if (x == 0.0) return 0.5;
  if (std::isinf(x)) return x > 0 ? 1.0 : 0.0;
  const double nu = t.dof();
  const double x2 = x * x;
  // P(|T| > |x|) = I_{nu/(nu+x^2)}(nu/2, 1/2)
  const double tail = 0.5 * reg_inc_beta(nu / (nu + x2), x2 / (nu + x2), 0.5 * nu, 0.5);
  return x > 0 ? 1.0 - tail : tail;
}

/// Inverse of t_cdf: exponential bracketing followed by bisection.
inline double t_quantile(const StudentT& t, double q) {
  if (!(q > 0.0 && q < 1.0)) {
    std::ostringstream os;
    os << "t_quantile requires q in (0, 1) (got " << q << ")";
    fail(ErrorCode::domain, os.str());
  }
  if (q == 0.5) return 0.0;
  if (q < 0.5) return -t_quantile(t, 1.0 - q);
  double lo = 0.0;
  double hi = 1.0;
  while (t_cdf(t, hi) < q) {
    lo = hi;
    hi *= 2.0;
    if (!std::isfinite(hi)) fail(ErrorCode::numerical, "t_quantile bracketing overflowed");
  }
  while (hi - lo > 1e-12 * std::max(1.0, lo)) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (t_cdf(t, mid) < q) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace mdm
