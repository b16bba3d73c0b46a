#pragma once

#include <array>
#include <cmath>
#include <queue>
#include <sstream>
#include <vector>

#include "mdmisspec/error.hpp"

namespace mdm {

struct QuadratureResult {
  double value = 0.0;
  double abs_error = 0.0;
  int intervals = 0;
  bool converged = false;
};

namespace detail {

// 7-point Gauss / 15-point Kronrod nodes on [-1, 1] (QUADPACK qk15).
inline constexpr std::array<double, 8> kKronrodNodes = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kKronrodWeights = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> kGaussWeights = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Segment {
  double a, b, value, error;
  bool operator<(const Segment& other) const { return error < other.error; }
};

template <class F>
Segment gauss_kronrod_15(F& f, double a, double b) {
  const double center = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  const double fc = f(center);
  double kronrod = fc * kKronrodWeights[7];
  double gauss = fc * kGaussWeights[3];
  for (int j = 0; j < 7; ++j) {
    const double dx = half * kKronrodNodes[j];
    const double sum = f(center - dx) + f(center + dx);
    kronrod += kKronrodWeights[j] * sum;
    if (j % 2 == 1) gauss += kGaussWeights[j / 2] * sum;
  }
  return {a, b, kronrod * half, std::fabs((kronrod - gauss) * half)};
}

}  // namespace detail

/// Globally adaptive Gauss-Kronrod integration of f over [a, b]: the segment with the
/// largest error estimate is bisected until the total error meets the tolerance.
template <class F>
QuadratureResult integrate(F&& f, double a, double b, double abs_tol, double rel_tol,
                           int max_intervals = 4000) {
  QuadratureResult out;
  if (a == b) {
    out.converged = true;
    return out;
  }
  std::priority_queue<detail::Segment> heap;
  const detail::Segment first = detail::gauss_kronrod_15(f, a, b);
  heap.push(first);
  double total = first.value;
  double error = first.error;
  int count = 1;
  while (error > std::max(abs_tol, rel_tol * std::fabs(total)) && count < max_intervals) {
    const detail::Segment worst = heap.top();
    const double mid = 0.5 * (worst.a + worst.b);
    if (!(mid > worst.a && mid < worst.b)) break;
    heap.pop();
    const detail::Segment left = detail::gauss_kronrod_15(f, worst.a, mid);
    const detail::Segment right = detail::gauss_kronrod_15(f, mid, worst.b);
    heap.push(left);
    heap.push(right);
    ++count;
    // Re-sum from the heap contents periodically to avoid drift in running totals.
    total += left.value + right.value - worst.value;
    error += left.error + right.error - worst.error;
    if (count % 64 == 0) {
      auto copy = heap;
      total = 0.0;
      error = 0.0;
      while (!copy.empty()) {
        total += copy.top().value;
        error += copy.top().error;
        copy.pop();
      }
    }
  }
  // Final summation in ascending-magnitude order for a deterministic result.
  std::vector<detail::Segment> segments;
  segments.reserve(heap.size());
  while (!heap.empty()) {
    segments.push_back(heap.top());
    heap.pop();
  }
  total = 0.0;
  error = 0.0;
  for (auto it = segments.rbegin(); it != segments.rend(); ++it) {
    total += it->value;
    error += it->error;
  }
  out.value = total;
  out.abs_error = error;
  out.intervals = count;
  out.converged = std::isfinite(total) && error <= std::max(abs_tol, rel_tol * std::fabs(total));
  return out;
}

/// As `integrate`, but non-convergence raises a numerical error carrying the diagnostics.
template <class F>
double integrate_or_throw(F&& f, double a, double b, double abs_tol, double rel_tol,
                          const char* what, int max_intervals = 4000) {
  const QuadratureResult r = integrate(f, a, b, abs_tol, rel_tol, max_intervals);
  if (!r.converged) {
    std::ostringstream os;
    os << what << ": quadrature did not converge on [" << a << ", " << b
       << "] (value=" << r.value << ", error estimate=" << r.abs_error
       << ", intervals=" << r.intervals << ")";
    fail(ErrorCode::numerical, os.str());
  }
  return r.value;
}

}  // namespace mdm
