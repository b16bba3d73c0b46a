#pragma once

#include <charconv>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mdmisspec/error.hpp"
#include "mdmisspec/linalg.hpp"
#include "mdmisspec/quadrature.hpp"
#include "mdmisspec/rng.hpp"
#include "mdmisspec/special_functions.hpp"

namespace mdm {

enum class RadialKind { normal, student_t, power_law };

/// Radial profile u -> f(u) of a rotation-invariant prior pi(eta) ∝ f(eta' W eta / c).
///   normal:     f(u) = exp(-u/2)
///   student_t:  f(u) = (1 + u/dof)^{-(dof + k)/2}
///   power_law:  f(u) = u^{-alpha}   (improper: density only)
class RadialFamily {
 public:
  static RadialFamily normal() { return RadialFamily(RadialKind::normal, 0.0); }

  static RadialFamily student_t(double dof) {
    if (!(dof > 0.0) || !std::isfinite(dof)) {
      fail(ErrorCode::input, "t radial family needs dof > 0");
    }
    return RadialFamily(RadialKind::student_t, dof);
  }

  static RadialFamily power_law(double alpha) {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) {
      fail(ErrorCode::input, "power-law radial family needs alpha > 0");
    }
    return RadialFamily(RadialKind::power_law, alpha);
  }

  /// Parses "normal", "t:<dof>" or "powerlaw:<alpha>".
  static RadialFamily parse(std::string_view text) {
    if (text == "normal") return normal();
    const auto colon = text.find(':');
    if (colon != std::string_view::npos) {
      const std::string_view head = text.substr(0, colon);
      const std::string_view tail = text.substr(colon + 1);
      double value = 0.0;
      const auto [ptr, ec] = std::from_chars(tail.data(), tail.data() + tail.size(), value);
      if (ec == std::errc() && ptr == tail.data() + tail.size()) {
        if (head == "t") return student_t(value);
        if (head == "powerlaw") return power_law(value);
      }
    }
    fail(ErrorCode::input, "unrecognized radial family '" + std::string(text) +
                               "' (expected normal, t:<dof> or powerlaw:<alpha>)");
  }

  RadialKind kind() const { return kind_; }
  /// dof for student_t, alpha for power_law, 0 for normal.
  double parameter() const { return parameter_; }
  bool proper() const { return kind_ != RadialKind::power_law; }

  std::string to_string() const {
    std::ostringstream os;
    os.precision(17);
    switch (kind_) {
      case RadialKind::normal: return "normal";
      case RadialKind::student_t: os << "t:" << parameter_; break;
      case RadialKind::power_law: os << "powerlaw:" << parameter_; break;
    }
    return os.str();
  }

  /// log f(u) for ambient dimension k.
  double log_profile(double u, Eigen::Index k) const {
    switch (kind_) {
      case RadialKind::normal: return -0.5 * u;
      case RadialKind::student_t:
        return -0.5 * (parameter_ + static_cast<double>(k)) * std::log1p(u / parameter_);
      case RadialKind::power_law: return -parameter_ * std::log(u);
    }
    return std::numeric_limits<double>::quiet_NaN();
  }

  /// log of the integral of f(u'u) over R^k (proper families only).
  double log_unit_normalizer(Eigen::Index k) const {
    const double kd = static_cast<double>(k);
    switch (kind_) {
      case RadialKind::normal: return 0.5 * kd * std::log(2.0 * std::numbers::pi);
      case RadialKind::student_t: {
        const double nu = parameter_;
        return 0.5 * kd * std::log(nu * std::numbers::pi) + log_gamma(0.5 * nu) -
               log_gamma(0.5 * (nu + kd));
      }
      case RadialKind::power_law: break;
    }
    fail(ErrorCode::improper_prior, "power-law radial family has no normalizer");
  }

  /// Variance multiplier of the family: Cov(eta) = c * W^{-1} * multiplier.
  double variance_multiplier() const {
    switch (kind_) {
      case RadialKind::normal: return 1.0;
      case RadialKind::student_t:
        if (parameter_ > 2.0) return parameter_ / (parameter_ - 2.0);
        return std::numeric_limits<double>::infinity();
      case RadialKind::power_law: break;
    }
    return std::numeric_limits<double>::infinity();
  }

 private:
  RadialFamily(RadialKind kind, double parameter) : kind_(kind), parameter_(parameter) {}

  RadialKind kind_;
  double parameter_;
};

struct DensityValue {
  double value = 0.0;
  bool normalized = true;
};

enum class Normalization { required, allow_unnormalized };

/// Rotation-invariant prior with scale c and weighting matrix W.
class ScaledPrior {
 public:
  ScaledPrior(RadialFamily family, double c, const Matrix& w)
      : family_(family), c_(c), w_root_(symmetric_root(w, "prior W")), w_(checked_spd(w, "prior W")) {
    if (!(c > 0.0) || !std::isfinite(c)) {
      std::ostringstream os;
      os << "prior scale c must be positive (got " << c << ")";
      fail(ErrorCode::input, os.str());
    }
  }

  const RadialFamily& family() const { return family_; }
  double c() const { return c_; }
  const Matrix& W() const { return w_; }
  const Matrix& W_root() const { return w_root_.root; }
  const Matrix& W_inverse_root() const { return w_root_.inverse_root; }
  Eigen::Index k() const { return w_.rows(); }
  bool proper() const { return family_.proper(); }

  double quad_form(const Vector& eta) const {
    check_length(eta);
    return eta.dot(w_ * eta);
  }

  /// log f(eta' W eta / c)
  double log_unnormalized(const Vector& eta) const {
    return family_.log_profile(quad_form(eta) / c_, k());
  }

  /// log Z_c = (k/2) log c - (1/2) log|W| + log ∫ f(u'u) du
  double log_normalizer() const {
    if (!proper()) fail(ErrorCode::improper_prior, "power-law prior is improper");
    return 0.5 * static_cast<double>(k()) * std::log(c_) - 0.5 * w_root_.log_det +
           family_.log_unit_normalizer(k());
  }

  double log_density(const Vector& eta) const { return log_unnormalized(eta) - log_normalizer(); }

 private:
  void check_length(const Vector& eta) const {
    if (eta.size() != k()) {
      std::ostringstream os;
      os << "eta has length " << eta.size() << " but the prior has k = " << k();
      fail(ErrorCode::input, os.str());
    }
  }

  RadialFamily family_;
  double c_;
  SymmetricRoot w_root_;
  Matrix w_;
};

inline DensityValue density(const ScaledPrior& prior, const Vector& eta,
                            Normalization request = Normalization::required) {
  if (!prior.proper()) {
    if (request == Normalization::required) {
      fail(ErrorCode::improper_prior,
           "normalized density requested from the improper power-law family");
    }
    return {std::exp(prior.log_unnormalized(eta)), false};
  }
  return {std::exp(prior.log_density(eta)), true};
}

/// One draw of eta: sqrt(c) W^{-1/2} z, divided by sqrt(w/dof) with w ~ chi2(dof) for t.
inline Vector draw_eta(const ScaledPrior& prior, Engine& eng) {
  if (!prior.proper()) fail(ErrorCode::improper_prior, "cannot sample the power-law family");
  Vector z = standard_normal_vector(eng, prior.k());
  if (prior.family().kind() == RadialKind::student_t) {
    const double nu = prior.family().parameter();
    std::chi_squared_distribution<double> chi2(nu);
    z /= std::sqrt(chi2(eng) / nu);
  }
  return std::sqrt(prior.c()) * (prior.W_inverse_root() * z);
}

inline std::vector<Vector> sample_eta(const ScaledPrior& prior, std::uint64_t seed, std::size_t n) {
  if (n == 0) fail(ErrorCode::input, "sample_eta needs n > 0");
  if (!prior.proper()) fail(ErrorCode::improper_prior, "cannot sample the power-law family");
  Engine eng(seed);
  std::vector<Vector> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(draw_eta(prior, eng));
  return out;
}

namespace detail {

// Unit-scale radial log density up to a constant: g(s) = (k-1) log s + log f(s^2).
inline double radial_log_kernel(const RadialFamily& family, Eigen::Index k, double s) {
  return static_cast<double>(k - 1) * std::log(s) + family.log_profile(s * s, k);
}

inline double radial_log_kernel_slope(const RadialFamily& family, Eigen::Index k, double s) {
  const double kd = static_cast<double>(k);
  switch (family.kind()) {
    case RadialKind::normal: return (kd - 1.0) / s - s;
    case RadialKind::student_t: {
      const double nu = family.parameter();
      return (kd - 1.0) / s - (nu + kd) * s / (nu + s * s);
    }
    case RadialKind::power_law: return (kd - 1.0 - 2.0 * family.parameter()) / s;
  }
  return 0.0;
}

// g(s + w) - g(s) without the cancellation of two large logs far in the tail.
inline double radial_log_kernel_increment(const RadialFamily& family, Eigen::Index k, double s, double w) {
  const double kd = static_cast<double>(k);
  const double du = w * (2.0 * s + w);
  const double radial = (kd - 1.0) * std::log1p(w / s);
  switch (family.kind()) {
    case RadialKind::normal: return radial - 0.5 * du;
    case RadialKind::student_t: {
      const double nu = family.parameter();
      return radial - 0.5 * (nu + kd) * std::log1p(du / (nu + s * s));
    }
    case RadialKind::power_law: return radial - family.parameter() * std::log1p(du / (s * s));
  }
  return 0.0;
}

// log ∫_s^∞ exp(g(r)) dr for s >= 1, via r = s + h x/(1-x) with h the local decay length.
inline double log_radial_tail_from(const RadialFamily& family, Eigen::Index k, double s) {
  const double g0 = radial_log_kernel(family, k, s);
  const double h = 1.0 / std::max(std::fabs(radial_log_kernel_slope(family, k, s)), 1.0 / s);
  auto integrand = [&](double x) {
    if (x >= 1.0) return 0.0;
    const double one_minus = 1.0 - x;
    const double w = h * x / one_minus;
    const double v = std::exp(radial_log_kernel_increment(family, k, s, w)) * h / (one_minus * one_minus);
    return std::isfinite(v) ? v : 0.0;
  };
  const double mass = integrate_or_throw(integrand, 0.0, 1.0, 1e-300, 1e-12, "radial tail");
  return g0 + std::log(mass);
}

}  // namespace detail

/// log of the unnormalized unit-scale radial survival ∫_s^∞ r^{k-1} f(r^2) dr.
inline double log_radial_survival(const RadialFamily& family, Eigen::Index k, double s) {
  if (!family.proper()) fail(ErrorCode::improper_prior, "power-law radial mass diverges");
  if (k < 1) fail(ErrorCode::input, "radial survival needs k >= 1");
  if (!(s >= 0.0)) fail(ErrorCode::input, "radial survival needs s >= 0");
  if (s >= 1.0) return detail::log_radial_tail_from(family, k, s);
  auto kernel = [&](double r) {
    if (r <= 0.0) return k == 1 ? 1.0 : 0.0;
    return std::exp(detail::radial_log_kernel(family, k, r));
  };
  const double inner = integrate_or_throw(kernel, s, 1.0, 1e-300, 1e-12, "radial core");
  const double outer = std::exp(detail::log_radial_tail_from(family, k, 1.0));
  return std::log(inner + outer);
}

/// P(||eta||_W <= r) under the prior.
inline double radial_cdf(const ScaledPrior& prior, double r) {
  if (r <= 0.0) return 0.0;
  const double s = r / std::sqrt(prior.c());
  const double log_total = log_radial_survival(prior.family(), prior.k(), 0.0);
  return -std::expm1(log_radial_survival(prior.family(), prior.k(), s) - log_total);
}

/// Pr{ ||eta||_W >= a tau | ||eta||_W >= tau } from the radial law r ∝ r^{k-1} f(r^2/c).
inline double tail_ratio(const ScaledPrior& prior, double a, double tau) {
  if (!(a > 1.0)) fail(ErrorCode::input, "tail_ratio needs a > 1");
  if (!(tau > 0.0)) fail(ErrorCode::input, "tail_ratio needs tau > 0");
  if (!prior.proper()) fail(ErrorCode::improper_prior, "tail_ratio needs a proper radial family");
  const double root_c = std::sqrt(prior.c());
  const double lo = log_radial_survival(prior.family(), prior.k(), tau / root_c);
  const double hi = log_radial_survival(prior.family(), prior.k(), a * tau / root_c);
  return std::clamp(std::exp(hi - lo), 0.0, 1.0);
}

using LogDensityFn = std::function<double(const Vector&)>;

/// (1 - phi) * base + phi * contaminant, with the contaminant given as a log density.
class ContaminatedPrior {
 public:
  ContaminatedPrior(ScaledPrior base, LogDensityFn contaminant_log_density, double phi)
      : base_(std::move(base)), contaminant_(std::move(contaminant_log_density)), phi_(phi) {
    if (!(phi > 0.0 && phi < 1.0)) {
      std::ostringstream os;
      os << "contamination weight phi must lie in (0, 1) (got " << phi << ")";
      fail(ErrorCode::input, os.str());
    }
    if (!base_.proper()) fail(ErrorCode::improper_prior, "contaminated prior needs a proper base");
    if (!contaminant_) fail(ErrorCode::input, "contaminant density is empty");
  }

  /// Contaminant drawn from another proper rotation-invariant prior.
  static ContaminatedPrior with_scaled_contaminant(ScaledPrior base, ScaledPrior contaminant,
                                                   double phi) {
    if (!contaminant.proper()) fail(ErrorCode::improper_prior, "contaminant must be proper");
    if (contaminant.k() != base.k()) fail(ErrorCode::input, "contaminant dimension mismatch");
    LogDensityFn fn = [c = std::move(contaminant)](const Vector& eta) { return c.log_density(eta); };
    return ContaminatedPrior(std::move(base), std::move(fn), phi);
  }

  const ScaledPrior& base() const { return base_; }
  double phi() const { return phi_; }
  Eigen::Index k() const { return base_.k(); }
  double contaminant_log_density(const Vector& eta) const { return contaminant_(eta); }

  double log_density(const Vector& eta) const {
    const double a = std::log1p(-phi_) + base_.log_density(eta);
    const double b = std::log(phi_) + contaminant_(eta);
    const double m = std::max(a, b);
    if (m == -std::numeric_limits<double>::infinity()) return m;
    return m + std::log(std::exp(a - m) + std::exp(b - m));
  }

 private:
  ScaledPrior base_;
  LogDensityFn contaminant_;
  double phi_;
};

inline double mixture_density(const ContaminatedPrior& prior, const Vector& eta) {
  return std::exp(prior.log_density(eta));
}

}  // namespace mdm
