#pragma once

#include <cmath>
#include <optional>
#include <sstream>
#include <utility>
#include <vector>

#include "mdmisspec/core_model.hpp"
#include "mdmisspec/error.hpp"
#include "mdmisspec/linalg.hpp"
#include "mdmisspec/rng.hpp"
#include "mdmisspec/special_functions.hpp"

namespace mdm {

/// Inference target v'theta at confidence level 1 - beta.
struct InferenceConfig {
  Vector v;
  double level = 0.95;

  void validate(Eigen::Index p) const {
    if (v.size() != p) {
      std::ostringstream os;
      os << "v has length " << v.size() << " but p = " << p;
      fail(ErrorCode::input, os.str());
    }
    if (v.isZero(0.0)) fail(ErrorCode::input, "v must be nonzero");
    if (!(level > 0.0 && level < 1.0)) fail(ErrorCode::input, "level must lie in (0, 1)");
  }
};

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
  bool empty = false;
  bool singleton = false;

  static Interval none() { return {0.0, 0.0, true, false}; }
  static Interval point(double x) { return {x, x, false, true}; }
  static Interval closed(double lo, double hi) { return {lo, hi, false, lo == hi}; }

  bool contains(double x) const { return !empty && lower <= x && x <= upper; }
  double half_width() const { return empty ? 0.0 : 0.5 * (upper - lower); }
};

/// t*_{k-p, 1-beta/2}
inline double critical_value(Eigen::Index dof, double level) {
  return t_quantile(StudentT(static_cast<double>(dof)), 0.5 + 0.5 * level);
}

namespace detail {

inline void require_over_identified(const ModelInstance& model) {
  if (!model.over_identified()) {
    fail(ErrorCode::just_identified,
         "k-p=0: the CI is undefined; the just-identified model corresponds to assuming eta=0");
  }
}

}  // namespace detail

/// v'theta_W ± sqrt(J/(k-p)) sigma_v t*_{k-p,1-beta/2}; a singleton when J = 0.
inline Interval confidence_interval(const ModelInstance& model, const InferenceConfig& cfg) {
  cfg.validate(model.p());
  detail::require_over_identified(model);
  const PseudoTrueResult pt = pseudo_true(model);
  const double center = cfg.v.dot(pt.theta_w);
  if (pt.j_stat == 0.0) return Interval::point(center);
  const Eigen::Index dof = model.k() - model.p();
  const double half = std::sqrt(pt.j_stat / static_cast<double>(dof)) * sigma_v(model, cfg.v) *
                      critical_value(dof, cfg.level);
  return Interval::closed(center - half, center + half);
}

/// (v'theta_W - v'theta) / sqrt(J/(k-p) sigma_v^2); |stat| <= t* iff v'theta is in the CI.
inline double pivotal_t_stat(const ModelInstance& model, const Vector& theta_true,
                             const InferenceConfig& cfg) {
  cfg.validate(model.p());
  detail::require_over_identified(model);
  if (theta_true.size() != model.p()) fail(ErrorCode::input, "theta has wrong length");
  const PseudoTrueResult pt = pseudo_true(model);
  if (!(pt.j_stat > 0.0)) fail(ErrorCode::degenerate_limit, "pivotal t statistic needs J > 0");
  const double dof = static_cast<double>(model.k() - model.p());
  const double sv = sigma_v(model, cfg.v);
  return cfg.v.dot(pt.theta_w - theta_true) / std::sqrt(pt.j_stat / dof * sv * sv);
}

/// Band around d^2 = J inside which the identified set is reported as {theta_W}.
inline double singleton_tolerance(double j_stat) { return 1e-12 * (1.0 + j_stat); }

/// Projection of {theta : Q(theta) <= d^2} onto v'theta: v'theta_W ± sigma_v sqrt(d^2 - J).
inline Interval identified_set_projection(const ModelInstance& model, const InferenceConfig& cfg,
                                          double d) {
  if (!(d >= 0.0)) fail(ErrorCode::input, "norm bound d must be nonnegative");
  if (cfg.v.size() != model.p() || cfg.v.isZero(0.0)) fail(ErrorCode::input, "v must be a nonzero p-vector");
  const PseudoTrueResult pt = pseudo_true(model);
  const double gap = d * d - pt.j_stat;
  const double center = cfg.v.dot(pt.theta_w);
  if (std::fabs(gap) <= singleton_tolerance(pt.j_stat)) return Interval::point(center);
  if (gap < 0.0) return Interval::none();
  const double half = sigma_v(model, cfg.v) * std::sqrt(gap);
  return Interval::closed(center - half, center + half);
}

inline bool identified_set_membership(const ModelInstance& model, const Vector& theta, double d) {
  if (!(d >= 0.0)) fail(ErrorCode::input, "norm bound d must be nonnegative");
  return objective(model, theta) <= d * d + 1e-12 * (1.0 + d * d);
}

/// The population CI applied to sample moments (Yn, Xn, Wn).
inline Interval finite_sample_ci(const Vector& yn, const Matrix& xn, const Matrix& wn,
                                 const InferenceConfig& cfg) {
  return confidence_interval(ModelInstance(yn, xn, wn), cfg);
}

/// Gaussian limit experiment under local misspecification: Y_L = -Gamma_L theta + mu + eps,
/// eps ~ N(0, Sigma).
struct LocalExperiment {
  Matrix Gamma_L;
  Matrix Sigma;
  Vector mu;
  Vector K;  // the 1 x p derivative, stored as a p-vector
  Matrix W_L;

  void validate() const {
    const Eigen::Index k = Gamma_L.rows();
    const Eigen::Index p = Gamma_L.cols();
    if (Sigma.rows() != k || W_L.rows() != k || mu.size() != k || K.size() != p) {
      fail(ErrorCode::input, "local experiment dimensions are inconsistent");
    }
    symmetric_root(Sigma, "Sigma");
    symmetric_root(W_L, "W_L");
    check_full_column_rank(Gamma_L, "Gamma_L");
  }

  Matrix X_L() const { return -Gamma_L; }

  ModelInstance model(const Vector& y_l) const { return ModelInstance(y_l, X_L(), W_L); }

  /// One draw of Y_L at the given theta with the experiment's fixed mu.
  Vector simulate(const Vector& theta, Engine& eng) const {
    const Vector eps = psd_root(Sigma) * standard_normal_vector(eng, Sigma.rows());
    return X_L() * theta + mu + eps;
  }
};

/// K theta_{L,W_L} ± sqrt(J_L/(k-p)) sigma_{K,L} t*, built from (Y_L, -Gamma_L, W_L).
inline Interval local_ci(const LocalExperiment& exp, const Vector& y_l, double level) {
  exp.validate();
  return confidence_interval(exp.model(y_l), InferenceConfig{exp.K, level});
}

struct IdentifiedSetEntry {
  double d = 0.0;
  Interval interval;
};

struct InferenceReport {
  Vector theta_w;
  double j_stat = 0.0;
  double sigma_v = 0.0;
  std::optional<Interval> ci;  // absent for just-identified models analyzed without a level
  std::vector<IdentifiedSetEntry> identified_sets;
};

inline InferenceReport make_inference_report(const ModelInstance& model, const InferenceConfig& cfg,
                                             const std::vector<double>& d_list, bool with_ci = true) {
  cfg.validate(model.p());
  const PseudoTrueResult pt = pseudo_true(model);
  InferenceReport report;
  report.theta_w = pt.theta_w;
  report.j_stat = pt.j_stat;
  report.sigma_v = sigma_v(model, cfg.v);
  if (with_ci) report.ci = confidence_interval(model, cfg);
  for (double d : d_list) report.identified_sets.push_back({d, identified_set_projection(model, cfg, d)});
  return report;
}

}  // namespace mdm
