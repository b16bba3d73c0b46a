#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "mdmisspec/core_model.hpp"
#include "mdmisspec/error.hpp"
#include "mdmisspec/linalg.hpp"
#include "mdmisspec/radial_priors.hpp"
#include "mdmisspec/rng.hpp"
#include "mdmisspec/special_functions.hpp"

namespace mdm {

// ---------------------------------------------------------------------------
// Closed-form posteriors
// ---------------------------------------------------------------------------

enum class PosteriorKind { gaussian, student_t };

/// Gaussian (scale = covariance) or multivariate t (scale = scale matrix, dof > 0).
struct ClosedFormPosterior {
  PosteriorKind kind = PosteriorKind::gaussian;
  Vector center;
  Matrix scale;
  double dof = 0.0;

  Eigen::Index p() const { return center.size(); }

  double log_density(const Vector& theta) const {
    if (theta.size() != p()) fail(ErrorCode::input, "theta dimension mismatch");
    const Eigen::LLT<Matrix> llt(scale);
    const Vector diff = theta - center;
    const double maha = diff.dot(llt.solve(diff));
    const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    const double pd = static_cast<double>(p());
    if (kind == PosteriorKind::gaussian) {
      return -0.5 * (pd * std::log(2.0 * std::numbers::pi) + log_det + maha);
    }
    return log_gamma(0.5 * (dof + pd)) - log_gamma(0.5 * dof) -
           0.5 * pd * std::log(dof * std::numbers::pi) - 0.5 * log_det -
           0.5 * (dof + pd) * std::log1p(maha / dof);
  }

  double density(const Vector& theta) const { return std::exp(log_density(theta)); }
};

inline ClosedFormPosterior normal_posterior(const ModelInstance& model, double c) {
  if (!(c > 0.0)) fail(ErrorCode::input, "normal_posterior needs c > 0");
  const PseudoTrueResult pt = pseudo_true(model);
  const Matrix inv = model.hessian_llt().solve(Matrix::Identity(model.p(), model.p()));
  return {PosteriorKind::gaussian, pt.theta_w, c * inv, 0.0};
}

namespace detail {

inline ClosedFormPosterior t_kernel_posterior(const ModelInstance& model, double nu,
                                              const char* what) {
  const PseudoTrueResult pt = pseudo_true(model);
  if (!(pt.j_stat > 0.0)) {
    fail(ErrorCode::degenerate_limit,
         std::string(what) + " requires J > 0 (the model fits exactly, so the t kernel degenerates)");
  }
  const Matrix inv = model.hessian_llt().solve(Matrix::Identity(model.p(), model.p()));
  return {PosteriorKind::student_t, pt.theta_w, (pt.j_stat / nu) * inv, nu};
}

}  // namespace detail

/// c -> 0 limit under a t radial prior: t with dof + k - p degrees of freedom and
/// scale J (nu X'WX)^{-1}.
inline ClosedFormPosterior t_limit_posterior(const ModelInstance& model, double dof_tilde) {
  if (!(dof_tilde > 0.0)) fail(ErrorCode::input, "t_limit_posterior needs dof > 0");
  const double nu = dof_tilde + static_cast<double>(model.k() - model.p());
  return detail::t_kernel_posterior(model, nu, "t_limit_posterior");
}

/// Posterior under the power-law radial prior, for every c: t with 2 alpha - p degrees of
/// freedom and scale J (nu X'WX)^{-1}.
inline ClosedFormPosterior powerlaw_posterior(const ModelInstance& model, double alpha) {
  const double nu = 2.0 * alpha - static_cast<double>(model.p());
  if (!(nu > 0.0)) {
    std::ostringstream os;
    os << "powerlaw_posterior needs 2 alpha - p > 0 (got " << nu << ")";
    fail(ErrorCode::input, os.str());
  }
  return detail::t_kernel_posterior(model, nu, "powerlaw_posterior");
}

// ---------------------------------------------------------------------------
// Priors on theta
// ---------------------------------------------------------------------------

enum class ThetaPriorKind { flat, gaussian, tabulated };

class ThetaPrior {
 public:
  using Sampler = std::function<Vector(Engine&)>;

  /// Uniform on whatever grid the posterior is evaluated on.
  static ThetaPrior flat() { return ThetaPrior(ThetaPriorKind::flat); }

  static ThetaPrior gaussian(Vector mean, Vector sd) {
    if (mean.size() != sd.size() || mean.size() == 0) {
      fail(ErrorCode::input, "Gaussian theta prior needs matching non-empty mean and sd");
    }
    if (!(sd.array() > 0.0).all()) fail(ErrorCode::input, "Gaussian theta prior needs sd > 0");
    ThetaPrior out(ThetaPriorKind::gaussian);
    out.mean_ = std::move(mean);
    out.sd_ = std::move(sd);
    return out;
  }

  static ThetaPrior tabulated(LogDensityFn log_density, Sampler sampler = {}) {
    if (!log_density) fail(ErrorCode::input, "tabulated theta prior needs a density");
    ThetaPrior out(ThetaPriorKind::tabulated);
    out.log_density_ = std::move(log_density);
    out.sampler_ = std::move(sampler);
    return out;
  }

  ThetaPriorKind kind() const { return kind_; }
  bool proper() const { return kind_ != ThetaPriorKind::flat; }
  bool can_sample() const {
    return kind_ == ThetaPriorKind::gaussian || (kind_ == ThetaPriorKind::tabulated && sampler_);
  }

  double log_density(const Vector& theta) const {
    switch (kind_) {
      case ThetaPriorKind::flat: return 0.0;
      case ThetaPriorKind::gaussian: {
        if (theta.size() != mean_.size()) fail(ErrorCode::input, "theta prior dimension mismatch");
        const Vector z = (theta - mean_).cwiseQuotient(sd_);
        return -0.5 * z.squaredNorm() - sd_.array().log().sum() -
               0.5 * static_cast<double>(theta.size()) * std::log(2.0 * std::numbers::pi);
      }
      case ThetaPriorKind::tabulated: return log_density_(theta);
    }
    return 0.0;
  }

  Vector sample(Engine& eng) const {
    switch (kind_) {
      case ThetaPriorKind::gaussian:
        return mean_ + sd_.cwiseProduct(standard_normal_vector(eng, mean_.size()));
      case ThetaPriorKind::tabulated:
        if (sampler_) return sampler_(eng);
        break;
      case ThetaPriorKind::flat: break;
    }
    fail(ErrorCode::input, "this theta prior cannot be sampled");
  }

 private:
  explicit ThetaPrior(ThetaPriorKind kind) : kind_(kind) {}

  ThetaPriorKind kind_;
  Vector mean_;
  Vector sd_;
  LogDensityFn log_density_;
  Sampler sampler_;
};

// ---------------------------------------------------------------------------
// Grid posteriors
// ---------------------------------------------------------------------------

using GridAxis = std::vector<double>;

inline GridAxis uniform_axis(double lo, double hi, std::size_t points) {
  if (points < 2 || !(hi > lo)) fail(ErrorCode::input, "uniform_axis needs lo < hi and >= 2 points");
  GridAxis axis(points);
  const double step = (hi - lo) / static_cast<double>(points - 1);
  for (std::size_t i = 0; i < points; ++i) axis[i] = lo + step * static_cast<double>(i);
  axis.back() = hi;
  return axis;
}

/// Sorted union of several axes, dropping near-duplicates.
inline GridAxis merge_axes(const std::vector<GridAxis>& parts) {
  GridAxis all;
  for (const auto& part : parts) all.insert(all.end(), part.begin(), part.end());
  std::sort(all.begin(), all.end());
  GridAxis out;
  for (double x : all) {
    if (out.empty() || x - out.back() > 1e-12 * std::max(1.0, std::fabs(x))) out.push_back(x);
  }
  return out;
}

struct GridSpec {
  std::vector<GridAxis> axes;
};

/// Grid centered at theta_W spanning `width` posterior scales per axis. The scale is
/// sqrt(c) for the normal family, sqrt(J/(k-p)) for the power law and the larger of the
/// two (with the t variance factor on c) for the t family.
inline GridSpec default_grid(const ModelInstance& model, const RadialFamily& family, double c,
                             std::size_t points, double width = 12.0) {
  const PseudoTrueResult pt = pseudo_true(model);
  const double dof = static_cast<double>(std::max<Eigen::Index>(model.k() - model.p(), 1));
  const double j_scale = pt.j_stat / dof;
  double scale2 = 0.0;
  switch (family.kind()) {
    case RadialKind::normal: scale2 = c; break;
    case RadialKind::student_t: {
      const double mult = family.variance_multiplier();
      scale2 = c * (std::isfinite(mult) ? mult : 1.0) + j_scale;
      break;
    }
    case RadialKind::power_law: scale2 = j_scale; break;
  }
  if (!(scale2 > 0.0)) fail(ErrorCode::grid, "cannot size a default grid: zero posterior scale");
  GridSpec spec;
  for (Eigen::Index j = 0; j < model.p(); ++j) {
    const double sd = std::sqrt(scale2) * sigma_v(model, Vector::Unit(model.p(), j));
    spec.axes.push_back(uniform_axis(pt.theta_w(j) - width * sd, pt.theta_w(j) + width * sd, points));
  }
  return spec;
}

/// Normalized posterior density on a tensor grid (p in {1, 2}); flattened row-major with
/// the first axis slowest. `weights` are trapezoid weights times density and sum to one.
class GridPosterior {
 public:
  GridPosterior() = default;

  const std::vector<GridAxis>& axes() const { return axes_; }
  Eigen::Index dimension() const { return static_cast<Eigen::Index>(axes_.size()); }
  std::size_t size() const { return log_unnormalized_.size(); }
  const std::vector<double>& log_unnormalized() const { return log_unnormalized_; }
  const std::vector<double>& density() const { return density_; }
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<double>& quadrature_weights() const { return quadrature_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  Vector point(std::size_t index) const {
    Vector theta(dimension());
    if (dimension() == 1) {
      theta(0) = axes_[0][index];
    } else {
      const std::size_t n1 = axes_[1].size();
      theta(0) = axes_[0][index / n1];
      theta(1) = axes_[1][index % n1];
    }
    return theta;
  }

  /// Builds the normalized posterior from pointwise log values on the given axes.
  static GridPosterior from_log_values(std::vector<GridAxis> axes, std::vector<double> log_values,
                                       std::vector<std::string> warnings = {}) {
    GridPosterior out;
    out.axes_ = std::move(axes);
    out.log_unnormalized_ = std::move(log_values);
    out.warnings_ = std::move(warnings);
    out.quadrature_ = tensor_trapezoid(out.axes_);
    if (out.quadrature_.size() != out.log_unnormalized_.size()) {
      fail(ErrorCode::input, "grid size does not match the number of log values");
    }
    double peak = -std::numeric_limits<double>::infinity();
    for (double v : out.log_unnormalized_) {
      if (std::isnan(v) || v == std::numeric_limits<double>::infinity()) {
        fail(ErrorCode::grid, "posterior log density is NaN or +inf on the grid");
      }
      peak = std::max(peak, v);
    }
    if (peak == -std::numeric_limits<double>::infinity()) {
      fail(ErrorCode::grid, "posterior density vanishes on the whole grid");
    }
    out.density_.resize(out.size());
    double mass = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
      out.density_[i] = std::exp(out.log_unnormalized_[i] - peak);
      mass += out.quadrature_[i] * out.density_[i];
    }
    out.weights_.resize(out.size());
    double total = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
      out.density_[i] /= mass;
      out.weights_[i] = out.quadrature_[i] * out.density_[i];
      total += out.weights_[i];
    }
    if (std::fabs(total - 1.0) > 1e-10) {
      fail(ErrorCode::internal_consistency, "grid posterior mass is not normalized");
    }
    return out;
  }

 private:
  static std::vector<double> trapezoid(const GridAxis& axis) {
    const std::size_t n = axis.size();
    std::vector<double> w(n, 0.0);
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const double h = 0.5 * (axis[i + 1] - axis[i]);
      w[i] += h;
      w[i + 1] += h;
    }
    return w;
  }

  static std::vector<double> tensor_trapezoid(const std::vector<GridAxis>& axes) {
    if (axes.size() == 1) return trapezoid(axes[0]);
    const auto w0 = trapezoid(axes[0]);
    const auto w1 = trapezoid(axes[1]);
    std::vector<double> w;
    w.reserve(w0.size() * w1.size());
    for (double a : w0) {
      for (double b : w1) w.push_back(a * b);
    }
    return w;
  }

  std::vector<GridAxis> axes_;
  std::vector<double> log_unnormalized_;
  std::vector<double> density_;
  std::vector<double> weights_;
  std::vector<double> quadrature_;
  std::vector<std::string> warnings_;
};

using EtaPrior = std::variant<ScaledPrior, ContaminatedPrior>;

namespace detail {

inline void check_axes(const std::vector<GridAxis>& axes, Eigen::Index p) {
  if (p < 1 || p > 2) fail(ErrorCode::input, "grid posteriors support p in {1, 2} only");
  if (static_cast<Eigen::Index>(axes.size()) != p) {
    fail(ErrorCode::input, "grid spec must have one axis per parameter");
  }
  for (const auto& axis : axes) {
    if (axis.size() < 2) fail(ErrorCode::input, "each grid axis needs at least 2 points");
    for (std::size_t i = 0; i < axis.size(); ++i) {
      if (!std::isfinite(axis[i])) fail(ErrorCode::input, "grid axis has non-finite points");
      if (i > 0 && !(axis[i] > axis[i - 1])) {
        fail(ErrorCode::input, "grid axis points must be strictly increasing");
      }
    }
  }
}

inline double eta_log_density(const EtaPrior& prior, const Vector& eta) {
  return std::visit(
      [&](const auto& pr) -> double {
        using T = std::decay_t<decltype(pr)>;
        if constexpr (std::is_same_v<T, ScaledPrior>) {
          return pr.proper() ? pr.log_density(eta) : pr.log_unnormalized(eta);
        } else {
          return pr.log_density(eta);
        }
      },
      prior);
}

inline Eigen::Index eta_dimension(const EtaPrior& prior) {
  return std::visit([](const auto& pr) { return pr.k(); }, prior);
}

}  // namespace detail

/// Posterior of theta on a grid: log pi_theta(theta) + log pi_eta(Y - X theta), normalized
/// by the trapezoid rule. When theta_W lies outside the grid the offending axes are
/// widened once (with a warning recorded on the result).
inline GridPosterior grid_posterior(const ModelInstance& model, const EtaPrior& eta_prior,
                                    const ThetaPrior& theta_prior, GridSpec spec) {
  detail::check_axes(spec.axes, model.p());
  if (detail::eta_dimension(eta_prior) != model.k()) {
    fail(ErrorCode::input, "eta prior dimension does not match k");
  }
  const PseudoTrueResult pt = pseudo_true(model);
  std::vector<std::string> warnings;
  for (int attempt = 0;; ++attempt) {
    bool inside = true;
    for (Eigen::Index j = 0; j < model.p(); ++j) {
      const auto& axis = spec.axes[static_cast<std::size_t>(j)];
      if (pt.theta_w(j) < axis.front() || pt.theta_w(j) > axis.back()) inside = false;
    }
    if (inside) break;
    if (attempt > 0) fail(ErrorCode::grid, "grid still excludes theta_W after expansion");
    for (Eigen::Index j = 0; j < model.p(); ++j) {
      auto& axis = spec.axes[static_cast<std::size_t>(j)];
      const double t = pt.theta_w(j);
      if (t >= axis.front() && t <= axis.back()) continue;
      const double span = axis.back() - axis.front();
      const double lo = std::min(axis.front(), t - 0.5 * span);
      const double hi = std::max(axis.back(), t + 0.5 * span);
      std::ostringstream os;
      os.precision(17);
      os << "grid axis " << j << " excluded theta_W = " << t << "; expanded to [" << lo << ", "
         << hi << "]";
      warnings.push_back(os.str());
      axis = uniform_axis(lo, hi, axis.size());
    }
  }
  const bool power_law = std::holds_alternative<ScaledPrior>(eta_prior) &&
                         !std::get<ScaledPrior>(eta_prior).proper();
  std::size_t total = 1;
  for (const auto& axis : spec.axes) total *= axis.size();
  std::vector<double> log_values(total);
  GridPosterior shape = GridPosterior::from_log_values(spec.axes, std::vector<double>(total, 0.0));
  for (std::size_t i = 0; i < total; ++i) {
    const Vector theta = shape.point(i);
    const Vector eta = model.Y() - model.X() * theta;
    if (power_law && eta.dot(model.W() * eta) == 0.0) {
      fail(ErrorCode::grid, "power-law posterior is unbounded where Q(theta) = 0 (needs J > 0)");
    }
    log_values[i] = theta_prior.log_density(theta) + detail::eta_log_density(eta_prior, eta);
  }
  return GridPosterior::from_log_values(std::move(spec.axes), std::move(log_values),
                                        std::move(warnings));
}

/// A closed-form posterior restricted to a grid and renormalized there, i.e. the closed
/// form under a flat prior truncated to the grid bounds.
inline GridPosterior closed_form_on_grid(const ClosedFormPosterior& post, GridSpec spec) {
  detail::check_axes(spec.axes, post.p());
  std::size_t total = 1;
  for (const auto& axis : spec.axes) total *= axis.size();
  GridPosterior shape = GridPosterior::from_log_values(spec.axes, std::vector<double>(total, 0.0));
  std::vector<double> log_values(total);
  for (std::size_t i = 0; i < total; ++i) log_values[i] = post.log_density(shape.point(i));
  return GridPosterior::from_log_values(std::move(spec.axes), std::move(log_values));
}

// ---------------------------------------------------------------------------
// Diagnostics and Bayes actions
// ---------------------------------------------------------------------------

/// Posterior probability of ||theta - center|| > eps (Euclidean ball).
inline double mass_outside_ball(const GridPosterior& post, const Vector& center, double eps) {
  if (!(eps > 0.0)) fail(ErrorCode::input, "eps must be positive");
  if (center.size() != post.dimension()) fail(ErrorCode::input, "center dimension mismatch");
  double mass = 0.0;
  for (std::size_t i = 0; i < post.size(); ++i) {
    if ((post.point(i) - center).norm() > eps) mass += post.weights()[i];
  }
  return std::clamp(mass, 0.0, 1.0);
}

/// Same with the ball measured in the metric sqrt(d' M d), e.g. M = X'WX.
inline double mass_outside_ball(const GridPosterior& post, const Vector& center, double eps,
                                const Matrix& metric) {
  if (!(eps > 0.0)) fail(ErrorCode::input, "eps must be positive");
  if (center.size() != post.dimension() || metric.rows() != post.dimension() ||
      metric.cols() != post.dimension()) {
    fail(ErrorCode::input, "center or metric dimension mismatch");
  }
  double mass = 0.0;
  for (std::size_t i = 0; i < post.size(); ++i) {
    const Vector d = post.point(i) - center;
    if (std::sqrt(std::max(0.0, d.dot(metric * d))) > eps) mass += post.weights()[i];
  }
  return std::clamp(mass, 0.0, 1.0);
}

/// Closed-form version for p = 1, via the Gaussian or t CDF.
inline double mass_outside_ball(const ClosedFormPosterior& post, const Vector& center, double eps) {
  if (!(eps > 0.0)) fail(ErrorCode::input, "eps must be positive");
  if (post.p() != 1 || center.size() != 1) {
    fail(ErrorCode::input, "closed-form ball mass is available for p = 1; use a grid posterior");
  }
  const double sd = std::sqrt(post.scale(0, 0));
  const double lo = (center(0) - eps - post.center(0)) / sd;
  const double hi = (center(0) + eps - post.center(0)) / sd;
  if (post.kind == PosteriorKind::gaussian) {
    return std::clamp(normal_cdf(lo) + normal_cdf(-hi), 0.0, 1.0);
  }
  const StudentT t(post.dof);
  return std::clamp(t_cdf(t, lo) + t_cdf(t, -hi), 0.0, 1.0);
}

inline Vector bayes_action_quadratic(const ClosedFormPosterior& post) {
  if (post.kind == PosteriorKind::student_t && !(post.dof > 1.0)) {
    fail(ErrorCode::nonexistent_mean, "t posterior with dof <= 1 has no mean");
  }
  return post.center;
}

inline Vector bayes_action_quadratic(const GridPosterior& post) {
  Vector mean = Vector::Zero(post.dimension());
  for (std::size_t i = 0; i < post.size(); ++i) mean += post.weights()[i] * post.point(i);
  return mean;
}

/// Per-axis posterior standard deviations of a grid posterior.
inline Vector posterior_sd(const GridPosterior& post) {
  const Vector mean = bayes_action_quadratic(post);
  Vector var = Vector::Zero(post.dimension());
  for (std::size_t i = 0; i < post.size(); ++i) {
    var += post.weights()[i] * (post.point(i) - mean).cwiseAbs2();
  }
  return var.cwiseSqrt();
}

using LossFn = std::function<double(double action, const Vector& theta)>;

/// argmin over `actions` of the posterior expected loss; ties go to the smallest action.
inline double bayes_action_grid(const GridPosterior& post, std::vector<double> actions,
                                const LossFn& loss) {
  if (actions.empty()) fail(ErrorCode::input, "bayes_action_grid needs at least one action");
  std::sort(actions.begin(), actions.end());
  double best_action = actions.front();
  double best_risk = std::numeric_limits<double>::infinity();
  for (double a : actions) {
    double risk = 0.0;
    for (std::size_t i = 0; i < post.size(); ++i) risk += post.weights()[i] * loss(a, post.point(i));
    if (!std::isfinite(risk)) fail(ErrorCode::input, "loss must be bounded on the grid");
    if (risk < best_risk) {
      best_risk = risk;
      best_action = a;
    }
  }
  return best_action;
}

/// Half the trapezoid integral of |density_a - density_b|; the grids must be identical.
inline double tv_distance(const GridPosterior& a, const GridPosterior& b) {
  if (a.axes() != b.axes()) fail(ErrorCode::input, "tv_distance needs identical grids");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += std::fabs(a.weights()[i] - b.weights()[i]);
  return std::clamp(0.5 * sum, 0.0, 1.0);
}

/// CSV with columns theta_1[,theta_2],density at 17 significant digits.
inline void write_csv(std::ostream& os, const GridPosterior& post) {
  os << "theta_1";
  if (post.dimension() == 2) os << ",theta_2";
  os << ",density\n";
  const auto old_precision = os.precision(17);
  for (std::size_t i = 0; i < post.size(); ++i) {
    const Vector theta = post.point(i);
    for (Eigen::Index j = 0; j < theta.size(); ++j) os << theta(j) << ",";
    os << post.density()[i] << "\n";
  }
  os.precision(old_precision);
}

}  // namespace mdm
