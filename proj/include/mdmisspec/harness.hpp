#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "mdmisspec/core_model.hpp"
#include "mdmisspec/error.hpp"
#include "mdmisspec/inference.hpp"
#include "mdmisspec/posteriors.hpp"
#include "mdmisspec/radial_priors.hpp"
#include "mdmisspec/rng.hpp"
#include "mdmisspec/special_functions.hpp"

namespace mdm {

// ---------------------------------------------------------------------------
// Monte Carlo coverage
// ---------------------------------------------------------------------------

struct CoverageResult {
  std::uint64_t reps = 0;
  std::uint64_t hits = 0;
  double coverage = 0.0;
  double std_err = 0.0;
  std::uint64_t seed = 0;
  // config echo
  double level = 0.0;
  std::string radial;
  double c = 0.0;
  std::vector<std::string> warnings;

  bool within_se(double target, double multiple) const {
    return std::fabs(coverage - target) <= multiple * std::sqrt(target * (1.0 - target) / static_cast<double>(reps));
  }
};

inline CoverageResult make_coverage_result(std::uint64_t reps, std::uint64_t hits, std::uint64_t seed) {
  CoverageResult out;
  out.reps = reps;
  out.hits = hits;
  out.coverage = static_cast<double>(hits) / static_cast<double>(reps);
  out.std_err = std::sqrt(out.coverage * (1.0 - out.coverage) / static_cast<double>(reps));
  out.seed = seed;
  return out;
}

/// Runs body(r) for r in [0, reps) on `workers` threads and sums the returned hit flags.
/// Each replication seeds its own stream, so the total is schedule independent.
template <class Body>
std::uint64_t count_hits(std::uint64_t reps, unsigned workers, const Body& body) {
  workers = std::max(1u, workers);
  if (workers == 1) {
    std::uint64_t hits = 0;
    for (std::uint64_t r = 0; r < reps; ++r) hits += body(r) ? 1 : 0;
    return hits;
  }
  std::vector<std::uint64_t> partial(workers, 0);
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::uint64_t r = w; r < reps; r += workers) partial[w] += body(r) ? 1 : 0;
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::uint64_t hits = 0;
  for (auto h : partial) hits += h;
  return hits;
}

/// Ex-ante coverage of the CI: theta ~ theta_prior, eta ~ eta_prior, Y = X theta + eta.
inline CoverageResult run_coverage(const Matrix& x, const Matrix& w, const ThetaPrior& theta_prior,
                                   const ScaledPrior& eta_prior, const InferenceConfig& cfg,
                                   std::uint64_t reps, std::uint64_t seed, unsigned workers = 1) {
  if (reps == 0) fail(ErrorCode::input, "coverage needs reps > 0");
  if (!eta_prior.proper()) fail(ErrorCode::improper_prior, "coverage needs a proper eta prior");
  if (!theta_prior.can_sample()) fail(ErrorCode::input, "coverage needs a proper, sampleable theta prior");
  const ModelInstance base(Vector::Zero(x.rows()), x, w);
  cfg.validate(base.p());
  if (!base.over_identified()) {
    fail(ErrorCode::just_identified, "k-p=0: the CI is undefined; coverage needs k > p");
  }
  if (eta_prior.k() != base.k()) fail(ErrorCode::input, "eta prior dimension does not match k");

  const std::uint64_t hits = count_hits(reps, workers, [&](std::uint64_t r) {
    Engine eng(stream_seed(seed, r));
    const Vector theta = theta_prior.sample(eng);
    const Vector eta = draw_eta(eta_prior, eng);
    const ModelInstance model = base.with_intercept(base.X() * theta + eta);
    return confidence_interval(model, cfg).contains(cfg.v.dot(theta));
  });
  CoverageResult out = make_coverage_result(reps, hits, seed);
  out.level = cfg.level;
  out.radial = eta_prior.family().to_string();
  out.c = eta_prior.c();
  if (reps < 100) out.warnings.push_back("fewer than 100 replications");
  return out;
}

// ---------------------------------------------------------------------------
// Pivotality of the t statistic
// ---------------------------------------------------------------------------

using EtaDraw = std::function<Vector(Engine&)>;

/// Kolmogorov-Smirnov distance between the empirical CDF of `samples` and `cdf`.
inline double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf) {
  if (samples.empty()) fail(ErrorCode::input, "ks_statistic needs samples");
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = cdf(samples[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

struct PivotalityResult {
  double ks = 0.0;
  double threshold = 0.0;  // 1.63 / sqrt(reps), the asymptotic 1% critical value
  std::uint64_t reps = 0;
  std::uint64_t seed = 0;
  Eigen::Index dof = 0;

  bool passes() const { return ks < threshold; }
};

inline PivotalityResult run_pivotality(const Matrix& x, const Matrix& w, const EtaDraw& draw,
                                       const Vector& theta, const InferenceConfig& cfg,
                                       std::uint64_t reps, std::uint64_t seed) {
  if (reps == 0) fail(ErrorCode::input, "pivotality needs reps > 0");
  const ModelInstance base(Vector::Zero(x.rows()), x, w);
  cfg.validate(base.p());
  if (!base.over_identified()) fail(ErrorCode::just_identified, "pivotality needs k > p");
  std::vector<double> stats(reps);
  for (std::uint64_t r = 0; r < reps; ++r) {
    Engine eng(stream_seed(seed, r));
    const ModelInstance model = base.with_intercept(base.X() * theta + draw(eng));
    stats[r] = pivotal_t_stat(model, theta, cfg);
  }
  const StudentT t(static_cast<double>(base.k() - base.p()));
  PivotalityResult out;
  out.ks = ks_statistic(std::move(stats), [&](double v) { return t_cdf(t, v); });
  out.threshold = 1.63 / std::sqrt(static_cast<double>(reps));
  out.reps = reps;
  out.seed = seed;
  out.dof = base.k() - base.p();
  return out;
}

inline PivotalityResult run_pivotality(const Matrix& x, const Matrix& w, const ScaledPrior& eta_prior,
                                       const Vector& theta, const InferenceConfig& cfg,
                                       std::uint64_t reps, std::uint64_t seed) {
  if (!eta_prior.proper()) fail(ErrorCode::improper_prior, "pivotality needs a proper eta prior");
  return run_pivotality(x, w, [&](Engine& eng) { return draw_eta(eta_prior, eng); }, theta, cfg, reps,
                        seed);
}

/// Non-elliptical negative control: independent Exp(1) - 1 coordinates.
inline EtaDraw shifted_exponential_draw(Eigen::Index k) {
  return [k](Engine& eng) {
    std::exponential_distribution<double> expo(1.0);
    Vector eta(k);
    for (Eigen::Index j = 0; j < k; ++j) eta(j) = expo(eng) - 1.0;
    return eta;
  };
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

struct SweepTrace {
  std::string axis_name;
  std::vector<double> axis_values;
  std::vector<std::pair<std::string, std::vector<double>>> metrics;

  std::vector<double>& metric(const std::string& name) {
    for (auto& [key, values] : metrics) {
      if (key == name) return values;
    }
    metrics.emplace_back(name, std::vector<double>{});
    return metrics.back().second;
  }

  const std::vector<double>& metric(const std::string& name) const {
    for (const auto& [key, values] : metrics) {
      if (key == name) return values;
    }
    fail(ErrorCode::input, "trace has no metric '" + name + "'");
  }
};

namespace detail {

inline void check_axis(const std::vector<double>& values, const char* what) {
  if (values.empty()) fail(ErrorCode::input, std::string(what) + " must be non-empty");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!(values[i] > 0.0)) fail(ErrorCode::input, std::string(what) + " values must be positive");
    if (i > 0 && !(values[i] > values[i - 1])) {
      fail(ErrorCode::input, std::string(what) + " must be strictly increasing");
    }
  }
}

inline std::string eps_label(const char* prefix, double eps) {
  std::ostringstream os;
  os << prefix << eps;
  return os.str();
}

inline void record_location_metrics(SweepTrace& trace, const GridPosterior& post) {
  const Vector sd = posterior_sd(post);
  const Vector mean = bayes_action_quadratic(post);
  for (Eigen::Index j = 0; j < sd.size(); ++j) {
    const std::string suffix = sd.size() == 1 ? "" : "_" + std::to_string(j + 1);
    trace.metric("posterior_sd" + suffix).push_back(sd(j));
    trace.metric("bayes_action" + suffix).push_back(mean(j));
  }
}

}  // namespace detail

/// Grid posterior per c with mass outside Euclidean and X'WX-metric balls around theta_W.
inline SweepTrace run_concentration(const ModelInstance& model, const RadialFamily& family,
                                    std::vector<double> c_grid, const std::vector<double>& eps_list,
                                    std::size_t grid_points = 2001) {
  if (!model.over_identified()) fail(ErrorCode::just_identified, "concentration sweep needs k > p");
  std::sort(c_grid.begin(), c_grid.end());
  detail::check_axis(c_grid, "c grid");
  for (double eps : eps_list) {
    if (!(eps > 0.0)) fail(ErrorCode::input, "eps values must be positive");
  }
  const PseudoTrueResult pt = pseudo_true(model);
  SweepTrace trace;
  trace.axis_name = "c";
  trace.axis_values = c_grid;
  for (double c : c_grid) {
    const ScaledPrior prior(family, c, model.W());
    const GridPosterior post =
        grid_posterior(model, prior, ThetaPrior::flat(), default_grid(model, family, c, grid_points));
    for (double eps : eps_list) {
      trace.metric(detail::eps_label("mass_outside_eps_", eps)).push_back(mass_outside_ball(post, pt.theta_w, eps));
      trace.metric(detail::eps_label("mass_outside_hessian_eps_", eps))
          .push_back(mass_outside_ball(post, pt.theta_w, eps, model.hessian()));
    }
    detail::record_location_metrics(trace, post);
  }
  return trace;
}

/// Shared grid for a contamination sweep: a wide block sized for the contaminant plus a
/// resolved block around theta_W for every c.
inline GridSpec contamination_grid(const ModelInstance& model, const RadialFamily& base,
                                   const ScaledPrior& contaminant, const std::vector<double>& c_grid,
                                   std::size_t grid_points) {
  const std::size_t inner = std::max<std::size_t>(grid_points / 10, 21);
  std::vector<std::vector<GridAxis>> parts(static_cast<std::size_t>(model.p()));
  auto add = [&](const GridSpec& spec) {
    for (std::size_t j = 0; j < parts.size(); ++j) parts[j].push_back(spec.axes[j]);
  };
  add(default_grid(model, contaminant.family(), contaminant.c(), grid_points));
  for (double c : c_grid) {
    try {
      add(default_grid(model, base, c, inner));
    } catch (const Error&) {
      // zero-width block (e.g. power-law base with J = 0) contributes nothing
    }
  }
  GridSpec spec;
  for (const auto& axis_parts : parts) spec.axes.push_back(merge_axes(axis_parts));
  return spec;
}

/// Contaminated posterior vs the pure-contaminant posterior across c.
inline SweepTrace run_contamination(const ModelInstance& model, const RadialFamily& base,
                                    const ScaledPrior& contaminant, double phi,
                                    std::vector<double> c_grid, const std::vector<double>& eps_list,
                                    std::size_t grid_points = 2001,
                                    const ThetaPrior& theta_prior = ThetaPrior::flat()) {
  std::sort(c_grid.begin(), c_grid.end());
  detail::check_axis(c_grid, "c grid");
  if (!base.proper() || !contaminant.proper()) {
    fail(ErrorCode::improper_prior, "contamination sweep needs proper base and contaminant");
  }
  const PseudoTrueResult pt = pseudo_true(model);
  const GridSpec spec = contamination_grid(model, base, contaminant, c_grid, grid_points);
  const GridPosterior target = grid_posterior(model, contaminant, theta_prior, spec);
  SweepTrace trace;
  trace.axis_name = "c";
  trace.axis_values = c_grid;
  for (double c : c_grid) {
    const ContaminatedPrior mixed =
        ContaminatedPrior::with_scaled_contaminant(ScaledPrior(base, c, model.W()), contaminant, phi);
    const GridPosterior post = grid_posterior(model, mixed, theta_prior, spec);
    trace.metric("tv_to_contaminant").push_back(tv_distance(post, target));
    for (double eps : eps_list) {
      trace.metric(detail::eps_label("mass_outside_eps_", eps)).push_back(mass_outside_ball(post, pt.theta_w, eps));
    }
    detail::record_location_metrics(trace, post);
  }
  trace.metric("j_stat") = std::vector<double>(c_grid.size(), pt.j_stat);
  return trace;
}

struct TailRow {
  double a = 0.0;
  double tau = 0.0;
  double c = 0.0;
  double ratio = 0.0;
};

inline std::vector<TailRow> run_tails(const RadialFamily& family, Eigen::Index k,
                                      const std::vector<double>& a_list,
                                      const std::vector<double>& tau_list,
                                      const std::vector<double>& c_list) {
  if (!family.proper()) fail(ErrorCode::improper_prior, "tail table needs a proper radial family");
  std::vector<TailRow> rows;
  for (double c : c_list) {
    const ScaledPrior prior(family, c, Matrix::Identity(k, k));
    for (double a : a_list) {
      for (double tau : tau_list) rows.push_back({a, tau, c, tail_ratio(prior, a, tau)});
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Local-misspecification coverage
// ---------------------------------------------------------------------------

/// theta ~ theta_prior, mu ~ N(0, Omega), eps ~ N(0, Sigma), Y_L = X_L theta + mu + eps.
/// With Omega + Sigma ∝ W_L^{-1} the implied eta prior is rotation invariant.
inline CoverageResult run_local_coverage(const LocalExperiment& exp, const Matrix& omega,
                                         const ThetaPrior& theta_prior, double level,
                                         std::uint64_t reps, std::uint64_t seed, unsigned workers = 1) {
  exp.validate();
  if (omega.rows() != exp.Sigma.rows() || omega.cols() != exp.Sigma.cols()) {
    fail(ErrorCode::input, "Omega must be k x k");
  }
  const Matrix omega_root = psd_root(omega);
  const Matrix sigma_root = psd_root(exp.Sigma);
  const ModelInstance base = exp.model(Vector::Zero(exp.Gamma_L.rows()));
  const InferenceConfig cfg{exp.K, level};
  cfg.validate(base.p());
  const Eigen::Index k = base.k();
  const std::uint64_t hits = count_hits(reps, workers, [&](std::uint64_t r) {
    Engine eng(stream_seed(seed, r));
    const Vector theta = theta_prior.sample(eng);
    const Vector mu = omega_root * standard_normal_vector(eng, k);
    const Vector eps = sigma_root * standard_normal_vector(eng, k);
    const ModelInstance model = base.with_intercept(base.X() * theta + mu + eps);
    return confidence_interval(model, cfg).contains(exp.K.dot(theta));
  });
  CoverageResult out = make_coverage_result(reps, hits, seed);
  out.level = level;
  out.radial = "normal";
  out.c = 1.0;
  return out;
}

// ---------------------------------------------------------------------------
// CSV emission
// ---------------------------------------------------------------------------

inline void write_trace_csv(std::ostream& os, const SweepTrace& trace) {
  const auto old = os.precision(17);
  os << "axis,metric,value\n";
  for (std::size_t i = 0; i < trace.axis_values.size(); ++i) {
    for (const auto& [name, values] : trace.metrics) {
      os << trace.axis_values[i] << "," << name << "," << values[i] << "\n";
    }
  }
  os.precision(old);
}

inline void write_tails_csv(std::ostream& os, const std::vector<TailRow>& rows) {
  const auto old = os.precision(17);
  os << "a,tau,c,tail_ratio\n";
  for (const auto& row : rows) os << row.a << "," << row.tau << "," << row.c << "," << row.ratio << "\n";
  os.precision(old);
}

}  // namespace mdm
