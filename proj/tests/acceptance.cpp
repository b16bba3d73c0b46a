// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "mdmisspec/mdmisspec.hpp"
#include "oracles.hpp"

using namespace mdm;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " FAILED[" << what << "]";
    }
  }
};

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<void(Outcome&)> body;
};

unsigned workers() { return std::max(1u, std::thread::hardware_concurrency()); }

double max_abs_density_error(const GridPosterior& grid, const ClosedFormPosterior& exact) {
  double err = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    err = std::max(err, std::fabs(grid.density()[i] - exact.density(grid.point(i))));
  }
  return err;
}

double max_abs_difference(const GridPosterior& a, const GridPosterior& b) {
  double err = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) err = std::max(err, std::fabs(a.density()[i] - b.density()[i]));
  return err;
}

GridSpec around(const ClosedFormPosterior& post, double half_width_sd, std::size_t points) {
  GridSpec spec;
  for (Eigen::Index j = 0; j < post.p(); ++j) {
    double sd = std::sqrt(post.scale(j, j));
    if (post.kind == PosteriorKind::student_t && post.dof > 2.0) sd *= std::sqrt(post.dof / (post.dof - 2.0));
    spec.axes.push_back(uniform_axis(post.center(j) - half_width_sd * sd, post.center(j) + half_width_sd * sd, points));
  }
  return spec;
}

ModelInstance with_scaled_perp(const ModelInstance& m, double s) {
  const PseudoTrueResult pt = pseudo_true(m);
  const Vector fit = m.X() * pt.theta_w;
  return m.with_intercept(fit + s * (m.Y() - fit));
}

void exact_coverage(Outcome& o) {
  const Matrix x = fixtures::coverage_design();
  const Matrix w = Matrix::Identity(5, 5);
  const ThetaPrior theta = ThetaPrior::gaussian(Vector::Zero(2), Vector::Constant(2, 10.0));
  const InferenceConfig cfg{Vector::Unit(2, 0), 0.95};
  // separate seeds: with a shared seed the three hit counts coincide, since the coverage
  // event is invariant to rescaling eta and t draws are rescaled normal draws
  struct Case {
    RadialFamily family;
    double c;
    std::uint64_t seed;
  };
  const std::vector<Case> cases{{RadialFamily::normal(), 1.0, 101},
                                {RadialFamily::student_t(5.0), 1.0, 202},
                                {RadialFamily::normal(), 100.0, 303}};
  for (const auto& [family, c, seed] : cases) {
    const auto start = std::chrono::steady_clock::now();
    const CoverageResult r = run_coverage(x, w, theta, ScaledPrior(family, c, w), cfg, 20000, seed, workers());
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    o.detail << " " << family.to_string() << "/c=" << c << ":" << r.coverage;
    o.check(r.coverage >= 0.944 && r.coverage <= 0.956, family.to_string() + " band");
    o.check(secs < 30.0, "runtime");
  }
}

void pivotality(Outcome& o) {
  const Matrix x = fixtures::pivot_design();
  const Matrix w = Matrix::Identity(4, 4);
  const InferenceConfig cfg{Vector::Ones(1), 0.95};
  const Vector theta = Vector::Constant(1, 0.3);
  const PivotalityResult normal = run_pivotality(x, w, ScaledPrior(RadialFamily::normal(), 1.0, w), theta, cfg, 10000, 11);
  const PivotalityResult t5 =
      run_pivotality(x, w, ScaledPrior(RadialFamily::student_t(5.0), 1.0, w), theta, cfg, 10000, 12);
  const PivotalityResult control = run_pivotality(x, w, shifted_exponential_draw(4), theta, cfg, 10000, 13);
  o.detail << " ks normal=" << normal.ks << " t:5=" << t5.ks << " control=" << control.ks
           << " threshold=" << normal.threshold;
  o.check(normal.ks < 0.0163, "normal");
  o.check(t5.ks < 0.0163, "t");
  o.check(control.ks > 0.0163, "negative control");
}

void grid_vs_closed_form(Outcome& o) {
  const ModelInstance m = fixtures::canonical();
  const ClosedFormPosterior normal = normal_posterior(m, 1.0);
  const GridPosterior normal_grid =
      grid_posterior(m, ScaledPrior(RadialFamily::normal(), 1.0, m.W()), ThetaPrior::flat(), around(normal, 8.0, 2001));
  const double normal_err = max_abs_density_error(normal_grid, normal);

  const RadialFamily t3 = RadialFamily::student_t(3.0);
  const ClosedFormPosterior limit = t_limit_posterior(m, 3.0);
  const GridPosterior t_grid =
      grid_posterior(m, ScaledPrior(t3, 1e-8, m.W()), ThetaPrior::flat(), default_grid(m, t3, 1e-8, 2001));
  const double t_err = max_abs_density_error(t_grid, limit);
  const GridSpec sd8 = around(limit, 8.0, 2001);
  const double t_err_truncated = max_abs_difference(
      grid_posterior(m, ScaledPrior(t3, 1e-8, m.W()), ThetaPrior::flat(), sd8), closed_form_on_grid(limit, sd8));

  const ModelInstance m3 = fixtures::three_moment();
  const RadialFamily pl = RadialFamily::power_law(3.0);
  const GridSpec spec = default_grid(m3, pl, 1.0, 2001);
  const GridPosterior base = grid_posterior(m3, ScaledPrior(pl, 1.0, m3.W()), ThetaPrior::flat(), spec);
  double pl_err = 0.0;
  for (double c : {1e-6, 1e-2, 100.0}) {
    pl_err = std::max(pl_err, max_abs_difference(base, grid_posterior(m3, ScaledPrior(pl, c, m3.W()), ThetaPrior::flat(), spec)));
  }
  o.detail << " normal=" << normal_err << " t_limit=" << t_err << " (renormalized on +-8sd: " << t_err_truncated
           << ") powerlaw_across_c=" << pl_err;
  o.check(normal_err < 1e-6, "normal");
  o.check(t_err < 2e-4, "t limit");
  o.check(pl_err <= 1e-12, "power law");
}

void concentration(Outcome& o) {
  const ModelInstance m = fixtures::canonical();
  const SweepTrace trace = run_concentration(m, RadialFamily::normal(), {1e-6 / 64, 1e-6 / 16, 1e-6 / 4, 1e-6}, {0.1});
  const auto& sd = trace.metric("posterior_sd");
  const double mass = trace.metric("mass_outside_eps_0.1").back();
  o.detail << " mass_outside(c=1e-6)=" << mass << " sd ratios";
  o.check(mass < 1e-8, "mass");
  for (std::size_t i = 0; i + 1 < sd.size(); ++i) {
    const double ratio = sd[i + 1] / sd[i];
    o.detail << " " << ratio;
    o.check(std::fabs(ratio - 2.0) <= 0.05 * 2.0, "sd ratio");
  }
}

void fragility(Outcome& o) {
  const ModelInstance mis = fixtures::canonical();
  const SweepTrace a = run_contamination(mis, RadialFamily::normal(), ScaledPrior(RadialFamily::normal(), 1.0, mis.W()),
                                         0.01, {1e-6}, {0.05});
  const ModelInstance exact = fixtures::exact_fit();
  const SweepTrace b = run_contamination(exact, RadialFamily::normal(),
                                         ScaledPrior(RadialFamily::normal(), 1.0, exact.W()), 0.01, {1e-6}, {0.05});
  const double tv = a.metric("tv_to_contaminant")[0];
  const double mass = b.metric("mass_outside_eps_0.05")[0];
  o.detail << " J>0 tv=" << tv << " J=0 mass_outside=" << mass;
  o.check(tv < 0.05, "tv");
  o.check(mass < 0.01, "mass");
}

void identified_set_geometry(Outcome& o) {
  const ModelInstance m = fixtures::three_moment();
  const InferenceConfig cfg{Vector::Ones(1), 0.95};
  const double j = pseudo_true(m).j_stat;
  o.check(identified_set_projection(m, cfg, std::sqrt(j) * (1.0 - 1e-6)).empty, "empty below J");
  o.check(identified_set_projection(m, cfg, std::sqrt(j)).singleton, "singleton at J");
  o.check(!identified_set_projection(m, cfg, std::sqrt(j) * (1.0 + 1e-6)).empty, "nonempty above J");

  const double d = 3.0;
  const Interval proj = identified_set_projection(m, cfg, d);
  const int n = 100000;
  const double lo = -3.0, hi = 7.0, step = (hi - lo) / (n - 1);
  double first = NAN, last = NAN;
  for (int i = 0; i < n; ++i) {
    const double t = lo + step * i;
    if (identified_set_membership(m, Vector::Constant(1, t), d)) {
      if (std::isnan(first)) first = t;
      last = t;
    }
  }
  const double scan_err = std::max(std::fabs(first - proj.lower), std::fabs(last - proj.upper));
  o.detail << " scan_error=" << scan_err << " step=" << step;
  o.check(scan_err <= step, "scan");

  double prev_ci = -1.0, prev_set = 1e300;
  for (double s : {0.1, 0.3, 0.6, 0.9, 1.0, 1.1, 1.2}) {
    const ModelInstance ms = with_scaled_perp(m, s);
    const double ci = confidence_interval(ms, cfg).half_width();
    const double set = identified_set_projection(ms, cfg, d).half_width();
    o.check(ci > prev_ci, "ci monotone");
    o.check(set < prev_set, "set monotone");
    prev_ci = ci;
    prev_set = set;
  }
}

void closed_form_formulas(Outcome& o) {
  const ModelInstance m = fixtures::canonical();
  const ClosedFormPosterior t = t_limit_posterior(m, 3.0);
  const ClosedFormPosterior pl = powerlaw_posterior(m, 3.0);
  o.detail << " t_limit dof=" << t.dof << " scale=" << t.scale(0, 0) << " powerlaw dof=" << pl.dof
           << " scale=" << pl.scale(0, 0);
  o.check(t.dof == 4.0 && std::fabs(t.scale(0, 0) - 0.25) <= 1e-12, "t limit");
  o.check(pl.dof == 5.0 && std::fabs(pl.scale(0, 0) - 0.2) <= 1e-12, "power law");
  o.check(std::fabs(t.center(0) - 1.0) <= 1e-12 && std::fabs(pl.center(0) - 1.0) <= 1e-12, "center");
}

void tail_ratios(Outcome& o) {
  const std::vector<double> a_list{1.5, 2.0, 4.0};
  const std::vector<double> tau_list{1.0, 10.0};
  double normal_max = 0.0;
  for (const auto& row : run_tails(RadialFamily::normal(), 2, a_list, tau_list, {1e-4})) {
    normal_max = std::max(normal_max, row.ratio);
  }
  o.check(normal_max < 1e-6, "normal");
  const auto t3 = run_tails(RadialFamily::student_t(3.0), 2, a_list, tau_list, {1e-4});
  double dev = 0.0, spread = 0.0;
  for (const auto& row : t3) {
    dev = std::max(dev, std::fabs(row.ratio - std::pow(row.a, -3.0)));
    for (const auto& other : t3) {
      if (other.a == row.a) spread = std::max(spread, std::fabs(other.ratio - row.ratio));
    }
  }
  o.detail << " normal_max=" << normal_max << " t3 |ratio-a^-3|max=" << dev << " tau_spread=" << spread;
  o.check(dev <= 0.005, "t3 level");
  o.check(spread <= 0.005, "t3 tau");
}

void special_functions(Outcome& o) {
  const double q1 = t_quantile(StudentT(1.0), 0.975);
  const double q2 = t_quantile(StudentT(2.0), 0.975);
  const double e1 = std::fabs(q1 - oracle::t_quantile(0.975, 1.0));
  const double e2 = std::fabs(q2 - oracle::t_quantile(0.975, 2.0));
  o.check(std::fabs(q1 - 12.7062) < 1e-3 && e1 < 1e-3, "dof 1");
  o.check(std::fabs(q2 - 4.3027) < 1e-3 && e2 < 1e-3, "dof 2");
  double trip = 0.0;
  for (double dof : {1.0, 2.0, 3.5, 10.0, 100.0}) {
    const StudentT t(dof);
    for (double q = 0.001; q < 1.0; q += 0.0125) trip = std::max(trip, std::fabs(t_cdf(t, t_quantile(t, q)) - q));
  }
  o.detail << " q(1)=" << q1 << " q(2)=" << q2 << " oracle_err=" << std::max(e1, e2) << " round_trip=" << trip;
  o.check(trip < 1e-9, "round trip");
}

void finite_and_local(Outcome& o) {
  const ModelInstance m = fixtures::three_moment();
  const InferenceConfig cfg{Vector::Ones(1), 0.95};
  const Interval pop = confidence_interval(m, cfg);
  const Interval fin = finite_sample_ci(m.Y(), m.X(), m.W(), cfg);
  o.check(std::memcmp(&pop.lower, &fin.lower, sizeof(double)) == 0 &&
              std::memcmp(&pop.upper, &fin.upper, sizeof(double)) == 0,
          "byte identity");

  IVScenario s;
  s.k = 3;
  s.theta_ate = 1.0;
  s.beta_vec = Vector{{0.8, 1.0, 1.4}};
  s.first_stage = Vector{{0.5, 0.3, 0.2}};
  s.z_cov = Matrix{{1.0, 0.2, 0.0}, {0.2, 1.0, 0.1}, {0.0, 0.1, 1.0}};
  const IVSample sample = iv_sample(s, 10000, IVDgpParams{}, 7);
  const ModelInstance sample_model = to_model(sample);
  const Interval pop_iv = confidence_interval(sample_model, cfg);
  const Interval fin_iv = finite_sample_ci(sample.Yn, sample.Xn, sample.Wn, cfg);
  o.check(pop_iv.lower == fin_iv.lower && pop_iv.upper == fin_iv.upper, "iv sample identity");

  // Sigma arbitrary; Omega chosen so that Omega + Sigma = s W^{-1}
  const Matrix w = sample.Wn;
  Matrix sigma(3, 3);
  sigma << 1.0, 0.4, -0.2, 0.4, 2.0, 0.3, -0.2, 0.3, 0.5;
  const SymmetricRoot root = symmetric_root(w, "W");
  const Eigen::SelfAdjointEigenSolver<Matrix> es(root.root * sigma * root.root);
  const double scale = 2.0 * es.eigenvalues().maxCoeff();
  const Matrix omega = scale * root.inverse_root * root.inverse_root - sigma;
  const LocalExperiment exp{-sample.Xn, sigma, Vector::Zero(3), Vector::Ones(1), w};
  const CoverageResult r =
      run_local_coverage(exp, omega, ThetaPrior::gaussian(Vector::Zero(1), Vector::Constant(1, 10.0)), 0.95, 10000, 99,
                         workers());
  o.detail << " local coverage=" << r.coverage << " se=" << r.std_err;
  o.check(r.within_se(0.95, 3.0), "local coverage");
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "exact ex-ante coverage (normal, t:5, c=100)", 90.0, exact_coverage},
      {2, "pivotal t statistic is t_{k-p}", 10.0, pivotality},
      {3, "grid posterior matches closed forms", 5.0, grid_vs_closed_form},
      {4, "posterior concentration as c shrinks", 5.0, concentration},
      {5, "fragility under contamination", 10.0, fragility},
      {6, "identified-set geometry", 5.0, identified_set_geometry},
      {7, "closed-form limit posteriors", 1.0, closed_form_formulas},
      {8, "conditional tail ratios", 10.0, tail_ratios},
      {9, "t quantiles and round trip", 5.0, special_functions},
      {10, "finite-sample and local adapters", 60.0, finite_and_local},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    Outcome o;
    const auto start = std::chrono::steady_clock::now();
    try {
      c.body(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " exception: " << e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (secs > c.budget_s) o.detail << " (over the " << c.budget_s << "s budget)";
    if (!o.pass) ++failures;
    std::printf("[%s] AC%d %s:%s [%.2fs]\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.str().c_str(), secs);
  }
  std::printf("%d/%zu acceptance criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
