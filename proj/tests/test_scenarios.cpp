#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "mdmisspec/fixtures.hpp"
#include "mdmisspec/scenarios.hpp"
#include "oracles.hpp"

using namespace mdm;

namespace {

template <class F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::internal_consistency;
}

IVScenario three_instruments() {
  IVScenario s;
  s.k = 3;
  s.theta_ate = 1.0;
  s.beta_vec = Vector::Ones(3);
  s.first_stage = Vector::Constant(3, 0.2);
  s.z_cov = Matrix{{1.0, 0.3, 0.0}, {0.3, 1.0, 0.2}, {0.0, 0.2, 1.0}};
  return s;
}

double sample_j(const IVScenario& s, std::size_t n, const IVDgpParams& dgp, std::uint64_t seed) {
  return pseudo_true(to_model(iv_sample(s, n, dgp, seed))).j_stat;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return 0.5 * (v[(v.size() - 1) / 2] + v[v.size() / 2]);
}

}  // namespace

TEST(IvPopulation, HomogeneousEffects) {
  IVScenario s = three_instruments();
  s.theta_ate = 1.7;
  s.beta_vec = Vector::Constant(3, 1.7);
  const ModelInstance m = iv_population_model(s);
  const PseudoTrueResult pt = pseudo_true(m);
  EXPECT_EQ(pt.j_stat, 0.0);
  EXPECT_NEAR(pt.theta_w(0), 1.7, 1e-15);
  EXPECT_LT(implied_eta(m, Vector::Constant(1, 1.7)).norm(), 1e-15);
}

TEST(IvPopulation, ReducesToCanonicalFixture) {
  IVScenario s;
  s.k = 2;
  s.theta_ate = 1.0;
  s.beta_vec = Vector{{0.0, 2.0}};
  s.first_stage = Vector{{1.0, 1.0}};
  s.z_cov = Matrix::Identity(2, 2);
  const ModelInstance m = iv_population_model(s);
  EXPECT_EQ(m.Y(), fixtures::canonical().Y());
  const Vector eta = implied_eta(m, Vector::Ones(1));
  EXPECT_EQ(eta, (Vector{{-1.0, 1.0}}));
  const PseudoTrueResult pt = pseudo_true(m);
  EXPECT_NEAR(pt.theta_w(0), 1.0, 1e-15);
  EXPECT_NEAR(pt.j_stat, 2.0, 1e-14);
}

TEST(IvPopulation, SingleInstrumentIsMisspecifiedButUndetectable) {
  IVScenario s;
  s.k = 1;
  s.theta_ate = 1.0;
  s.beta_vec = Vector::Constant(1, 2.5);
  s.first_stage = Vector::Constant(1, 0.4);
  s.z_cov = Matrix::Identity(1, 1);
  const PseudoTrueResult pt = pseudo_true(iv_population_model(s));
  EXPECT_EQ(pt.j_stat, 0.0);
  EXPECT_NEAR(pt.theta_w(0), 2.5, 1e-14);
}

TEST(IvPopulation, Validation) {
  IVScenario s = three_instruments();
  s.first_stage(1) = 0.0;
  EXPECT_EQ(code_of([&] { iv_population_model(s); }), ErrorCode::input);
  s = three_instruments();
  s.z_cov(0, 0) = -1.0;
  EXPECT_EQ(code_of([&] { iv_population_model(s); }), ErrorCode::input);
  s = three_instruments();
  s.beta_vec = Vector::Ones(2);
  EXPECT_EQ(code_of([&] { iv_population_model(s); }), ErrorCode::input);
}

TEST(IvSample, DeterministicGivenSeed) {
  const IVScenario s = three_instruments();
  const IVSample a = iv_sample(s, 2000, IVDgpParams{}, 5);
  const IVSample b = iv_sample(s, 2000, IVDgpParams{}, 5);
  EXPECT_EQ(a.Yn, b.Yn);
  EXPECT_EQ(a.Xn, b.Xn);
  EXPECT_EQ(a.Wn, b.Wn);
  EXPECT_NE(a.Yn, iv_sample(s, 2000, IVDgpParams{}, 6).Yn);
}

TEST(IvSample, HomogeneousEffectsJIsChiSquareSized) {
  // delta = 0: the overidentifying restrictions hold and n J_n is approximately chi-square(k - 1)
  const IVScenario s = three_instruments();
  IVDgpParams dgp;
  dgp.delta = 0.0;
  const std::size_t n = 100000;
  double mean = 0.0;
  int above = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const double nj = static_cast<double>(n) * sample_j(s, n, dgp, seed);
    mean += nj / 20.0;
    above += nj > 15.0 ? 1 : 0;
  }
  EXPECT_GT(mean, 0.8);
  EXPECT_LT(mean, 3.5);
  EXPECT_LE(above, 1);
}

TEST(IvSample, HeterogeneityDetectedWithSkewedInstruments) {
  const IVScenario s = three_instruments();
  IVDgpParams null_dgp;
  null_dgp.delta = 0.0;
  null_dgp.c = Vector{{0.2, 0.5, 1.0}};
  null_dgp.instrument_law = InstrumentLaw::centered_exponential;
  IVDgpParams alt = null_dgp;
  alt.delta = 2.0;
  const std::size_t n = 100000;
  std::vector<double> null_j, alt_j;
  for (std::uint64_t seed = 100; seed < 120; ++seed) {
    null_j.push_back(sample_j(s, n, null_dgp, seed));
    alt_j.push_back(sample_j(s, n, alt, seed + 1000));
  }
  EXPECT_GT(*std::min_element(alt_j.begin(), alt_j.end()), 10.0 * median(null_j));
}

TEST(IvSample, GaussianInstrumentsGiveZeroPopulationJ) {
  // Stein's identity makes E[ZY] parallel to E[ZX] under Gaussian Z for every delta
  const IVScenario s = three_instruments();
  const Vector c{{0.2, 0.5, 1.0}};
  const oracle::IVMoments pop = oracle::gaussian_iv_moments(s.z_cov, c, 0.3, 2.0, 1.0);
  const ModelInstance m(pop.zy, pop.zx, pop.zz.inverse());
  EXPECT_LT(pseudo_true(m).j_stat, 1e-20);
}

TEST(IvSample, MomentsConvergeAtRootN) {
  const IVScenario s = three_instruments();
  const IVDgpParams dgp;  // defaults: c0 = 0, c = 0.5, delta = 1, theta_bar = 1, Gaussian Z
  const oracle::IVMoments pop =
      oracle::gaussian_iv_moments(s.z_cov, Vector::Constant(3, 0.5), dgp.c0, dgp.delta, dgp.theta_bar);
  const Matrix w_pop = pop.zz.inverse();
  std::vector<double> rms;
  for (std::size_t n : {1000u, 10000u, 100000u}) {
    double sq = 0.0;
    const int seeds = 20;
    for (int seed = 0; seed < seeds; ++seed) {
      const IVSample smp = iv_sample(s, n, dgp, 500 + seed);
      sq += (smp.Yn - pop.zy).squaredNorm() + (smp.Xn.col(0) - pop.zx).squaredNorm() +
            (smp.Wn - w_pop).squaredNorm();
    }
    rms.push_back(std::sqrt(sq / seeds));
  }
  const double root10 = std::sqrt(10.0);
  for (int i = 0; i < 2; ++i) {
    const double ratio = rms[i] / rms[i + 1];
    EXPECT_GT(ratio, root10 / 2.0) << i;
    EXPECT_LT(ratio, root10 * 2.0) << i;
  }
}

TEST(IvSample, DegenerateSampleNeedsResample) {
  const IVScenario s = three_instruments();
  IVDgpParams dgp;
  dgp.c0 = -100.0;  // nobody is treated, so Xn = 0
  EXPECT_EQ(code_of([&] { iv_sample(s, 50, dgp, 1); }), ErrorCode::resample_required);
  EXPECT_EQ(code_of([&] { iv_sample(s, 3, IVDgpParams{}, 1); }), ErrorCode::input);
}

TEST(Logit, LinkExamples) {
  EXPECT_EQ(logit_link(0.0), 0.5);
  EXPECT_EQ(logit_inverse_link(0.5), 0.0);
  EXPECT_NEAR(logit_inverse_link(logit_link(3.0)), 3.0, 1e-12);
  EXPECT_NEAR(logit_inverse_link(logit_link(-3.0)), -3.0, 1e-12);
  EXPECT_GT(logit_link(-700.0), 0.0);
  for (double q : {0.0, 1.0, -0.1, 1.5}) EXPECT_EQ(code_of([&] { logit_inverse_link(q); }), ErrorCode::domain);
}

TEST(Logit, CorrectlySpecifiedRecoversIndex) {
  LogitScenario s;
  s.support = Vector{{-1.0, 0.0, 0.5, 2.0}};
  s.probs = Vector{{0.1, 0.4, 0.3, 0.2}};
  const double a = 0.3, b = -0.8;
  s.cond_means.resize(4);
  for (int j = 0; j < 4; ++j) s.cond_means(j) = logit_link(a + b * s.support(j));
  s.x_star = {-3.0, 3.0};
  const ModelInstance m = logit_population_model(s);
  const PseudoTrueResult pt = pseudo_true(m);
  EXPECT_LT(pt.j_stat, 1e-20);
  EXPECT_NEAR(pt.theta_w(0), a + b * -3.0, 1e-10);
  EXPECT_NEAR(pt.theta_w(1), a + b * 3.0, 1e-10);
  const Vector fitted = m.X() * pt.theta_w;
  for (int j = 0; j < 4; ++j) EXPECT_NEAR(fitted(j), a + b * s.support(j), 1e-10);
}

TEST(Logit, MisspecifiedExample) {
  LogitScenario s;
  s.support = Vector{{-1.0, 0.0, 1.0}};
  s.probs = Vector::Constant(3, 1.0 / 3.0);
  s.cond_means = Vector{{0.2, 0.5, 0.9}};
  s.x_star = {-2.0, 2.0};
  const ModelInstance m = logit_population_model(s);
  // direct weighted least squares of logit(cond_means) on (1, x) with equal weights
  const double y[3] = {std::log(0.2 / 0.8), 0.0, std::log(0.9 / 0.1)};
  const double intercept = (y[0] + y[1] + y[2]) / 3.0;
  const double slope = (y[2] - y[0]) / 2.0;
  double j = 0.0;
  for (int i = 0; i < 3; ++i) {
    const double r = y[i] - (intercept + slope * (i - 1));
    j += r * r / 3.0;
  }
  const PseudoTrueResult pt = pseudo_true(m);
  EXPECT_GT(pt.j_stat, 0.0);
  EXPECT_NEAR(pt.j_stat, j, 1e-12);
  EXPECT_NEAR(pt.theta_w(0), intercept - 2.0 * slope, 1e-12);
  EXPECT_NEAR(pt.theta_w(1), intercept + 2.0 * slope, 1e-12);
}

TEST(Logit, RelabelingInvariance) {
  LogitScenario s;
  s.support = Vector{{-1.0, 0.0, 1.0, 3.0}};
  s.probs = Vector{{0.1, 0.2, 0.3, 0.4}};
  s.cond_means = Vector{{0.2, 0.5, 0.9, 0.6}};
  s.x_star = {-2.0, 2.0};
  const ModelInstance m = logit_population_model(s);
  // the scenario type keeps the support sorted, so permute the moments of the model instead
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(4);
  perm.indices() << 2, 0, 3, 1;
  const ModelInstance permuted(perm * m.Y(), perm * m.X(), perm * m.W() * perm.transpose());
  const PseudoTrueResult a = pseudo_true(m);
  const PseudoTrueResult b = pseudo_true(permuted);
  EXPECT_NEAR(a.j_stat, b.j_stat, 1e-14);
  EXPECT_LT((a.theta_w - b.theta_w).norm(), 1e-13);
}

TEST(Logit, Validation) {
  LogitScenario s;
  s.support = Vector{{-1.0, 0.0, 1.0}};
  s.probs = Vector::Constant(3, 1.0 / 3.0);
  s.cond_means = Vector{{0.2, 1.0, 0.9}};
  s.x_star = {-2.0, 2.0};
  EXPECT_EQ(code_of([&] { logit_population_model(s); }), ErrorCode::domain);
  s.cond_means(1) = 0.5;
  s.probs(0) = 0.5;
  EXPECT_EQ(code_of([&] { logit_population_model(s); }), ErrorCode::input);
  s.probs = Vector::Constant(3, 1.0 / 3.0);
  s.x_star = {2.0, 2.0};
  EXPECT_EQ(code_of([&] { logit_population_model(s); }), ErrorCode::input);
  s.x_star = {0.0, 2.0};
  EXPECT_EQ(code_of([&] { logit_population_model(s); }), ErrorCode::input);
  s.x_star = {-2.0, 2.0};
  s.support = Vector{{1.0, 0.0, -1.0}};
  EXPECT_EQ(code_of([&] { logit_population_model(s); }), ErrorCode::input);
}
