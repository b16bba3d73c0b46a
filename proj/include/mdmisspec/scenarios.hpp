#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <utility>

#include "mdmisspec/core_model.hpp"
#include "mdmisspec/error.hpp"
#include "mdmisspec/linalg.hpp"
#include "mdmisspec/rng.hpp"

namespace mdm {

// ---------------------------------------------------------------------------
// Linear IV with heterogeneous treatment effects
// ---------------------------------------------------------------------------

struct IVScenario {
  Eigen::Index k = 0;
  double theta_ate = 0.0;
  Vector beta_vec;     // one-instrument-at-a-time IV estimands
  Vector first_stage;  // E[Z_i X_i]
  Matrix z_cov;        // E[Z_i Z_i']

  void validate() const {
    if (k < 1 || beta_vec.size() != k || first_stage.size() != k || z_cov.rows() != k ||
        z_cov.cols() != k) {
      fail(ErrorCode::input, "IV scenario dimensions are inconsistent with k");
    }
    if ((first_stage.array() == 0.0).any()) fail(ErrorCode::input, "first-stage entries must be nonzero");
    try {
      symmetric_root(z_cov, "z_cov");
    } catch (const Error& e) {
      fail(ErrorCode::input, e.what());
    }
  }
};

/// Y = X theta + eta with eta = (beta - theta 1) ∘ E[ZX], X = E[ZX], W = E[ZZ']^{-1}.
inline ModelInstance iv_population_model(const IVScenario& s) {
  s.validate();
  const Vector eta = (s.beta_vec.array() - s.theta_ate).matrix().cwiseProduct(s.first_stage);
  const Vector y = s.first_stage * s.theta_ate + eta;
  const Matrix w = s.z_cov.ldlt().solve(Matrix::Identity(s.k, s.k));
  return ModelInstance(y, Matrix(s.first_stage), 0.5 * (w + w.transpose()));
}

enum class InstrumentLaw {
  gaussian,              // Z = L e, e ~ N(0, I)
  centered_exponential,  // Z = L e, e_j iid Exp(1) - 1
};

/// Latent-index DGP: X = 1{c0 + c'Z + U > 0}, tau = theta_bar + delta U, Y = X tau + eps.
struct IVDgpParams {
  double c0 = 0.0;
  Vector c;  // empty means 0.5 * ones(k)
  double delta = 1.0;
  double theta_bar = 1.0;
  InstrumentLaw instrument_law = InstrumentLaw::gaussian;
};

struct IVSample {
  Vector Yn;  // mean(Z Y)
  Matrix Xn;  // mean(Z X), k x 1
  Matrix Wn;  // mean(Z Z')^{-1}
};

inline IVSample iv_sample(const IVScenario& s, std::size_t n, const IVDgpParams& dgp,
                          std::uint64_t seed) {
  s.validate();
  if (n < static_cast<std::size_t>(s.k) + 2) fail(ErrorCode::input, "iv_sample needs n >= k + 2");
  const Vector c = dgp.c.size() == 0 ? Vector::Constant(s.k, 0.5) : dgp.c;
  if (c.size() != s.k) fail(ErrorCode::input, "first-stage loading c must have length k");
  const Matrix chol = s.z_cov.llt().matrixL();

  Engine eng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::exponential_distribution<double> expo(1.0);
  Vector zy = Vector::Zero(s.k);
  Vector zx = Vector::Zero(s.k);
  Matrix zz = Matrix::Zero(s.k, s.k);
  Vector e(s.k);
  for (std::size_t i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < s.k; ++j) {
      e(j) = dgp.instrument_law == InstrumentLaw::gaussian ? normal(eng) : expo(eng) - 1.0;
    }
    const Vector z = chol * e;
    const double u = normal(eng);
    const double eps = normal(eng);
    const double x = (dgp.c0 + c.dot(z) + u > 0.0) ? 1.0 : 0.0;
    const double y = x * (dgp.theta_bar + dgp.delta * u) + eps;
    zy += z * y;
    zx += z * x;
    zz.selfadjointView<Eigen::Lower>().rankUpdate(z);
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  zz = zz.selfadjointView<Eigen::Lower>();
  zz *= inv_n;

  IVSample out;
  out.Yn = zy * inv_n;
  out.Xn = zx * inv_n;
  try {
    const SymmetricRoot root = symmetric_root(zz, "mean(ZZ')");
    out.Wn = root.inverse_root * root.inverse_root;
    out.Wn = 0.5 * (out.Wn + out.Wn.transpose());
    check_full_column_rank(out.Xn, "Xn");
  } catch (const Error& err) {
    fail(ErrorCode::resample_required, std::string("degenerate IV sample: ") + err.what());
  }
  return out;
}

inline ModelInstance to_model(const IVSample& sample) {
  return ModelInstance(sample.Yn, sample.Xn, sample.Wn);
}

// ---------------------------------------------------------------------------
// Misspecified logit
// ---------------------------------------------------------------------------

/// Psi(u) = e^u / (1 + e^u)
inline double logit_link(double u) {
  if (std::isnan(u)) fail(ErrorCode::domain, "logit_link of NaN");
  if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}

/// Psi^{-1}(q) = log(q / (1 - q))
inline double logit_inverse_link(double q) {
  if (!(q > 0.0 && q < 1.0)) {
    std::ostringstream os;
    os << "logit needs q in (0, 1) (got " << q << ")";
    fail(ErrorCode::domain, os.str());
  }
  return std::log(q) - std::log1p(-q);
}

struct LogitScenario {
  Vector support;     // x_1 < ... < x_J
  Vector probs;       // Pr(X = x_j)
  Vector cond_means;  // E[Y | X = (1, x_j)]
  std::array<double, 2> x_star{};

  void validate() const {
    const Eigen::Index j = support.size();
    if (j < 2 || probs.size() != j || cond_means.size() != j) {
      fail(ErrorCode::input, "logit scenario needs matching support, probs and cond_means (J >= 2)");
    }
    for (Eigen::Index i = 1; i < j; ++i) {
      if (!(support(i) > support(i - 1))) fail(ErrorCode::input, "logit support must be strictly increasing");
    }
    if (!(probs.array() > 0.0).all() || std::fabs(probs.sum() - 1.0) > 1e-12) {
      fail(ErrorCode::input, "logit probs must be positive and sum to 1");
    }
    if (!(cond_means.array() > 0.0).all() || !(cond_means.array() < 1.0).all()) {
      fail(ErrorCode::domain, "logit cond_means must lie strictly inside (0, 1)");
    }
    if (x_star[0] == x_star[1]) fail(ErrorCode::input, "x_star values must differ");
    for (Eigen::Index i = 0; i < j; ++i) {
      if (support(i) == x_star[0] || support(i) == x_star[1]) {
        fail(ErrorCode::input, "x_star values must not be support points");
      }
    }
  }
};

/// Y_j = logit(E[Y|x_j]); X = [1 x_j] A with A mapping (intercept, slope) to the index at
/// (x*_1, x*_2); W = diag(probs).
inline ModelInstance logit_population_model(const LogitScenario& s) {
  s.validate();
  const Eigen::Index j = s.support.size();
  Vector y(j);
  for (Eigen::Index i = 0; i < j; ++i) y(i) = logit_inverse_link(s.cond_means(i));
  Matrix design(j, 2);
  design.col(0).setOnes();
  design.col(1) = s.support;
  const double x1 = s.x_star[0];
  const double x2 = s.x_star[1];
  const double gap = x2 - x1;
  Matrix interp(2, 2);
  interp << x2 / gap, -x1 / gap, -1.0 / gap, 1.0 / gap;
  return ModelInstance(y, design * interp, Matrix(s.probs.asDiagonal()));
}

}  // namespace mdm
