#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <sstream>
#include <utility>

#include "mdmisspec/error.hpp"
#include "mdmisspec/linalg.hpp"

namespace mdm {

/// The observable triple (Y, X, W) of a linear minimum-distance problem, validated at
/// construction. The design part (X, W and every factorization derived from it) is
/// shared between instances built with `with_intercept`, so resampling Y is cheap.
class ModelInstance {
 public:
  ModelInstance(Vector y, Matrix x, Matrix w) : y_(std::move(y)) {
    if (x.rows() != y_.size()) {
      std::ostringstream os;
      os << "Y has length " << y_.size() << " but X has " << x.rows() << " rows";
      fail(ErrorCode::model_validation, os.str());
    }
    if (w.rows() != x.rows() || w.cols() != x.rows()) {
      std::ostringstream os;
      os << "W must be " << x.rows() << "x" << x.rows() << " (got " << w.rows() << "x"
         << w.cols() << ")";
      fail(ErrorCode::model_validation, os.str());
    }
    if (!y_.allFinite()) fail(ErrorCode::model_validation, "Y has non-finite entries");
    design_ = std::make_shared<const Design>(std::move(x), std::move(w));
  }

  /// Same (X, W), new intercept. Skips re-validation of the design.
  ModelInstance with_intercept(Vector y) const {
    if (y.size() != k()) fail(ErrorCode::input, "intercept length does not match k");
    return ModelInstance(std::move(y), design_);
  }

  Eigen::Index k() const { return y_.size(); }
  Eigen::Index p() const { return design_->x.cols(); }
  bool over_identified() const { return k() > p(); }

  const Vector& Y() const { return y_; }
  const Matrix& X() const { return design_->x; }
  const Matrix& W() const { return design_->w; }
  const Matrix& W_root() const { return design_->w_root.root; }
  const Matrix& W_inverse_root() const { return design_->w_root.inverse_root; }
  double W_log_det() const { return design_->w_root.log_det; }
  /// X'WX, one half of the Hessian of the objective.
  const Matrix& hessian() const { return design_->hessian; }
  const Eigen::LLT<Matrix>& hessian_llt() const { return design_->hessian_llt; }
  /// W^{1/2} X
  const Matrix& X_tilde() const { return design_->x_tilde; }

 private:
  struct Design {
    Design(Matrix x_in, Matrix w_in) : x(std::move(x_in)) {
      w_root = symmetric_root(w_in, "W");
      w = checked_spd(w_in, "W");
      check_full_column_rank(x, "X");
      hessian = x.transpose() * w * x;
      hessian = 0.5 * (hessian + hessian.transpose());
      hessian_llt.compute(hessian);
      if (hessian_llt.info() != Eigen::Success) {
        fail(ErrorCode::model_validation, "X'WX is not positive definite");
      }
      x_tilde = w_root.root * x;
    }
    Matrix x;
    Matrix w;
    SymmetricRoot w_root;
    Matrix hessian;
    Eigen::LLT<Matrix> hessian_llt;
    Matrix x_tilde;
  };

  ModelInstance(Vector y, std::shared_ptr<const Design> design)
      : y_(std::move(y)), design_(std::move(design)) {}

  Vector y_;
  std::shared_ptr<const Design> design_;
};

struct PseudoTrueResult {
  Vector theta_w;
  double j_stat = 0.0;
  Matrix hessian;
};

struct EtaDecomposition {
  Vector eta_tilde;
  Vector eta_hat;
  Vector eta_perp;
  double j_stat = 0.0;
};

namespace detail {

inline void check_theta(const ModelInstance& model, const Vector& theta) {
  if (theta.size() != model.p()) {
    std::ostringstream os;
    os << "theta has length " << theta.size() << " but the model has p = " << model.p();
    fail(ErrorCode::input, os.str());
  }
}

/// Negative J within -1e-12 ||Y||_W^2 clamps to zero, as does positive J at the level
/// of rounding residue from an exact fit; anything more negative is an error.
inline double clamp_j(double j, const ModelInstance& model) {
  const double y_norm2 = model.Y().dot(model.W() * model.Y());
  if (j < 0.0) {
    if (j >= -1e-12 * y_norm2) return 0.0;
    std::ostringstream os;
    os << "J-statistic evaluated to " << j << " < 0";
    fail(ErrorCode::internal_consistency, os.str());
  }
  constexpr double eps = std::numeric_limits<double>::epsilon();
  if (j <= 64.0 * eps * eps * y_norm2) return 0.0;
  return j;
}

}  // namespace detail

inline Vector implied_eta(const ModelInstance& model, const Vector& theta) {
  detail::check_theta(model, theta);
  return model.Y() - model.X() * theta;
}

/// Q_W(theta) = (Y - X theta)' W (Y - X theta)
inline double objective(const ModelInstance& model, const Vector& theta) {
  const Vector r = implied_eta(model, theta);
  return std::max(0.0, r.dot(model.W() * r));
}

inline PseudoTrueResult pseudo_true(const ModelInstance& model) {
  PseudoTrueResult out;
  out.theta_w = model.hessian_llt().solve(model.X().transpose() * (model.W() * model.Y()));
  const Vector r = model.Y() - model.X() * out.theta_w;
  out.j_stat = detail::clamp_j(r.dot(model.W() * r), model);
  out.hessian = model.hessian();
  return out;
}

/// Splits W^{1/2}(Y - X theta) into its projection onto span(W^{1/2}X) and the residual.
/// eta_perp is computed from Y alone, so it is bit-identical across theta.
inline EtaDecomposition decompose_eta(const ModelInstance& model, const Vector& theta) {
  detail::check_theta(model, theta);
  const PseudoTrueResult pt = pseudo_true(model);
  const Matrix& xt = model.X_tilde();
  const Vector y_tilde = model.W_root() * model.Y();
  EtaDecomposition out;
  out.eta_tilde = model.W_root() * (model.Y() - model.X() * theta);
  out.eta_perp = y_tilde - xt * model.hessian_llt().solve(xt.transpose() * y_tilde);
  out.eta_hat = xt * (pt.theta_w - theta);
  out.j_stat = pt.j_stat;
  return out;
}

/// sqrt(v' (X'WX)^{-1} v)
inline double sigma_v(const ModelInstance& model, const Vector& v) {
  if (v.size() != model.p()) fail(ErrorCode::input, "v must have length p");
  if (v.isZero(0.0)) fail(ErrorCode::input, "v must be nonzero");
  return std::sqrt(v.dot(model.hessian_llt().solve(v)));
}

}  // namespace mdm
