#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <sstream>
#include <string>

#include "mdmisspec/error.hpp"

namespace mdm {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Relative eigenvalue floor for SPD checks and singular-value floor for rank checks.
inline constexpr double kSpdTolerance = 1e-10;
inline constexpr double kRankTolerance = 1e-10;
inline constexpr double kSymmetryTolerance = 1e-10;

/// Symmetric eigendecomposition of an SPD matrix with its canonical square roots.
struct SymmetricRoot {
  Matrix root;          // W^{1/2}, the unique SPD square root
  Matrix inverse_root;  // W^{-1/2}
  Vector eigenvalues;   // ascending
  double log_det = 0.0;
};

/// Validates symmetry and positive definiteness; throws model_validation naming `what`.
inline Matrix checked_spd(const Matrix& m, const std::string& what) {
  if (m.rows() == 0 || m.rows() != m.cols()) {
    std::ostringstream os;
    os << what << " must be a non-empty square matrix (got " << m.rows() << "x" << m.cols() << ")";
    fail(ErrorCode::model_validation, os.str());
  }
  if (!m.allFinite()) fail(ErrorCode::model_validation, what + " has non-finite entries");
  const double scale = m.cwiseAbs().maxCoeff();
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > kSymmetryTolerance * std::max(scale, 1.0)) {
    fail(ErrorCode::model_validation, what + " is not symmetric");
  }
  return 0.5 * (m + m.transpose());
}

inline SymmetricRoot symmetric_root(const Matrix& m, const std::string& what) {
  const Matrix sym = checked_spd(m, what);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
  if (eig.info() != Eigen::Success) {
    fail(ErrorCode::numerical, "eigendecomposition of " + what + " failed");
  }
  const Vector& ev = eig.eigenvalues();
  const double largest = ev.maxCoeff();
  if (!(largest > 0.0) || ev.minCoeff() <= kSpdTolerance * largest) {
    std::ostringstream os;
    os << what << " is not positive definite (eigenvalue range [" << ev.minCoeff() << ", "
       << largest << "])";
    fail(ErrorCode::model_validation, os.str());
  }
  const Matrix& q = eig.eigenvectors();
  SymmetricRoot out;
  out.eigenvalues = ev;
  out.root = q * ev.cwiseSqrt().asDiagonal() * q.transpose();
  out.inverse_root = q * ev.cwiseSqrt().cwiseInverse().asDiagonal() * q.transpose();
  out.log_det = ev.array().log().sum();
  return out;
}

/// Square root of a symmetric positive semidefinite matrix (eigenvalues clipped at zero).
inline Matrix psd_root(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (m + m.transpose()));
  const Vector ev = eig.eigenvalues().cwiseMax(0.0);
  return eig.eigenvectors() * ev.cwiseSqrt().asDiagonal() * eig.eigenvectors().transpose();
}

inline void check_full_column_rank(const Matrix& x, const std::string& what) {
  if (x.rows() < x.cols() || x.cols() == 0) {
    std::ostringstream os;
    os << what << " must have at least as many rows as columns (got " << x.rows() << "x"
       << x.cols() << ")";
    fail(ErrorCode::model_validation, os.str());
  }
  if (!x.allFinite()) fail(ErrorCode::model_validation, what + " has non-finite entries");
  Eigen::JacobiSVD<Matrix> svd(x);
  const Vector& sv = svd.singularValues();
  if (!(sv(0) > 0.0) || sv(sv.size() - 1) <= kRankTolerance * sv(0)) {
    std::ostringstream os;
    os << what << " does not have full column rank (singular values [" << sv(sv.size() - 1)
       << ", " << sv(0) << "])";
    fail(ErrorCode::model_validation, os.str());
  }
}

}  // namespace mdm
