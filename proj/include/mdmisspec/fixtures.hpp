#pragma once

#include "mdmisspec/core_model.hpp"
#include "mdmisspec/linalg.hpp"

// Canonical designs used by the CLI defaults, the tests and the acceptance suite.
namespace mdm::fixtures {

/// W = I_2, X = (1, 1)', Y = (0, 2)': theta_W = 1, J = 2.
inline ModelInstance canonical() {
  return ModelInstance(Vector{{0.0, 2.0}}, Matrix{{1.0}, {1.0}}, Matrix::Identity(2, 2));
}

/// Same design with Y in span(X): J = 0, theta_W = 1.
inline ModelInstance exact_fit() {
  return ModelInstance(Vector{{1.0, 1.0}}, Matrix{{1.0}, {1.0}}, Matrix::Identity(2, 2));
}

/// W = I_3, X = (1, 1, 1)', Y = (1, 1, 4)': theta_W = 2, J = 6.
inline ModelInstance three_moment() {
  return ModelInstance(Vector{{1.0, 1.0, 4.0}}, Matrix{{1.0}, {1.0}, {1.0}}, Matrix::Identity(3, 3));
}

/// k = 5, p = 2 design for coverage experiments (W = I).
inline Matrix coverage_design() {
  return Matrix{{1.0, 0.3}, {1.0, -1.2}, {1.0, 0.8}, {1.0, 2.1}, {1.0, -0.5}};
}

/// k = 4, p = 1 design for pivotality experiments (W = I).
inline Matrix pivot_design() { return Matrix{{1.0}, {0.5}, {-0.3}, {2.0}}; }

}  // namespace mdm::fixtures
