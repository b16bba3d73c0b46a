#pragma once

#include <cstdint>
#include <random>

#include "mdmisspec/linalg.hpp"

namespace mdm {

using Engine = std::mt19937_64;

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seed for replication `index` of a run with master seed `seed`. Depends only on the
/// pair, so replications can be scheduled in any order on any number of workers.
constexpr std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t index) {
  return mix64(mix64(seed) ^ mix64(index ^ 0xd1b54a32d192ed03ULL));
}

inline Vector standard_normal_vector(Engine& eng, Eigen::Index n) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector z(n);
  for (Eigen::Index i = 0; i < n; ++i) z(i) = normal(eng);
  return z;
}

}  // namespace mdm
