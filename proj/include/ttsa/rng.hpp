#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace ttsa {

// All randomness flows through one engine type so that a seed pins the
// entire sample stream (bit-identical within one build).
using Rng = std::mt19937_64;

inline Eigen::VectorXd gaussian_vector(int n, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = normal(rng);
  return v;
}

inline double uniform01(Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return u(rng);
}

}  // namespace ttsa
