#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace epsoracle {

using Rng = std::mt19937_64;

// Derives an independent generator from a root seed and a stream id.
// Same (seed, stream) always yields the same generator state.
inline Rng make_rng(std::uint64_t root_seed, std::uint64_t stream = 0,
                    std::uint64_t substream = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(root_seed),
                    static_cast<std::uint32_t>(root_seed >> 32),
                    static_cast<std::uint32_t>(stream),
                    static_cast<std::uint32_t>(stream >> 32),
                    static_cast<std::uint32_t>(substream),
                    static_cast<std::uint32_t>(substream >> 32)};
  return Rng(seq);
}

inline double standard_normal(Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  return dist(rng);
}

inline Eigen::VectorXd standard_normal_vector(Rng& rng, Eigen::Index d) {
  Eigen::VectorXd z(d);
  for (Eigen::Index i = 0; i < d; ++i) z[i] = standard_normal(rng);
  return z;
}

inline double uniform01(Rng& rng) {
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  return dist(rng);
}

}  // namespace epsoracle
