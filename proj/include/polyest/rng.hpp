#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace polyest {

// Deterministic seed derivation (splitmix64 step) so that parallel or
// sequential sub-tasks get independent, reproducible streams.
std::uint64_t split_seed(std::uint64_t seed, std::uint64_t stream);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(split_seed(seed, 0)) {}

  // Independent child stream; derived purely from the seed and stream index.
  Rng split(std::uint64_t stream) const { return Rng(split_seed(seed_, stream + 1)); }

  std::uint64_t seed() const { return seed_; }

  double normal() { return normal_(engine_); }
  double uniform() { return unit_(engine_); }
  double uniform(double a, double b) { return a + (b - a) * unit_(engine_); }
  int uniform_int(int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(engine_);
  }

  Eigen::VectorXd gaussian_vector(int n, double scale = 1.0) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = scale * normal();
    return v;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
};

}  // namespace polyest
