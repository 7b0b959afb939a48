#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "reidforge/common.hpp"

namespace reidforge {

// Deterministic random source. Distributions are hand-rolled on top of the
// raw 64-bit stream so that identical seeds give identical draws on every
// standard library implementation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be > 0.
  std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(uniform() * static_cast<double>(n));
  }

  // Standard normal via Box-Muller.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u = 0.0;
    while (u <= 0.0) u = uniform();
    double v = uniform();
    double r = std::sqrt(-2.0 * std::log(u));
    double theta = 6.283185307179586476925286766559 * v;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  // Uniform point on the sphere of the given radius in `dim` dimensions.
  Eigen::RowVectorXd sphere(Index dim, double radius) {
    Eigen::RowVectorXd v(dim);
    double norm = 0.0;
    while (norm == 0.0) {
      for (Index i = 0; i < dim; ++i) v(i) = normal();
      norm = v.norm();
    }
    return v * (radius / norm);
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace reidforge
