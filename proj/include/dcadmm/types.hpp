#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <limits>
#include <random>
#include <vector>

namespace dcadmm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// A labeling assigns one label index in [0, n_labels) to every vertex.
using Labeling = std::vector<int>;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Deterministic RNG used everywhere a seed appears in the public API.
/// Wraps mt19937_64 but derives doubles itself so streams are
/// reproducible independent of the standard library's distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller.
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    have_cached_ = true;
    return r * std::cos(a);
  }

  /// Uniform integer in [0, n), n >= 1. Rejection sampling, no modulo bias.
  int uniform_int(int n) {
    const std::uint64_t un = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = (~std::uint64_t{0} / un) * un;
    std::uint64_t x = gen_();
    while (x >= limit) x = gen_();
    return static_cast<int>(x % un);
  }

  std::uint64_t next_u64() { return gen_(); }

 private:
  std::mt19937_64 gen_;
  double cached_ = 0.0;
  bool have_cached_ = false;
};

}  // namespace dcadmm
