#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace gmalign {

// Seeded random draws on top of std::mt19937_64. The standard pins the
// engine's output sequence but not the distributions', so every mapping from
// raw 64-bit draws to values is done by hand to keep results reproducible
// across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform index in [0, n). Modulo bias is negligible for n << 2^64.
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(engine_() % n); }

  // Standard normal via Box-Muller.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * M_PI * u2;
    spare_ = radius * std::sin(angle);
    have_spare_ = true;
    return radius * std::cos(angle);
  }

  Eigen::Vector3d vector_in_cube(const Eigen::Vector3d& center, double half_width) {
    return center + Eigen::Vector3d(uniform(-half_width, half_width),
                                    uniform(-half_width, half_width),
                                    uniform(-half_width, half_width));
  }

  Eigen::Vector3d unit_vector() {
    while (true) {
      Eigen::Vector3d v(uniform(-1.0, 1.0), uniform(-1.0, 1.0), uniform(-1.0, 1.0));
      const double n2 = v.squaredNorm();
      if (n2 > 1e-12 && n2 <= 1.0) return v / std::sqrt(n2);
    }
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace gmalign
