#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace fcdiag {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

// Contract violations (bad shapes, bad arguments) throw std::invalid_argument;
// I/O and runtime failures throw std::runtime_error.
inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

inline Index shape_size(const Shape& s) {
  Index n = 1;
  for (Index d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s);

inline bool is_power_of_two(Index n) { return n > 0 && (n & (n - 1)) == 0; }

// Runtime toggle for post-op finite checks. Defaults to on in debug builds.
bool debug_checks_enabled();
void set_debug_checks(bool on);

// Deterministic RNG with pinned distributions (no std::*_distribution, whose
// output is implementation-defined). Same seed, same stream of values on any
// platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  // Uniform in [0,1) with 53-bit resolution.
  double uniform();
  double uniform(double lo, double hi);
  // Standard normal via Box-Muller; the spare value is cached.
  double gaussian();
  // Uniform integer in [0, n).
  std::int64_t uniform_int(std::int64_t n);
  // Derive an independent deterministic stream.
  Rng fork(std::uint64_t stream) const;

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::int64_t i = static_cast<std::int64_t>(v.size()) - 1; i > 0; --i) {
      std::int64_t j = uniform_int(i + 1);
      std::swap(v[static_cast<std::size_t>(i)], v[static_cast<std::size_t>(j)]);
    }
  }

 private:
  std::uint64_t state_;
  std::uint64_t seed_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace fcdiag
