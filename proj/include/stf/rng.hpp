#pragma once

#include "stf/common.hpp"

#include <string_view>
#include <vector>

namespace stf {

std::uint64_t splitmix64(std::uint64_t& state);

/// Deterministic, platform-independent generator (xoshiro256++ state,
/// Box-Muller normals). std:: distributions are implementation-defined,
/// so every sampling helper the project needs lives here instead.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  Real uniform();  // [0, 1)
  Real uniform(Real lo, Real hi);
  Real normal(Real mean = 0.0, Real stddev = 1.0);
  Index below(Index n);  // [0, n)

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (Index i = static_cast<Index>(v.size()) - 1; i > 0; --i) {
      std::swap(v[static_cast<std::size_t>(i)], v[static_cast<std::size_t>(below(i + 1))]);
    }
  }

 private:
  std::uint64_t s_[4];
  bool has_spare_ = false;
  Real spare_ = 0.0;
};

/// Derive an independent stream from one master seed and a stream name
/// ("init", "shuffle", "synth"). Same (seed, name) always gives the same
/// stream.
Rng substream(std::uint64_t master_seed, std::string_view name);

void fill_uniform(Rng& rng, Real lo, Real hi, Real* dst, Index n);

/// Xavier-uniform fill with bound sqrt(6 / (fan_in + fan_out)).
void fill_xavier(Rng& rng, Index fan_in, Index fan_out, Real* dst, Index n);

}  // namespace stf
