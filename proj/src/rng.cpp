#include "stf/rng.hpp"

#include <cmath>
#include <numbers>

namespace stf {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {
inline std::uint64_t rotl(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}
}  // namespace

Rng::Rng(std::uint64_t seed) {
  // xoshiro256++ must not be seeded all-zero; splitmix64 never emits
  // four zero words in a row.
  std::uint64_t sm = seed;
  for (auto& w : s_) w = splitmix64(sm);
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

Real Rng::uniform() {
  return static_cast<Real>(next_u64() >> 11) * 0x1.0p-53;
}

Real Rng::uniform(Real lo, Real hi) {
  return lo + (hi - lo) * uniform();
}

Real Rng::normal(Real mean, Real stddev) {
  if (has_spare_) {
    has_spare_ = false;
    return mean + stddev * spare_;
  }
  Real u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const Real u2 = uniform();
  const Real r = std::sqrt(-2.0 * std::log(u1));
  const Real theta = 2.0 * std::numbers::pi_v<Real> * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return mean + stddev * r * std::cos(theta);
}

Index Rng::below(Index n) {
  return static_cast<Index>(next_u64() % static_cast<std::uint64_t>(n));
}

Rng substream(std::uint64_t master_seed, std::string_view name) {
  // FNV-1a over the name, folded into the master seed.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  std::uint64_t mix = master_seed ^ h;
  return Rng(splitmix64(mix));
}

void fill_uniform(Rng& rng, Real lo, Real hi, Real* dst, Index n) {
  for (Index i = 0; i < n; ++i) dst[i] = rng.uniform(lo, hi);
}

void fill_xavier(Rng& rng, Index fan_in, Index fan_out, Real* dst, Index n) {
  const Real bound = std::sqrt(6.0 / static_cast<Real>(fan_in + fan_out));
  fill_uniform(rng, -bound, bound, dst, n);
}

}  // namespace stf
