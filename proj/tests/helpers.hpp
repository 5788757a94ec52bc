#pragma once

#include "stf/ops.hpp"
#include "stf/rng.hpp"

#include <cstring>

namespace stf::test {

inline Tensor random_tensor(Rng& rng, std::vector<Index> shape, Real lo = -1.0, Real hi = 1.0) {
  Tensor t(std::move(shape));
  fill_uniform(rng, lo, hi, t.mutable_data(), t.size());
  return t;
}

inline bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.same_shape(b) &&
         std::memcmp(a.data(), b.data(), static_cast<std::size_t>(a.size()) * sizeof(Real)) == 0;
}

inline Real max_abs_diff(const Tensor& a, const Tensor& b) {
  Real m = 0.0;
  for (Index i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace stf::test
