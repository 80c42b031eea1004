#pragma once

#include <cmath>

#include "dexfm/rng.hpp"
#include "dexfm/tensor.hpp"

namespace dexfm {

// U(-b, b) with b = sqrt(6 / (fan_in + fan_out)).
inline Tensor glorot_uniform(std::vector<std::size_t> extents, std::size_t fan_in,
                             std::size_t fan_out, Rng& rng) {
  Tensor t(std::move(extents));
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : t.data) v = rng.uniform(-bound, bound);
  return t;
}

// Fans derived from the matrix shape: fan_in = cols, fan_out = rows.
inline Tensor glorot_uniform_matrix(std::size_t r, std::size_t c, Rng& rng) {
  return glorot_uniform({r, c}, c, r, rng);
}

inline Tensor normal_init(std::vector<std::size_t> extents, double sigma, Rng& rng) {
  Tensor t(std::move(extents));
  for (double& v : t.data) v = sigma * rng.normal();
  return t;
}

inline Tensor uniform_init(std::vector<std::size_t> extents, double lo, double hi, Rng& rng) {
  Tensor t(std::move(extents));
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace dexfm
