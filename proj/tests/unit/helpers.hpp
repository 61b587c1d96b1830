#pragma once

#include <cstdint>
#include <vector>

#include "aurora/rng.hpp"
#include "aurora/tensor.hpp"

namespace testutil {

inline aurora::Tensor randn(std::size_t r, std::size_t c, std::uint64_t seed, double scale = 1.0) {
  aurora::Rng rng = aurora::Rng::stream(seed, 0x7e57);
  aurora::Tensor t({r, c});
  for (auto& v : t.data()) v = scale * rng.normal();
  return t;
}

inline std::vector<std::uint64_t> iota_ids(std::size_t n) {
  std::vector<std::uint64_t> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = i;
  return ids;
}

}  // namespace testutil
