#pragma once

#include <cstdint>
#include <random>

#include "dqlab/tensor.hpp"

namespace dqlab {

using Rng = std::mt19937_64;

/// Independent stream derived from (seed, stream, substream). Used for
/// per-step and per-worker generators so results never depend on call order
/// across streams.
Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0, std::uint64_t substream = 0);

Tensor normal_tensor(const Shape& shape, Rng& rng);
/// Entries uniform on [lo, hi).
Tensor uniform_tensor(const Shape& shape, double lo, double hi, Rng& rng);

}  // namespace dqlab
