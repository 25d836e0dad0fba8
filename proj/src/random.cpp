#include "dqlab/random.hpp"

namespace dqlab {

Rng make_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t substream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    static_cast<std::uint32_t>(substream), static_cast<std::uint32_t>(substream >> 32)};
  return Rng(seq);
}

Tensor normal_tensor(const Shape& shape, Rng& rng) {
  Tensor t(shape);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (double& v : t.data()) v = dist(rng);
  return t;
}

Tensor uniform_tensor(const Shape& shape, double lo, double hi, Rng& rng) {
  Tensor t(shape);
  std::uniform_real_distribution<double> dist(lo, hi);
  for (double& v : t.data()) v = dist(rng);
  return t;
}

}  // namespace dqlab
