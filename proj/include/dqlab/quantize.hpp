#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "dqlab/tensor.hpp"

namespace dqlab {

/// `count` integer vectors of dimension `dim`, row-major, each component in
/// [0, 2^bit_depth).
class DiscreteBatch {
 public:
  DiscreteBatch() = default;
  /// Throws DomainError if any value falls outside the bit-depth range.
  DiscreteBatch(std::size_t dim, int bit_depth, std::vector<std::int32_t> values);

  std::size_t size() const { return dim_ == 0 ? 0 : values_.size() / dim_; }
  std::size_t dim() const { return dim_; }
  int bit_depth() const { return bit_depth_; }
  std::int32_t levels() const { return std::int32_t{1} << bit_depth_; }

  std::span<const std::int32_t> row(std::size_t i) const { return {values_.data() + i * dim_, dim_}; }
  const std::vector<std::int32_t>& values() const { return values_; }

  /// Rows [begin, end) as a new batch.
  DiscreteBatch slice(std::size_t begin, std::size_t end) const;
  DiscreteBatch gather(std::span<const std::size_t> indices) const;
  /// Values as doubles, shape [size, dim].
  Tensor as_tensor() const;

 private:
  std::size_t dim_ = 0;
  int bit_depth_ = 1;
  std::vector<std::int32_t> values_;
};

/// The hypercube quantizer: componentwise floor. x + u maps back to x for all
/// u in [0,1)^D. Throws DomainError on non-finite input.
std::vector<std::int64_t> quantize(std::span<const double> v);

inline constexpr double kLn2 = 0.69314718055994530942;

/// nats / (D ln 2). Throws ConfigError if D == 0.
double nats_to_bpd(double nats, std::size_t dims);
inline double nats_to_bits(double nats) { return nats / kLn2; }

/// floor(value / 2^(bit_depth - target_bits)). Throws ConfigError when
/// target_bits < 1 or exceeds the current depth.
DiscreteBatch reduce_bit_depth(const DiscreteBatch& batch, int target_bits);

}  // namespace dqlab
