#include "dqlab/quantize.hpp"

#include <cmath>
#include <string>

#include "dqlab/error.hpp"

namespace dqlab {

DiscreteBatch::DiscreteBatch(std::size_t dim, int bit_depth, std::vector<std::int32_t> values)
    : dim_(dim), bit_depth_(bit_depth), values_(std::move(values)) {
  if (bit_depth_ < 1 || bit_depth_ > 16) throw ConfigError("bit depth must be in [1, 16]");
  if (dim_ == 0 || values_.size() % dim_ != 0) throw StructuralError("batch values not a multiple of dim");
  const std::int32_t hi = levels();
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (values_[i] < 0 || values_[i] >= hi) {
      throw DomainError("value " + std::to_string(values_[i]) + " at index " + std::to_string(i) +
                        " outside [0, 2^" + std::to_string(bit_depth_) + ")");
    }
  }
}

DiscreteBatch DiscreteBatch::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > size()) throw StructuralError("batch slice out of range");
  return DiscreteBatch(dim_, bit_depth_,
                       std::vector<std::int32_t>(values_.begin() + begin * dim_, values_.begin() + end * dim_));
}

DiscreteBatch DiscreteBatch::gather(std::span<const std::size_t> indices) const {
  std::vector<std::int32_t> out;
  out.reserve(indices.size() * dim_);
  for (auto i : indices) {
    if (i >= size()) throw StructuralError("batch gather index out of range");
    auto r = row(i);
    out.insert(out.end(), r.begin(), r.end());
  }
  return DiscreteBatch(dim_, bit_depth_, std::move(out));
}

Tensor DiscreteBatch::as_tensor() const {
  Tensor t(Shape{size(), dim_});
  for (std::size_t i = 0; i < values_.size(); ++i) t[i] = static_cast<double>(values_[i]);
  return t;
}

std::vector<std::int64_t> quantize(std::span<const double> v) {
  std::vector<std::int64_t> x(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) throw DomainError("quantize: non-finite component at index " + std::to_string(i));
    x[i] = static_cast<std::int64_t>(std::floor(v[i]));
  }
  return x;
}

double nats_to_bpd(double nats, std::size_t dims) {
  if (dims == 0) throw ConfigError("nats_to_bpd: dimension must be >= 1");
  return nats / (static_cast<double>(dims) * kLn2);
}

DiscreteBatch reduce_bit_depth(const DiscreteBatch& batch, int target_bits) {
  if (target_bits < 1) throw ConfigError("target bit depth must be >= 1");
  if (target_bits > batch.bit_depth()) throw ConfigError("target bit depth exceeds current depth");
  const int shift = batch.bit_depth() - target_bits;
  std::vector<std::int32_t> out(batch.values().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = batch.values()[i] >> shift;
  return DiscreteBatch(batch.dim(), target_bits, std::move(out));
}

}  // namespace dqlab
