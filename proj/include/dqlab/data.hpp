#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "dqlab/quantize.hpp"
#include "dqlab/random.hpp"

namespace dqlab {

/// n i.i.d. draws from the binary checkerboard: (0,1) or (1,0), each with
/// probability 1/2. D = 2, bit depth 1.
DiscreteBatch sample_checkerboard(std::size_t n, Rng& rng);

/// The two checkerboard states, each repeated `reps` times: the exact data
/// distribution as an evaluation set.
DiscreteBatch checkerboard_support(std::size_t reps);

/// A parsed IDX container: unsigned-byte payload with big-endian dimensions.
struct IdxArray {
  std::uint32_t magic = 0;
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> bytes;
};

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

/// Reads an unsigned-byte IDX file (magic 0x801 or 0x803). Throws ParseError
/// with a byte offset on a bad magic or truncation.
IdxArray read_idx(const std::string& path);
void write_idx(const std::string& path, const IdxArray& array);

/// Images as 8-bit vectors of dimension rows*cols.
DiscreteBatch idx_images(const IdxArray& array);

struct ImageDataset {
  DiscreteBatch train;
  DiscreteBatch val;
  DiscreteBatch test;
  std::string provenance;
};

/// Loads an IDX image file and splits by index range: the first n_train rows
/// train, the next n_val validate; test comes from `test_path` when given,
/// otherwise the next n_test rows.
ImageDataset load_idx(const std::string& path, std::size_t n_train, std::size_t n_val, std::size_t n_test,
                      const std::string& test_path = "");

/// value >= threshold -> 1 else 0. Result has bit depth 1.
DiscreteBatch binarize(const DiscreteBatch& batch, std::int32_t threshold);

/// Supplies training batches for a global step.
class BatchSource {
 public:
  virtual ~BatchSource() = default;
  virtual std::size_t steps_per_epoch() const = 0;
  /// Batch for `step` (0-based, global); `rng` is that step's stream.
  virtual DiscreteBatch batch(std::uint64_t step, Rng& rng) = 0;
  virtual std::size_t dim() const = 0;
  virtual int bit_depth() const = 0;
};

class CheckerboardSource final : public BatchSource {
 public:
  CheckerboardSource(std::size_t batch_size, std::size_t batches_per_epoch)
      : batch_size_(batch_size), per_epoch_(batches_per_epoch) {}

  std::size_t steps_per_epoch() const override { return per_epoch_; }
  DiscreteBatch batch(std::uint64_t, Rng& rng) override { return sample_checkerboard(batch_size_, rng); }
  std::size_t dim() const override { return 2; }
  int bit_depth() const override { return 1; }

 private:
  std::size_t batch_size_, per_epoch_;
};

/// Minibatches over a fixed dataset; each epoch visits a permutation seeded by
/// (seed, epoch). The last partial batch is dropped.
class DatasetSource final : public BatchSource {
 public:
  DatasetSource(DiscreteBatch data, std::size_t batch_size, std::uint64_t seed);

  std::size_t steps_per_epoch() const override { return steps_; }
  DiscreteBatch batch(std::uint64_t step, Rng& rng) override;
  std::size_t dim() const override { return data_.dim(); }
  int bit_depth() const override { return data_.bit_depth(); }

 private:
  DiscreteBatch data_;
  std::size_t batch_size_, steps_;
  std::uint64_t seed_;
  std::uint64_t perm_epoch_ = ~std::uint64_t{0};
  std::vector<std::size_t> perm_;
};

}  // namespace dqlab
