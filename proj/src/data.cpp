#include "dqlab/data.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <numeric>

#include "dqlab/error.hpp"

namespace dqlab {

DiscreteBatch sample_checkerboard(std::size_t n, Rng& rng) {
  std::bernoulli_distribution coin(0.5);
  std::vector<std::int32_t> v(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    const bool first = coin(rng);
    v[2 * i] = first ? 1 : 0;
    v[2 * i + 1] = first ? 0 : 1;
  }
  return DiscreteBatch(2, 1, std::move(v));
}

DiscreteBatch checkerboard_support(std::size_t reps) {
  std::vector<std::int32_t> v;
  v.reserve(4 * reps);
  for (std::size_t r = 0; r < reps; ++r) v.insert(v.end(), {0, 1});
  for (std::size_t r = 0; r < reps; ++r) v.insert(v.end(), {1, 0});
  return DiscreteBatch(2, 1, std::move(v));
}

namespace {

std::uint32_t read_be32(const std::vector<std::uint8_t>& buf, std::size_t at) {
  if (at + 4 > buf.size()) throw ParseError("IDX: truncated header", buf.size());
  return (std::uint32_t{buf[at]} << 24) | (std::uint32_t{buf[at + 1]} << 16) | (std::uint32_t{buf[at + 2]} << 8) |
         std::uint32_t{buf[at + 3]};
}

void write_be32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {char(v >> 24), char(v >> 16), char(v >> 8), char(v)};
  out.write(b, 4);
}

}  // namespace

IdxArray read_idx(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("IDX: cannot open '" + path + "'", 0);
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  IdxArray a;
  a.magic = read_be32(buf, 0);
  if (a.magic != kIdxImagesMagic && a.magic != kIdxLabelsMagic) {
    char hex[11];
    std::snprintf(hex, sizeof hex, "0x%08X", a.magic);
    throw ParseError(std::string("IDX: bad magic ") + hex, 0);
  }
  const std::size_t rank = a.magic & 0xFF;
  std::size_t at = 4, count = 1;
  for (std::size_t i = 0; i < rank; ++i, at += 4) {
    a.dims.push_back(read_be32(buf, at));
    count *= a.dims.back();
  }
  if (buf.size() < at + count) {
    throw ParseError("IDX: payload truncated, expected " + std::to_string(count) + " bytes", buf.size());
  }
  a.bytes.assign(buf.begin() + static_cast<std::ptrdiff_t>(at), buf.begin() + static_cast<std::ptrdiff_t>(at + count));
  return a;
}

void write_idx(const std::string& path, const IdxArray& a) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("IDX: cannot write '" + path + "'", 0);
  write_be32(out, a.magic);
  for (auto d : a.dims) write_be32(out, d);
  out.write(reinterpret_cast<const char*>(a.bytes.data()), static_cast<std::streamsize>(a.bytes.size()));
}

DiscreteBatch idx_images(const IdxArray& a) {
  if (a.magic != kIdxImagesMagic || a.dims.size() != 3) throw ParseError("IDX: not an image file", 0);
  const std::size_t dim = std::size_t{a.dims[1]} * a.dims[2];
  std::vector<std::int32_t> v(a.bytes.begin(), a.bytes.end());
  return DiscreteBatch(dim, 8, std::move(v));
}

ImageDataset load_idx(const std::string& path, std::size_t n_train, std::size_t n_val, std::size_t n_test,
                      const std::string& test_path) {
  DiscreteBatch all = idx_images(read_idx(path));
  const std::size_t need = n_train + n_val + (test_path.empty() ? n_test : 0);
  if (all.size() < need) {
    throw ConfigError("'" + path + "' holds " + std::to_string(all.size()) + " images, split needs " +
                      std::to_string(need));
  }
  ImageDataset ds;
  ds.train = all.slice(0, n_train);
  ds.val = all.slice(n_train, n_train + n_val);
  if (test_path.empty()) {
    ds.test = all.slice(n_train + n_val, n_train + n_val + n_test);
    ds.provenance = path + " rows [0," + std::to_string(need) + ")";
  } else {
    DiscreteBatch t = idx_images(read_idx(test_path));
    if (t.size() < n_test) throw ConfigError("test file holds fewer than " + std::to_string(n_test) + " images");
    ds.test = t.slice(0, n_test);
    ds.provenance = path + " + test " + test_path;
  }
  return ds;
}

DiscreteBatch binarize(const DiscreteBatch& batch, std::int32_t threshold) {
  if (threshold <= 0 || threshold >= batch.levels()) throw ConfigError("binarize threshold outside (0, 2^bits)");
  std::vector<std::int32_t> out(batch.values().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = batch.values()[i] >= threshold ? 1 : 0;
  return DiscreteBatch(batch.dim(), 1, std::move(out));
}

DatasetSource::DatasetSource(DiscreteBatch data, std::size_t batch_size, std::uint64_t seed)
    : data_(std::move(data)), batch_size_(batch_size), seed_(seed) {
  if (batch_size_ == 0) throw ConfigError("batch size must be >= 1");
  steps_ = data_.size() / batch_size_;
  if (steps_ == 0) throw ConfigError("dataset smaller than one batch");
}

DiscreteBatch DatasetSource::batch(std::uint64_t step, Rng&) {
  const std::uint64_t epoch = step / steps_;
  if (epoch != perm_epoch_) {
    perm_.resize(data_.size());
    std::iota(perm_.begin(), perm_.end(), std::size_t{0});
    Rng rng = make_rng(seed_, 0x5eed, epoch);
    std::shuffle(perm_.begin(), perm_.end(), rng);
    perm_epoch_ = epoch;
  }
  const std::size_t at = (step % steps_) * batch_size_;
  return data_.gather(std::span<const std::size_t>(perm_.data() + at, batch_size_));
}

}  // namespace dqlab
