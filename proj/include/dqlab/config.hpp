#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "dqlab/density.hpp"
#include "dqlab/dequant.hpp"
#include "dqlab/train.hpp"

namespace dqlab {

struct DataSpec {
  std::string kind = "checkerboard";  // checkerboard | idx
  std::string path;                   // idx image file
  std::string test_path;              // optional separate test file
  std::size_t n_train = 40000;
  std::size_t n_val = 10000;
  std::size_t n_test = 10000;
  int binarize = 128;                 // threshold; 0 keeps 8-bit values
  std::size_t batches_per_epoch = 100;  // checkerboard only
  std::size_t eval_reps = 500;          // checkerboard: copies of each state in val/test
};

struct ModelSpec {
  std::string kind = "flow";  // diag | cov | flow
  FlowOptions flow;
};

struct DequantSpec {
  std::string kind = "uniform";  // uniform | logitnormal | flow | ard
  DequantOptions opts;
};

struct EvalSpec {
  std::size_t k = 256;
  std::size_t every = 10;  // validate every N epochs (and after the last); 0 = last only
  std::uint64_t seed = 1234;
  std::size_t grid_resolution = 200;
  double grid_lo = -0.5;
  double grid_hi = 2.5;
  std::size_t grid_samples = 10000;  // dequantizer draws per data state
};

/// Everything a run needs. Text form: flat `section.key = value` lines,
/// `#` comments. Unknown keys are rejected.
struct RunConfig {
  DataSpec data;
  ModelSpec model;
  DequantSpec dequant;
  TrainConfig train;
  EvalSpec eval;
  std::string out_dir = "run";

  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::string& path);
  static RunConfig from_pairs(const ConfigPairs& pairs);

  /// Every key in canonical order, defaults included.
  ConfigPairs to_pairs() const;
  std::string to_text() const;
  /// Throws ConfigError on any invalid field.
  void validate() const;
};

/// 17 significant digits, so the text reads back to the same double.
std::string format_real(double v);

}  // namespace dqlab
