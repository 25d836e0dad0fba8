#pragma once

#include <memory>
#include <string>

#include "dqlab/config.hpp"
#include "dqlab/data.hpp"
#include "dqlab/density.hpp"
#include "dqlab/dequant.hpp"
#include "dqlab/train.hpp"

namespace dqlab {

/// A run assembled from its config: data splits, freshly initialized models
/// and the training batch source.
struct Experiment {
  RunConfig cfg;
  std::size_t dim = 0;
  int bit_depth = 1;
  DiscreteBatch val;
  DiscreteBatch test;
  std::string provenance;
  std::unique_ptr<Dequantizer> dequant;
  std::unique_ptr<DensityModel> model;
  std::unique_ptr<BatchSource> source;

  /// Loads data and initializes parameters from stream (train.seed, 2).
  static Experiment build(const RunConfig& cfg);

  nn::ParamList parameters() { return all_parameters(*dequant, *model); }
  /// Parameters (no optimizer state) from a checkpoint.
  void load_parameters(const Checkpoint& ckpt) { restore_parameters(ckpt, parameters(), nullptr); }
};

std::unique_ptr<Dequantizer> make_dequantizer(const DequantSpec& spec, std::size_t dim, int bit_depth, Rng& rng);
std::unique_ptr<DensityModel> make_density(const ModelSpec& spec, std::size_t dim, int bit_depth, Rng& rng);

}  // namespace dqlab
