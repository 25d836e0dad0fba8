#include "dqlab/experiment.hpp"

#include "dqlab/error.hpp"

namespace dqlab {

std::unique_ptr<Dequantizer> make_dequantizer(const DequantSpec& spec, std::size_t dim, int bit_depth, Rng& rng) {
  DequantOptions opts = spec.opts;
  opts.bit_depth = bit_depth;
  if (spec.kind == "uniform") return std::make_unique<UniformDequantizer>();
  if (spec.kind == "logitnormal") return std::make_unique<LogitNormalDequantizer>(dim, opts, rng);
  if (spec.kind == "flow") return std::make_unique<BipartiteFlowDequantizer>(dim, opts, rng);
  if (spec.kind == "ard") return std::make_unique<AutoregressiveDequantizer>(dim, opts, rng);
  throw ConfigError("unknown dequantizer '" + spec.kind + "'");
}

std::unique_ptr<DensityModel> make_density(const ModelSpec& spec, std::size_t dim, int bit_depth, Rng& rng) {
  if (spec.kind == "diag") return std::make_unique<DiagGaussianModel>(dim);
  if (spec.kind == "cov") return std::make_unique<CovGaussianModel>(dim);
  if (spec.kind == "flow") {
    FlowOptions opts = spec.flow;
    opts.bit_depth = bit_depth;
    return std::make_unique<FlowDensityModel>(dim, opts, rng);
  }
  throw ConfigError("unknown density model '" + spec.kind + "'");
}

Experiment Experiment::build(const RunConfig& cfg) {
  cfg.validate();
  Experiment ex;
  ex.cfg = cfg;
  if (cfg.data.kind == "checkerboard") {
    ex.dim = 2;
    ex.bit_depth = 1;
    ex.val = checkerboard_support(cfg.data.eval_reps);
    ex.test = ex.val;
    ex.provenance = "checkerboard (exact two-state support for val/test)";
    ex.source = std::make_unique<CheckerboardSource>(cfg.train.batch_size, cfg.data.batches_per_epoch);
  } else {
    ImageDataset ds = load_idx(cfg.data.path, cfg.data.n_train, cfg.data.n_val, cfg.data.n_test, cfg.data.test_path);
    ex.provenance = ds.provenance;
    if (cfg.data.binarize > 0) {
      ds.train = binarize(ds.train, cfg.data.binarize);
      ds.val = binarize(ds.val, cfg.data.binarize);
      ds.test = binarize(ds.test, cfg.data.binarize);
      ex.provenance += ", threshold " + std::to_string(cfg.data.binarize);
    }
    ex.dim = ds.train.dim();
    ex.bit_depth = ds.train.bit_depth();
    ex.val = std::move(ds.val);
    ex.test = std::move(ds.test);
    ex.source = std::make_unique<DatasetSource>(std::move(ds.train), cfg.train.batch_size, cfg.train.seed);
  }
  Rng rng = make_rng(cfg.train.seed, 2);
  ex.dequant = make_dequantizer(cfg.dequant, ex.dim, ex.bit_depth, rng);
  ex.model = make_density(cfg.model, ex.dim, ex.bit_depth, rng);
  return ex;
}

}  // namespace dqlab
