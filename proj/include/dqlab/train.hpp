#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dqlab/data.hpp"
#include "dqlab/density.hpp"
#include "dqlab/dequant.hpp"
#include "dqlab/nn.hpp"
#include "dqlab/objectives.hpp"

namespace dqlab {

struct TrainConfig {
  ObjectiveSpec objective;
  /// Objective used from epoch switch_epoch + 1 onwards, when set.
  std::optional<ObjectiveSpec> finetune_objective;
  std::size_t switch_epoch = 0;
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_adam = 1e-8;
  std::size_t warmup_epochs = 10;
  std::size_t epochs = 0;
  std::size_t batch_size = 128;
  std::uint64_t seed = 0;
  /// Global L2 gradient-norm clip; 0 disables clipping.
  double clip_norm = 50.0;
  std::string checkpoint_path;

  void validate() const;
  /// Objective in force during `epoch` (1-based).
  const ObjectiveSpec& objective_at(std::size_t epoch) const;
};

/// lr * min(1, epoch / warmup_epochs); constant lr when warmup_epochs = 0.
double lr_at(std::size_t epoch, const TrainConfig& cfg);

/// Adam with bias correction over a fixed parameter list.
class Adam {
 public:
  Adam(nn::ParamList params, double beta1, double beta2, double eps);

  /// One update from the gradients currently in each Parameter::grad.
  void step(double lr);

  const nn::ParamList& params() const { return params_; }
  std::uint64_t steps() const { return t_; }
  void set_steps(std::uint64_t t) { t_ = t; }
  std::vector<Tensor>& first_moments() { return m_; }
  std::vector<Tensor>& second_moments() { return v_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }

 private:
  nn::ParamList params_;
  double beta1_, beta2_, eps_;
  std::uint64_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

/// Scales all gradients so their global L2 norm is at most max_norm
/// (max_norm <= 0 leaves them alone). Returns the norm before clipping.
double clip_grad_norm(const nn::ParamList& params, double max_norm);

/// Loss = -mean bound over the batch, in nats. Backpropagates, clips and
/// applies one Adam update. Returns the loss.
double train_step(Dequantizer& dequant, DensityModel& model, const Tensor& x, const ObjectiveSpec& objective,
                  Adam& opt, double lr, double clip_norm, Rng& rng);

// Checkpoint container: "DQLB", u32 version, config text, parameter records,
// CRC32 of everything before the trailer.
inline constexpr std::uint32_t kCheckpointVersion = 1;

using ConfigPairs = std::vector<std::pair<std::string, std::string>>;

struct Checkpoint {
  ConfigPairs config;
  std::vector<Parameter> records;

  const std::string* find_config(const std::string& key) const;
  const Parameter* find_record(const std::string& name) const;
};

void write_checkpoint(const std::string& path, const Checkpoint& ckpt);
/// Throws LoadError on a missing file, bad magic, version mismatch,
/// truncation or checksum mismatch.
Checkpoint read_checkpoint(const std::string& path);

/// Copies parameter values (and Adam state when `opt` is given) from a
/// checkpoint. Throws LoadError when a record is missing or mis-shaped.
void restore_parameters(const Checkpoint& ckpt, const nn::ParamList& params, Adam* opt);

/// Per-epoch record for the metrics CSV.
struct EpochMetrics {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss_nats = 0.0;
  double val_vi_bits = 0.0;
  double val_iw_bits = 0.0;
  double gap_bits = 0.0;
};

/// Drives train_step over a batch source. Step s draws from stream (seed, s),
/// so a resumed run continues exactly as an uninterrupted one.
class Trainer {
 public:
  Trainer(Dequantizer& dequant, DensityModel& model, BatchSource& source, TrainConfig cfg);

  /// Trains until `epochs` are complete. `on_epoch` runs after each epoch.
  void run(const std::function<void(EpochMetrics&)>& on_epoch = {});
  /// Runs exactly n further steps.
  void run_steps(std::uint64_t n);
  double step();

  std::uint64_t global_step() const { return opt_.steps(); }
  std::size_t current_epoch() const;  // 1-based epoch of the next step
  const std::vector<double>& losses() const { return losses_; }
  Adam& optimizer() { return opt_; }
  const nn::ParamList& params() const { return params_; }
  const TrainConfig& config() const { return cfg_; }

  /// Checkpoint of the current parameters and Adam state, with `config`
  /// stored ahead of the step counter.
  Checkpoint snapshot(const ConfigPairs& config) const;
  void restore(const Checkpoint& ckpt);

 private:
  Dequantizer& dequant_;
  DensityModel& model_;
  BatchSource& source_;
  TrainConfig cfg_;
  nn::ParamList params_;
  Adam opt_;
  std::vector<double> losses_;
};

/// All trainable parameters: dequantizer first, then density model.
nn::ParamList all_parameters(Dequantizer& dequant, DensityModel& model);

}  // namespace dqlab
