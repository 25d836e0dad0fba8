#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dqlab/density.hpp"
#include "dqlab/dequant.hpp"
#include "dqlab/quantize.hpp"

namespace dqlab {

enum class ObjectiveKind { Vi, Iw, Renyi, VrMax };

const char* objective_name(ObjectiveKind kind);
/// Parses "vi", "iw", "renyi", "vrmax"; throws ConfigError otherwise.
ObjectiveKind parse_objective(const std::string& name);

struct ObjectiveSpec {
  ObjectiveKind kind = ObjectiveKind::Vi;
  std::size_t k = 1;   // samples per datapoint
  double alpha = 0.0;  // renyi only; must differ from 1

  /// Throws ConfigError for K < 1, alpha == 1 or vi with K != 1.
  void validate() const;
};

struct BoundEstimate {
  double value_nats = 0.0;  // mean iw-K bound: the log-likelihood estimate
  double vi_nats = 0.0;     // mean of the single-sample terms on the same draws
  double gap_nats = 0.0;    // value - vi, the KL(q|p) estimate
  std::size_t k = 1;
  std::size_t dim = 1;
  std::vector<double> per_example;  // iw-K value per datapoint

  // Sign flipped: negative log-likelihoods in bits (total) and bits/dim.
  double nll_bits() const { return -nats_to_bits(value_nats); }
  double vi_bits() const { return -nats_to_bits(vi_nats); }
  double gap_bits() const { return nats_to_bits(gap_nats); }
  double nll_bpd() const { return -nats_to_bpd(value_nats, dim); }
  double vi_bpd() const { return -nats_to_bpd(vi_nats, dim); }
  double gap_bpd() const { return nats_to_bpd(gap_nats, dim); }
};

/// Log importance weights log p(x + u_k) - log q(u_k|x), shape [N, K].
Var log_weights(Tape& tape, const Tensor& x, std::size_t k, Dequantizer& dequant, DensityModel& model, Rng& rng);

// Reductions of a weight matrix [N, K] to per-datapoint bounds [N].
Var iw_from_weights(const Var& w);
Var renyi_from_weights(const Var& w, double alpha);
Var vrmax_from_weights(const Var& w);

// Per-datapoint bounds, differentiable through the reparameterized draws.
Var vi_bound(Tape& tape, const Tensor& x, Dequantizer& dequant, DensityModel& model, Rng& rng);
Var iw_bound(Tape& tape, const Tensor& x, Dequantizer& dequant, DensityModel& model, std::size_t k, Rng& rng);
Var renyi_bound(Tape& tape, const Tensor& x, Dequantizer& dequant, DensityModel& model, std::size_t k, double alpha,
                Rng& rng);
Var vrmax_bound(Tape& tape, const Tensor& x, Dequantizer& dequant, DensityModel& model, std::size_t k, Rng& rng);
Var objective_bound(Tape& tape, const ObjectiveSpec& spec, const Tensor& x, Dequantizer& dequant,
                    DensityModel& model, Rng& rng);

struct EvalOptions {
  std::size_t chunk_rows = 8192;  // rows (datapoints x K) per tape
  std::size_t threads = 0;        // 0 = from DQLAB_THREADS / hardware
};

/// Mean iw-K estimate over the dataset with no gradients. Chunk c draws from
/// stream (seed, c), so results do not depend on the thread count.
BoundEstimate evaluate_loglik(const DiscreteBatch& data, Dequantizer& dequant, DensityModel& model, std::size_t k_eval,
                              std::uint64_t seed, const EvalOptions& opts = {});

/// Worker count: DQLAB_THREADS if set (capped at hardware concurrency), else hardware concurrency.
std::size_t worker_count();

}  // namespace dqlab
