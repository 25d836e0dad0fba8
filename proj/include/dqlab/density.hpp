#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "dqlab/nn.hpp"
#include "dqlab/random.hpp"
#include "dqlab/tape.hpp"

namespace dqlab {

/// Continuous density p(v) over R^D.
class DensityModel {
 public:
  virtual ~DensityModel() = default;

  virtual std::string kind() const = 0;
  virtual std::size_t dim() const = 0;
  /// Exact log density of every row of v [N, D], in nats; shape [N].
  virtual Var log_prob(Tape& tape, const Var& v) = 0;
  /// n exact samples, shape [n, D].
  virtual Tensor sample(std::size_t n, Rng& rng) = 0;
  virtual void collect(nn::ParamList& out) = 0;

  nn::ParamList parameters() {
    nn::ParamList p;
    collect(p);
    return p;
  }
};

/// Uniform density on the box [lo, hi)^D. Parameter-free; used as a
/// constant-density reference.
class BoxUniformModel final : public DensityModel {
 public:
  BoxUniformModel(std::size_t dim, double lo, double hi);

  std::string kind() const override { return "box_uniform"; }
  std::size_t dim() const override { return dim_; }
  Var log_prob(Tape& tape, const Var& v) override;
  Tensor sample(std::size_t n, Rng& rng) override;
  void collect(nn::ParamList&) override {}

 private:
  std::size_t dim_;
  double lo_, hi_;
};

/// Independent Gaussian per dimension, parameterized by mean and log scale.
class DiagGaussianModel final : public DensityModel {
 public:
  explicit DiagGaussianModel(std::size_t dim, const std::string& name = "model");

  std::string kind() const override { return "diag_gaussian"; }
  std::size_t dim() const override { return mean.value.numel(); }
  Var log_prob(Tape& tape, const Var& v) override;
  Tensor sample(std::size_t n, Rng& rng) override;
  void collect(nn::ParamList& out) override;

  Parameter mean;
  Parameter log_scale;
};

/// Full-covariance Gaussian with precision L L^T, where
/// L = strict_lower(l_offdiag) + diag(exp(log_diag)).
class CovGaussianModel final : public DensityModel {
 public:
  explicit CovGaussianModel(std::size_t dim, const std::string& name = "model");

  std::string kind() const override { return "cov_gaussian"; }
  std::size_t dim() const override { return mean.value.numel(); }
  Var log_prob(Tape& tape, const Var& v) override;
  Tensor sample(std::size_t n, Rng& rng) override;
  void collect(nn::ParamList& out) override;

  /// The Cholesky factor of the precision as a plain matrix.
  Tensor cholesky() const;

  Parameter mean;
  Parameter l_offdiag;
  Parameter log_diag;
};

/// Learned invertible linear map z' = W z with W = P L (U + diag(exp(log_s))):
/// fixed permutation P, unit-lower L, strictly-upper U.
class InvertibleLinearMix {
 public:
  InvertibleLinearMix() = default;
  InvertibleLinearMix(std::vector<std::size_t> perm, const std::string& name);

  std::size_t dim() const { return perm_.size(); }
  /// Rows of z [N, d] mapped through W; returns (z', log|det W|) with the
  /// log-det as a scalar.
  std::pair<Var, Var> forward(Tape& tape, const Var& z);
  Tensor inverse(const Tensor& z) const;
  Tensor weight_matrix() const;
  void collect(nn::ParamList& out);

  Parameter lower;
  Parameter upper;
  Parameter log_s;

 private:
  std::vector<std::size_t> perm_;  // row i of W is row perm_[i] of L(U+S)
  Tensor lower_mask_, upper_mask_;
};

/// Affine coupling: the first ceil(d/2) coordinates pass through and
/// condition a scale/shift of the rest. Scale is 2*sigmoid(raw) so a zeroed
/// final layer gives the identity.
class AffineCoupling {
 public:
  AffineCoupling() = default;
  AffineCoupling(std::size_t dim, std::size_t hidden, const std::string& name, Rng& rng);

  /// Returns (y, per-row log-det [N]).
  std::pair<Var, Var> forward(Tape& tape, const Var& z);
  Tensor inverse(const Tensor& y);
  void collect(nn::ParamList& out) { net_.collect(out); }

 private:
  std::size_t dim_ = 0, split_ = 0;
  nn::Mlp net_;
};

/// Conditional diagonal Gaussian prior for the factored-out half of a level.
class SplitPrior {
 public:
  SplitPrior() = default;
  SplitPrior(std::size_t keep, std::size_t drop, std::size_t hidden, const std::string& name, Rng& rng);

  /// log N(dropped; mu(kept), sigma(kept)) per row, shape [N].
  Var log_prob(Tape& tape, const Var& kept, const Var& dropped);
  /// dropped = mu + sigma * noise.
  Tensor from_noise(const Tensor& kept, const Tensor& noise);
  void collect(nn::ParamList& out) { net_.collect(out); }

 private:
  std::size_t drop_ = 0;
  nn::Mlp net_;
};

struct FlowOptions {
  std::size_t levels = 1;
  std::size_t subflows = 8;
  std::size_t hidden = 64;
  int bit_depth = 1;  // sets the input normalization (v - c) / r, c = r = 2^bits / 2
};

/// Multi-level coupling flow with factor-out between levels and a standard
/// normal base on the final representation.
class FlowDensityModel final : public DensityModel {
 public:
  FlowDensityModel(std::size_t dim, const FlowOptions& opts, Rng& rng, const std::string& name = "model");

  std::string kind() const override { return "flow"; }
  std::size_t dim() const override { return dim_; }
  Var log_prob(Tape& tape, const Var& v) override;
  Tensor sample(std::size_t n, Rng& rng) override;
  void collect(nn::ParamList& out) override;

  /// Full latent [factored-out parts (level order)..., final z] and the
  /// per-row log-det of v -> latent (normalization, mixes, couplings only).
  std::pair<Tensor, Tensor> to_latent(const Tensor& v);
  /// Exact inverse of to_latent.
  Tensor from_latent(const Tensor& latent);

  double shift() const { return shift_; }
  double scale() const { return scale_; }

 private:
  struct Level {
    std::size_t dim = 0;
    std::vector<InvertibleLinearMix> mixes;
    std::vector<AffineCoupling> couplings;
    bool factor_out = false;
    std::size_t keep = 0;
    SplitPrior prior;
  };

  struct Encoded {
    Var z;                       // final representation
    std::vector<Var> dropped;    // one per factor-out level
    std::vector<Var> kept;       // conditioning halves for the priors
    Var log_det;                 // [N]
  };
  Encoded encode(Tape& tape, const Var& v);
  Tensor decode(Tensor z, const std::vector<Tensor>& dropped_or_noise, bool noise);

  std::size_t dim_;
  double shift_, scale_;
  std::vector<Level> levels_;
};

/// Log density of N(0, 1) summed over columns of z [N, d]; shape [N].
Var standard_normal_log_prob(const Var& z);

}  // namespace dqlab
