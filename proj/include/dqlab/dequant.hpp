#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "dqlab/nn.hpp"
#include "dqlab/random.hpp"
#include "dqlab/tape.hpp"

namespace dqlab {

/// Dequantized draws for a batch: u in (eps, 1-eps)^D, v = x + u and the exact
/// log density log q(u|x) of each row.
struct DequantSample {
  Var u;      // [N*K, D]
  Var v;      // [N*K, D]
  Var log_q;  // [N*K]
};

inline constexpr double kClampEps = 1e-6;

/// Conditional distribution q(u|x) over the unit bin of x. Evaluated only in
/// the sampling direction: every draw carries its own log density.
class Dequantizer {
 public:
  virtual ~Dequantizer() = default;

  virtual std::string kind() const = 0;
  /// K draws for each row of x [N, D] (integer-valued doubles). Row n*K+k
  /// of the result is the k-th draw for datapoint n.
  DequantSample sample(Tape& tape, const Tensor& x, std::size_t k, Rng& rng);
  /// Same as sample() but with the base noise supplied: standard normal
  /// noise for the learned dequantizers, u itself for the uniform one.
  virtual DequantSample from_noise(Tape& tape, const Tensor& x, std::size_t k, const Tensor& noise) = 0;
  virtual void collect(nn::ParamList& out) = 0;

  nn::ParamList parameters() {
    nn::ParamList p;
    collect(p);
    return p;
  }

 protected:
  virtual bool uniform_noise() const { return false; }
};

class UniformDequantizer final : public Dequantizer {
 public:
  std::string kind() const override { return "uniform"; }
  DequantSample from_noise(Tape& tape, const Tensor& x, std::size_t k, const Tensor& noise) override;
  void collect(nn::ParamList&) override {}

 protected:
  bool uniform_noise() const override { return true; }
};

/// x -> h: one tanh hidden layer on x scaled to [0, 1].
class ContextNet {
 public:
  ContextNet() = default;
  ContextNet(std::size_t dim, int bit_depth, std::size_t hidden, std::size_t width, const std::string& name, Rng& rng);

  /// h for each row of x, repeated k times (row n*k+j belongs to datapoint n).
  Var forward(Tape& tape, const Tensor& x, std::size_t k);
  void collect(nn::ParamList& out) { net_.collect(out); }
  std::size_t width() const { return width_; }

 private:
  double inv_range_ = 1.0;
  std::size_t width_ = 0;
  nn::Mlp net_;
};

struct DequantOptions {
  std::size_t layers = 4;          // coupling layers (bipartite)
  std::size_t hidden = 64;         // coupling / ARM hidden width
  std::size_t context = 16;        // width of h
  std::size_t context_hidden = 64; // hidden width of the context network
  int bit_depth = 1;
};

/// u = sigmoid(z), z ~ N(mu(x), diag sigma(x)^2).
class LogitNormalDequantizer final : public Dequantizer {
 public:
  LogitNormalDequantizer(std::size_t dim, const DequantOptions& opts, Rng& rng, const std::string& name = "dequant");

  std::string kind() const override { return "logit_normal"; }
  DequantSample from_noise(Tape& tape, const Tensor& x, std::size_t k, const Tensor& noise) override;
  void collect(nn::ParamList& out) override;

  /// Overrides the conditional mean/log-scale head (for tests).
  nn::Linear& head() { return head_; }

 private:
  std::size_t dim_;
  ContextNet context_;
  nn::Linear head_;
};

/// Conditional diagonal Gaussian base eps = mu(h) + sigma(h) * noise.
struct ConditionalBase {
  ConditionalBase() = default;
  ConditionalBase(std::size_t dim, std::size_t context, const std::string& name, Rng& rng);

  /// Returns (eps, log base(eps)) with the log density per row.
  std::pair<Var, Var> draw(Tape& tape, const Var& h, const Var& noise);
  void collect(nn::ParamList& out) { head.collect(out); }

  std::size_t dim = 0;
  nn::Linear head;
};

/// Stacked affine coupling layers conditioned on h, pushed in the generative
/// direction eps -> z, with a reversal permutation after each layer.
class BipartiteFlowDequantizer final : public Dequantizer {
 public:
  BipartiteFlowDequantizer(std::size_t dim, const DequantOptions& opts, Rng& rng, const std::string& name = "dequant");

  std::string kind() const override { return "bipartite"; }
  DequantSample from_noise(Tape& tape, const Tensor& x, std::size_t k, const Tensor& noise) override;
  void collect(nn::ParamList& out) override;

  Var context(Tape& tape, const Tensor& x, std::size_t k) { return context_.forward(tape, x, k); }
  /// eps -> z given repeated context rows; returns (z, Σ log s per row).
  std::pair<Var, Var> transform(Tape& tape, const Var& h, const Var& eps);
  /// Closed-form inverse z -> eps (plain tensors).
  Tensor inverse(const Tensor& h, const Tensor& z);
  ConditionalBase& base() { return base_; }
  std::size_t num_layers() const { return nets_.size(); }

 private:
  std::size_t dim_, split_;
  ContextNet context_;
  ConditionalBase base_;
  std::vector<nn::Mlp> nets_;
};

/// Inverse-autoregressive dequantizer: one masked pass [m, raw_s] = ARM(eps, h),
/// z = s * eps + m with output i depending only on eps_{<i} and h.
class AutoregressiveDequantizer final : public Dequantizer {
 public:
  AutoregressiveDequantizer(std::size_t dim, const DequantOptions& opts, Rng& rng, const std::string& name = "dequant");

  std::string kind() const override { return "ard"; }
  DequantSample from_noise(Tape& tape, const Tensor& x, std::size_t k, const Tensor& noise) override;
  void collect(nn::ParamList& out) override;

  Var context(Tape& tape, const Tensor& x, std::size_t k) { return context_.forward(tape, x, k); }
  /// (m, s) for each row; s = sigmoid(raw_s + 2), or 1 when the unit-scale hook is set.
  std::pair<Var, Var> arm_outputs(Tape& tape, const Var& h, const Var& eps);
  /// eps -> z; returns (z, Σ log s per row).
  std::pair<Var, Var> transform(Tape& tape, const Var& h, const Var& eps);
  ConditionalBase& base() { return base_; }

  /// Test hook: forces s == 1 so only the shift m acts.
  void set_unit_scale(bool on) { unit_scale_ = on; }

  /// Input-to-output connectivity of the ARM for eps inputs: entry (j, i) is
  /// the number of paths from eps_j to output i (counting both m_i and s_i).
  Tensor connectivity() const;

 private:
  std::size_t dim_;
  ContextNet context_;
  ConditionalBase base_;
  nn::MaskedLinear in_;
  nn::MaskedLinear out_;
  bool unit_scale_ = false;
};

}  // namespace dqlab
