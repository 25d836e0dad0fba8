#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "dqlab/ops.hpp"
#include "dqlab/random.hpp"
#include "dqlab/tape.hpp"

namespace dqlab::nn {

using ParamList = std::vector<Parameter*>;

/// y = x W + b with W [in, out]. Weights ~ U(±1/sqrt(in)), bias 0.
class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in, std::size_t out, const std::string& name, Rng& rng, bool zero_init = false);

  Var forward(Tape& tape, const Var& x);
  void collect(ParamList& out);

  std::size_t in_features() const { return weight.value.dim(0); }
  std::size_t out_features() const { return weight.value.dim(1); }

  Parameter weight;
  Parameter bias;
};

/// Linear layer whose weight is multiplied by a fixed 0/1 mask [in, out].
class MaskedLinear {
 public:
  MaskedLinear() = default;
  MaskedLinear(Tensor mask, const std::string& name, Rng& rng, bool zero_init = false);

  Var forward(Tape& tape, const Var& x);
  void collect(ParamList& out);

  const Tensor& mask() const { return mask_; }

  Parameter weight;
  Parameter bias;

 private:
  Tensor mask_;
};

/// Fully connected tanh network. The final layer can start at zero so the
/// network initially outputs exactly zero.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out, const std::string& name, Rng& rng,
      bool zero_last = false);

  Var forward(Tape& tape, const Var& x);
  void collect(ParamList& out);

  std::size_t out_features() const { return layers_.back().out_features(); }

 private:
  std::vector<Linear> layers_;
};

}  // namespace dqlab::nn
