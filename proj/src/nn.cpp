#include "dqlab/nn.hpp"

#include <cmath>

#include "dqlab/error.hpp"

namespace dqlab::nn {

Linear::Linear(std::size_t in, std::size_t out, const std::string& name, Rng& rng, bool zero_init)
    : weight(name + ".weight", Tensor(Shape{in, out})), bias(name + ".bias", Tensor(Shape{out})) {
  if (!zero_init) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    weight.value = uniform_tensor(Shape{in, out}, -bound, bound, rng);
  }
}

Var Linear::forward(Tape& tape, const Var& x) {
  Var y = matmul(x, tape.param(weight));
  return add(y, broadcast_rows(tape.param(bias), y.shape()[0]));
}

void Linear::collect(ParamList& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

MaskedLinear::MaskedLinear(Tensor mask, const std::string& name, Rng& rng, bool zero_init)
    : weight(name + ".weight", Tensor(mask.shape())), bias(name + ".bias", Tensor(Shape{mask.dim(1)})),
      mask_(std::move(mask)) {
  if (mask_.rank() != 2) throw StructuralError("MaskedLinear mask must be rank 2");
  if (!zero_init) {
    const std::size_t in = mask_.dim(0);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    weight.value = uniform_tensor(mask_.shape(), -bound, bound, rng);
  }
}

Var MaskedLinear::forward(Tape& tape, const Var& x) {
  Var y = masked_matmul(x, tape.param(weight), mask_);
  return add(y, broadcast_rows(tape.param(bias), y.shape()[0]));
}

void MaskedLinear::collect(ParamList& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

Mlp::Mlp(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out, const std::string& name, Rng& rng,
         bool zero_last) {
  std::size_t prev = in;
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    layers_.emplace_back(prev, hidden[i], name + ".l" + std::to_string(i), rng);
    prev = hidden[i];
  }
  layers_.emplace_back(prev, out, name + ".l" + std::to_string(hidden.size()), rng, zero_last);
}

Var Mlp::forward(Tape& tape, const Var& x) {
  Var h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i].forward(tape, h);
    if (i + 1 < layers_.size()) h = tanh(h);
  }
  return h;
}

void Mlp::collect(ParamList& out) {
  for (auto& l : layers_) l.collect(out);
}

}  // namespace dqlab::nn
