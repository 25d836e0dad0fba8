#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "dqlab/tensor.hpp"

namespace dqlab {

/// A learnable tensor that outlives any single tape. Gradients from every
/// tape it is bound to accumulate into `grad` until zero_grad().
struct Parameter {
  Parameter() = default;
  Parameter(std::string name_, Tensor value_)
      : name(std::move(name_)), value(std::move(value_)), grad(value.shape()) {}

  std::string name;
  Tensor value;
  Tensor grad;

  void zero_grad() { grad = Tensor(value.shape()); }
};

class Tape;

/// Handle to a node recorded on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t numel() const { return value().numel(); }
  bool requires_grad() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Define-by-run record of a computation. Nodes are stored in insertion
/// order, which is a valid topological order; backward() walks it in reverse.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var constant(Tensor value);
  Var constant(double value) { return constant(Tensor::scalar(value)); }
  /// Binds a parameter as a leaf. Its gradient lands in `p.grad` on backward().
  Var param(Parameter& p);

  /// Records a result node. `parents` decides whether the node needs a gradient;
  /// `fn` is dropped when none of them does.
  Var record(Tensor value, std::initializer_list<Var> parents, BackwardFn fn);

  void backward(const Var& root);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  /// Gradient buffer of node `id`, zero-allocated on first use.
  Tensor& grad(std::size_t id);
  bool has_grad(std::size_t id) const { return nodes_[id].has_grad; }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad_buf;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool needs_grad = false;
    bool has_grad = false;
  };

  std::vector<Node> nodes_;
  bool grad_enabled_;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }
inline bool Var::requires_grad() const { return tape_->needs_grad(id_); }

}  // namespace dqlab
