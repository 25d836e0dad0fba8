#include "dqlab/tape.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "dqlab/error.hpp"

namespace dqlab {

namespace {

#if defined(__GLIBC__)
// Tapes allocate and free many multi-megabyte buffers per step. With glibc's
// default thresholds each one is a fresh mmap and a round of page faults.
const bool kAllocatorTuned = [] {
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  return true;
}();
#endif

}  // namespace

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(Parameter& p) {
  Node n;
  n.value = p.value;
  if (grad_enabled_) {
    n.param = &p;
    n.needs_grad = true;
  }
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::initializer_list<Var> parents, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  if (grad_enabled_) {
    for (const Var& p : parents) {
      if (&p.tape() != this) throw StructuralError("operands recorded on different tapes");
      if (nodes_[p.id()].needs_grad) n.needs_grad = true;
    }
    if (n.needs_grad) n.backward = std::move(fn);
  }
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad_buf = Tensor(n.value.shape());
    n.has_grad = true;
  }
  return n.grad_buf;
}

void Tape::backward(const Var& root) {
  if (&root.tape() != this) throw StructuralError("backward root belongs to another tape");
  if (root.value().numel() != 1 || root.value().rank() > 1) {
    throw StructuralError("backward root must be a scalar, got shape " + shape_str(root.shape()));
  }
  if (!nodes_[root.id()].needs_grad) return;
  grad(root.id()).fill(1.0);
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad) continue;
    if (n.backward) n.backward(*this, i);
    if (n.param) {
      auto dst = n.param->grad.data();
      auto src = nodes_[i].grad_buf.data();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
  }
}

}  // namespace dqlab
