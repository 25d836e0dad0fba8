#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dqlab/tape.hpp"

namespace dqlab {

// Elementwise binary ops accept equal shapes, or a rank-0 scalar on either side.
// Anything else is a StructuralError; there is no implicit broadcasting.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);

Var neg(const Var& x);
Var exp(const Var& x);
/// Throws DomainError if any entry is <= 0.
Var log(const Var& x);
Var sigmoid(const Var& x);
Var log_sigmoid(const Var& x);
Var softplus(const Var& x);
Var tanh(const Var& x);
Var square(const Var& x);
Var scale(const Var& x, double c);
Var shift(const Var& x, double c);
/// Clamp to [lo, hi]; zero gradient where clamped.
Var clamp(const Var& x, double lo, double hi);

/// [m,k] x [k,n] -> [m,n], or [m,k] x [k] -> [m].
Var matmul(const Var& a, const Var& b);
/// x [m,k] times (w ⊙ mask) with w, mask [k,n]. The mask is fixed.
Var masked_matmul(const Var& x, const Var& w, const Tensor& mask);
/// a ⊙ x + b, elementwise (scalar broadcast as for add/mul).
Var affine(const Var& a, const Var& x, const Var& b);

/// Sum over one axis of a rank-1 or rank-2 tensor; drops that axis.
Var sum_over_axis(const Var& x, std::size_t axis);
Var sum(const Var& x);
Var mean(const Var& x);
/// Max-shifted log Σ exp over one axis; drops that axis.
Var logsumexp(const Var& x, std::size_t axis);
/// Max over one axis; the gradient flows only to the argmax (lowest index on ties).
Var max_over_axis(const Var& x, std::size_t axis);

// Explicit shape plumbing.
Var reshape(const Var& x, Shape shape);
/// [n] -> [rows, n] by repeating the vector.
Var broadcast_rows(const Var& v, std::size_t rows);
/// Columns [begin, end) of a rank-2 tensor.
Var cols(const Var& x, std::size_t begin, std::size_t end);
Var concat_cols(const Var& a, const Var& b);
/// out[:, j] = x[:, perm[j]].
Var permute_cols(const Var& x, std::span<const std::size_t> perm);
/// [n, d] -> [n*k, d]; row i is copied to rows i*k .. i*k+k-1.
Var repeat_rows(const Var& x, std::size_t k);
Var transpose(const Var& x);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator-(const Var& a) { return neg(a); }

/// Required op kinds, addressable by tag for generic gradient checking.
enum class OpKind {
  Add,
  Sub,
  Mul,
  Matmul,
  Exp,
  Log,
  Sigmoid,
  LogSigmoid,
  Softplus,
  Tanh,
  Neg,
  SumOverAxis,
  MaskedMatmul,
  Affine,
};

const char* op_name(OpKind kind);
std::vector<OpKind> all_op_kinds();
/// Number of tensor inputs taken by `kind` (mask counts for MaskedMatmul).
std::size_t op_arity(OpKind kind);

/// Dispatches to the typed op. MaskedMatmul takes (x, w, mask) with the
/// mask's value used as a constant; SumOverAxis reads `axis`.
Var forward_op(OpKind kind, std::span<const Var> inputs, std::size_t axis = 0);

}  // namespace dqlab
