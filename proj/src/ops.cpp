#include "dqlab/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "dqlab/error.hpp"

namespace dqlab {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

MapMat as_mat(Tensor& t, std::size_t r, std::size_t c) { return MapMat(t.data().data(), r, c); }
CMapMat as_mat(const Tensor& t, std::size_t r, std::size_t c) { return CMapMat(t.data().data(), r, c); }

inline double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double stable_softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

// Elementwise op with y = f(x), dy/dx = df(x, y).
template <class F, class DF>
Var unary(const Var& x, F f, DF df) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.numel(); ++i) out[i] = f(xv[i]);
  const std::size_t xid = x.id();
  return x.tape().record(std::move(out), {x}, [xid, df](Tape& t, std::size_t self) {
    const Tensor& xv = t.value(xid);
    const Tensor& yv = t.value(self);
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad(xid);
    for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * df(xv[i], yv[i]);
  });
}

enum class Bcast { None, LeftScalar, RightScalar };

Bcast check_elementwise(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return Bcast::None;
  if (a.is_scalar()) return Bcast::LeftScalar;
  if (b.is_scalar()) return Bcast::RightScalar;
  throw StructuralError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                        shape_str(b.shape()));
}

// Accumulates g (shape of the result) into the grad of an operand, summing when
// the operand was a broadcast scalar. `weight(i)` scales entry i.
template <class W>
void accumulate(Tape& t, std::size_t id, const Tensor& g, bool was_scalar, W weight) {
  Tensor& dst = t.grad(id);
  if (was_scalar) {
    double s = 0.0;
    for (std::size_t i = 0; i < g.numel(); ++i) s += g[i] * weight(i);
    dst[0] += s;
  } else {
    for (std::size_t i = 0; i < g.numel(); ++i) dst[i] += g[i] * weight(i);
  }
}

double elem(const Tensor& t, std::size_t i) { return t.is_scalar() ? t[0] : t[i]; }

void check_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw StructuralError(std::string(op) + ": expected rank-2 tensor, got " + shape_str(t.shape()));
}

}  // namespace

Var add(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Bcast bc = check_elementwise(av, bv, "add");
  Tensor out(bc == Bcast::LeftScalar ? bv.shape() : av.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = elem(av, i) + elem(bv, i);
  const std::size_t ia = a.id(), ib = b.id();
  const bool sa = bc == Bcast::LeftScalar, sb = bc == Bcast::RightScalar;
  return a.tape().record(std::move(out), {a, b}, [=](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    auto one = [](std::size_t) { return 1.0; };
    if (t.needs_grad(ia)) accumulate(t, ia, g, sa, one);
    if (t.needs_grad(ib)) accumulate(t, ib, g, sb, one);
  });
}

Var sub(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Bcast bc = check_elementwise(av, bv, "sub");
  Tensor out(bc == Bcast::LeftScalar ? bv.shape() : av.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = elem(av, i) - elem(bv, i);
  const std::size_t ia = a.id(), ib = b.id();
  const bool sa = bc == Bcast::LeftScalar, sb = bc == Bcast::RightScalar;
  return a.tape().record(std::move(out), {a, b}, [=](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.needs_grad(ia)) accumulate(t, ia, g, sa, [](std::size_t) { return 1.0; });
    if (t.needs_grad(ib)) accumulate(t, ib, g, sb, [](std::size_t) { return -1.0; });
  });
}

Var mul(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Bcast bc = check_elementwise(av, bv, "mul");
  Tensor out(bc == Bcast::LeftScalar ? bv.shape() : av.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = elem(av, i) * elem(bv, i);
  const std::size_t ia = a.id(), ib = b.id();
  const bool sa = bc == Bcast::LeftScalar, sb = bc == Bcast::RightScalar;
  return a.tape().record(std::move(out), {a, b}, [=](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& av = t.value(ia);
    const Tensor& bv = t.value(ib);
    if (t.needs_grad(ia)) accumulate(t, ia, g, sa, [&](std::size_t i) { return elem(bv, i); });
    if (t.needs_grad(ib)) accumulate(t, ib, g, sb, [&](std::size_t i) { return elem(av, i); });
  });
}

Var affine(const Var& a, const Var& x, const Var& b) { return add(mul(a, x), b); }

Var neg(const Var& x) {
  return unary(x, [](double v) { return -v; }, [](double, double) { return -1.0; });
}

Var exp(const Var& x) {
  return unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var log(const Var& x) {
  for (double v : x.value().data()) {
    if (!(v > 0.0)) throw DomainError("log of non-positive value " + std::to_string(v));
  }
  return unary(x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Var sigmoid(const Var& x) {
  return unary(x, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Var log_sigmoid(const Var& x) {
  return unary(
      x, [](double v) { return -stable_softplus(-v); }, [](double v, double) { return stable_sigmoid(-v); });
}

Var softplus(const Var& x) {
  return unary(x, stable_softplus, [](double v, double) { return stable_sigmoid(v); });
}

namespace {

// exp-based tanh; libm's tanh is several times slower. Below |v| = 0.25 the
// cancellation in 1 - t would cost digits, so libm handles that range.
double fast_tanh(double v) {
  const double a = std::fabs(v);
  if (a < 0.25) return std::tanh(v);
  if (a > 20.0) return std::copysign(1.0, v);
  const double t = std::exp(-2.0 * a);
  return std::copysign((1.0 - t) / (1.0 + t), v);
}

}  // namespace

Var tanh(const Var& x) {
  return unary(x, [](double v) { return fast_tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var square(const Var& x) {
  return unary(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Var scale(const Var& x, double c) {
  return unary(x, [c](double v) { return c * v; }, [c](double, double) { return c; });
}

Var shift(const Var& x, double c) {
  return unary(x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

Var clamp(const Var& x, double lo, double hi) {
  return unary(
      x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v < lo || v > hi) ? 0.0 : 1.0; });
}

Var matmul(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  check_rank2(av, "matmul");
  const std::size_t m = av.dim(0), k = av.dim(1);
  if (bv.rank() == 1) {
    if (bv.dim(0) != k) throw StructuralError("matmul: inner dims " + shape_str(av.shape()) + " x " + shape_str(bv.shape()));
    Tensor out(Shape{m});
    Eigen::Map<Eigen::VectorXd>(out.data().data(), m) =
        as_mat(av, m, k) * Eigen::Map<const Eigen::VectorXd>(bv.data().data(), k);
    const std::size_t ia = a.id(), ib = b.id();
    return a.tape().record(std::move(out), {a, b}, [=](Tape& t, std::size_t self) {
      Eigen::Map<const Eigen::VectorXd> g(t.grad(self).data().data(), m);
      Eigen::Map<const Eigen::VectorXd> bvec(t.value(ib).data().data(), k);
      if (t.needs_grad(ia)) as_mat(t.grad(ia), m, k).noalias() += g * bvec.transpose();
      if (t.needs_grad(ib)) {
        Eigen::Map<Eigen::VectorXd>(t.grad(ib).data().data(), k).noalias() +=
            as_mat(t.value(ia), m, k).transpose() * g;
      }
    });
  }
  check_rank2(bv, "matmul");
  if (bv.dim(0) != k) throw StructuralError("matmul: inner dims " + shape_str(av.shape()) + " x " + shape_str(bv.shape()));
  const std::size_t n = bv.dim(1);
  Tensor out(Shape{m, n});
  as_mat(out, m, n).noalias() = as_mat(av, m, k) * as_mat(bv, k, n);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [=](Tape& t, std::size_t self) {
    auto g = as_mat(static_cast<const Tensor&>(t.grad(self)), m, n);
    if (t.needs_grad(ia)) as_mat(t.grad(ia), m, k).noalias() += g * as_mat(t.value(ib), k, n).transpose();
    if (t.needs_grad(ib)) as_mat(t.grad(ib), k, n).noalias() += as_mat(t.value(ia), m, k).transpose() * g;
  });
}

Var masked_matmul(const Var& x, const Var& w, const Tensor& mask) {
  if (mask.shape() != w.shape()) {
    throw StructuralError("masked_matmul: mask shape " + shape_str(mask.shape()) + " vs weight " + shape_str(w.shape()));
  }
  Tensor wm = w.value();
  for (std::size_t i = 0; i < wm.numel(); ++i) wm[i] *= mask[i];
  // The masked weight is an intermediate, so W's gradient is G_wm ⊙ mask.
  const std::size_t iw = w.id();
  Var masked = w.tape().record(std::move(wm), {w}, [iw, mask](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gw = t.grad(iw);
    for (std::size_t i = 0; i < g.numel(); ++i) gw[i] += g[i] * mask[i];
  });
  return matmul(x, masked);
}

Var sum_over_axis(const Var& x, std::size_t axis) {
  const Tensor& xv = x.value();
  if (xv.rank() == 0 || xv.rank() > 2 || axis >= xv.rank()) {
    throw StructuralError("sum_over_axis: invalid axis " + std::to_string(axis) + " for " + shape_str(xv.shape()));
  }
  const std::size_t id = x.id();
  if (xv.rank() == 1) {
    double s = 0.0;
    for (double v : xv.data()) s += v;
    return x.tape().record(Tensor::scalar(s), {x}, [id](Tape& t, std::size_t self) {
      const double g = t.grad(self)[0];
      for (double& v : t.grad(id).data()) v += g;
    });
  }
  const std::size_t r = xv.dim(0), c = xv.dim(1);
  Tensor out(Shape{axis == 0 ? c : r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[axis == 0 ? j : i] += xv[i * c + j];
  return x.tape().record(std::move(out), {x}, [id, axis, r, c](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad(id);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += g[axis == 0 ? j : i];
  });
}

Var sum(const Var& x) {
  const Tensor& xv = x.value();
  double s = 0.0;
  for (double v : xv.data()) s += v;
  const std::size_t id = x.id();
  return x.tape().record(Tensor::scalar(s), {x}, [id](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    for (double& v : t.grad(id).data()) v += g;
  });
}

Var mean(const Var& x) {
  const double n = static_cast<double>(x.numel());
  if (n == 0) throw StructuralError("mean of empty tensor");
  return scale(sum(x), 1.0 / n);
}

namespace {

// Shared driver for reductions over one axis of a rank-1/2 tensor: `reduce`
// maps a strided lane to a value, `lane_grad` scatters the lane gradient.
struct Lanes {
  std::size_t count, length, lane_stride, elem_stride;
};

Lanes lanes_for(const Tensor& xv, std::size_t axis, const char* op) {
  if (xv.rank() == 0 || xv.rank() > 2 || axis >= xv.rank()) {
    throw StructuralError(std::string(op) + ": invalid axis " + std::to_string(axis) + " for " + shape_str(xv.shape()));
  }
  if (xv.rank() == 1) return {1, xv.dim(0), 0, 1};
  const std::size_t r = xv.dim(0), c = xv.dim(1);
  if (axis == 1) return {r, c, c, 1};
  return {c, r, 1, c};
}

Shape reduced_shape(const Tensor& xv, std::size_t axis) {
  if (xv.rank() == 1) return {};
  return {axis == 0 ? xv.dim(1) : xv.dim(0)};
}

}  // namespace

Var logsumexp(const Var& x, std::size_t axis) {
  const Tensor& xv = x.value();
  const Lanes L = lanes_for(xv, axis, "logsumexp");
  if (L.length == 0) throw StructuralError("logsumexp over empty axis");
  Tensor out(reduced_shape(xv, axis));
  for (std::size_t l = 0; l < L.count; ++l) {
    const double* p = xv.data().data() + l * L.lane_stride;
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < L.length; ++k) m = std::max(m, p[k * L.elem_stride]);
    if (!std::isfinite(m)) {
      out[l] = m;
      continue;
    }
    double s = 0.0;
    for (std::size_t k = 0; k < L.length; ++k) s += std::exp(p[k * L.elem_stride] - m);
    out[l] = m + std::log(s);
  }
  const std::size_t id = x.id();
  return x.tape().record(std::move(out), {x}, [id, L](Tape& t, std::size_t self) {
    const Tensor& xv = t.value(id);
    const Tensor& y = t.value(self);
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad(id);
    for (std::size_t l = 0; l < L.count; ++l) {
      if (!std::isfinite(y[l])) continue;
      for (std::size_t k = 0; k < L.length; ++k) {
        const std::size_t i = l * L.lane_stride + k * L.elem_stride;
        gx[i] += g[l] * std::exp(xv[i] - y[l]);
      }
    }
  });
}

Var max_over_axis(const Var& x, std::size_t axis) {
  const Tensor& xv = x.value();
  const Lanes L = lanes_for(xv, axis, "max_over_axis");
  if (L.length == 0) throw StructuralError("max_over_axis over empty axis");
  Tensor out(reduced_shape(xv, axis));
  std::vector<std::size_t> argmax(L.count);
  for (std::size_t l = 0; l < L.count; ++l) {
    std::size_t best = l * L.lane_stride;
    for (std::size_t k = 1; k < L.length; ++k) {
      const std::size_t i = l * L.lane_stride + k * L.elem_stride;
      if (xv[i] > xv[best]) best = i;
    }
    argmax[l] = best;
    out[l] = xv[best];
  }
  const std::size_t id = x.id();
  return x.tape().record(std::move(out), {x}, [id, argmax = std::move(argmax)](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad(id);
    for (std::size_t l = 0; l < argmax.size(); ++l) gx[argmax[l]] += g[l];
  });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  const std::size_t id = x.id();
  return x.tape().record(std::move(out), {x}, [id](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad(id);
    for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i];
  });
}

Var broadcast_rows(const Var& v, std::size_t rows) {
  const Tensor& vv = v.value();
  if (vv.rank() != 1) throw StructuralError("broadcast_rows expects rank-1, got " + shape_str(vv.shape()));
  const std::size_t n = vv.dim(0);
  Tensor out(Shape{rows, n});
  for (std::size_t r = 0; r < rows; ++r) std::copy(vv.data().begin(), vv.data().end(), out.data().begin() + r * n);
  const std::size_t id = v.id();
  return v.tape().record(std::move(out), {v}, [id, rows, n](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gv = t.grad(id);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < n; ++j) gv[j] += g[r * n + j];
  });
}

Var cols(const Var& x, std::size_t begin, std::size_t end) {
  const Tensor& xv = x.value();
  check_rank2(xv, "cols");
  const std::size_t r = xv.dim(0), c = xv.dim(1);
  if (begin > end || end > c) throw StructuralError("cols: range out of bounds");
  const std::size_t w = end - begin;
  Tensor out(Shape{r, w});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = xv[i * c + begin + j];
  const std::size_t id = x.id();
  return x.tape().record(std::move(out), {x}, [=](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad(id);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < w; ++j) gx[i * c + begin + j] += g[i * w + j];
  });
}

Var concat_cols(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  check_rank2(av, "concat_cols");
  check_rank2(bv, "concat_cols");
  if (av.dim(0) != bv.dim(0)) throw StructuralError("concat_cols: row count mismatch");
  const std::size_t r = av.dim(0), ca = av.dim(1), cb = bv.dim(1), c = ca + cb;
  Tensor out(Shape{r, c});
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < ca; ++j) out[i * c + j] = av[i * ca + j];
    for (std::size_t j = 0; j < cb; ++j) out[i * c + ca + j] = bv[i * cb + j];
  }
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [=](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.needs_grad(ia)) {
      Tensor& ga = t.grad(ia);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < ca; ++j) ga[i * ca + j] += g[i * c + j];
    }
    if (t.needs_grad(ib)) {
      Tensor& gb = t.grad(ib);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < cb; ++j) gb[i * cb + j] += g[i * c + ca + j];
    }
  });
}

Var permute_cols(const Var& x, std::span<const std::size_t> perm_in) {
  const Tensor& xv = x.value();
  check_rank2(xv, "permute_cols");
  const std::size_t r = xv.dim(0), c = xv.dim(1);
  if (perm_in.size() != c) throw StructuralError("permute_cols: permutation length mismatch");
  std::vector<std::size_t> perm(perm_in.begin(), perm_in.end());
  Tensor out(Shape{r, c});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = xv[i * c + perm[j]];
  const std::size_t id = x.id();
  return x.tape().record(std::move(out), {x}, [id, r, c, perm = std::move(perm)](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad(id);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) gx[i * c + perm[j]] += g[i * c + j];
  });
}

Var repeat_rows(const Var& x, std::size_t k) {
  const Tensor& xv = x.value();
  check_rank2(xv, "repeat_rows");
  const std::size_t r = xv.dim(0), c = xv.dim(1);
  Tensor out(Shape{r * k, c});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t s = 0; s < k; ++s)
      std::copy_n(xv.data().begin() + i * c, c, out.data().begin() + (i * k + s) * c);
  const std::size_t id = x.id();
  return x.tape().record(std::move(out), {x}, [=](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad(id);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t s = 0; s < k; ++s)
        for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += g[(i * k + s) * c + j];
  });
}

Var transpose(const Var& x) {
  const Tensor& xv = x.value();
  check_rank2(xv, "transpose");
  const std::size_t r = xv.dim(0), c = xv.dim(1);
  Tensor out(Shape{c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = xv[i * c + j];
  const std::size_t id = x.id();
  return x.tape().record(std::move(out), {x}, [=](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad(id);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += g[j * r + i];
  });
}

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Matmul: return "matmul";
    case OpKind::Exp: return "exp";
    case OpKind::Log: return "log";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::LogSigmoid: return "log_sigmoid";
    case OpKind::Softplus: return "softplus";
    case OpKind::Tanh: return "tanh";
    case OpKind::Neg: return "neg";
    case OpKind::SumOverAxis: return "sum_over_axis";
    case OpKind::MaskedMatmul: return "masked_matmul";
    case OpKind::Affine: return "affine";
  }
  return "?";
}

std::vector<OpKind> all_op_kinds() {
  return {OpKind::Add,     OpKind::Sub,        OpKind::Mul,      OpKind::Matmul, OpKind::Exp,
          OpKind::Log,     OpKind::Sigmoid,    OpKind::LogSigmoid, OpKind::Softplus, OpKind::Tanh,
          OpKind::Neg,     OpKind::SumOverAxis, OpKind::MaskedMatmul, OpKind::Affine};
}

std::size_t op_arity(OpKind kind) {
  switch (kind) {
    case OpKind::Add:
    case OpKind::Sub:
    case OpKind::Mul:
    case OpKind::Matmul: return 2;
    case OpKind::MaskedMatmul:
    case OpKind::Affine: return 3;
    default: return 1;
  }
}

Var forward_op(OpKind kind, std::span<const Var> in, std::size_t axis) {
  if (in.size() != op_arity(kind)) {
    throw StructuralError(std::string(op_name(kind)) + ": expected " + std::to_string(op_arity(kind)) + " inputs, got " +
                          std::to_string(in.size()));
  }
  switch (kind) {
    case OpKind::Add: return add(in[0], in[1]);
    case OpKind::Sub: return sub(in[0], in[1]);
    case OpKind::Mul: return mul(in[0], in[1]);
    case OpKind::Matmul: return matmul(in[0], in[1]);
    case OpKind::Exp: return exp(in[0]);
    case OpKind::Log: return log(in[0]);
    case OpKind::Sigmoid: return sigmoid(in[0]);
    case OpKind::LogSigmoid: return log_sigmoid(in[0]);
    case OpKind::Softplus: return softplus(in[0]);
    case OpKind::Tanh: return tanh(in[0]);
    case OpKind::Neg: return neg(in[0]);
    case OpKind::SumOverAxis: return sum_over_axis(in[0], axis);
    case OpKind::MaskedMatmul: return masked_matmul(in[0], in[1], in[2].value());
    case OpKind::Affine: return affine(in[0], in[1], in[2]);
  }
  throw StructuralError("unknown op kind");
}

}  // namespace dqlab
