// Independent reference computations shared by the test binaries: central
// finite differences, small dense determinants, quadrature helpers.
#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "dqlab/ops.hpp"
#include "dqlab/tape.hpp"
#include "dqlab/tensor.hpp"

namespace oracle {

using dqlab::Tensor;
using dqlab::Var;

/// Scalar function of several tensor inputs, written against the tape API so
/// the same code yields both the reverse-mode and the numerical gradient.
using Graph = std::function<Var(dqlab::Tape&, const std::vector<Var>&)>;

inline double evaluate(const Graph& g, const std::vector<Tensor>& inputs) {
  dqlab::Tape tape(false);
  std::vector<Var> vars;
  for (const auto& t : inputs) vars.push_back(tape.constant(t));
  return g(tape, vars).value().item();
}

inline std::vector<Tensor> reverse_grads(const Graph& g, const std::vector<Tensor>& inputs) {
  std::vector<dqlab::Parameter> params;
  params.reserve(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) params.emplace_back("in" + std::to_string(i), inputs[i]);
  dqlab::Tape tape;
  std::vector<Var> vars;
  for (auto& p : params) vars.push_back(tape.param(p));
  tape.backward(g(tape, vars));
  std::vector<Tensor> out;
  for (auto& p : params) out.push_back(p.grad);
  return out;
}

inline std::vector<Tensor> central_grads(const Graph& g, const std::vector<Tensor>& inputs, double h = 1e-5) {
  std::vector<Tensor> out;
  std::vector<Tensor> work = inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Tensor grad(inputs[i].shape());
    for (std::size_t j = 0; j < inputs[i].numel(); ++j) {
      const double x0 = work[i][j];
      work[i][j] = x0 + h;
      const double fp = evaluate(g, work);
      work[i][j] = x0 - h;
      const double fm = evaluate(g, work);
      work[i][j] = x0;
      grad[j] = (fp - fm) / (2.0 * h);
    }
    out.push_back(grad);
  }
  return out;
}

/// ||a - b|| / max(||a||, ||b||), or the absolute norm when both are tiny.
inline double rel_err(const Tensor& a, const Tensor& b) {
  double d = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    d += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::sqrt(std::max(na, nb));
  return scale < 1e-8 ? std::sqrt(d) : std::sqrt(d) / scale;
}

/// Worst relative error over all inputs between reverse-mode and central differences.
inline double gradcheck(const Graph& g, const std::vector<Tensor>& inputs, double h = 1e-5) {
  const auto ad = reverse_grads(g, inputs);
  const auto fd = central_grads(g, inputs, h);
  double worst = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) worst = std::max(worst, rel_err(ad[i], fd[i]));
  return worst;
}

/// Determinant by Gaussian elimination with partial pivoting (row-major n x n).
inline double determinant(std::vector<double> a, std::size_t n) {
  double det = 1.0;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::fabs(a[r * n + c]) > std::fabs(a[piv * n + c])) piv = r;
    if (a[piv * n + c] == 0.0) return 0.0;
    if (piv != c) {
      for (std::size_t k = 0; k < n; ++k) std::swap(a[c * n + k], a[piv * n + k]);
      det = -det;
    }
    det *= a[c * n + c];
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a[r * n + c] / a[c * n + c];
      for (std::size_t k = c; k < n; ++k) a[r * n + k] -= f * a[c * n + k];
    }
  }
  return det;
}

/// Jacobian of a vector map R^n -> R^n by central differences, row-major J[i][j] = df_i/dx_j.
inline std::vector<double> numerical_jacobian(const std::function<std::vector<double>(const std::vector<double>&)>& f,
                                              std::vector<double> x, double h = 1e-5) {
  const std::size_t n = x.size();
  std::vector<double> jac(n * n);
  for (std::size_t j = 0; j < n; ++j) {
    const double x0 = x[j];
    x[j] = x0 + h;
    const auto fp = f(x);
    x[j] = x0 - h;
    const auto fm = f(x);
    x[j] = x0;
    for (std::size_t i = 0; i < n; ++i) jac[i * n + j] = (fp[i] - fm[i]) / (2.0 * h);
  }
  return jac;
}

/// Midpoint-rule integral of exp(log_density) over [lo, hi)^2 with res^2
/// cells. `log_density` takes an [m, 2] tensor of points and returns [m].
inline double grid_integral(const std::function<Tensor(const Tensor&)>& log_density, double lo, double hi,
                            std::size_t res) {
  const double h = (hi - lo) / static_cast<double>(res);
  double total = 0.0;
  for (std::size_t i = 0; i < res; ++i) {
    Tensor pts(dqlab::Shape{res, 2});
    for (std::size_t j = 0; j < res; ++j) {
      pts.at(j, 0) = lo + (static_cast<double>(i) + 0.5) * h;
      pts.at(j, 1) = lo + (static_cast<double>(j) + 0.5) * h;
    }
    const Tensor lp = log_density(pts);
    for (std::size_t j = 0; j < res; ++j) total += std::exp(lp[j]);
  }
  return total * h * h;
}

}  // namespace oracle
