#include "dqlab/dequant.hpp"

#include <cmath>
#include <string>

#include "dqlab/error.hpp"
#include "dqlab/ops.hpp"

namespace dqlab {
namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

Tensor repeat_tensor_rows(const Tensor& x, std::size_t k) {
  const std::size_t n = x.dim(0), d = x.dim(1);
  Tensor out(Shape{n * k, d});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t s = 0; s < k; ++s)
      for (std::size_t j = 0; j < d; ++j) out[(i * k + s) * d + j] = x[i * d + j];
  return out;
}

void check_finite(const Var& log_q, std::size_t k, const char* who) {
  const Tensor& t = log_q.value();
  for (std::size_t i = 0; i < t.numel(); ++i) {
    if (!std::isfinite(t[i])) {
      throw NumericError(std::string(who) + ": non-finite log q for datapoint " + std::to_string(i / k),
                         static_cast<long long>(i / k));
    }
  }
}

// Maps z through the clamped sigmoid and finishes log q with the sigmoid
// Jacobian: log q(u) = log q(z) - Σ [log u + log(1 - u)].
DequantSample finish(Tape& tape, const Tensor& x, std::size_t k, const Var& z, const Var& log_qz, const char* who) {
  Var u = clamp(sigmoid(z), kClampEps, 1.0 - kClampEps);
  Var log_jac = sum_over_axis(add(log_sigmoid(z), log_sigmoid(neg(z))), 1);
  Var log_q = sub(log_qz, log_jac);
  check_finite(log_q, k, who);
  Var v = add(tape.constant(repeat_tensor_rows(x, k)), u);
  return {u, v, log_q};
}

void check_shapes(const Tensor& x, std::size_t k, const Tensor& noise, std::size_t dim) {
  if (x.rank() != 2 || x.dim(1) != dim) throw StructuralError("dequantizer: x must be [N, " + std::to_string(dim) + "]");
  if (noise.rank() != 2 || noise.dim(0) != x.dim(0) * k || noise.dim(1) != dim) {
    throw StructuralError("dequantizer: noise shape " + shape_str(noise.shape()) + " does not match [N*K, D]");
  }
}

}  // namespace

DequantSample Dequantizer::sample(Tape& tape, const Tensor& x, std::size_t k, Rng& rng) {
  if (k == 0) throw StructuralError("dequantizer: K must be >= 1");
  const Shape shape{x.dim(0) * k, x.dim(1)};
  Tensor noise = uniform_noise() ? uniform_tensor(shape, kClampEps, 1.0 - kClampEps, rng) : normal_tensor(shape, rng);
  return from_noise(tape, x, k, noise);
}

// ---------------------------------------------------------------------------

DequantSample UniformDequantizer::from_noise(Tape& tape, const Tensor& x, std::size_t k, const Tensor& noise) {
  check_shapes(x, k, noise, x.dim(1));
  Var u = tape.constant(noise);
  Var v = add(tape.constant(repeat_tensor_rows(x, k)), u);
  return {u, v, tape.constant(Tensor(Shape{noise.dim(0)}))};
}

// ---------------------------------------------------------------------------

ContextNet::ContextNet(std::size_t dim, int bit_depth, std::size_t hidden, std::size_t width, const std::string& name,
                       Rng& rng)
    : inv_range_(1.0 / (std::ldexp(1.0, bit_depth) - 1.0)), width_(width), net_(dim, {hidden}, width, name, rng) {}

Var ContextNet::forward(Tape& tape, const Tensor& x, std::size_t k) {
  Tensor scaled = x;
  for (double& v : scaled.data()) v *= inv_range_;
  Var h = net_.forward(tape, tape.constant(std::move(scaled)));
  return k == 1 ? h : repeat_rows(h, k);
}

ConditionalBase::ConditionalBase(std::size_t dim_, std::size_t context, const std::string& name, Rng& rng)
    : dim(dim_), head(context, 2 * dim_, name, rng, true) {}

std::pair<Var, Var> ConditionalBase::draw(Tape& tape, const Var& h, const Var& noise) {
  Var out = head.forward(tape, h);
  Var mu = cols(out, 0, dim);
  Var log_sigma = cols(out, dim, 2 * dim);
  Var eps = add(mu, mul(exp(log_sigma), noise));
  Var per_dim = sub(scale(square(noise), -0.5), log_sigma);
  return {eps, shift(sum_over_axis(per_dim, 1), -static_cast<double>(dim) * kHalfLog2Pi)};
}

// ---------------------------------------------------------------------------

LogitNormalDequantizer::LogitNormalDequantizer(std::size_t dim, const DequantOptions& opts, Rng& rng,
                                               const std::string& name)
    : dim_(dim),
      context_(dim, opts.bit_depth, opts.context_hidden, opts.context, name + ".context", rng),
      head_(opts.context, 2 * dim, name + ".head", rng, true) {}

DequantSample LogitNormalDequantizer::from_noise(Tape& tape, const Tensor& x, std::size_t k, const Tensor& noise) {
  check_shapes(x, k, noise, dim_);
  Var h = context_.forward(tape, x, k);
  Var out = head_.forward(tape, h);
  Var mu = cols(out, 0, dim_);
  Var log_sigma = cols(out, dim_, 2 * dim_);
  for (double s : log_sigma.value().data())
    if (!std::isfinite(s)) throw NumericError("logit_normal: non-finite conditioning output");
  Var eps = tape.constant(noise);
  Var z = add(mu, mul(exp(log_sigma), eps));
  Var per_dim = sub(scale(square(eps), -0.5), log_sigma);
  Var log_qz = shift(sum_over_axis(per_dim, 1), -static_cast<double>(dim_) * kHalfLog2Pi);
  return finish(tape, x, k, z, log_qz, "logit_normal");
}

void LogitNormalDequantizer::collect(nn::ParamList& out) {
  context_.collect(out);
  head_.collect(out);
}

// ---------------------------------------------------------------------------

BipartiteFlowDequantizer::BipartiteFlowDequantizer(std::size_t dim, const DequantOptions& opts, Rng& rng,
                                                   const std::string& name)
    : dim_(dim),
      split_((dim + 1) / 2),
      context_(dim, opts.bit_depth, opts.context_hidden, opts.context, name + ".context", rng),
      base_(dim, opts.context, name + ".base", rng) {
  if (dim < 2) throw ConfigError("bipartite dequantizer needs D >= 2");
  for (std::size_t l = 0; l < opts.layers; ++l) {
    nets_.emplace_back(split_ + opts.context, std::vector<std::size_t>{opts.hidden, opts.hidden}, 2 * (dim - split_),
                       name + ".coupling" + std::to_string(l), rng, true);
  }
}

std::pair<Var, Var> BipartiteFlowDequantizer::transform(Tape& tape, const Var& h, const Var& eps) {
  const std::size_t rest = dim_ - split_;
  std::vector<std::size_t> rev(dim_);
  for (std::size_t i = 0; i < dim_; ++i) rev[i] = dim_ - 1 - i;
  Var z = eps;
  Var log_det = tape.constant(Tensor(Shape{eps.shape()[0]}));
  for (auto& net : nets_) {
    Var z1 = cols(z, 0, split_);
    Var out = net.forward(tape, concat_cols(z1, h));
    Var log_s = log_sigmoid(shift(cols(out, 0, rest), 2.0));
    Var s = exp(log_s);
    const Tensor& sv = s.value();
    for (std::size_t i = 0; i < sv.numel(); ++i)
      if (!(sv[i] > 0.0) || !std::isfinite(sv[i]))
        throw NumericError("bipartite coupling scale underflowed or is non-finite at row " + std::to_string(i / rest));
    Var z2 = add(mul(s, cols(z, split_, dim_)), cols(out, rest, 2 * rest));
    z = permute_cols(concat_cols(z1, z2), rev);
    log_det = add(log_det, sum_over_axis(log_s, 1));
  }
  return {z, log_det};
}

Tensor BipartiteFlowDequantizer::inverse(const Tensor& h, const Tensor& z_in) {
  const std::size_t n = z_in.dim(0), rest = dim_ - split_;
  Tensor z = z_in;
  for (std::size_t l = nets_.size(); l-- > 0;) {
    Tensor unperm(Shape{n, dim_});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < dim_; ++j) unperm[i * dim_ + (dim_ - 1 - j)] = z[i * dim_ + j];
    Tape tape(false);
    Var z1 = cols(tape.constant(unperm), 0, split_);
    const Tensor out = nets_[l].forward(tape, concat_cols(z1, tape.constant(h))).value();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < rest; ++j) {
        const double s = 1.0 / (1.0 + std::exp(-(out[i * 2 * rest + j] + 2.0)));
        const double t = out[i * 2 * rest + rest + j];
        double& y = unperm[i * dim_ + split_ + j];
        y = (y - t) / s;
      }
    z = std::move(unperm);
  }
  return z;
}

DequantSample BipartiteFlowDequantizer::from_noise(Tape& tape, const Tensor& x, std::size_t k, const Tensor& noise) {
  check_shapes(x, k, noise, dim_);
  Var h = context(tape, x, k);
  auto [eps, log_base] = base_.draw(tape, h, tape.constant(noise));
  auto [z, log_det] = transform(tape, h, eps);
  return finish(tape, x, k, z, sub(log_base, log_det), "bipartite");
}

void BipartiteFlowDequantizer::collect(nn::ParamList& out) {
  context_.collect(out);
  base_.collect(out);
  for (auto& n : nets_) n.collect(out);
}

// ---------------------------------------------------------------------------

namespace {

// Degrees: eps_j has degree j+1, context units degree 0, hidden unit k degree
// k mod D. A unit connects to inputs of degree <= its own; output i reads
// hidden units of degree <= i, so it never sees eps_j for j >= i.
Tensor ard_input_mask(std::size_t dim, std::size_t context, std::size_t hidden) {
  Tensor m(Shape{dim + context, hidden});
  for (std::size_t in = 0; in < dim + context; ++in) {
    const std::size_t deg_in = in < dim ? in + 1 : 0;
    for (std::size_t k = 0; k < hidden; ++k) m.at(in, k) = deg_in <= k % dim ? 1.0 : 0.0;
  }
  return m;
}

Tensor ard_output_mask(std::size_t dim, std::size_t hidden) {
  Tensor m(Shape{hidden, 2 * dim});
  for (std::size_t k = 0; k < hidden; ++k)
    for (std::size_t o = 0; o < 2 * dim; ++o) m.at(k, o) = k % dim <= o % dim ? 1.0 : 0.0;
  return m;
}

}  // namespace

AutoregressiveDequantizer::AutoregressiveDequantizer(std::size_t dim, const DequantOptions& opts, Rng& rng,
                                                     const std::string& name)
    : dim_(dim),
      context_(dim, opts.bit_depth, opts.context_hidden, opts.context, name + ".context", rng),
      base_(dim, opts.context, name + ".base", rng),
      in_(ard_input_mask(dim, opts.context, opts.hidden), name + ".arm.in", rng),
      out_(ard_output_mask(dim, opts.hidden), name + ".arm.out", rng, true) {
  const Tensor c = connectivity();
  for (std::size_t j = 0; j < dim; ++j)
    for (std::size_t i = 0; i <= j; ++i)
      if (c.at(j, i) != 0.0) {
        throw StructuralError("ARD mask violation: output " + std::to_string(i) + " depends on input " +
                              std::to_string(j));
      }
}

Tensor AutoregressiveDequantizer::connectivity() const {
  const Tensor& a = in_.mask();
  const Tensor& b = out_.mask();
  const std::size_t hidden = a.dim(1);
  Tensor c(Shape{dim_, dim_});
  for (std::size_t j = 0; j < dim_; ++j)
    for (std::size_t k = 0; k < hidden; ++k) {
      if (a.at(j, k) == 0.0) continue;
      for (std::size_t o = 0; o < 2 * dim_; ++o) c.at(j, o % dim_) += b.at(k, o);
    }
  return c;
}

std::pair<Var, Var> AutoregressiveDequantizer::arm_outputs(Tape& tape, const Var& h, const Var& eps) {
  Var hidden = tanh(in_.forward(tape, concat_cols(eps, h)));
  Var out = out_.forward(tape, hidden);
  Var m = cols(out, 0, dim_);
  if (unit_scale_) return {m, tape.constant(Tensor(m.shape(), 1.0))};
  return {m, sigmoid(shift(cols(out, dim_, 2 * dim_), 2.0))};
}

std::pair<Var, Var> AutoregressiveDequantizer::transform(Tape& tape, const Var& h, const Var& eps) {
  Var hidden = tanh(in_.forward(tape, concat_cols(eps, h)));
  Var out = out_.forward(tape, hidden);
  Var m = cols(out, 0, dim_);
  if (unit_scale_) return {add(eps, m), tape.constant(Tensor(Shape{eps.shape()[0]}))};
  Var log_s = log_sigmoid(shift(cols(out, dim_, 2 * dim_), 2.0));
  return {add(mul(exp(log_s), eps), m), sum_over_axis(log_s, 1)};
}

DequantSample AutoregressiveDequantizer::from_noise(Tape& tape, const Tensor& x, std::size_t k, const Tensor& noise) {
  check_shapes(x, k, noise, dim_);
  Var h = context(tape, x, k);
  auto [eps, log_base] = base_.draw(tape, h, tape.constant(noise));
  auto [z, log_det] = transform(tape, h, eps);
  return finish(tape, x, k, z, sub(log_base, log_det), "ard");
}

void AutoregressiveDequantizer::collect(nn::ParamList& out) {
  context_.collect(out);
  base_.collect(out);
  in_.collect(out);
  out_.collect(out);
}

}  // namespace dqlab
