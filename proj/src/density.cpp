#include "dqlab/density.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <numeric>

#include "dqlab/error.hpp"
#include "dqlab/quantize.hpp"

namespace dqlab {
namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMat> mat(const Tensor& t) { return {t.data().data(), Eigen::Index(t.dim(0)), Eigen::Index(t.dim(1))}; }
Eigen::Map<RowMat> mat(Tensor& t) { return {t.data().data(), Eigen::Index(t.dim(0)), Eigen::Index(t.dim(1))}; }

Tensor take_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  const std::size_t r = x.dim(0), c = x.dim(1), w = end - begin;
  Tensor out(Shape{r, w});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = x[i * c + begin + j];
  return out;
}

Tensor join_cols(const Tensor& a, const Tensor& b) {
  const std::size_t r = a.dim(0), ca = a.dim(1), cb = b.dim(1), c = ca + cb;
  Tensor out(Shape{r, c});
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < ca; ++j) out[i * c + j] = a[i * ca + j];
    for (std::size_t j = 0; j < cb; ++j) out[i * c + ca + j] = b[i * cb + j];
  }
  return out;
}

Tensor strict_lower_mask(std::size_t d) {
  Tensor m(Shape{d, d});
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < i; ++j) m.at(i, j) = 1.0;
  return m;
}

Tensor strict_upper_mask(std::size_t d) {
  Tensor m(Shape{d, d});
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i + 1; j < d; ++j) m.at(i, j) = 1.0;
  return m;
}

// d x d matrix with diag(exp(log_diag)) recorded on the tape.
Var diag_exp(Tape& tape, const Var& log_diag, std::size_t d) {
  return mul(broadcast_rows(exp(log_diag), d), tape.constant(Tensor::identity(d)));
}

std::vector<std::size_t> reversal(std::size_t d) {
  std::vector<std::size_t> p(d);
  for (std::size_t i = 0; i < d; ++i) p[i] = d - 1 - i;
  return p;
}

}  // namespace

Var standard_normal_log_prob(const Var& z) {
  const double d = static_cast<double>(z.shape()[1]);
  return shift(sum_over_axis(scale(square(z), -0.5), 1), -d * kHalfLog2Pi);
}

// ---------------------------------------------------------------------------

BoxUniformModel::BoxUniformModel(std::size_t dim, double lo, double hi) : dim_(dim), lo_(lo), hi_(hi) {
  if (!(hi > lo)) throw ConfigError("box_uniform requires hi > lo");
}

Var BoxUniformModel::log_prob(Tape& tape, const Var& v) {
  const Tensor& vv = v.value();
  const std::size_t n = vv.dim(0);
  const double inside = -static_cast<double>(dim_) * std::log(hi_ - lo_);
  Tensor out(Shape{n}, inside);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < dim_; ++j) {
      const double x = vv[i * dim_ + j];
      if (x < lo_ || x >= hi_) out[i] = -std::numeric_limits<double>::infinity();
    }
  return tape.constant(std::move(out));
}

Tensor BoxUniformModel::sample(std::size_t n, Rng& rng) { return uniform_tensor(Shape{n, dim_}, lo_, hi_, rng); }

// ---------------------------------------------------------------------------

DiagGaussianModel::DiagGaussianModel(std::size_t dim, const std::string& name)
    : mean(name + ".mean", Tensor(Shape{dim})), log_scale(name + ".log_scale", Tensor(Shape{dim})) {}

Var DiagGaussianModel::log_prob(Tape& tape, const Var& v) {
  const std::size_t n = v.shape()[0];
  Var mu = broadcast_rows(tape.param(mean), n);
  Var ls = broadcast_rows(tape.param(log_scale), n);
  Var z = mul(sub(v, mu), exp(neg(ls)));
  Var per_dim = sub(scale(square(z), -0.5), ls);
  return shift(sum_over_axis(per_dim, 1), -static_cast<double>(dim()) * kHalfLog2Pi);
}

Tensor DiagGaussianModel::sample(std::size_t n, Rng& rng) {
  const std::size_t d = dim();
  Tensor out = normal_tensor(Shape{n, d}, rng);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = mean.value[j] + std::exp(log_scale.value[j]) * out[i * d + j];
  return out;
}

void DiagGaussianModel::collect(nn::ParamList& out) {
  out.push_back(&mean);
  out.push_back(&log_scale);
}

// ---------------------------------------------------------------------------

CovGaussianModel::CovGaussianModel(std::size_t dim, const std::string& name)
    : mean(name + ".mean", Tensor(Shape{dim})),
      l_offdiag(name + ".l_offdiag", Tensor(Shape{dim, dim})),
      log_diag(name + ".log_diag", Tensor(Shape{dim})) {}

Var CovGaussianModel::log_prob(Tape& tape, const Var& v) {
  const std::size_t n = v.shape()[0], d = dim();
  Var off = mul(tape.param(l_offdiag), tape.constant(strict_lower_mask(d)));
  Var ld = tape.param(log_diag);
  Var chol = add(off, diag_exp(tape, ld, d));
  Var y = matmul(sub(v, broadcast_rows(tape.param(mean), n)), chol);
  Var quad = sum_over_axis(square(y), 1);
  return add(shift(scale(quad, -0.5), -static_cast<double>(d) * kHalfLog2Pi), sum(ld));
}

Tensor CovGaussianModel::cholesky() const {
  const std::size_t d = dim();
  Tensor l(Shape{d, d});
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < i; ++j) l.at(i, j) = l_offdiag.value.at(i, j);
    l.at(i, i) = std::exp(log_diag.value[i]);
  }
  return l;
}

Tensor CovGaussianModel::sample(std::size_t n, Rng& rng) {
  const std::size_t d = dim();
  Tensor eps = normal_tensor(Shape{n, d}, rng);
  const Tensor l = cholesky();
  // Rows x solve L^T x = eps, i.e. X^T = L^-T E^T.
  RowMat xt = mat(l).transpose().triangularView<Eigen::Upper>().solve(mat(eps).transpose());
  Tensor out(Shape{n, d});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = mean.value[j] + xt(Eigen::Index(j), Eigen::Index(i));
  return out;
}

void CovGaussianModel::collect(nn::ParamList& out) {
  out.push_back(&mean);
  out.push_back(&l_offdiag);
  out.push_back(&log_diag);
}

// ---------------------------------------------------------------------------

InvertibleLinearMix::InvertibleLinearMix(std::vector<std::size_t> perm, const std::string& name)
    : lower(name + ".lower", Tensor(Shape{perm.size(), perm.size()})),
      upper(name + ".upper", Tensor(Shape{perm.size(), perm.size()})),
      log_s(name + ".log_s", Tensor(Shape{perm.size()})),
      perm_(std::move(perm)),
      lower_mask_(strict_lower_mask(perm_.size())),
      upper_mask_(strict_upper_mask(perm_.size())) {}

std::pair<Var, Var> InvertibleLinearMix::forward(Tape& tape, const Var& z) {
  const std::size_t d = dim();
  Var l = add(mul(tape.param(lower), tape.constant(lower_mask_)), tape.constant(Tensor::identity(d)));
  Var ls = tape.param(log_s);
  Var u = add(mul(tape.param(upper), tape.constant(upper_mask_)), diag_exp(tape, ls, d));
  Tensor p(Shape{d, d});
  for (std::size_t i = 0; i < d; ++i) p.at(i, perm_[i]) = 1.0;
  Var w = matmul(tape.constant(std::move(p)), matmul(l, u));
  return {matmul(z, transpose(w)), sum(ls)};
}

Tensor InvertibleLinearMix::weight_matrix() const {
  const std::size_t d = dim();
  RowMat l = RowMat::Identity(d, d), u = RowMat::Zero(d, d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < i; ++j) l(i, j) = lower.value.at(i, j);
    for (std::size_t j = i + 1; j < d; ++j) u(i, j) = upper.value.at(i, j);
    u(i, i) = std::exp(log_s.value[i]);
  }
  RowMat lu = l * u;
  Tensor w(Shape{d, d});
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) w.at(i, j) = lu(Eigen::Index(perm_[i]), Eigen::Index(j));
  return w;
}

Tensor InvertibleLinearMix::inverse(const Tensor& y) const {
  const std::size_t n = y.dim(0), d = dim();
  RowMat l = RowMat::Identity(d, d), u = RowMat::Zero(d, d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < i; ++j) l(i, j) = lower.value.at(i, j);
    for (std::size_t j = i + 1; j < d; ++j) u(i, j) = upper.value.at(i, j);
    u(i, i) = std::exp(log_s.value[i]);
  }
  // Columns of A are P^T y for each row y.
  RowMat a(d, n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t i = 0; i < d; ++i) a(Eigen::Index(perm_[i]), Eigen::Index(r)) = y[r * d + i];
  RowMat b = l.triangularView<Eigen::UnitLower>().solve(a);
  RowMat zt = u.triangularView<Eigen::Upper>().solve(b);
  Tensor out(Shape{n, d});
  mat(out) = zt.transpose();
  return out;
}

void InvertibleLinearMix::collect(nn::ParamList& out) {
  out.push_back(&lower);
  out.push_back(&upper);
  out.push_back(&log_s);
}

// ---------------------------------------------------------------------------

AffineCoupling::AffineCoupling(std::size_t dim, std::size_t hidden, const std::string& name, Rng& rng)
    : dim_(dim), split_((dim + 1) / 2), net_(split_, {hidden, hidden}, 2 * (dim - split_), name + ".net", rng, true) {
  if (dim < 2) throw ConfigError("coupling layer needs at least 2 dimensions");
}

std::pair<Var, Var> AffineCoupling::forward(Tape& tape, const Var& z) {
  const std::size_t rest = dim_ - split_;
  Var z1 = cols(z, 0, split_);
  Var z2 = cols(z, split_, dim_);
  Var out = net_.forward(tape, z1);
  Var log_s = shift(log_sigmoid(cols(out, 0, rest)), kLn2);
  Var y2 = add(mul(exp(log_s), z2), cols(out, rest, 2 * rest));
  return {concat_cols(z1, y2), sum_over_axis(log_s, 1)};
}

Tensor AffineCoupling::inverse(const Tensor& y) {
  const std::size_t n = y.dim(0), rest = dim_ - split_;
  Tape tape(false);
  Tensor y1 = take_cols(y, 0, split_);
  const Tensor out = net_.forward(tape, tape.constant(y1)).value();
  Tensor z2(Shape{n, rest});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < rest; ++j) {
      const double raw = out[i * 2 * rest + j];
      const double t = out[i * 2 * rest + rest + j];
      const double s = 2.0 / (1.0 + std::exp(-raw));
      z2[i * rest + j] = (y[i * dim_ + split_ + j] - t) / s;
    }
  return join_cols(y1, z2);
}

// ---------------------------------------------------------------------------

SplitPrior::SplitPrior(std::size_t keep, std::size_t drop, std::size_t hidden, const std::string& name, Rng& rng)
    : drop_(drop), net_(keep, {hidden}, 2 * drop, name + ".net", rng, true) {}

Var SplitPrior::log_prob(Tape& tape, const Var& kept, const Var& dropped) {
  Var out = net_.forward(tape, kept);
  Var mu = cols(out, 0, drop_);
  Var log_sigma = cols(out, drop_, 2 * drop_);
  Var z = mul(sub(dropped, mu), exp(neg(log_sigma)));
  Var per_dim = sub(scale(square(z), -0.5), log_sigma);
  return shift(sum_over_axis(per_dim, 1), -static_cast<double>(drop_) * kHalfLog2Pi);
}

Tensor SplitPrior::from_noise(const Tensor& kept, const Tensor& noise) {
  Tape tape(false);
  const Tensor out = net_.forward(tape, tape.constant(kept)).value();
  const std::size_t n = kept.dim(0);
  Tensor dropped(Shape{n, drop_});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < drop_; ++j) {
      const double mu = out[i * 2 * drop_ + j];
      const double sigma = std::exp(out[i * 2 * drop_ + drop_ + j]);
      dropped[i * drop_ + j] = mu + sigma * noise[i * drop_ + j];
    }
  return dropped;
}

// ---------------------------------------------------------------------------

FlowDensityModel::FlowDensityModel(std::size_t dim, const FlowOptions& opts, Rng& rng, const std::string& name)
    : dim_(dim) {
  if (opts.levels < 1) throw ConfigError("flow needs at least one level");
  if (opts.bit_depth < 1) throw ConfigError("flow bit depth must be >= 1");
  shift_ = std::ldexp(1.0, opts.bit_depth) / 2.0;
  scale_ = shift_;
  std::size_t d = dim;
  for (std::size_t l = 0; l < opts.levels; ++l) {
    if (d < 2) throw ConfigError("flow level " + std::to_string(l) + " would have fewer than 2 dimensions");
    Level level;
    level.dim = d;
    const std::string lname = name + ".level" + std::to_string(l);
    for (std::size_t s = 0; s < opts.subflows; ++s) {
      const std::string sname = lname + ".sub" + std::to_string(s);
      level.mixes.emplace_back(reversal(d), sname + ".mix");
      level.couplings.emplace_back(d, opts.hidden, sname + ".coupling", rng);
    }
    if (l + 1 < opts.levels) {
      level.factor_out = true;
      level.keep = (d + 1) / 2;
      level.prior = SplitPrior(level.keep, d - level.keep, opts.hidden, lname + ".prior", rng);
      d = level.keep;
    }
    levels_.push_back(std::move(level));
  }
}

FlowDensityModel::Encoded FlowDensityModel::encode(Tape& tape, const Var& v) {
  const std::size_t n = v.shape()[0];
  Encoded e;
  Var z = dqlab::scale(dqlab::shift(v, -shift_), 1.0 / scale_);
  e.log_det = tape.constant(Tensor(Shape{n}, -static_cast<double>(dim_) * std::log(scale_)));
  for (auto& level : levels_) {
    for (std::size_t s = 0; s < level.mixes.size(); ++s) {
      auto [zm, ld_mix] = level.mixes[s].forward(tape, z);
      auto [zc, ld_cpl] = level.couplings[s].forward(tape, zm);
      z = zc;
      e.log_det = add(add(e.log_det, ld_mix), ld_cpl);
    }
    if (level.factor_out) {
      e.kept.push_back(cols(z, 0, level.keep));
      e.dropped.push_back(cols(z, level.keep, level.dim));
      z = e.kept.back();
    }
  }
  e.z = z;
  return e;
}

Var FlowDensityModel::log_prob(Tape& tape, const Var& v) {
  if (v.shape().size() != 2 || v.shape()[1] != dim_) throw StructuralError("flow log_prob: bad input shape");
  Encoded e = encode(tape, v);
  Var lp = add(standard_normal_log_prob(e.z), e.log_det);
  std::size_t k = 0;
  for (auto& level : levels_) {
    if (!level.factor_out) continue;
    lp = add(lp, level.prior.log_prob(tape, e.kept[k], e.dropped[k]));
    ++k;
  }
  return lp;
}

Tensor FlowDensityModel::decode(Tensor z, const std::vector<Tensor>& parts, bool noise) {
  std::size_t k = parts.size();
  for (std::size_t l = levels_.size(); l-- > 0;) {
    Level& level = levels_[l];
    if (level.factor_out) {
      --k;
      Tensor dropped = noise ? level.prior.from_noise(z, parts[k]) : parts[k];
      z = join_cols(z, dropped);
    }
    for (std::size_t s = level.mixes.size(); s-- > 0;) {
      z = level.couplings[s].inverse(z);
      z = level.mixes[s].inverse(z);
    }
  }
  for (double& x : z.data()) x = x * scale_ + shift_;
  return z;
}

Tensor FlowDensityModel::sample(std::size_t n, Rng& rng) {
  const std::size_t final_dim = levels_.back().dim;
  Tensor z = normal_tensor(Shape{n, final_dim}, rng);
  std::vector<Tensor> noise;
  for (auto& level : levels_)
    if (level.factor_out) noise.push_back(Tensor(Shape{n, level.dim - level.keep}));
  for (std::size_t k = noise.size(); k-- > 0;) noise[k] = normal_tensor(noise[k].shape(), rng);
  return decode(std::move(z), noise, true);
}

std::pair<Tensor, Tensor> FlowDensityModel::to_latent(const Tensor& v) {
  Tape tape(false);
  Encoded e = encode(tape, tape.constant(v));
  Tensor latent = e.dropped.empty() ? e.z.value() : e.dropped.front().value();
  for (std::size_t k = 1; k < e.dropped.size(); ++k) latent = join_cols(latent, e.dropped[k].value());
  if (!e.dropped.empty()) latent = join_cols(latent, e.z.value());
  return {latent, e.log_det.value()};
}

Tensor FlowDensityModel::from_latent(const Tensor& latent) {
  std::vector<Tensor> parts;
  std::size_t at = 0;
  for (auto& level : levels_) {
    if (!level.factor_out) continue;
    const std::size_t w = level.dim - level.keep;
    parts.push_back(take_cols(latent, at, at + w));
    at += w;
  }
  return decode(take_cols(latent, at, latent.dim(1)), parts, false);
}

void FlowDensityModel::collect(nn::ParamList& out) {
  for (auto& level : levels_) {
    for (std::size_t s = 0; s < level.mixes.size(); ++s) {
      level.mixes[s].collect(out);
      level.couplings[s].collect(out);
    }
    if (level.factor_out) level.prior.collect(out);
  }
}

}  // namespace dqlab
