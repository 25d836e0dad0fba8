#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

#include "dqlab/density.hpp"
#include "dqlab/ops.hpp"
#include "oracles.hpp"

using namespace dqlab;

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

void randomize(const nn::ParamList& params, Rng& rng, double sd) {
  std::normal_distribution<double> n(0.0, sd);
  for (auto* p : params)
    for (double& w : p->value.data()) w += n(rng);
}

Tensor log_prob_of(DensityModel& m, const Tensor& v) {
  Tape tape(false);
  return m.log_prob(tape, tape.constant(v)).value();
}

// Gauss-Jordan inverse of a row-major n x n matrix.
std::vector<double> invert(std::vector<double> a, std::size_t n) {
  std::vector<double> inv(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) inv[i * n + i] = 1.0;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::fabs(a[r * n + c]) > std::fabs(a[piv * n + c])) piv = r;
    for (std::size_t k = 0; k < n; ++k) {
      std::swap(a[c * n + k], a[piv * n + k]);
      std::swap(inv[c * n + k], inv[piv * n + k]);
    }
    const double d = a[c * n + c];
    for (std::size_t k = 0; k < n; ++k) {
      a[c * n + k] /= d;
      inv[c * n + k] /= d;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c) continue;
      const double f = a[r * n + c];
      for (std::size_t k = 0; k < n; ++k) {
        a[r * n + k] -= f * a[c * n + k];
        inv[r * n + k] -= f * inv[c * n + k];
      }
    }
  }
  return inv;
}

// Covariance of a CovGaussianModel, materialized from its precision factor.
std::vector<double> covariance(const CovGaussianModel& m) {
  const std::size_t d = m.dim();
  const Tensor l = m.cholesky();
  std::vector<double> prec(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t k = 0; k < d; ++k) prec[i * d + j] += l.at(i, k) * l.at(j, k);
  return invert(prec, d);
}

FlowOptions flow_opts(std::size_t levels, std::size_t subflows) {
  FlowOptions o;
  o.levels = levels;
  o.subflows = subflows;
  o.hidden = 8;
  o.bit_depth = 1;
  return o;
}

}  // namespace

TEST_CASE("diagonal Gaussian hand example") {
  DiagGaussianModel m(2);
  const Tensor lp = log_prob_of(m, Tensor::matrix(1, 2, {0, 0}));
  CHECK(lp[0] == doctest::Approx(-1.8379).epsilon(1e-4));
  CHECK(lp[0] == doctest::Approx(-kLog2Pi).epsilon(1e-15));
}

TEST_CASE("full-covariance Gaussian matches a brute-force density") {
  Rng rng = make_rng(61);
  const std::size_t d = 3;
  CovGaussianModel cov(d);
  DiagGaussianModel diag(d);
  for (std::size_t i = 0; i < d; ++i) cov.mean.value[i] = diag.mean.value[i] = 0.3 * static_cast<double>(i) - 0.2;
  const Tensor v = normal_tensor({20, d}, rng);

  // L = I reduces to the diagonal model with unit scales.
  const Tensor a = log_prob_of(cov, v), b = log_prob_of(diag, v);
  for (std::size_t i = 0; i < 20; ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-14));

  randomize(cov.parameters(), rng, 0.6);
  const auto sigma = covariance(cov);
  const auto sigma_inv = invert(sigma, d);
  const double log_det = std::log(oracle::determinant(sigma, d));
  const Tensor lp = log_prob_of(cov, v);
  for (std::size_t r = 0; r < 20; ++r) {
    double quad = 0.0;
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j)
        quad += (v.at(r, i) - cov.mean.value[i]) * sigma_inv[i * d + j] * (v.at(r, j) - cov.mean.value[j]);
    const double brute = -0.5 * (static_cast<double>(d) * kLog2Pi + log_det + quad);
    CHECK(std::fabs(lp[r] - brute) < 1e-8);
  }
}

TEST_CASE("full-covariance Gaussian samples have the model moments") {
  Rng rng = make_rng(62);
  const std::size_t d = 3, n = 100000;
  CovGaussianModel cov(d);
  randomize(cov.parameters(), rng, 0.6);
  const auto sigma = covariance(cov);
  Rng draw = make_rng(63);
  const Tensor s = cov.sample(n, draw);
  std::vector<double> mean(d, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t i = 0; i < d; ++i) mean[i] += s.at(r, i) / static_cast<double>(n);
  for (std::size_t i = 0; i < d; ++i) {
    const double se = std::sqrt(sigma[i * d + i] / static_cast<double>(n));
    CHECK(std::fabs(mean[i] - cov.mean.value[i]) < 3 * se);
  }
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i; j < d; ++j) {
      double c = 0.0;
      for (std::size_t r = 0; r < n; ++r) c += (s.at(r, i) - mean[i]) * (s.at(r, j) - mean[j]);
      c /= static_cast<double>(n - 1);
      const double se =
          std::sqrt((sigma[i * d + i] * sigma[j * d + j] + sigma[i * d + j] * sigma[i * d + j]) / static_cast<double>(n));
      INFO("cov(" << i << ", " << j << ")");
      CHECK(std::fabs(c - sigma[i * d + j]) < 3 * se);
    }

  // With L = I both Gaussians turn the same noise into the same samples.
  CovGaussianModel id(d);
  DiagGaussianModel diag(d);
  Rng r1 = make_rng(64), r2 = make_rng(64);
  const Tensor a = id.sample(50, r1), b = diag.sample(50, r2);
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("exp(log_prob) integrates to 1 at D = 2 for every density model") {
  Rng rng = make_rng(65);
  const std::size_t res = 500;
  std::vector<std::unique_ptr<DensityModel>> models;
  models.push_back(std::make_unique<DiagGaussianModel>(2));
  models.push_back(std::make_unique<CovGaussianModel>(2));
  models.push_back(std::make_unique<FlowDensityModel>(2, flow_opts(1, 4), rng));
  models.push_back(std::make_unique<FlowDensityModel>(2, flow_opts(1, 1), rng));
  for (auto& m : models) {
    randomize(m->parameters(), rng, 0.25);
    // Box holding the preimage of latent [-6, 6]^2: for the Gaussians the
    // pre-affine range c +- 6r (c = r = 1 at one bit), for flows the bounding
    // box of the mapped square boundary.
    double lo = -5.0, hi = 7.0;
    if (auto* flow = dynamic_cast<FlowDensityModel*>(m.get())) {
      Tensor edge(Shape{4000, 2});
      for (std::size_t i = 0; i < 1000; ++i) {
        const double t = -6.0 + 12.0 * static_cast<double>(i) / 1000.0;
        const double pts[4][2] = {{t, -6.0}, {6.0, t}, {-t, 6.0}, {-6.0, -t}};
        for (std::size_t s = 0; s < 4; ++s) edge.at(4 * i + s, 0) = pts[s][0], edge.at(4 * i + s, 1) = pts[s][1];
      }
      const Tensor img = flow->from_latent(edge);
      lo = *std::min_element(img.data().begin(), img.data().end());
      hi = *std::max_element(img.data().begin(), img.data().end());
    }
    INFO(m->kind() << " on [" << lo << ", " << hi << ")^2");
    CHECK(oracle::grid_integral([&](const Tensor& v) { return log_prob_of(*m, v); }, lo, hi, res) ==
          doctest::Approx(1.0).epsilon(0.01));
  }
  const double lo = -5.0, hi = 7.0;
  BoxUniformModel box(2, 0.0, 2.0);
  CHECK(oracle::grid_integral([&](const Tensor& v) { return log_prob_of(box, v); }, lo, hi, 480) ==
        doctest::Approx(1.0).epsilon(1e-12));
  CHECK(log_prob_of(box, Tensor::matrix(1, 2, {0.5, 1.5}))[0] == doctest::Approx(std::log(0.25)).epsilon(1e-15));
}

TEST_CASE("flow latent map is invertible with the numerical log-det") {
  Rng rng = make_rng(66);
  FlowDensityModel flow(2, flow_opts(1, 3), rng);
  randomize(flow.parameters(), rng, 0.3);
  const Tensor v = normal_tensor({50, 2}, rng);
  auto [latent, log_det] = flow.to_latent(v);
  const Tensor back = flow.from_latent(latent);
  for (std::size_t i = 0; i < v.numel(); ++i) CHECK(std::fabs(back[i] - v[i]) < 1e-8);

  for (std::size_t r = 0; r < 5; ++r) {
    auto f = [&](const std::vector<double>& x) { return flow.to_latent(Tensor::matrix(1, 2, x)).first.values(); };
    const auto jac = oracle::numerical_jacobian(f, {v.at(r, 0), v.at(r, 1)});
    CHECK(std::fabs(std::log(std::fabs(oracle::determinant(jac, 2))) - log_det[r]) < 1e-5);
  }

  FlowDensityModel deep(4, flow_opts(2, 2), rng);
  randomize(deep.parameters(), rng, 0.3);
  const Tensor v4 = normal_tensor({30, 4}, rng);
  const Tensor back4 = deep.from_latent(deep.to_latent(v4).first);
  for (std::size_t i = 0; i < v4.numel(); ++i) CHECK(std::fabs(back4[i] - v4[i]) < 1e-8);
}

TEST_CASE("invertible linear mix") {
  Rng rng = make_rng(67);
  const std::size_t d = 4;
  std::vector<std::size_t> ident(d);
  std::iota(ident.begin(), ident.end(), 0);
  InvertibleLinearMix mix(ident, "mix");
  const Tensor w0 = mix.weight_matrix();
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) CHECK(w0.at(i, j) == (i == j ? 1.0 : 0.0));
  const Tensor z = normal_tensor({6, d}, rng);
  {
    Tape tape(false);
    auto [y, ld] = mix.forward(tape, tape.constant(z));
    for (std::size_t i = 0; i < z.numel(); ++i) CHECK(y.value()[i] == z[i]);
    CHECK(ld.value().item() == 0.0);
  }

  for (auto perm : {ident, std::vector<std::size_t>{3, 2, 1, 0}, std::vector<std::size_t>{1, 3, 0, 2}}) {
    InvertibleLinearMix m(perm, "mix");
    nn::ParamList params;
    m.collect(params);
    randomize(params, rng, 0.5);
    const Tensor w = m.weight_matrix();
    Tape tape(false);
    auto [y, ld] = m.forward(tape, tape.constant(z));
    CHECK(std::fabs(ld.value().item() - std::log(std::fabs(oracle::determinant(w.values(), d)))) < 1e-10);
    for (std::size_t r = 0; r < 6; ++r)
      for (std::size_t i = 0; i < d; ++i) {
        double expect = 0.0;
        for (std::size_t j = 0; j < d; ++j) expect += w.at(i, j) * z.at(r, j);
        CHECK(y.value().at(r, i) == doctest::Approx(expect).epsilon(1e-12));
      }
    const Tensor back = m.inverse(y.value());
    for (std::size_t i = 0; i < z.numel(); ++i) CHECK(std::fabs(back[i] - z[i]) < 1e-9);
  }
}

TEST_CASE("affine coupling log-det matches the numerical Jacobian") {
  Rng rng = make_rng(68);
  for (std::size_t d : {2u, 3u, 5u}) {
    AffineCoupling c(d, 8, "c", rng);
    nn::ParamList params;
    c.collect(params);
    {
      // Zeroed last layer: s = 2 * sigmoid(0) = 1, t = 0.
      const Tensor z = normal_tensor({3, d}, rng);
      Tape tape(false);
      auto [y, ld] = c.forward(tape, tape.constant(z));
      for (std::size_t i = 0; i < z.numel(); ++i) CHECK(y.value()[i] == z[i]);
      for (std::size_t r = 0; r < 3; ++r) CHECK(ld.value()[r] == 0.0);
    }
    randomize(params, rng, 0.5);
    const Tensor z = normal_tensor({1, d}, rng);
    auto f = [&](const std::vector<double>& x) {
      Tape t(false);
      return c.forward(t, t.constant(Tensor::matrix(1, d, x))).first.value().values();
    };
    Tape tape(false);
    auto [y, ld] = c.forward(tape, tape.constant(z));
    const auto jac = oracle::numerical_jacobian(f, z.values());
    INFO("d = " << d);
    CHECK(std::fabs(std::log(std::fabs(oracle::determinant(jac, d))) - ld.value()[0]) < 1e-5);
    const Tensor back = c.inverse(y.value());
    for (std::size_t i = 0; i < d; ++i) CHECK(std::fabs(back[i] - z[i]) < 1e-10);
  }
}

TEST_CASE("factor-out flow at D = 4 is normalized") {
  // Importance sampling through the latent map: latent ~ N(0, diag(4, 4, 1, 1))
  // (the factored-out half first, drawn wider than any prior scale here), so
  // g(v) = N(latent) * |d latent / dv| and E_g[p / g] = 1.
  Rng rng = make_rng(69);
  FlowDensityModel flow(4, flow_opts(2, 2), rng);
  randomize(flow.parameters(), rng, 0.3);
  const std::size_t n = 100000;
  Rng draw = make_rng(70);
  Tensor latent = normal_tensor({n, 4}, draw);
  for (std::size_t r = 0; r < n; ++r) latent.at(r, 0) *= 2.0, latent.at(r, 1) *= 2.0;
  const Tensor v = flow.from_latent(latent);
  const Tensor log_det = flow.to_latent(v).second;
  const Tensor lp = log_prob_of(flow, v);
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    double log_g = log_det[r] - 2.0 * kLog2Pi - 2.0 * std::log(2.0);
    for (std::size_t j = 0; j < 4; ++j) {
      const double e = j < 2 ? latent.at(r, j) / 2.0 : latent.at(r, j);
      log_g -= 0.5 * e * e;
    }
    total += std::exp(lp[r] - log_g);
  }
  CHECK(total / static_cast<double>(n) == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("flow samples have finite log density and are reproducible") {
  Rng rng = make_rng(71);
  FlowDensityModel flow(4, flow_opts(2, 3), rng);
  randomize(flow.parameters(), rng, 0.3);
  Rng r1 = make_rng(72), r2 = make_rng(72);
  const Tensor s = flow.sample(10000, r1);
  const Tensor lp = log_prob_of(flow, s);
  std::size_t bad = 0;
  for (double x : lp.data()) bad += !std::isfinite(x);
  CHECK(bad == 0);
  const Tensor s2 = flow.sample(10000, r2);
  for (std::size_t i = 0; i < s.numel(); ++i) REQUIRE(std::bit_cast<std::uint64_t>(s[i]) == std::bit_cast<std::uint64_t>(s2[i]));
}
