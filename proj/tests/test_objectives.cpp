#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <bit>
#include <cmath>

#include "dqlab/error.hpp"
#include "dqlab/objectives.hpp"
#include "oracles.hpp"

using namespace dqlab;

namespace {

DiscreteBatch batch(std::size_t dim, int bits, std::vector<std::int32_t> v) { return DiscreteBatch(dim, bits, std::move(v)); }

DequantOptions small_opts(int bits) {
  DequantOptions o;
  o.layers = 2;
  o.hidden = 8;
  o.context = 4;
  o.context_hidden = 6;
  o.bit_depth = bits;
  return o;
}

// Shared log-weights [N, K] for one set of draws.
Tensor shared_weights(const Tensor& x, std::size_t k, Dequantizer& dq, DensityModel& p, std::uint64_t seed) {
  Tape tape(false);
  Rng rng = make_rng(seed);
  return log_weights(tape, x, k, dq, p, rng).value();
}

std::vector<double> reduce(const Tensor& w, const std::function<Var(const Var&)>& f) {
  Tape tape(false);
  return f(tape.constant(w)).value().values();
}

double log_mean_exp(const Tensor& w, std::size_t row) {
  const std::size_t k = w.dim(1);
  double m = -INFINITY;
  for (std::size_t j = 0; j < k; ++j) m = std::max(m, w.at(row, j));
  double s = 0.0;
  for (std::size_t j = 0; j < k; ++j) s += std::exp(w.at(row, j) - m);
  return m + std::log(s / static_cast<double>(k));
}

// log of the standard-normal CDF difference Phi(b) - Phi(a).
double log_gauss_bin(double a, double b) { return std::log(0.5 * (std::erfc(-b / std::sqrt(2.0)) - std::erfc(-a / std::sqrt(2.0)))); }

}  // namespace

TEST_CASE("a constant integrand gives log(1/4) under every objective") {
  BoxUniformModel box(2, 0.0, 2.0);
  UniformDequantizer uq;
  const Tensor x = Tensor::matrix(4, 2, {0, 0, 0, 1, 1, 0, 1, 1});
  Rng rng = make_rng(81);
  const double quarter = std::log(0.25);
  for (ObjectiveSpec spec : {ObjectiveSpec{ObjectiveKind::Vi, 1, 0.0}, ObjectiveSpec{ObjectiveKind::Iw, 8, 0.0},
                             ObjectiveSpec{ObjectiveKind::Renyi, 8, 0.5}, ObjectiveSpec{ObjectiveKind::Renyi, 8, -3.0},
                             ObjectiveSpec{ObjectiveKind::VrMax, 8, 0.0}}) {
    Tape tape(false);
    const Tensor b = objective_bound(tape, spec, x, uq, box, rng).value();
    INFO(objective_name(spec.kind) << " alpha " << spec.alpha);
    for (double v : b.data()) CHECK(v == doctest::Approx(quarter).epsilon(1e-14));
  }
  const BoundEstimate est = evaluate_loglik(batch(2, 1, {0, 0, 1, 1}), uq, box, 16, 5);
  CHECK(est.nll_bits() == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(est.gap_bits() == doctest::Approx(0.0).scale(1.0).epsilon(1e-14));
}

TEST_CASE("renyi family on shared draws") {
  Rng rng = make_rng(82);
  LogitNormalDequantizer dq(2, small_opts(1), rng);
  for (auto* p : dq.parameters())
    for (double& w : p->value.data()) w += 0.4 * std::normal_distribution<double>()(rng);
  DiagGaussianModel p(2);
  p.mean.value.fill(0.8);
  const Tensor x = Tensor::matrix(3, 2, {0, 1, 1, 0, 1, 1});
  const std::size_t k = 8;
  const Tensor w = shared_weights(x, k, dq, p, 83);

  const auto iw = reduce(w, iw_from_weights);
  const auto r0 = reduce(w, [](const Var& v) { return renyi_from_weights(v, 0.0); });
  const auto vr = reduce(w, vrmax_from_weights);
  const auto r100 = reduce(w, [](const Var& v) { return renyi_from_weights(v, -100.0); });
  const auto r1e4 = reduce(w, [](const Var& v) { return renyi_from_weights(v, -1e4); });
  const auto r999 = reduce(w, [](const Var& v) { return renyi_from_weights(v, 0.999); });
  for (std::size_t n = 0; n < 3; ++n) {
    CHECK(std::fabs(r0[n] - iw[n]) <= 1e-12);
    CHECK(std::fabs(iw[n] - log_mean_exp(w, n)) <= 1e-12);
    // renyi(alpha) - vrmax lies in [-log K / (1 - alpha), 0] for alpha < 0.
    CHECK(r100[n] <= vr[n] + 1e-12);
    CHECK(r100[n] >= vr[n] - std::log(static_cast<double>(k)) / 101.0 - 1e-12);
    CHECK(std::fabs(r1e4[n] - vr[n]) < 1e-3);
    double mean = 0.0, mx = -INFINITY;
    for (std::size_t j = 0; j < k; ++j) mean += w.at(n, j) / static_cast<double>(k), mx = std::max(mx, w.at(n, j));
    CHECK(std::fabs(r999[n] - mean) < 1e-3);
    CHECK(vr[n] == mx);
  }

  // Non-increasing in alpha.
  std::vector<double> prev(3, INFINITY);
  for (double alpha : {-50.0, -10.0, -2.0, -0.5, 0.0, 0.3, 0.7, 0.99, 1.5, 4.0}) {
    const auto r = reduce(w, [alpha](const Var& v) { return renyi_from_weights(v, alpha); });
    for (std::size_t n = 0; n < 3; ++n) {
      CHECK(r[n] <= prev[n] + 1e-12);
      prev[n] = r[n];
    }
  }
}

TEST_CASE("single-sample bounds coincide") {
  Rng rng = make_rng(84);
  BipartiteFlowDequantizer dq(2, small_opts(1), rng);
  for (auto* p : dq.parameters())
    for (double& w : p->value.data()) w += 0.3 * std::normal_distribution<double>()(rng);
  DiagGaussianModel p(2);
  const Tensor x = Tensor::matrix(2, 2, {0, 1, 1, 0});
  auto run = [&](auto&& f) {
    Tape tape(false);
    Rng r = make_rng(85);
    return f(tape, r).value().values();
  };
  const auto vi = run([&](Tape& t, Rng& r) { return vi_bound(t, x, dq, p, r); });
  const auto iw = run([&](Tape& t, Rng& r) { return iw_bound(t, x, dq, p, 1, r); });
  const auto vr = run([&](Tape& t, Rng& r) { return vrmax_bound(t, x, dq, p, 1, r); });
  const auto re = run([&](Tape& t, Rng& r) { return renyi_bound(t, x, dq, p, 1, 0.5, r); });
  for (std::size_t n = 0; n < 2; ++n) {
    CHECK(iw[n] == doctest::Approx(vi[n]).epsilon(1e-15));
    CHECK(vr[n] == vi[n]);
    CHECK(re[n] == doctest::Approx(vi[n]).epsilon(1e-14));
  }

  const DiscreteBatch data = batch(2, 1, {0, 1, 1, 0, 1, 1});
  const BoundEstimate e = evaluate_loglik(data, dq, p, 1, 86);
  CHECK(std::bit_cast<std::uint64_t>(e.value_nats) == std::bit_cast<std::uint64_t>(e.vi_nats));
  CHECK(e.gap_nats == 0.0);
}

TEST_CASE("iw bound tightens with K and stays below log P(x)") {
  // Diagonal Gaussian p with uniform q: log P(x) has a closed form.
  DiagGaussianModel p(2);
  p.mean.value = Tensor::vector({0.3, 0.9});
  p.log_scale.value = Tensor::vector({-0.4, 0.2});
  UniformDequantizer uq;
  const Tensor x = Tensor::matrix(1, 2, {1, 0});
  double exact = 0.0;
  for (std::size_t j = 0; j < 2; ++j) {
    const double s = std::exp(p.log_scale.value[j]), m = p.mean.value[j];
    exact += log_gauss_bin((x[j] - m) / s, (x[j] + 1 - m) / s);
  }
  const std::size_t reps = 10000;
  double prev_mean = -INFINITY, prev_var = 0.0;
  for (std::size_t k : {1u, 2u, 4u, 8u, 16u}) {
    Tensor rep(Shape{reps, 2}, 0.0);
    for (std::size_t r = 0; r < reps; ++r) rep.at(r, 0) = 1.0;
    Tape tape(false);
    Rng rng = make_rng(87, k);
    const Tensor b = iw_bound(tape, rep, uq, p, k, rng).value();
    double mean = 0.0, var = 0.0;
    for (double v : b.data()) mean += v / reps;
    for (double v : b.data()) var += (v - mean) * (v - mean) / (reps - 1);
    INFO("K = " << k);
    CHECK(mean <= exact + 3 * std::sqrt(var / reps));
    CHECK(mean >= prev_mean - 3 * std::sqrt((var + prev_var) / reps));
    if (k == 16) CHECK(mean > prev_mean);
    prev_mean = mean;
    prev_var = var;
  }
  CHECK(prev_mean == doctest::Approx(exact).epsilon(0.01));
}

TEST_CASE("iw-4096 matches grid quadrature of the bin mass") {
  Rng rng = make_rng(88);
  CovGaussianModel p(2);
  p.mean.value = Tensor::vector({1.4, 1.1});
  p.l_offdiag.value.at(1, 0) = 0.1;
  p.log_diag.value = Tensor::vector({-1.5, -1.4});  // broad: weight spread within a bin stays small
  UniformDequantizer uq;
  const std::vector<std::int32_t> bins{0, 0, 1, 0, 0, 1, 1, 1, 2, 1};
  const BoundEstimate est = evaluate_loglik(batch(2, 2, bins), uq, p, 4096, 89);
  for (std::size_t n = 0; n < 5; ++n) {
    const double x0 = bins[2 * n], x1 = bins[2 * n + 1];
    const double mass = oracle::grid_integral(
        [&](const Tensor& u) {
          Tensor v = u;
          for (std::size_t r = 0; r < v.dim(0); ++r) v.at(r, 0) += x0, v.at(r, 1) += x1;
          Tape t(false);
          return p.log_prob(t, t.constant(v)).value();
        },
        0.0, 1.0, 400);
    INFO("bin (" << x0 << ", " << x1 << ")");
    CHECK(std::fabs(est.per_example[n] - std::log(mass)) < 0.002);
  }
}

TEST_CASE("vrmax gradient flows only to the first maximal weight") {
  Parameter w("w", Tensor::matrix(3, 4, {0.1, 2.0, -1.0, 0.5, 3.0, 3.0, 1.0, 3.0, -2.0, -1.0, -0.5, -0.5}));
  Tape tape;
  tape.backward(sum(vrmax_from_weights(tape.param(w))));
  CHECK(w.grad.values() == std::vector<double>{0, 1, 0, 0, 1, 0, 0, 0, 0, 0, 1, 0});
}

TEST_CASE("objective spec and evaluation errors") {
  CHECK_THROWS_AS((ObjectiveSpec{ObjectiveKind::Iw, 0, 0.0}.validate()), ConfigError);
  CHECK_THROWS_AS((ObjectiveSpec{ObjectiveKind::Vi, 4, 0.0}.validate()), ConfigError);
  CHECK_THROWS_AS((ObjectiveSpec{ObjectiveKind::Renyi, 4, 1.0}.validate()), ConfigError);
  CHECK_NOTHROW((ObjectiveSpec{ObjectiveKind::Renyi, 4, -2.0}.validate()));
  CHECK_THROWS_AS(parse_objective("elbo"), ConfigError);
  CHECK(parse_objective("vrmax") == ObjectiveKind::VrMax);

  UniformDequantizer uq;
  DiagGaussianModel p(2);
  CHECK_THROWS_AS(evaluate_loglik(batch(2, 1, {0, 1}), uq, p, 0, 1), ConfigError);
  CHECK_THROWS_AS(evaluate_loglik(batch(2, 1, {}), uq, p, 4, 1), ConfigError);

  p.log_scale.value[1] = -800.0;  // density underflows to log 0 = -inf
  try {
    evaluate_loglik(batch(2, 1, {0, 0, 1, 1}), uq, p, 4, 1);
    FAIL("expected a numeric error");
  } catch (const NumericError& e) {
    CHECK(e.datapoint() >= 0);
  }
}

TEST_CASE("evaluation is chunking- and thread-invariant") {
  Rng rng = make_rng(90);
  LogitNormalDequantizer dq(2, small_opts(1), rng);
  DiagGaussianModel p(2);
  std::vector<std::int32_t> v;
  for (int i = 0; i < 300; ++i) v.push_back(i % 2), v.push_back((i / 2) % 2);
  const DiscreteBatch data = batch(2, 1, v);
  const BoundEstimate a = evaluate_loglik(data, dq, p, 64, 91, {8192, 1});
  const BoundEstimate b = evaluate_loglik(data, dq, p, 64, 91, {8192, 3});
  CHECK(std::bit_cast<std::uint64_t>(a.value_nats) == std::bit_cast<std::uint64_t>(b.value_nats));
  CHECK(a.value_nats >= a.vi_nats);
}
