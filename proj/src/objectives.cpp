#include "dqlab/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "dqlab/error.hpp"

namespace dqlab {

const char* objective_name(ObjectiveKind kind) {
  switch (kind) {
    case ObjectiveKind::Vi: return "vi";
    case ObjectiveKind::Iw: return "iw";
    case ObjectiveKind::Renyi: return "renyi";
    case ObjectiveKind::VrMax: return "vrmax";
  }
  return "?";
}

ObjectiveKind parse_objective(const std::string& name) {
  if (name == "vi") return ObjectiveKind::Vi;
  if (name == "iw") return ObjectiveKind::Iw;
  if (name == "renyi") return ObjectiveKind::Renyi;
  if (name == "vrmax") return ObjectiveKind::VrMax;
  throw ConfigError("unknown objective '" + name + "' (expected vi, iw, renyi or vrmax)");
}

void ObjectiveSpec::validate() const {
  if (k < 1) throw ConfigError("objective K must be >= 1");
  if (kind == ObjectiveKind::Vi && k != 1) throw ConfigError("vi objective uses exactly one sample (K = 1)");
  if (kind == ObjectiveKind::Renyi && alpha == 1.0) throw ConfigError("renyi alpha must differ from 1");
  if (!std::isfinite(alpha)) throw ConfigError("renyi alpha must be finite");
}

Var log_weights(Tape& tape, const Tensor& x, std::size_t k, Dequantizer& dequant, DensityModel& model, Rng& rng) {
  if (k < 1) throw StructuralError("K must be >= 1");
  DequantSample s = dequant.sample(tape, x, k, rng);
  Var w = sub(model.log_prob(tape, s.v), s.log_q);
  const Tensor& wv = w.value();
  for (std::size_t i = 0; i < wv.numel(); ++i) {
    if (!std::isfinite(wv[i])) {
      throw NumericError("non-finite importance weight for datapoint " + std::to_string(i / k),
                         static_cast<long long>(i / k));
    }
  }
  return reshape(w, Shape{x.dim(0), k});
}

Var iw_from_weights(const Var& w) {
  const double k = static_cast<double>(w.shape()[1]);
  return shift(logsumexp(w, 1), -std::log(k));
}

Var renyi_from_weights(const Var& w, double alpha) {
  if (alpha == 1.0) throw ConfigError("renyi alpha must differ from 1");
  const double a = 1.0 - alpha;
  return scale(iw_from_weights(scale(w, a)), 1.0 / a);
}

Var vrmax_from_weights(const Var& w) { return max_over_axis(w, 1); }

Var vi_bound(Tape& tape, const Tensor& x, Dequantizer& dequant, DensityModel& model, Rng& rng) {
  return reshape(log_weights(tape, x, 1, dequant, model, rng), Shape{x.dim(0)});
}

Var iw_bound(Tape& tape, const Tensor& x, Dequantizer& dequant, DensityModel& model, std::size_t k, Rng& rng) {
  return iw_from_weights(log_weights(tape, x, k, dequant, model, rng));
}

Var renyi_bound(Tape& tape, const Tensor& x, Dequantizer& dequant, DensityModel& model, std::size_t k, double alpha,
                Rng& rng) {
  return renyi_from_weights(log_weights(tape, x, k, dequant, model, rng), alpha);
}

Var vrmax_bound(Tape& tape, const Tensor& x, Dequantizer& dequant, DensityModel& model, std::size_t k, Rng& rng) {
  return vrmax_from_weights(log_weights(tape, x, k, dequant, model, rng));
}

Var objective_bound(Tape& tape, const ObjectiveSpec& spec, const Tensor& x, Dequantizer& dequant,
                    DensityModel& model, Rng& rng) {
  switch (spec.kind) {
    case ObjectiveKind::Vi: return vi_bound(tape, x, dequant, model, rng);
    case ObjectiveKind::Iw: return iw_bound(tape, x, dequant, model, spec.k, rng);
    case ObjectiveKind::Renyi: return renyi_bound(tape, x, dequant, model, spec.k, spec.alpha, rng);
    case ObjectiveKind::VrMax: return vrmax_bound(tape, x, dequant, model, spec.k, rng);
  }
  throw StructuralError("unknown objective kind");
}

std::size_t worker_count() {
  std::size_t hw = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("DQLAB_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return std::min<std::size_t>(hw, static_cast<std::size_t>(v));
  }
  return hw;
}

BoundEstimate evaluate_loglik(const DiscreteBatch& data, Dequantizer& dequant, DensityModel& model, std::size_t k_eval,
                              std::uint64_t seed, const EvalOptions& opts) {
  if (k_eval < 1) throw ConfigError("K_eval must be >= 1");
  const std::size_t n = data.size();
  if (n == 0) throw ConfigError("evaluation dataset is empty");
  const std::size_t per_chunk = std::max<std::size_t>(1, opts.chunk_rows / k_eval);
  const std::size_t chunks = (n + per_chunk - 1) / per_chunk;

  std::vector<double> iw(n), vi(n);
  auto run_chunk = [&](std::size_t c) {
    const std::size_t begin = c * per_chunk, end = std::min(n, begin + per_chunk);
    Tensor x = data.slice(begin, end).as_tensor();
    Rng rng = make_rng(seed, c);
    Tape tape(false);
    Var w = log_weights(tape, x, k_eval, dequant, model, rng);
    const Tensor bound = iw_from_weights(w).value();
    const Tensor& wv = w.value();
    for (std::size_t i = 0; i < bound.numel(); ++i) {
      iw[begin + i] = bound[i];
      double s = 0.0;
      for (std::size_t j = 0; j < k_eval; ++j) s += wv[i * k_eval + j];
      vi[begin + i] = s / static_cast<double>(k_eval);
    }
  };

  const std::size_t threads = std::min(chunks, opts.threads ? opts.threads : worker_count());
  if (threads <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) run_chunk(c);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t c = t; c < chunks; c += threads) run_chunk(c);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  BoundEstimate est;
  est.k = k_eval;
  est.dim = data.dim();
  double total = 0.0, vi_total = 0.0;
  for (double v : iw) total += v;
  for (double v : vi) vi_total += v;
  est.value_nats = total / static_cast<double>(n);
  est.vi_nats = vi_total / static_cast<double>(n);
  est.gap_nats = est.value_nats - est.vi_nats;
  est.per_example = std::move(iw);
  return est;
}

}  // namespace dqlab
