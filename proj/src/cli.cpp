#include "dqlab/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "dqlab/config.hpp"
#include "dqlab/error.hpp"
#include "dqlab/experiment.hpp"
#include "dqlab/grid.hpp"
#include "dqlab/objectives.hpp"

namespace fs = std::filesystem;

namespace dqlab {

namespace {

// Maps library errors onto exit codes.
template <typename F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const LoadError& e) {
    err << "load error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const fs::filesystem_error& e) {
    err << "filesystem error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return 1;
  }
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  return out;
}

fs::path checkpoint_path(const RunConfig& cfg) {
  if (!cfg.train.checkpoint_path.empty()) return cfg.train.checkpoint_path;
  return fs::path(cfg.out_dir) / "checkpoint.dqlb";
}

// Rebuilds a trained experiment from a checkpoint; --out overrides where
// results go (default: the checkpoint's directory).
struct Loaded {
  Experiment ex;
  fs::path out;
};

Loaded load_trained(const CliOptions& opts) {
  if (opts.checkpoint.empty()) throw ConfigError("--checkpoint is required");
  const Checkpoint ckpt = read_checkpoint(opts.checkpoint);
  Loaded l{Experiment::build(RunConfig::from_pairs(ckpt.config)), {}};
  l.ex.load_parameters(ckpt);
  l.out = opts.out.empty() ? fs::path(opts.checkpoint).parent_path() : fs::path(opts.out);
  if (l.out.empty()) l.out = ".";
  fs::create_directories(l.out);
  return l;
}

}  // namespace

int cmd_train(const CliOptions& opts, std::ostream& log, std::ostream& err) {
  return guarded(err, [&] {
    if (opts.config.empty()) throw ConfigError("--config is required");
    RunConfig cfg = RunConfig::load(opts.config);
    if (opts.seed) cfg.train.seed = *opts.seed;
    if (!opts.out.empty()) cfg.out_dir = opts.out;
    cfg.validate();

    Experiment ex = Experiment::build(cfg);
    const fs::path out(cfg.out_dir);
    fs::create_directories(out);
    open_out(out / "config.txt") << cfg.to_text();

    std::ofstream metrics = open_out(out / "metrics.csv");
    metrics << "# data: " << ex.provenance << "\n";
    metrics << "epoch,lr,train_loss_nats,val_vi_bits,val_iw" << cfg.eval.k << "_bits,gap_bits\n";

    Trainer trainer(*ex.dequant, *ex.model, *ex.source, cfg.train);
    trainer.run([&](EpochMetrics& m) {
      const bool last = m.epoch == cfg.train.epochs;
      const bool due = last || (cfg.eval.every > 0 && m.epoch % cfg.eval.every == 0);
      metrics << m.epoch << ',' << format_real(m.lr) << ',' << format_real(m.train_loss_nats);
      if (due) {
        const BoundEstimate est = evaluate_loglik(ex.val, *ex.dequant, *ex.model, cfg.eval.k, cfg.eval.seed);
        m.val_vi_bits = est.vi_bits();
        m.val_iw_bits = est.nll_bits();
        m.gap_bits = est.gap_bits();
        metrics << ',' << format_real(m.val_vi_bits) << ',' << format_real(m.val_iw_bits) << ','
                << format_real(m.gap_bits);
        log << "epoch " << m.epoch << "  loss " << m.train_loss_nats << " nats  val vi " << m.val_vi_bits
            << " bits  iw-" << cfg.eval.k << ' ' << m.val_iw_bits << " bits\n";
      } else {
        metrics << ",,,";
      }
      metrics << '\n' << std::flush;
    });

    const fs::path ckpt = checkpoint_path(cfg);
    if (ckpt.has_parent_path()) fs::create_directories(ckpt.parent_path());
    write_checkpoint(ckpt.string(), trainer.snapshot(cfg.to_pairs()));
    log << "wrote " << ckpt.string() << " after " << trainer.global_step() << " steps\n";
    return kExitOk;
  });
}

int cmd_eval(const CliOptions& opts, std::ostream& log, std::ostream& err) {
  return guarded(err, [&] {
    Loaded l = load_trained(opts);
    auto& ex = l.ex;
    const std::size_t k = opts.k_eval.value_or(ex.cfg.eval.k);
    const std::uint64_t seed = opts.seed.value_or(ex.cfg.eval.seed);
    const BoundEstimate est = evaluate_loglik(ex.test, *ex.dequant, *ex.model, k, seed);
    std::ofstream out = open_out(l.out / "eval.csv");
    out << "k,n,vi_bits,iw_bits,gap_bits,vi_bpd,iw_bpd,gap_bpd\n";
    out << k << ',' << ex.test.size() << ',' << format_real(est.vi_bits()) << ',' << format_real(est.nll_bits()) << ','
        << format_real(est.gap_bits()) << ',' << format_real(est.vi_bpd()) << ',' << format_real(est.nll_bpd()) << ','
        << format_real(est.gap_bpd()) << '\n';
    log << "test points      " << ex.test.size() << "\n"
        << "vi               " << est.vi_bits() << " bits  " << est.vi_bpd() << " bpd\n"
        << "-log P(x) iw-" << k << "  " << est.nll_bits() << " bits  " << est.nll_bpd() << " bpd\n"
        << "KL(q|p) gap      " << est.gap_bits() << " bits  " << est.gap_bpd() << " bpd\n";
    return kExitOk;
  });
}

int cmd_grid(const CliOptions& opts, std::ostream& log, std::ostream& err) {
  return guarded(err, [&] {
    Loaded l = load_trained(opts);
    auto& ex = l.ex;
    if (ex.dim != 2) throw ConfigError("grid needs D = 2, model has D = " + std::to_string(ex.dim));
    const std::size_t res = opts.resolution.value_or(ex.cfg.eval.grid_resolution);
    const double lo = opts.lo.value_or(ex.cfg.eval.grid_lo), hi = opts.hi.value_or(ex.cfg.eval.grid_hi);
    const auto p = density_grid(*ex.model, res, lo, hi);
    const auto q = dequant_grid(*ex.dequant, ex.test, ex.cfg.eval.grid_samples, res, lo, hi,
                                opts.seed.value_or(ex.cfg.eval.seed));
    write_grid_csv((l.out / "grid_p.csv").string(), p);
    write_grid_csv((l.out / "grid_q.csv").string(), q);
    log << "grid " << res << "x" << res << " over [" << lo << ", " << hi << ")^2: mass p " << grid_mass(p, res, lo, hi)
        << ", mass q " << grid_mass(q, res, lo, hi) << "\n";
    return kExitOk;
  });
}

int cmd_sample(const CliOptions& opts, std::ostream& log, std::ostream& err) {
  return guarded(err, [&] {
    Loaded l = load_trained(opts);
    auto& ex = l.ex;
    Rng rng = make_rng(opts.seed.value_or(ex.cfg.eval.seed), 4);
    const Tensor v = opts.n ? ex.model->sample(opts.n, rng) : Tensor(Shape{0, ex.dim});
    std::ofstream out = open_out(l.out / "samples.csv");
    for (std::size_t d = 0; d < ex.dim; ++d) out << (d ? ",v" : "v") << d + 1;
    for (std::size_t d = 0; d < ex.dim; ++d) out << ",x" << d + 1;
    out << '\n';
    std::size_t in_support = 0;
    for (std::size_t i = 0; i < opts.n; ++i) {
      const auto row = v.data().subspan(i * ex.dim, ex.dim);
      const auto x = quantize(row);
      for (std::size_t d = 0; d < ex.dim; ++d) out << (d ? "," : "") << format_real(row[d]);
      for (auto xi : x) out << ',' << xi;
      out << '\n';
      bool ok = true;
      for (auto xi : x) ok = ok && xi >= 0 && xi < (std::int64_t{1} << ex.bit_depth);
      in_support += ok;
    }
    log << "wrote " << opts.n << " samples; " << in_support << " quantize inside the data range\n";
    return kExitOk;
  });
}

int run_cli(int argc, char** argv) {
  CLI::App app{"dqlab: dequantization experiments for discrete data"};
  app.require_subcommand(1);
  CliOptions opts;
  std::uint64_t seed = 0;
  std::size_t k_eval = 0, resolution = 0;
  std::vector<double> range;

  auto* train = app.add_subcommand("train", "train a model from a config file");
  train->add_option("--config", opts.config, "run config (key = value)")->required();
  auto* eval = app.add_subcommand("eval", "vi, iw-K and gap on the test split");
  auto* grid = app.add_subcommand("grid", "p(v) and marginal q(v) density grids (D = 2)");
  auto* sample = app.add_subcommand("sample", "draw v ~ p(v) and their quantizations");
  for (auto* sub : {eval, grid, sample}) sub->add_option("--checkpoint", opts.checkpoint, "checkpoint file")->required();
  std::vector<CLI::Option*> seed_opts;
  for (auto* sub : {train, eval, grid, sample}) {
    sub->add_option("--out", opts.out, "output directory");
    seed_opts.push_back(sub->add_option("--seed", seed, "seed override"));
  }
  auto* k_opt = eval->add_option("--k-eval", k_eval, "importance samples per datapoint")->check(CLI::PositiveNumber);
  auto* res_opt = grid->add_option("--resolution", resolution, "cells per axis")->check(CLI::PositiveNumber);
  auto* range_opt = grid->add_option("--range", range, "lo hi")->expected(2);
  sample->add_option("-n,--n", opts.n, "number of samples");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }
  for (auto* o : seed_opts)
    if (o->count()) opts.seed = seed;
  if (k_opt->count()) opts.k_eval = k_eval;
  if (res_opt->count()) opts.resolution = resolution;
  if (range_opt->count()) {
    opts.lo = range[0];
    opts.hi = range[1];
  }

  if (train->parsed()) return cmd_train(opts, std::cout, std::cerr);
  if (eval->parsed()) return cmd_eval(opts, std::cout, std::cerr);
  if (grid->parsed()) return cmd_grid(opts, std::cout, std::cerr);
  return cmd_sample(opts, std::cout, std::cerr);
}

}  // namespace dqlab
