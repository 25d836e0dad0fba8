#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>

#include "dqlab/config.hpp"
#include "dqlab/error.hpp"
#include "dqlab/experiment.hpp"
#include "dqlab/train.hpp"

using namespace dqlab;
namespace fs = std::filesystem;

namespace {

// Small checkerboard flow/flow run; `overrides` replace or add keys.
RunConfig small_run(const std::map<std::string, std::string>& overrides = {}) {
  std::map<std::string, std::string> kv{
      {"data.kind", "checkerboard"}, {"data.batches_per_epoch", "20"}, {"model.kind", "flow"},
      {"model.subflows", "2"},       {"model.hidden", "16"},           {"dequant.kind", "flow"},
      {"dequant.layers", "2"},       {"dequant.hidden", "16"},         {"train.objective", "vi"},
      {"train.batch_size", "32"},    {"train.epochs", "5"},            {"train.seed", "17"}};
  for (const auto& [k, v] : overrides) kv[k] = v;
  std::string text;
  for (const auto& [k, v] : kv) text += k + " = " + v + "\n";
  return RunConfig::parse(text);
}

std::vector<std::uint64_t> bits_of(const nn::ParamList& params) {
  std::vector<std::uint64_t> out;
  for (auto* p : params)
    for (double v : p->value.data()) out.push_back(std::bit_cast<std::uint64_t>(v));
  return out;
}

std::vector<std::uint64_t> moment_bits(const Adam& opt) {
  std::vector<std::uint64_t> out;
  for (const auto* ms : {&opt.first_moments(), &opt.second_moments()})
    for (const Tensor& t : *ms)
      for (double v : t.data()) out.push_back(std::bit_cast<std::uint64_t>(v));
  return out;
}

fs::path temp_file(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "dqlab_test_train";
  fs::create_directories(dir);
  return dir / name;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("warmup schedule") {
  TrainConfig cfg;
  cfg.lr = 5e-4;
  cfg.warmup_epochs = 10;
  CHECK(lr_at(5, cfg) == doctest::Approx(2.5e-4).epsilon(1e-15));
  CHECK(lr_at(10, cfg) == 5e-4);
  CHECK(lr_at(200, cfg) == 5e-4);
  CHECK_THROWS_AS(lr_at(0, cfg), StructuralError);
  cfg.warmup_epochs = 0;
  CHECK(lr_at(1, cfg) == 5e-4);
}

TEST_CASE("Adam and gradient clipping") {
  Parameter w("w", Tensor::scalar(1.0));
  Adam opt({&w}, 0.9, 0.999, 1e-8);
  {
    Tape tape;
    Var x = tape.param(w);
    tape.backward(mul(x, x));
  }
  opt.step(0.1);
  // Step 1 with bias correction moves by lr * g / (|g| + eps).
  CHECK(std::fabs((1.0 - w.value.item()) - 0.1) < 1e-8);
  CHECK(opt.steps() == 1);

  Parameter z("z", Tensor::vector({0.5, -2.0}));
  Adam still({&z}, 0.9, 0.999, 1e-8);
  z.zero_grad();
  still.step(0.1);
  CHECK(z.value.values() == std::vector<double>{0.5, -2.0});

  Parameter g("g", Tensor::vector({0.0, 0.0}));
  g.grad = Tensor::vector({3.0, 4.0});
  CHECK(clip_grad_norm({&g}, 1.0) == doctest::Approx(5.0).epsilon(1e-15));
  CHECK(g.grad[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(g.grad[1] == doctest::Approx(0.8).epsilon(1e-15));
  g.grad = Tensor::vector({3.0, 4.0});
  clip_grad_norm({&g}, 0.0);
  CHECK(g.grad[1] == 4.0);
}

TEST_CASE("equal seeds train to bitwise-equal parameters") {
  const RunConfig cfg = small_run();
  auto run = [&] {
    Experiment ex = Experiment::build(cfg);
    Trainer t(*ex.dequant, *ex.model, *ex.source, cfg.train);
    t.run_steps(100);
    return bits_of(ex.parameters());
  };
  const auto a = run(), b = run();
  CHECK(a == b);
}

TEST_CASE("checkpoint resume continues exactly as an uninterrupted run") {
  const RunConfig cfg = small_run();
  const fs::path path = temp_file("resume.dqlb");

  Experiment a = Experiment::build(cfg);
  Trainer ta(*a.dequant, *a.model, *a.source, cfg.train);
  ta.run_steps(10);
  write_checkpoint(path.string(), ta.snapshot(cfg.to_pairs()));
  ta.run_steps(10);

  const Checkpoint ckpt = read_checkpoint(path.string());
  CHECK(ckpt.find_config("state.step") != nullptr);
  CHECK(RunConfig::from_pairs(ckpt.config).to_text() == cfg.to_text());
  Experiment b = Experiment::build(RunConfig::from_pairs(ckpt.config));
  Trainer tb(*b.dequant, *b.model, *b.source, cfg.train);
  tb.restore(ckpt);
  CHECK(tb.global_step() == 10);
  tb.run_steps(10);

  CHECK(bits_of(a.parameters()) == bits_of(b.parameters()));
  CHECK(moment_bits(ta.optimizer()) == moment_bits(tb.optimizer()));
  CHECK(ta.global_step() == tb.global_step());
}

TEST_CASE("a restored model gives the same loss on a fixed batch") {
  const RunConfig cfg = small_run();
  const fs::path path = temp_file("fixed.dqlb");
  Experiment a = Experiment::build(cfg);
  Trainer ta(*a.dequant, *a.model, *a.source, cfg.train);
  ta.run_steps(25);
  write_checkpoint(path.string(), ta.snapshot(cfg.to_pairs()));

  Experiment b = Experiment::build(cfg);
  b.load_parameters(read_checkpoint(path.string()));
  auto loss = [](Experiment& ex) {
    Tape tape(false);
    Rng rng = make_rng(5, 5);
    const Tensor x = ex.val.slice(0, 64).as_tensor();
    return mean(vi_bound(tape, x, *ex.dequant, *ex.model, rng)).value().item();
  };
  CHECK(std::bit_cast<std::uint64_t>(loss(a)) == std::bit_cast<std::uint64_t>(loss(b)));
}

TEST_CASE("damaged checkpoints are rejected") {
  const RunConfig cfg = small_run();
  Experiment a = Experiment::build(cfg);
  Trainer ta(*a.dequant, *a.model, *a.source, cfg.train);
  const fs::path good = temp_file("good.dqlb"), bad = temp_file("bad.dqlb");
  write_checkpoint(good.string(), ta.snapshot(cfg.to_pairs()));
  const std::string bytes = slurp(good);
  REQUIRE(bytes.size() > 64);
  CHECK(bytes.compare(0, 4, "DQLB") == 0);

  auto rejects = [&](const std::string& content) {
    spit(bad, content);
    CHECK_THROWS_AS(read_checkpoint(bad.string()), LoadError);
  };
  rejects(bytes.substr(0, bytes.size() / 2));
  rejects(bytes.substr(0, 7));
  rejects(bytes.substr(0, bytes.size() - 1));
  std::string flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x10;
  rejects(flipped);
  std::string magic = bytes;
  magic[0] = 'X';
  rejects(magic);
  std::string version = bytes;
  version[4] = 2;
  rejects(version);
  CHECK_THROWS_AS(read_checkpoint(temp_file("missing.dqlb").string()), LoadError);

  // A checkpoint from a differently shaped model does not load.
  Experiment other = Experiment::build(small_run({{"model.hidden", "8"}}));
  CHECK_THROWS_AS(other.load_parameters(read_checkpoint(good.string())), LoadError);
}

TEST_CASE("checkerboard flow/flow vi loss decreases over 2000 steps") {
  RunConfig cfg = RunConfig::parse(
      "data.kind = checkerboard\n"
      "model.kind = flow\n"
      "dequant.kind = flow\n"
      "train.objective = vi\n"
      "train.epochs = 20\n"
      "train.seed = 3\n");
  Experiment ex = Experiment::build(cfg);
  Trainer t(*ex.dequant, *ex.model, *ex.source, cfg.train);
  t.run_steps(2000);
  const auto& l = t.losses();
  REQUIRE(l.size() == 2000);
  auto window = [&](std::size_t end) {
    double s = 0.0;
    for (std::size_t i = end - 100; i < end; ++i) s += l[i];
    return s / 100.0;
  };
  MESSAGE("moving average at 200: " << window(200) << "  at 2000: " << window(2000));
  CHECK(window(2000) < window(200));
}

TEST_CASE("objective switch keeps the optimizer state") {
  RunConfig cfg = small_run({{"train.epochs", "2"},
                             {"train.finetune_objective", "iw"},
                             {"train.finetune_k", "4"},
                             {"train.switch_epoch", "1"}});
  CHECK(cfg.train.objective_at(1).kind == ObjectiveKind::Vi);
  CHECK(cfg.train.objective_at(2).kind == ObjectiveKind::Iw);
  CHECK(cfg.train.objective_at(2).k == 4);
  Experiment ex = Experiment::build(cfg);
  Trainer t(*ex.dequant, *ex.model, *ex.source, cfg.train);
  t.run_steps(20);
  const std::size_t slots = t.optimizer().first_moments().size();
  const auto before = moment_bits(t.optimizer());
  std::vector<std::size_t> epochs;
  t.run([&](EpochMetrics& m) { epochs.push_back(m.epoch); });
  CHECK(epochs == std::vector<std::size_t>{2});
  CHECK(t.global_step() == 40);
  CHECK(t.optimizer().first_moments().size() == slots);
  CHECK(moment_bits(t.optimizer()).size() == before.size());
  CHECK(moment_bits(t.optimizer()) != before);
}

TEST_CASE("training errors") {
  TrainConfig cfg;
  cfg.lr = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.lr = 1e-3;
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  const RunConfig run = small_run();
  Experiment ex = Experiment::build(run);
  Trainer t(*ex.dequant, *ex.model, *ex.source, run.train);
  ex.parameters().back()->value.fill(NAN);
  try {
    t.step();
    FAIL("expected a numeric error");
  } catch (const NumericError& e) {
    const std::string what = e.what();
    CHECK(what.find("epoch 1") != std::string::npos);
    CHECK(what.find("step 0") != std::string::npos);
  }
}
