#include "dqlab/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <set>
#include <sstream>

#include "dqlab/error.hpp"

namespace dqlab {

std::string format_real(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError("'" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  if (v == "inf") return std::numeric_limits<double>::infinity();
  if (v == "-inf") return -std::numeric_limits<double>::infinity();
  std::istringstream in(v);
  in.imbue(std::locale::classic());
  double out;
  in >> out;
  if (!in || !in.eof() || std::isnan(out)) throw ConfigError("'" + key + "' expects a real number, got '" + v + "'");
  return out;
}

struct Field {
  std::string key;
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

template <typename T>
Field uint_field(std::string key, T& ref) {
  return {key, [&ref, key](const std::string& v) { ref = static_cast<T>(parse_uint(key, v)); },
          [&ref] { return std::to_string(ref); }};
}

Field int_field(std::string key, int& ref) {
  return {key,
          [&ref, key](const std::string& v) {
            const auto u = parse_uint(key, v);
            if (u > 1u << 20) throw ConfigError("'" + key + "' out of range");
            ref = static_cast<int>(u);
          },
          [&ref] { return std::to_string(ref); }};
}

Field real_field(std::string key, double& ref) {
  return {key, [&ref, key](const std::string& v) { ref = parse_real(key, v); }, [&ref] { return format_real(ref); }};
}

Field string_field(std::string key, std::string& ref) {
  return {key, [&ref](const std::string& v) { ref = v; }, [&ref] { return ref; }};
}

// Objective lines: name, K and alpha. alpha = -inf denotes VR-max, which is
// what "renyi" resolves to unless a finite alpha is given.
struct ObjectiveText {
  std::string name = "vi";
  std::size_t k = 1;
  double alpha = -std::numeric_limits<double>::infinity();
};

ObjectiveText to_text(const ObjectiveSpec& s) {
  ObjectiveText t;
  t.name = objective_name(s.kind);
  t.k = s.k;
  if (s.kind == ObjectiveKind::Renyi) t.alpha = s.alpha;
  return t;
}

ObjectiveSpec from_text(const ObjectiveText& t) {
  ObjectiveSpec s;
  s.kind = parse_objective(t.name);
  s.k = t.k;
  if (s.kind == ObjectiveKind::Renyi) {
    if (std::isinf(t.alpha)) {
      if (t.alpha > 0) throw ConfigError("renyi alpha must be < 1");
      s.kind = ObjectiveKind::VrMax;
    } else {
      s.alpha = t.alpha;
    }
  }
  return s;
}

struct Binder {
  explicit Binder(RunConfig& cfg) : c(cfg) {}

  RunConfig& c;
  ObjectiveText obj, fine;
  std::string fine_name = "none";

  std::vector<Field> fields() {
    auto& d = c.data;
    auto& t = c.train;
    return {
        string_field("data.kind", d.kind),
        string_field("data.path", d.path),
        string_field("data.test_path", d.test_path),
        uint_field("data.n_train", d.n_train),
        uint_field("data.n_val", d.n_val),
        uint_field("data.n_test", d.n_test),
        int_field("data.binarize", d.binarize),
        uint_field("data.batches_per_epoch", d.batches_per_epoch),
        uint_field("data.eval_reps", d.eval_reps),
        string_field("model.kind", c.model.kind),
        uint_field("model.levels", c.model.flow.levels),
        uint_field("model.subflows", c.model.flow.subflows),
        uint_field("model.hidden", c.model.flow.hidden),
        string_field("dequant.kind", c.dequant.kind),
        uint_field("dequant.layers", c.dequant.opts.layers),
        uint_field("dequant.hidden", c.dequant.opts.hidden),
        uint_field("dequant.context", c.dequant.opts.context),
        uint_field("dequant.context_hidden", c.dequant.opts.context_hidden),
        string_field("train.objective", obj.name),
        uint_field("train.k", obj.k),
        real_field("train.alpha", obj.alpha),
        string_field("train.finetune_objective", fine_name),
        uint_field("train.finetune_k", fine.k),
        real_field("train.finetune_alpha", fine.alpha),
        uint_field("train.switch_epoch", t.switch_epoch),
        real_field("train.lr", t.lr),
        real_field("train.beta1", t.beta1),
        real_field("train.beta2", t.beta2),
        real_field("train.eps_adam", t.eps_adam),
        uint_field("train.warmup_epochs", t.warmup_epochs),
        uint_field("train.epochs", t.epochs),
        uint_field("train.batch_size", t.batch_size),
        uint_field("train.seed", t.seed),
        real_field("train.clip_norm", t.clip_norm),
        string_field("train.checkpoint", t.checkpoint_path),
        uint_field("eval.k", c.eval.k),
        uint_field("eval.every", c.eval.every),
        uint_field("eval.seed", c.eval.seed),
        uint_field("eval.grid_resolution", c.eval.grid_resolution),
        real_field("eval.grid_lo", c.eval.grid_lo),
        real_field("eval.grid_hi", c.eval.grid_hi),
        uint_field("eval.grid_samples", c.eval.grid_samples),
        string_field("out", c.out_dir),
    };
  }

  void load_objectives() {
    obj = to_text(c.train.objective);
    if (c.train.finetune_objective) {
      fine = to_text(*c.train.finetune_objective);
      fine_name = fine.name;
    }
  }

  void store_objectives() {
    c.train.objective = from_text(obj);
    if (fine_name == "none") {
      c.train.finetune_objective.reset();
    } else {
      fine.name = fine_name;
      c.train.finetune_objective = from_text(fine);
    }
  }
};

}  // namespace

RunConfig RunConfig::from_pairs(const ConfigPairs& pairs) {
  RunConfig c;
  Binder b{c};
  b.load_objectives();
  auto fields = b.fields();
  std::set<std::string> seen;
  for (const auto& [key, value] : pairs) {
    if (key.rfind("state.", 0) == 0) continue;  // checkpoint bookkeeping
    auto it = std::find_if(fields.begin(), fields.end(), [&](const Field& f) { return f.key == key; });
    if (it == fields.end()) throw ConfigError("unknown config key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError("config key '" + key + "' given twice");
    it->set(value);
  }
  b.store_objectives();
  c.validate();
  return c;
}

RunConfig RunConfig::parse(const std::string& text) {
  ConfigPairs pairs;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value, got '" + s + "'");
    }
    pairs.emplace_back(trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
  }
  return from_pairs(pairs);
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

ConfigPairs RunConfig::to_pairs() const {
  RunConfig copy = *this;
  Binder b{copy};
  b.load_objectives();
  ConfigPairs out;
  for (const auto& f : b.fields()) out.emplace_back(f.key, f.get());
  return out;
}

std::string RunConfig::to_text() const {
  std::string s;
  for (const auto& [k, v] : to_pairs()) s += k + " = " + v + "\n";
  return s;
}

void RunConfig::validate() const {
  if (data.kind != "checkerboard" && data.kind != "idx") {
    throw ConfigError("data.kind must be checkerboard or idx, got '" + data.kind + "'");
  }
  if (data.kind == "idx") {
    if (data.path.empty()) throw ConfigError("data.path is required for idx data");
    if (data.n_train == 0 || data.n_test == 0) throw ConfigError("data.n_train and data.n_test must be >= 1");
    if (data.binarize < 0 || data.binarize > 255) throw ConfigError("data.binarize must be in [0, 255]");
  } else {
    if (data.batches_per_epoch == 0) throw ConfigError("data.batches_per_epoch must be >= 1");
    if (data.eval_reps == 0) throw ConfigError("data.eval_reps must be >= 1");
  }
  if (model.kind != "diag" && model.kind != "cov" && model.kind != "flow") {
    throw ConfigError("model.kind must be diag, cov or flow, got '" + model.kind + "'");
  }
  if (model.kind == "flow" && (model.flow.levels == 0 || model.flow.subflows == 0 || model.flow.hidden == 0)) {
    throw ConfigError("model.levels, model.subflows and model.hidden must be >= 1");
  }
  const auto& dk = dequant.kind;
  if (dk != "uniform" && dk != "logitnormal" && dk != "flow" && dk != "ard") {
    throw ConfigError("dequant.kind must be uniform, logitnormal, flow or ard, got '" + dk + "'");
  }
  if (dk != "uniform" && (dequant.opts.hidden == 0 || dequant.opts.context == 0 || dequant.opts.context_hidden == 0)) {
    throw ConfigError("dequant.hidden, dequant.context and dequant.context_hidden must be >= 1");
  }
  if (dk == "flow" && dequant.opts.layers == 0) throw ConfigError("dequant.layers must be >= 1");
  train.validate();
  if (eval.k == 0) throw ConfigError("eval.k must be >= 1");
  if (eval.grid_resolution == 0) throw ConfigError("eval.grid_resolution must be >= 1");
  if (!(eval.grid_lo < eval.grid_hi) || !std::isfinite(eval.grid_lo) || !std::isfinite(eval.grid_hi)) {
    throw ConfigError("eval.grid_lo must be below eval.grid_hi");
  }
  if (eval.grid_samples == 0) throw ConfigError("eval.grid_samples must be >= 1");
  if (out_dir.empty()) throw ConfigError("out must name a directory");
}

}  // namespace dqlab
