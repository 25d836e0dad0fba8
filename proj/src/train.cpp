#include "dqlab/train.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "dqlab/error.hpp"

namespace dqlab {

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("train.lr must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(eps_adam > 0.0)) throw ConfigError("train.eps_adam must be > 0");
  if (batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
  if (!(clip_norm >= 0.0)) throw ConfigError("train.clip_norm must be >= 0 (0 disables)");
  objective.validate();
  if (finetune_objective) finetune_objective->validate();
}

const ObjectiveSpec& TrainConfig::objective_at(std::size_t epoch) const {
  if (finetune_objective && epoch > switch_epoch) return *finetune_objective;
  return objective;
}

double lr_at(std::size_t epoch, const TrainConfig& cfg) {
  if (epoch < 1) throw StructuralError("lr_at: epochs are 1-based");
  if (cfg.warmup_epochs == 0) return cfg.lr;
  return cfg.lr * std::min(1.0, static_cast<double>(epoch) / static_cast<double>(cfg.warmup_epochs));
}

Adam::Adam(nn::ParamList params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (auto* p : params_) {
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
  }
}

void Adam::step(double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto w = params_[i]->value.data();
    auto g = params_[i]->grad.data();
    auto m = m_[i].data();
    auto v = v_[i].data();
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
      w[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
    }
  }
}

double clip_grad_norm(const nn::ParamList& params, double max_norm) {
  double sq = 0.0;
  for (auto* p : params)
    for (double g : p->grad.data()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double f = max_norm / norm;
    for (auto* p : params)
      for (double& g : p->grad.data()) g *= f;
  }
  return norm;
}

nn::ParamList all_parameters(Dequantizer& dequant, DensityModel& model) {
  nn::ParamList p = dequant.parameters();
  model.collect(p);
  return p;
}

double train_step(Dequantizer& dequant, DensityModel& model, const Tensor& x, const ObjectiveSpec& objective,
                  Adam& opt, double lr, double clip_norm, Rng& rng) {
  for (auto* p : opt.params()) p->zero_grad();
  Tape tape;
  Var loss = neg(mean(objective_bound(tape, objective, x, dequant, model, rng)));
  const double value = loss.value().item();
  if (!std::isfinite(value)) throw NumericError("non-finite training loss");
  tape.backward(loss);
  for (auto* p : opt.params()) {
    if (!p->grad.all_finite()) throw NumericError("non-finite gradient for parameter '" + p->name + "'");
  }
  clip_grad_norm(opt.params(), clip_norm);
  opt.step(lr);
  return value;
}

// ---------------------------------------------------------------------------
// Checkpoint container

namespace {

constexpr char kMagic[4] = {'D', 'Q', 'L', 'B'};

struct Writer {
  std::string buf;
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf += s;
  }
};

struct Reader {
  const std::string& buf;
  std::size_t at = 0;
  std::size_t end;

  void need(std::size_t n) const {
    if (at + n > end) throw LoadError("checkpoint truncated at byte " + std::to_string(at));
  }
  std::uint64_t uint(int bytes) {
    need(static_cast<std::size_t>(bytes));
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= std::uint64_t{static_cast<unsigned char>(buf[at + i])} << (8 * i);
    at += static_cast<std::size_t>(bytes);
    return v;
  }
  std::uint32_t u32() { return static_cast<std::uint32_t>(uint(4)); }
  std::uint64_t u64() { return uint(8); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::size_t n = u32();
    need(n);
    std::string s = buf.substr(at, n);
    at += n;
    return s;
  }
};

std::uint32_t crc_of(const std::string& s, std::size_t n) {
  return static_cast<std::uint32_t>(
      crc32(crc32(0L, Z_NULL, 0), reinterpret_cast<const Bytef*>(s.data()), static_cast<uInt>(n)));
}

}  // namespace

const std::string* Checkpoint::find_config(const std::string& key) const {
  for (const auto& [k, v] : config)
    if (k == key) return &v;
  return nullptr;
}

const Parameter* Checkpoint::find_record(const std::string& name) const {
  for (const auto& r : records)
    if (r.name == name) return &r;
  return nullptr;
}

void write_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  Writer w;
  w.buf.append(kMagic, 4);
  w.u32(kCheckpointVersion);
  std::string text;
  for (const auto& [k, v] : ckpt.config) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw ConfigError("config entry '" + k + "' cannot be stored as key=value text");
    }
    text += k + "=" + v + "\n";
  }
  w.str(text);
  w.u32(static_cast<std::uint32_t>(ckpt.records.size()));
  for (const auto& r : ckpt.records) {
    w.str(r.name);
    w.u32(static_cast<std::uint32_t>(r.value.rank()));
    for (auto d : r.value.shape()) w.u64(d);
    for (double v : r.value.values()) w.f64(v);
  }
  w.u32(crc_of(w.buf, w.buf.size()));

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write checkpoint '" + path + "'");
    out.write(w.buf.data(), static_cast<std::streamsize>(w.buf.size()));
    if (!out) throw ConfigError("short write to checkpoint '" + path + "'");
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open checkpoint '" + path + "'");
  const std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 12) throw LoadError("checkpoint truncated: " + std::to_string(buf.size()) + " bytes");
  if (buf.compare(0, 4, kMagic, 4) != 0) throw LoadError("not a checkpoint (bad magic)");
  Reader r{buf, 4, buf.size() - 4};
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw LoadError("checkpoint version " + std::to_string(version) + " != supported " +
                    std::to_string(kCheckpointVersion));
  }
  Reader tail{buf, buf.size() - 4, buf.size()};
  if (tail.u32() != crc_of(buf, buf.size() - 4)) throw LoadError("checkpoint checksum mismatch (corrupt or truncated)");

  Checkpoint ckpt;
  const std::string text = r.str();
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const std::string line = text.substr(pos, nl - pos);
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw LoadError("checkpoint config line without '=': " + line);
    ckpt.config.emplace_back(line.substr(0, eq), line.substr(eq + 1));
    pos = nl == std::string::npos ? text.size() : nl + 1;
  }
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str();
    Shape shape(r.u32());
    for (auto& d : shape) d = r.u64();
    const std::size_t n = shape_numel(shape);
    r.need(8 * n);
    std::vector<double> values(n);
    for (auto& v : values) v = r.f64();
    ckpt.records.emplace_back(std::move(name), Tensor(shape, std::move(values)));
  }
  if (r.at != r.end) throw LoadError("checkpoint has trailing bytes");
  return ckpt;
}

namespace {

void copy_record(const Checkpoint& ckpt, const std::string& name, Tensor& into) {
  const Parameter* rec = ckpt.find_record(name);
  if (!rec) throw LoadError("checkpoint lacks record '" + name + "'");
  if (rec->value.shape() != into.shape()) {
    throw LoadError("record '" + name + "' has shape " + shape_str(rec->value.shape()) + ", model expects " +
                    shape_str(into.shape()));
  }
  into = rec->value;
}

}  // namespace

void restore_parameters(const Checkpoint& ckpt, const nn::ParamList& params, Adam* opt) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    copy_record(ckpt, params[i]->name, params[i]->value);
    if (opt) {
      copy_record(ckpt, "adam.m/" + params[i]->name, opt->first_moments()[i]);
      copy_record(ckpt, "adam.v/" + params[i]->name, opt->second_moments()[i]);
    }
  }
  if (opt) {
    const std::string* step = ckpt.find_config("state.step");
    if (!step) throw LoadError("checkpoint lacks state.step");
    opt->set_steps(std::stoull(*step));
  }
}

// ---------------------------------------------------------------------------

Trainer::Trainer(Dequantizer& dequant, DensityModel& model, BatchSource& source, TrainConfig cfg)
    : dequant_(dequant),
      model_(model),
      source_(source),
      cfg_(std::move(cfg)),
      params_(all_parameters(dequant, model)),
      opt_(params_, cfg_.beta1, cfg_.beta2, cfg_.eps_adam) {
  cfg_.validate();
  for (std::size_t i = 0; i < params_.size(); ++i)
    for (std::size_t j = i + 1; j < params_.size(); ++j)
      if (params_[i]->name == params_[j]->name) throw StructuralError("duplicate parameter name " + params_[i]->name);
}

std::size_t Trainer::current_epoch() const {
  return static_cast<std::size_t>(opt_.steps() / source_.steps_per_epoch()) + 1;
}

double Trainer::step() {
  const std::uint64_t s = opt_.steps();
  const std::size_t epoch = current_epoch();
  Rng rng = make_rng(cfg_.seed, 1, s);
  const Tensor x = source_.batch(s, rng).as_tensor();
  double loss;
  try {
    loss = train_step(dequant_, model_, x, cfg_.objective_at(epoch), opt_, lr_at(epoch, cfg_), cfg_.clip_norm, rng);
  } catch (const NumericError& e) {
    throw NumericError(std::string(e.what()) + " at epoch " + std::to_string(epoch) + ", step " + std::to_string(s) +
                           (e.datapoint() >= 0 ? ", datapoint " + std::to_string(e.datapoint()) : ""),
                       e.datapoint());
  }
  losses_.push_back(loss);
  return loss;
}

void Trainer::run_steps(std::uint64_t n) {
  for (std::uint64_t i = 0; i < n; ++i) step();
}

void Trainer::run(const std::function<void(EpochMetrics&)>& on_epoch) {
  const std::uint64_t per_epoch = source_.steps_per_epoch();
  const std::uint64_t total = per_epoch * cfg_.epochs;
  double acc = 0.0;
  std::size_t count = 0;
  while (opt_.steps() < total) {
    const std::size_t epoch = current_epoch();
    acc += step();
    ++count;
    if (opt_.steps() % per_epoch == 0) {
      EpochMetrics m;
      m.epoch = epoch;
      m.lr = lr_at(epoch, cfg_);
      m.train_loss_nats = acc / static_cast<double>(count);
      if (on_epoch) on_epoch(m);
      acc = 0.0;
      count = 0;
    }
  }
}

Checkpoint Trainer::snapshot(const ConfigPairs& config) const {
  Checkpoint c;
  c.config = config;
  c.config.emplace_back("state.step", std::to_string(opt_.steps()));
  for (auto* p : params_) c.records.emplace_back(p->name, p->value);
  for (std::size_t i = 0; i < params_.size(); ++i)
    c.records.emplace_back("adam.m/" + params_[i]->name, opt_.first_moments()[i]);
  for (std::size_t i = 0; i < params_.size(); ++i)
    c.records.emplace_back("adam.v/" + params_[i]->name, opt_.second_moments()[i]);
  return c;
}

void Trainer::restore(const Checkpoint& ckpt) {
  restore_parameters(ckpt, params_, &opt_);
  losses_.clear();
}

}  // namespace dqlab
