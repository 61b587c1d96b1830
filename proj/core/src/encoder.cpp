#include "aurora/encoder.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <utility>

#include "aurora/binary_io.hpp"
#include "aurora/errors.hpp"

namespace aurora {

namespace {

constexpr std::uint64_t kInitKey = 0x494e4954ULL;  // "INIT"
constexpr char kCheckpointMagic[4] = {'A', 'U', 'R', 'M'};

Tensor gaussian(std::size_t rows, std::size_t cols, double sd, Rng& rng) {
  Tensor t({rows, cols});
  for (auto& v : t.data()) v = sd * rng.normal();
  return t;
}

void add_linear(std::vector<Parameter>& params, const std::string& prefix, std::size_t in, std::size_t out, double gain,
                Rng& rng) {
  params.push_back({prefix + ".weight", gaussian(in, out, std::sqrt(gain / static_cast<double>(in)), rng)});
  params.push_back({prefix + ".bias", Tensor::zeros(1, out)});
}

const Tensor* find(const std::vector<Parameter>& params, const std::string& name) {
  for (const auto& p : params)
    if (p.name == name) return &p.value;
  return nullptr;
}

void write_entry(io::Writer& w, const std::string& name, const Tensor& t) {
  w.le(static_cast<std::uint32_t>(name.size()));
  w.bytes(name.data(), name.size());
  w.le(static_cast<std::uint32_t>(t.rank()));
  for (auto s : t.shape()) w.le(static_cast<std::uint64_t>(s));
  for (double v : t.data()) w.le(v);
}

}  // namespace

std::string to_string(Method m) {
  switch (m) {
    case Method::aurora: return "aurora";
    case Method::mae: return "mae";
    case Method::contrastive: return "contrastive";
    case Method::distill: return "distill";
  }
  return "?";
}

Method parse_method(const std::string& s) {
  for (auto m : kAllMethods)
    if (to_string(m) == s) return m;
  throw ConfigError("unknown method '" + s + "' (expected aurora|mae|contrastive|distill)");
}

std::string display_name(Method m) {
  switch (m) {
    case Method::aurora: return "AURORA";
    case Method::mae: return "MAE";
    case Method::contrastive: return "Contrastive SSL";
    case Method::distill: return "Self-Distillation";
  }
  return "?";
}

void EncoderConfig::validate() const {
  if (input_dim == 0) throw ConfigError("encoder: input dim must be positive");
  if (subspaces < 2) throw ConfigError("encoder: K must be >= 2");
  if (latent < subspaces) throw ConfigError("encoder: latent dim d must be >= K");
  if (head_width == 0) throw ConfigError("encoder: head width must be positive");
  if (hidden.empty()) throw ConfigError("encoder: at least one hidden layer is required");
  for (auto h : hidden)
    if (h == 0) throw ConfigError("encoder: hidden widths must be positive");
}

ModelBundle ModelBundle::init(Method method, const EncoderConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng = Rng::stream(seed, kInitKey);
  ModelBundle b;
  b.method = method;
  b.config = cfg;
  std::size_t in = cfg.input_dim;
  for (std::size_t l = 0; l < cfg.hidden.size(); ++l) {
    add_linear(b.params, "backbone." + std::to_string(l), in, cfg.hidden[l], 2.0, rng);
    in = cfg.hidden[l];
  }
  for (std::size_t k = 0; k < cfg.subspaces; ++k) add_linear(b.params, "head." + std::to_string(k), in, cfg.latent, 1.0, rng);
  switch (method) {
    case Method::aurora: break;
    case Method::mae: add_linear(b.params, "decoder", cfg.latent, cfg.input_dim, 1.0, rng); break;
    case Method::contrastive: add_linear(b.params, "projector", cfg.latent, cfg.head_width, 1.0, rng); break;
    case Method::distill:
      add_linear(b.params, "prototypes", cfg.latent, cfg.head_width, 1.0, rng);
      b.teacher = b.params;
      b.center = Tensor::zeros(1, cfg.head_width);
      break;
  }
  return b;
}

const Tensor& ModelBundle::param(const std::string& name) const {
  if (const Tensor* t = find(params, name)) return *t;
  throw ContractError("model has no parameter '" + name + "'");
}

bool ModelBundle::has(const std::string& name) const { return find(params, name) != nullptr; }

std::size_t ModelBundle::trainable_count() const {
  return std::accumulate(params.begin(), params.end(), std::size_t{0},
                         [](std::size_t acc, const Parameter& p) { return acc + p.value.size(); });
}

BoundParams::BoundParams(ad::Tape& tape, const std::vector<Parameter>& params, bool trainable) {
  names_.reserve(params.size());
  vars_.reserve(params.size());
  for (const auto& p : params) {
    names_.push_back(p.name);
    vars_.push_back(trainable ? tape.leaf(p.value) : tape.constant(p.value));
  }
}

BoundParams::BoundParams(std::vector<std::string> names, std::vector<ad::Var> vars)
    : names_(std::move(names)), vars_(std::move(vars)) {
  if (names_.size() != vars_.size() || vars_.empty()) throw ContractError("BoundParams: names and vars must match");
}

ad::Var BoundParams::operator[](const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return vars_[i];
  throw ContractError("no bound parameter '" + name + "'");
}

ad::Var linear(const BoundParams& params, const std::string& prefix, ad::Var x) {
  return ad::add_row(ad::matmul(x, params[prefix + ".weight"]), params[prefix + ".bias"]);
}

EncodedGraph encode_graph(const BoundParams& params, const EncoderConfig& cfg, ad::Var x) {
  if (x.cols() != cfg.input_dim)
    throw DimensionError("encode: input has " + std::to_string(x.cols()) + " features, encoder expects " +
                         std::to_string(cfg.input_dim));
  ad::Var u = x;
  for (std::size_t l = 0; l < cfg.hidden.size(); ++l) u = ad::relu(linear(params, "backbone." + std::to_string(l), u));
  EncodedGraph out;
  for (std::size_t k = 0; k < cfg.subspaces; ++k) out.components.push_back(linear(params, "head." + std::to_string(k), u));
  out.z = out.components[0];
  for (std::size_t k = 1; k < cfg.subspaces; ++k) out.z = out.z + out.components[k];
  return out;
}

BatchEmbedding encode_batch(const ModelBundle& bundle, const Tensor& x) {
  if (x.rows() < 1) throw ContractError("encode_batch: empty batch");
  if (!x.all_finite()) throw NumericError("encode_batch: non-finite input");
  ad::Tape tape;
  BoundParams params(tape, bundle.params, false);
  auto g = encode_graph(params, bundle.config, tape.constant(x));
  BatchEmbedding out;
  out.z = g.z.value();
  for (auto& c : g.components) out.components.push_back(c.value());
  return out;
}

SubspaceEmbedding encode(const ModelBundle& bundle, const Tensor& x) {
  auto b = encode_batch(bundle, x.reshaped({1, x.size()}));
  SubspaceEmbedding out;
  out.z = b.z.reshaped({bundle.config.latent});
  for (auto& c : b.components) out.components.push_back(c.reshaped({bundle.config.latent}));
  return out;
}

void ema_update(std::vector<Parameter>& teacher, const std::vector<Parameter>& student, double rate) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw ContractError("ema_update: rate must lie in [0, 1]");
  if (teacher.size() != student.size()) throw ContractError("ema_update: parameter lists differ in length");
  for (std::size_t i = 0; i < teacher.size(); ++i) {
    if (!teacher[i].value.same_shape(student[i].value))
      throw ContractError("ema_update: shape mismatch for '" + teacher[i].name + "': " +
                          teacher[i].value.shape_string() + " vs " + student[i].value.shape_string());
  }
  for (std::size_t i = 0; i < teacher.size(); ++i) {
    auto t = teacher[i].value.data();
    auto s = student[i].value.data();
    for (std::size_t j = 0; j < t.size(); ++j) t[j] = rate * t[j] + (1.0 - rate) * s[j];
  }
}

void save_checkpoint(std::ostream& out, const ModelBundle& bundle) {
  io::Writer w(out);
  w.bytes(kCheckpointMagic, 4);
  w.le(kCheckpointVersion);
  const bool distill = bundle.method == Method::distill;
  const std::size_t entries = 1 + bundle.params.size() + (distill ? bundle.teacher.size() + 1 : 0);
  w.le(static_cast<std::uint32_t>(entries));
  write_entry(w, "meta.method", Tensor::vector({static_cast<double>(bundle.method)}));
  for (const auto& p : bundle.params) write_entry(w, p.name, p.value);
  if (distill) {
    for (const auto& p : bundle.teacher) write_entry(w, "teacher." + p.name, p.value);
    write_entry(w, "state.center", bundle.center);
  }
  w.checksum();
}

void save_checkpoint(const std::string& path, const ModelBundle& bundle) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open '" + path + "' for writing");
  save_checkpoint(f, bundle);
}

ModelBundle load_checkpoint(std::istream& in) {
  io::Reader r(in);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) throw ConfigError("not a checkpoint file (bad magic)");
  const auto version = r.le<std::uint16_t>();
  if (version != kCheckpointVersion) throw ConfigError("unsupported checkpoint version " + std::to_string(version));
  const auto count = r.le<std::uint32_t>();
  ModelBundle b;
  bool have_method = false;
  for (std::uint32_t e = 0; e < count; ++e) {
    const auto len = r.le<std::uint32_t>();
    if (len > 4096) throw ConfigError("checkpoint entry name too long");
    std::string name(len, '\0');
    r.bytes(name.data(), len);
    const auto rank = r.le<std::uint32_t>();
    if (rank == 0 || rank > 8) throw ConfigError("checkpoint entry '" + name + "' has invalid rank");
    std::vector<std::size_t> shape(rank);
    std::size_t total = 1;
    for (auto& s : shape) {
      s = static_cast<std::size_t>(r.le<std::uint64_t>());
      if (s == 0 || s > (1u << 28)) throw ConfigError("checkpoint entry '" + name + "' has invalid shape");
      total *= s;
    }
    if (total > (1u << 28)) throw ConfigError("checkpoint entry '" + name + "' is too large");
    std::vector<double> data(total);
    for (auto& v : data) v = r.le<double>();
    Tensor t(std::move(shape), std::move(data));
    if (name == "meta.method") {
      const auto m = static_cast<int>(t.item());
      if (m < 0 || m > 3) throw ConfigError("checkpoint has unknown method id");
      b.method = static_cast<Method>(m);
      have_method = true;
    } else if (name == "state.center") {
      b.center = std::move(t);
    } else if (name.rfind("teacher.", 0) == 0) {
      b.teacher.push_back({name.substr(8), std::move(t)});
    } else {
      b.params.push_back({std::move(name), std::move(t)});
    }
  }
  r.verify_checksum();
  if (!have_method) throw ConfigError("checkpoint lacks meta.method");

  EncoderConfig cfg;
  cfg.hidden.clear();
  const Tensor* w0 = find(b.params, "backbone.0.weight");
  if (!w0) throw ConfigError("checkpoint lacks backbone parameters");
  cfg.input_dim = w0->rows();
  for (std::size_t l = 0;; ++l) {
    const Tensor* w = find(b.params, "backbone." + std::to_string(l) + ".weight");
    if (!w) break;
    cfg.hidden.push_back(w->cols());
  }
  cfg.subspaces = 0;
  while (find(b.params, "head." + std::to_string(cfg.subspaces) + ".weight")) ++cfg.subspaces;
  if (cfg.subspaces == 0) throw ConfigError("checkpoint lacks subspace heads");
  cfg.latent = find(b.params, "head.0.weight")->cols();
  if (const Tensor* p = find(b.params, "projector.weight")) cfg.head_width = p->cols();
  if (const Tensor* p = find(b.params, "prototypes.weight")) cfg.head_width = p->cols();
  cfg.validate();
  b.config = cfg;
  return b;
}

ModelBundle load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open checkpoint '" + path + "'");
  return load_checkpoint(f);
}

}  // namespace aurora
