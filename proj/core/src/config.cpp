#include "aurora/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <istream>
#include <sstream>

#include "aurora/errors.hpp"

namespace aurora {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a real number, got '" + v + "'");
  }
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  if (v.empty() || v[0] == '-') throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
  try {
    std::size_t used = 0;
    const auto u = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return u;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
  }
}

std::vector<std::size_t> to_uint_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  for (const auto& s : split_list(v)) out.push_back(to_uint(key, s));
  return out;
}

std::string real_text(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <class T>
std::string join(const std::vector<T>& xs, const std::function<std::string(const T&)>& f) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) s += ",";
    s += f(xs[i]);
  }
  return s;
}

}  // namespace

std::map<std::string, std::string> parse_key_values(std::istream& in) {
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    if (!kv.emplace(key, value).second) throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
  }
  return kv;
}

ExperimentConfig ExperimentConfig::defaults() { return ExperimentConfig{}; }

ExperimentConfig ExperimentConfig::parse(std::istream& in) {
  const auto kv = parse_key_values(in);
  ExperimentConfig c = defaults();
  if (!kv.count("seed")) throw ConfigError("config must set 'seed' explicitly");
  bool cohort_seed_set = false;
  bool shift_remap_set = false;

  using Setter = std::function<void(const std::string&, const std::string&)>;
  const std::map<std::string, Setter> setters = {
      {"seed", [&](auto& k, auto& v) { c.seed = to_uint(k, v); }},
      {"method", [&](auto&, auto& v) { c.method = parse_method(v); }},
      {"cohort.n", [&](auto& k, auto& v) { c.cohort.n = to_uint(k, v); }},
      {"cohort.p", [&](auto& k, auto& v) { c.cohort.p = to_uint(k, v); }},
      {"cohort.sites", [&](auto& k, auto& v) { c.cohort.sites = to_uint(k, v); }},
      {"cohort.rho", [&](auto& k, auto& v) { c.cohort.rho = to_real(k, v); }},
      {"cohort.noise", [&](auto& k, auto& v) { c.cohort.noise = to_real(k, v); }},
      {"cohort.seed", [&](auto& k, auto& v) { c.cohort.seed = to_uint(k, v); cohort_seed_set = true; }},
      {"shift.int_policy_delta", [&](auto& k, auto& v) { c.shift.int_policy_delta = to_real(k, v); }},
      {"shift.obs_scale", [&](auto& k, auto& v) { c.shift.obs_scale = to_real(k, v); }},
      {"shift.site_remap", [&](auto& k, auto& v) { c.shift.site_remap = to_uint_list(k, v); shift_remap_set = true; }},
      {"encoder.hidden", [&](auto& k, auto& v) { c.encoder.hidden = to_uint_list(k, v); }},
      {"encoder.latent", [&](auto& k, auto& v) { c.encoder.latent = to_uint(k, v); }},
      {"encoder.subspaces", [&](auto& k, auto& v) { c.encoder.subspaces = to_uint(k, v); }},
      {"encoder.head_width", [&](auto& k, auto& v) { c.encoder.head_width = to_uint(k, v); }},
      {"objective.lambda", [&](auto& k, auto& v) { c.objective.aurora.lambda = to_real(k, v); }},
      {"objective.mu", [&](auto& k, auto& v) { c.objective.aurora.mu = to_real(k, v); }},
      {"objective.orth_mode", [&](auto&, auto& v) { c.objective.aurora.orth_mode = parse_orth_mode(v); }},
      {"objective.align_weights", [&](auto& k, auto& v) {
         c.objective.aurora.align_weights.clear();
         for (const auto& s : split_list(v)) c.objective.aurora.align_weights.push_back(to_real(k, s));
       }},
      {"objective.temperature", [&](auto& k, auto& v) { c.objective.temperature = to_real(k, v); }},
      {"objective.mask_fraction", [&](auto& k, auto& v) { c.objective.mask_fraction = to_real(k, v); }},
      {"objective.ema_rate", [&](auto& k, auto& v) { c.objective.ema_rate = to_real(k, v); }},
      {"objective.center_rate", [&](auto& k, auto& v) { c.objective.center_rate = to_real(k, v); }},
      {"objective.student_temp", [&](auto& k, auto& v) { c.objective.student_temp = to_real(k, v); }},
      {"objective.teacher_temp", [&](auto& k, auto& v) { c.objective.teacher_temp = to_real(k, v); }},
      {"optimizer.kind", [&](auto&, auto& v) { c.training.optimizer.kind = parse_optimizer_kind(v); }},
      {"optimizer.lr", [&](auto& k, auto& v) { c.training.optimizer.lr = to_real(k, v); }},
      {"optimizer.beta1", [&](auto& k, auto& v) { c.training.optimizer.beta1 = to_real(k, v); }},
      {"optimizer.beta2", [&](auto& k, auto& v) { c.training.optimizer.beta2 = to_real(k, v); }},
      {"optimizer.epsilon", [&](auto& k, auto& v) { c.training.optimizer.epsilon = to_real(k, v); }},
      {"optimizer.schedule", [&](auto&, auto& v) {
         if (v == "constant") c.training.schedule = Schedule::constant;
         else if (v == "cosine") c.training.schedule = Schedule::cosine;
         else throw ConfigError("unknown schedule '" + v + "' (expected constant|cosine)");
       }},
      {"optimizer.epochs", [&](auto& k, auto& v) { c.training.epochs = to_uint(k, v); }},
      {"optimizer.batch_size", [&](auto& k, auto& v) { c.training.batch_size = to_uint(k, v); }},
      {"relational.neighbors", [&](auto& k, auto& v) { c.training.neighbors = to_uint(k, v); }},
      {"eval.k", [&](auto& k, auto& v) { c.eval.k = to_uint(k, v); }},
      {"eval.test_fraction", [&](auto& k, auto& v) { c.eval.test_fraction = to_real(k, v); }},
      {"grid.methods", [&](auto&, auto& v) {
         c.grid_methods.clear();
         for (const auto& s : split_list(v)) c.grid_methods.push_back(parse_method(s));
       }},
  };
  for (const auto& [key, value] : kv) {
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second(key, value);
  }
  if (!cohort_seed_set) c.cohort.seed = c.seed;
  if (!shift_remap_set && c.shift.site_remap.size() != c.cohort.sites) c.shift.site_remap = ShiftSpec::standard(c.cohort.sites).site_remap;
  c.encoder.input_dim = c.cohort.p;
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::parse_string(const std::string& text) {
  std::istringstream in(text);
  return parse(in);
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config '" + path + "'");
  return parse(f);
}

ExperimentConfig ExperimentConfig::with_seed(std::uint64_t s) const {
  ExperimentConfig c = *this;
  c.seed = s;
  c.cohort.seed = s;
  return c;
}

void ExperimentConfig::validate() const {
  cohort.validate();
  shift.validate(cohort.sites);
  encoder.validate();
  if (encoder.input_dim != cohort.p) throw ConfigError("encoder input dim must equal cohort.p");
  objective.aurora.validate(encoder.subspaces);
  if (method == Method::aurora && encoder.subspaces > kFactorCount)
    throw ConfigError("aurora needs at most one subspace per factor (K <= 4)");
  if (!(objective.temperature > 0.0)) throw ConfigError("objective.temperature must be positive");
  if (!(objective.mask_fraction > 0.0 && objective.mask_fraction < 1.0)) throw ConfigError("objective.mask_fraction must lie in (0, 1)");
  if (!(objective.ema_rate >= 0.0 && objective.ema_rate <= 1.0)) throw ConfigError("objective.ema_rate must lie in [0, 1]");
  if (!(objective.center_rate >= 0.0 && objective.center_rate <= 1.0)) throw ConfigError("objective.center_rate must lie in [0, 1]");
  if (!(objective.student_temp > 0.0) || !(objective.teacher_temp > 0.0)) throw ConfigError("distillation temperatures must be positive");
  if (!(training.optimizer.lr >= 0.0)) throw ConfigError("optimizer.lr must be >= 0");
  if (training.batch_size < 2) throw ConfigError("optimizer.batch_size must be >= 2");
  if (training.neighbors < 1) throw ConfigError("relational.neighbors must be >= 1");
  if (eval.k < 1) throw ConfigError("eval.k must be >= 1");
  if (!(eval.test_fraction > 0.0 && eval.test_fraction < 1.0)) throw ConfigError("eval.test_fraction must lie in (0, 1)");
  if (grid_methods.empty()) throw ConfigError("grid.methods must not be empty");
}

std::string ExperimentConfig::to_text() const {
  std::ostringstream o;
  auto sz = [](const std::size_t& v) { return std::to_string(v); };
  o << "seed = " << seed << "\n";
  o << "method = " << to_string(method) << "\n";
  o << "cohort.n = " << cohort.n << "\n";
  o << "cohort.p = " << cohort.p << "\n";
  o << "cohort.sites = " << cohort.sites << "\n";
  o << "cohort.rho = " << real_text(cohort.rho) << "\n";
  o << "cohort.noise = " << real_text(cohort.noise) << "\n";
  o << "cohort.seed = " << cohort.seed << "\n";
  o << "shift.int_policy_delta = " << real_text(shift.int_policy_delta) << "\n";
  o << "shift.obs_scale = " << real_text(shift.obs_scale) << "\n";
  o << "shift.site_remap = " << join<std::size_t>(shift.site_remap, sz) << "\n";
  o << "encoder.hidden = " << join<std::size_t>(encoder.hidden, sz) << "\n";
  o << "encoder.latent = " << encoder.latent << "\n";
  o << "encoder.subspaces = " << encoder.subspaces << "\n";
  o << "encoder.head_width = " << encoder.head_width << "\n";
  o << "objective.lambda = " << real_text(objective.aurora.lambda) << "\n";
  o << "objective.mu = " << real_text(objective.aurora.mu) << "\n";
  o << "objective.orth_mode = " << to_string(objective.aurora.orth_mode) << "\n";
  if (!objective.aurora.align_weights.empty())
    o << "objective.align_weights = " << join<double>(objective.aurora.align_weights, real_text) << "\n";
  o << "objective.temperature = " << real_text(objective.temperature) << "\n";
  o << "objective.mask_fraction = " << real_text(objective.mask_fraction) << "\n";
  o << "objective.ema_rate = " << real_text(objective.ema_rate) << "\n";
  o << "objective.center_rate = " << real_text(objective.center_rate) << "\n";
  o << "objective.student_temp = " << real_text(objective.student_temp) << "\n";
  o << "objective.teacher_temp = " << real_text(objective.teacher_temp) << "\n";
  o << "optimizer.kind = " << to_string(training.optimizer.kind) << "\n";
  o << "optimizer.lr = " << real_text(training.optimizer.lr) << "\n";
  o << "optimizer.beta1 = " << real_text(training.optimizer.beta1) << "\n";
  o << "optimizer.beta2 = " << real_text(training.optimizer.beta2) << "\n";
  o << "optimizer.epsilon = " << real_text(training.optimizer.epsilon) << "\n";
  o << "optimizer.schedule = " << (training.schedule == Schedule::cosine ? "cosine" : "constant") << "\n";
  o << "optimizer.epochs = " << training.epochs << "\n";
  o << "optimizer.batch_size = " << training.batch_size << "\n";
  o << "relational.neighbors = " << training.neighbors << "\n";
  o << "eval.k = " << eval.k << "\n";
  o << "eval.test_fraction = " << real_text(eval.test_fraction) << "\n";
  o << "grid.methods = " << join<Method>(grid_methods, [](const Method& m) { return to_string(m); }) << "\n";
  return o.str();
}

std::size_t configured_threads() {
  const char* env = std::getenv("AURORA_THREADS");
  if (!env || !*env) return 1;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1) throw ConfigError("AURORA_THREADS must be a positive integer");
  return static_cast<std::size_t>(v);
}

}  // namespace aurora
