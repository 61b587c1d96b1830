#include "aurora/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <thread>

#include "aurora/errors.hpp"

namespace aurora {

namespace {

constexpr std::uint64_t kLoadingsKey = 0x4c4f4144494e4753ULL;  // "LOADINGS"
constexpr double kLeakage = 0.1;

std::string fmt9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

void fill_block_loading(Tensor& a, Factor f, std::size_t p, Rng& rng) {
  const auto [b, e] = factor_block(f, p);
  for (std::size_t j = 0; j < p; ++j) {
    if (j >= b && j < e) {
      const double mag = rng.uniform(0.5, 1.5);
      a[j] = rng.bernoulli(0.5) ? mag : -mag;
    } else {
      a[j] = kLeakage * rng.normal();
    }
  }
}

CohortRecord make_record(const CohortConfig& cfg, const Loadings& L, std::uint64_t id) {
  Rng rng = Rng::stream(cfg.seed, id);
  const ShiftSpec shift = cfg.shift.value_or(ShiftSpec::identity());

  const double phys = rng.normal();
  const double e_int = rng.normal();
  const double e_obs = rng.normal();
  const auto site = static_cast<std::uint32_t>(rng.below(cfg.sites));

  FactorVector f;
  f.phys = phys;
  f.intervention = (cfg.rho + shift.int_policy_delta) * phys + std::sqrt(1.0 - cfg.rho * cfg.rho) * e_int;
  f.obs = (0.5 * phys + 0.5 * e_obs) * shift.obs_scale;
  f.ctx = site;
  const std::size_t loading_row = shift.site_remap.empty() ? site : shift.site_remap[site];

  CohortRecord r;
  r.id = id;
  r.factors = f;
  r.signal = Tensor({cfg.p});
  r.features = Tensor({cfg.p});
  for (std::size_t j = 0; j < cfg.p; ++j) {
    r.signal[j] = L.phys[j] * f.phys + L.intervention[j] * f.intervention + L.obs[j] * f.obs +
                  L.sites(loading_row, j);
  }
  for (std::size_t j = 0; j < cfg.p; ++j) r.features[j] = r.signal[j] + cfg.noise * rng.normal();

  r.mortality = rng.uniform() < mortality_probability(f);
  r.sepsis = rng.uniform() < sepsis_probability(f);
  r.readmission = rng.uniform() < readmission_probability(f);
  return r;
}

std::uint64_t parse_header_field(const std::string& token, const std::string& key) {
  if (token.rfind(key + "=", 0) != 0) throw ConfigError("cohort header: expected '" + key + "=' got '" + token + "'");
  try {
    return std::stoull(token.substr(key.size() + 1));
  } catch (const std::exception&) {
    throw ConfigError("cohort header: bad value in '" + token + "'");
  }
}

}  // namespace

std::string_view factor_name(Factor f) {
  switch (f) {
    case Factor::phys: return "phys";
    case Factor::intervention: return "int";
    case Factor::obs: return "obs";
    case Factor::ctx: return "ctx";
  }
  return "?";
}

Factor parse_factor(std::string_view name) {
  for (auto f : kAllFactors)
    if (factor_name(f) == name) return f;
  throw ContractError("unknown factor '" + std::string(name) + "'");
}

double FactorVector::continuous(Factor f) const {
  switch (f) {
    case Factor::phys: return phys;
    case Factor::intervention: return intervention;
    case Factor::obs: return obs;
    case Factor::ctx: return static_cast<double>(ctx);
  }
  return 0.0;
}

ShiftSpec ShiftSpec::standard(std::size_t sites) {
  ShiftSpec s;
  s.int_policy_delta = -1.0;
  s.obs_scale = 2.0;
  s.site_remap.resize(sites);
  for (std::size_t i = 0; i < sites; ++i) s.site_remap[i] = (i + 1) % sites;
  return s;
}

void ShiftSpec::validate(std::size_t sites) const {
  if (!(obs_scale > 0.0) || !std::isfinite(obs_scale)) throw ConfigError("shift: obs_scale must be positive");
  if (!std::isfinite(int_policy_delta)) throw ConfigError("shift: int_policy_delta must be finite");
  if (site_remap.empty()) return;
  if (site_remap.size() != sites) throw ConfigError("shift: site_remap must list every site");
  std::vector<bool> seen(sites, false);
  for (auto s : site_remap) {
    if (s >= sites || seen[s]) throw ConfigError("shift: site_remap is not a permutation");
    seen[s] = true;
  }
}

bool ShiftSpec::is_identity() const {
  if (int_policy_delta != 0.0 || obs_scale != 1.0) return false;
  for (std::size_t i = 0; i < site_remap.size(); ++i)
    if (site_remap[i] != i) return false;
  return true;
}

void CohortConfig::validate() const {
  if (n < 1) throw ConfigError("cohort: n must be >= 1");
  if (p < 8) throw ConfigError("cohort: p must be >= 8");
  if (sites < 1) throw ConfigError("cohort: site count must be >= 1");
  if (!(rho >= -0.95 && rho <= 0.95)) throw ConfigError("cohort: rho must lie in [-0.95, 0.95]");
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw ConfigError("cohort: noise must be finite and non-negative");
  if (shift) shift->validate(sites);
}

Loadings Loadings::draw(std::size_t p, std::size_t sites, std::uint64_t seed) {
  Rng rng = Rng::stream(seed, kLoadingsKey);
  Loadings L{Tensor({p}), Tensor({p}), Tensor({p}), Tensor({sites, p})};
  fill_block_loading(L.phys, Factor::phys, p, rng);
  fill_block_loading(L.intervention, Factor::intervention, p, rng);
  fill_block_loading(L.obs, Factor::obs, p, rng);
  const auto [b, e] = factor_block(Factor::ctx, p);
  for (std::size_t s = 0; s < sites; ++s)
    for (std::size_t j = 0; j < p; ++j) L.sites(s, j) = (j >= b && j < e) ? rng.normal() : kLeakage * rng.normal();
  return L;
}

Tensor Cohort::features(std::span<const std::size_t> rows) const {
  const std::size_t p = config.p;
  Tensor out({rows.size(), p});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& f = records.at(rows[i]).features;
    std::copy_n(f.data().begin(), p, out.row(i).begin());
  }
  return out;
}

Tensor Cohort::features() const {
  std::vector<std::size_t> all(records.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return features(all);
}

Cohort generate(const CohortConfig& cfg, std::size_t threads) {
  cfg.validate();
  Cohort cohort{cfg, Loadings::draw(cfg.p, cfg.sites, cfg.seed), {}};
  cohort.records.resize(cfg.n);
  threads = std::clamp<std::size_t>(threads, 1, cfg.n);
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) cohort.records[i] = make_record(cfg, *cohort.loadings, i);
  };
  if (threads == 1) {
    work(0, cfg.n);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (cfg.n + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
      const std::size_t b = t * chunk, e = std::min(cfg.n, b + chunk);
      if (b < e) pool.emplace_back(work, b, e);
    }
    for (auto& th : pool) th.join();
  }
  return cohort;
}

CohortConfig apply_shift(const CohortConfig& cfg, const ShiftSpec& spec) {
  spec.validate(cfg.sites);
  CohortConfig out = cfg;
  out.shift = spec;
  return out;
}

std::pair<std::size_t, std::size_t> factor_block(Factor f, std::size_t p) {
  const std::size_t b = p / kFactorCount;
  return {index(f) * b, (index(f) + 1) * b};
}

Tensor context_features(const CohortRecord& record, Factor f) {
  const auto [b, e] = factor_block(f, record.features.size());
  if (e > record.features.size() || b == e) throw ContractError("context_features: record too short for factor blocks");
  Tensor out({e - b});
  std::copy(record.features.data().begin() + static_cast<std::ptrdiff_t>(b),
            record.features.data().begin() + static_cast<std::ptrdiff_t>(e), out.data().begin());
  return out;
}

Tensor context_matrix(const Cohort& cohort, std::span<const std::size_t> rows, Factor f) {
  const auto [b, e] = factor_block(f, cohort.config.p);
  Tensor out({rows.size(), e - b});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& x = cohort.records.at(rows[i]).features;
    for (std::size_t j = b; j < e; ++j) out(i, j - b) = x[j];
  }
  return out;
}

Tensor resample_view(const CohortRecord& record, double noise, Rng& rng) {
  if (record.signal.empty()) throw ContractError("resample_view needs an in-memory cohort (signal missing)");
  Tensor view = record.signal;
  for (auto& v : view.data()) v += noise * rng.normal();
  return view;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double mortality_probability(const FactorVector& f) { return sigmoid(2.0 * f.phys - 1.5); }
double sepsis_probability(const FactorVector& f) { return sigmoid(1.5 * f.phys + 0.5 * f.obs - 1.5); }
double readmission_probability(const FactorVector& f) { return sigmoid(0.8 * f.phys + 0.8 * f.intervention - 1.0); }

void write_cohort(std::ostream& out, const Cohort& cohort) {
  const auto& c = cohort.config;
  out << "AURC v1 n=" << cohort.records.size() << " p=" << c.p << " S=" << c.sites << "\n";
  std::string line;
  for (const auto& r : cohort.records) {
    line = std::to_string(r.id);
    for (double v : r.features.data()) (line += ',') += fmt9(v);
    (line += ',') += fmt9(r.factors.phys);
    (line += ',') += fmt9(r.factors.intervention);
    (line += ',') += fmt9(r.factors.obs);
    (line += ',') += std::to_string(r.factors.ctx);
    (line += ',') += r.mortality ? '1' : '0';
    (line += ',') += r.sepsis ? '1' : '0';
    (line += ',') += r.readmission ? '1' : '0';
    out << line << '\n';
  }
}

void write_cohort(const std::string& path, const Cohort& cohort) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open '" + path + "' for writing");
  write_cohort(f, cohort);
  if (!f) throw ConfigError("failed writing '" + path + "'");
}

Cohort read_cohort(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("cohort file is empty");
  std::istringstream hs(line);
  std::string magic, version, tn, tp, ts;
  hs >> magic >> version >> tn >> tp >> ts;
  if (magic != "AURC" || version != "v1") throw ConfigError("not a cohort file (bad magic '" + magic + "')");
  Cohort cohort;
  cohort.config.n = parse_header_field(tn, "n");
  cohort.config.p = parse_header_field(tp, "p");
  cohort.config.sites = parse_header_field(ts, "S");
  const std::size_t p = cohort.config.p;
  const std::size_t expected = 1 + p + 4 + 3;
  cohort.records.reserve(cohort.config.n);
  std::vector<std::string> cells;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    cells.clear();
    std::size_t start = 0;
    for (;;) {
      const auto comma = line.find(',', start);
      cells.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (cells.size() != expected)
      throw ConfigError("cohort row has " + std::to_string(cells.size()) + " fields, expected " + std::to_string(expected));
    try {
      CohortRecord r;
      r.id = std::stoull(cells[0]);
      r.features = Tensor({p});
      for (std::size_t j = 0; j < p; ++j) r.features[j] = std::stod(cells[1 + j]);
      r.factors.phys = std::stod(cells[1 + p]);
      r.factors.intervention = std::stod(cells[2 + p]);
      r.factors.obs = std::stod(cells[3 + p]);
      r.factors.ctx = static_cast<std::uint32_t>(std::stoul(cells[4 + p]));
      r.mortality = cells[5 + p] == "1";
      r.sepsis = cells[6 + p] == "1";
      r.readmission = cells[7 + p] == "1";
      cohort.records.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw ConfigError("malformed cohort row: " + line.substr(0, 60));
    }
  }
  if (cohort.records.size() != cohort.config.n)
    throw ConfigError("cohort header says n=" + std::to_string(cohort.config.n) + " but file has " +
                      std::to_string(cohort.records.size()) + " rows");
  return cohort;
}

Cohort read_cohort(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open cohort file '" + path + "'");
  return read_cohort(f);
}

}  // namespace aurora
