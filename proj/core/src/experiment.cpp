#include "aurora/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <future>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "aurora/errors.hpp"

namespace aurora {

namespace {

constexpr std::size_t kMinTestSplit = 500;
constexpr std::size_t kMinMiSamples = 1000;

std::string fixed(double v, int decimals) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

struct Summary {
  double mean = 0.0;
  double sd = 0.0;
  bool present = false;
};

Summary summarize(const std::vector<MetricsTable>& tables, const std::string& m, const std::string& split,
                  const std::string& method) {
  std::vector<double> v;
  for (const auto& t : tables)
    if (const auto* r = t.find(m, split, method)) v.push_back(r->value);
  Summary s;
  if (v.empty()) return s;
  s.present = true;
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return s;
}

std::string cell(const std::vector<MetricsTable>& tables, const std::string& m, const std::string& split,
                 const std::string& method, int decimals = 3) {
  const Summary s = summarize(tables, m, split, method);
  if (!s.present) return "n/a";
  if (tables.size() == 1) return fixed(s.mean, decimals);
  return fixed(s.mean, decimals) + " ± " + fixed(s.sd, decimals);
}

}  // namespace

LabeledEmbeddings LabeledEmbeddings::join(const EmbeddingSet& set, const Cohort& cohort) {
  set.validate();
  std::unordered_map<std::uint64_t, std::size_t> by_id;
  by_id.reserve(cohort.records.size());
  for (std::size_t i = 0; i < cohort.records.size(); ++i) by_id.emplace(cohort.records[i].id, i);
  LabeledEmbeddings out;
  out.embeddings = set;
  for (auto id : set.ids) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw ContractError("embedding id " + std::to_string(id) + " is not in the cohort");
    const auto& r = cohort.records[it->second];
    out.factors.push_back(r.factors);
    out.mortality.push_back(r.mortality);
    out.sepsis.push_back(r.sepsis);
    out.readmission.push_back(r.readmission);
  }
  return out;
}

LabeledEmbeddings LabeledEmbeddings::subset(std::span<const std::size_t> rows) const {
  LabeledEmbeddings out;
  out.embeddings = embeddings.subset(rows);
  for (auto r : rows) {
    out.factors.push_back(factors.at(r));
    out.mortality.push_back(mortality[r]);
    out.sepsis.push_back(sepsis[r]);
    out.readmission.push_back(readmission[r]);
  }
  return out;
}

OutcomeProbes OutcomeProbes::fit(const LabeledEmbeddings& train) {
  OutcomeProbes p;
  p.mortality.fit(train.embeddings.z, train.mortality);
  p.sepsis.fit(train.embeddings.z, train.sepsis);
  p.readmission.fit(train.embeddings.z, train.readmission);
  return p;
}

std::size_t OutcomeProbes::unconverged() const {
  return !mortality.converged() + !sepsis.converged() + !readmission.converged();
}

void add_split_metrics(MetricsTable& table, const LabeledEmbeddings& test, const OutcomeProbes& probes,
                       const std::string& split, const std::string& method, std::size_t k) {
  const auto& e = test.embeddings;
  table.add(metric::mortality_auroc, split, method, auroc(probes.mortality.scores(e.z), test.mortality));
  table.add(metric::sepsis_auroc, split, method, auroc(probes.sepsis.scores(e.z), test.sepsis));
  table.add(metric::readmission_auroc, split, method, auroc(probes.readmission.scores(e.z), test.readmission));
  table.add(metric::recall_at_10, split, method,
            recall_at_k(e.z, e.ids, e.z, e.ids, outcome_quartile_relevance(test.factors, test.mortality), k));
  if (test.size() >= kMinMiSamples) table.add(metric::mi_overlap, split, method, mi_overlap(e.components, test.factors).value);
  table.add(metric::orthogonality_score, split, method, orthogonality_score(e.components));
  table.add(metric::context_retrieval, split, method, context_retrieval(e.components, e.ids, test.factors, k));
  table.add(metric::neighborhood_purity, split, method, neighborhood_purity(e.z, e.ids, test.factors, k));
  table.add(metric::context_entropy, split, method, context_entropy(e.z, e.ids, test.factors, k));
}

Evaluation evaluate(const EmbeddingSet& store, const Cohort& cohort, const ExperimentConfig& cfg, const std::string& method) {
  const LabeledEmbeddings all = LabeledEmbeddings::join(store, cohort);
  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return store.ids[a] < store.ids[b]; });
  const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(order.size()) * cfg.eval.test_fraction));
  if (n_test < kMinTestSplit)
    throw ConfigError("held-out split has " + std::to_string(n_test) + " records; at least 500 are required");
  const std::vector<std::size_t> train_rows(order.begin(), order.end() - static_cast<std::ptrdiff_t>(n_test));
  const std::vector<std::size_t> test_rows(order.end() - static_cast<std::ptrdiff_t>(n_test), order.end());
  const auto train = all.subset(train_rows);
  const auto test = all.subset(test_rows);

  Evaluation ev;
  const auto probes = OutcomeProbes::fit(train);
  if (probes.unconverged())
    ev.warnings.push_back(method + ": " + std::to_string(probes.unconverged()) + " probe fit(s) stopped at the iteration cap");
  if (test.size() < kMinMiSamples) ev.warnings.push_back(method + ": mi_overlap skipped (needs >= 1000 held-out records)");
  add_split_metrics(ev.table, test, probes, "in_domain", method, cfg.eval.k);
  return ev;
}

GridData GridData::make(const ExperimentConfig& cfg, std::size_t threads) {
  GridData d{generate(cfg.cohort, threads), generate(apply_shift(cfg.cohort, cfg.shift), threads), {}};
  d.split = DataSplit::by_id(d.cohort, cfg.eval.test_fraction);
  if (d.split.test.size() < kMinTestSplit)
    throw ConfigError("held-out split has " + std::to_string(d.split.test.size()) + " records; at least 500 are required");
  return d;
}

CellResult run_cell(const ExperimentConfig& cfg, const GridData& data) {
  CellResult cell;
  cell.method = cfg.method;
  cell.training = train(cfg, data.cohort, data.split);
  const std::string name = to_string(cfg.method);
  if (cell.training.diverged) cell.warnings.push_back(name + ": training diverged (" + cell.training.error + ")");

  const ModelBundle& model = cell.training.model;
  const auto train_set = LabeledEmbeddings::join(embed(model, data.cohort, data.split.train), data.cohort);
  cell.in_domain_test = LabeledEmbeddings::join(embed(model, data.cohort, data.split.test), data.cohort);
  cell.shifted_test = LabeledEmbeddings::join(embed(model, data.shifted, data.split.test), data.shifted);

  const auto probes = OutcomeProbes::fit(train_set);
  if (probes.unconverged())
    cell.warnings.push_back(name + ": " + std::to_string(probes.unconverged()) + " probe fit(s) stopped at the iteration cap");
  add_split_metrics(cell.table, cell.in_domain_test, probes, "in_domain", name, cfg.eval.k);
  add_split_metrics(cell.table, cell.shifted_test, probes, "shifted", name, cfg.eval.k);
  cell.table.add(metric::param_count, "model", name, static_cast<double>(model.trainable_count()));
  return cell;
}

std::map<std::string, std::size_t> parameter_budget(const ExperimentConfig& cfg) {
  std::map<std::string, std::size_t> out;
  for (auto m : kAllMethods) out[to_string(m)] = ModelBundle::init(m, cfg.encoder, cfg.seed).trainable_count();
  return out;
}

bool budget_parity(const std::map<std::string, std::size_t>& budget) {
  if (budget.empty()) return true;
  std::size_t lo = budget.begin()->second, hi = lo;
  for (const auto& [_, v] : budget) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return static_cast<double>(hi) <= 1.1 * static_cast<double>(lo);
}

GridResult run_grid(const ExperimentConfig& base, std::size_t seeds, std::size_t threads) {
  base.validate();
  if (seeds == 0) throw ConfigError("--seeds must be >= 1");
  threads = std::max<std::size_t>(1, threads);
  GridResult out;
  for (std::size_t s = 0; s < seeds && out.error.empty(); ++s) {
    const ExperimentConfig cfg = base.with_seed(base.seed + s);
    const GridData data = GridData::make(cfg, threads);
    std::vector<CellResult> cells;
    auto run = [&](Method m) {
      ExperimentConfig c = cfg;
      c.method = m;
      return run_cell(c, data);
    };
    if (threads == 1) {
      for (auto m : cfg.grid_methods) {
        cells.push_back(run(m));
        if (cells.back().training.diverged) break;
      }
    } else {
      std::vector<std::future<CellResult>> pending;
      for (auto m : cfg.grid_methods) pending.push_back(std::async(std::launch::async, run, m));
      for (auto& f : pending) cells.push_back(f.get());
    }

    MetricsTable table;
    MetricsTable in, shifted;
    for (const auto& c : cells) {
      table.append(c.table);
      out.warnings.insert(out.warnings.end(), c.warnings.begin(), c.warnings.end());
      if (c.training.diverged && out.error.empty()) out.error = to_string(c.method) + ": " + c.training.error;
    }
    for (const auto& [method, gap] : shift_gap(table, table)) table.add(metric::shift_gap, "gap", method, gap);
    out.per_seed.push_back(table);
  }

  for (std::size_t s = 0; s < out.per_seed.size(); ++s) {
    if (out.per_seed.size() == 1) {
      out.table = out.per_seed[0];
      break;
    }
    for (const auto& r : out.per_seed[s].rows())
      out.table.add(r.metric, r.split + "@seed=" + std::to_string(base.seed + s), r.method, r.value);
  }
  out.report = render_report(base, out.per_seed, mortality_bayes_ceiling(base.cohort));
  return out;
}

double mortality_bayes_ceiling(const CohortConfig& cfg, std::size_t samples) {
  CohortConfig c = cfg;
  c.n = samples;
  c.shift.reset();
  const Cohort big = generate(c);
  std::vector<double> risk(big.size());
  std::vector<int> labels(big.size());
  for (std::size_t i = 0; i < big.size(); ++i) {
    risk[i] = mortality_probability(big.records[i].factors);
    labels[i] = big.records[i].mortality;
  }
  return auroc(risk, labels);
}

std::string render_report(const ExperimentConfig& cfg, const std::vector<MetricsTable>& per_seed, double ceiling) {
  std::vector<std::string> methods;
  for (auto m : cfg.grid_methods) methods.push_back(to_string(m));
  auto label = [](const std::string& m) { return display_name(parse_method(m)); };

  std::ostringstream o;
  o << "# Representation benchmark report\n\n";
  o << "- seeds: " << cfg.seed;
  if (per_seed.size() > 1) o << ".." << cfg.seed + per_seed.size() - 1 << " (mean ± std over " << per_seed.size() << " runs)";
  o << "\n";
  o << "- cohort: n=" << cfg.cohort.n << ", p=" << cfg.cohort.p << ", sites=" << cfg.cohort.sites
    << ", rho=" << fixed(cfg.cohort.rho, 2) << ", noise=" << fixed(cfg.cohort.noise, 2) << "\n";
  o << "- encoder: d=" << cfg.encoder.latent << ", K=" << cfg.encoder.subspaces << ", epochs=" << cfg.training.epochs
    << ", batch=" << cfg.training.batch_size << "\n";
  o << "- aurora objective: lambda=" << fixed(cfg.objective.aurora.lambda, 3) << ", mu=" << fixed(cfg.objective.aurora.mu, 3)
    << ", orth_mode=" << to_string(cfg.objective.aurora.orth_mode) << "\n";
  o << "- shift: int_policy_delta=" << fixed(cfg.shift.int_policy_delta, 2) << ", obs_scale=" << fixed(cfg.shift.obs_scale, 2)
    << "\n";
  o << "- mortality Bayes ceiling (factor oracle, Monte Carlo): " << fixed(ceiling, 4) << "\n\n";

  o << "## Downstream prediction (frozen embeddings, linear probes)\n\n";
  o << "| Method | Mortality AUROC ↑ | Sepsis AUROC ↑ | Readmission AUROC ↑ | Retrieval Recall@10 ↑ |\n";
  o << "|---|---|---|---|---|\n";
  for (const auto& m : methods)
    o << "| " << label(m) << " | " << cell(per_seed, metric::mortality_auroc, "in_domain", m) << " | "
      << cell(per_seed, metric::sepsis_auroc, "in_domain", m) << " | "
      << cell(per_seed, metric::readmission_auroc, "in_domain", m) << " | "
      << cell(per_seed, metric::recall_at_10, "in_domain", m) << " |\n";

  o << "\n## Disentanglement\n\n";
  o << "| Method | MI Overlap ↓ | Orthogonality Score ↑ | Context Retrieval ↑ |\n";
  o << "|---|---|---|---|\n";
  for (const auto& m : methods)
    o << "| " << label(m) << " | " << cell(per_seed, metric::mi_overlap, "in_domain", m) << " | "
      << cell(per_seed, metric::orthogonality_score, "in_domain", m) << " | "
      << cell(per_seed, metric::context_retrieval, "in_domain", m) << " |\n";

  o << "\n## Robustness under contextual shift\n\n";
  o << "| Method | In-Domain AUROC | Shifted AUROC | Gap ↓ |\n";
  o << "|---|---|---|---|\n";
  for (const auto& m : methods)
    o << "| " << label(m) << " | " << cell(per_seed, metric::mortality_auroc, "in_domain", m) << " | "
      << cell(per_seed, metric::mortality_auroc, "shifted", m) << " | " << cell(per_seed, metric::shift_gap, "gap", m)
      << " |\n";

  o << "\n## Latent geometry\n\n";
  o << "| Method | Neighborhood Purity ↑ | Context Entropy ↓ |\n";
  o << "|---|---|---|\n";
  for (const auto& m : methods)
    o << "| " << label(m) << " | " << cell(per_seed, metric::neighborhood_purity, "in_domain", m) << " | "
      << cell(per_seed, metric::context_entropy, "in_domain", m) << " |\n";

  const auto budget = parameter_budget(cfg);
  std::size_t lo = SIZE_MAX;
  for (const auto& [_, v] : budget) lo = std::min(lo, v);
  o << "\n## Parameter budget\n\n";
  o << "| Method | Trainable parameters | Ratio to smallest |\n";
  o << "|---|---|---|\n";
  for (const auto& m : methods)
    o << "| " << label(m) << " | " << budget.at(m) << " | "
      << fixed(static_cast<double>(budget.at(m)) / static_cast<double>(lo), 3) << " |\n";
  o << "\nParity within 10%: " << (budget_parity(budget) ? "yes" : "NO") << "\n";
  return o.str();
}

}  // namespace aurora
