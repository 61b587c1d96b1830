#pragma once

#include <map>
#include <string>
#include <vector>

#include "aurora/cohort.hpp"
#include "aurora/config.hpp"
#include "aurora/embedding_store.hpp"
#include "aurora/metrics.hpp"
#include "aurora/training.hpp"

namespace aurora {

/// Embeddings joined with the hidden factors and outcomes of their records.
struct LabeledEmbeddings {
  EmbeddingSet embeddings;
  std::vector<FactorVector> factors;
  std::vector<int> mortality, sepsis, readmission;

  static LabeledEmbeddings join(const EmbeddingSet& set, const Cohort& cohort);
  LabeledEmbeddings subset(std::span<const std::size_t> rows) const;
  std::size_t size() const { return embeddings.size(); }
};

/// Linear probes for the three outcomes, fitted on frozen training embeddings (z).
struct OutcomeProbes {
  LogisticProbe mortality, sepsis, readmission;

  static OutcomeProbes fit(const LabeledEmbeddings& train);
  std::size_t unconverged() const;
};

/// Adds the whole metric vocabulary for one split of one method.
void add_split_metrics(MetricsTable& table, const LabeledEmbeddings& test, const OutcomeProbes& probes,
                       const std::string& split, const std::string& method, std::size_t k);

struct Evaluation {
  MetricsTable table;
  std::vector<std::string> warnings;
};

/// Probes fit on the training ids, every metric computed on the held-out ids
/// (the highest eval.test_fraction of ids; at least 500 records).
Evaluation evaluate(const EmbeddingSet& store, const Cohort& cohort, const ExperimentConfig& cfg,
                    const std::string& method = "model");

/// Everything one grid cell produced.
struct CellResult {
  Method method = Method::aurora;
  TrainResult training;
  LabeledEmbeddings in_domain_test;
  LabeledEmbeddings shifted_test;
  MetricsTable table;
  std::vector<std::string> warnings;
};

/// Cohorts and split shared by every cell of a grid.
struct GridData {
  Cohort cohort;
  Cohort shifted;
  DataSplit split;

  static GridData make(const ExperimentConfig& cfg, std::size_t threads = 1);
};

/// Train one method and evaluate it on the in-domain test split and on the
/// paired shifted records.
CellResult run_cell(const ExperimentConfig& cfg, const GridData& data);

struct GridResult {
  MetricsTable table;  // every seed, splits suffixed "@seed=<s>" when more than one seed runs
  std::vector<MetricsTable> per_seed;
  std::string report;  // markdown
  std::vector<std::string> warnings;
  std::string error;  // non-empty if a cell diverged; results so far are kept
};

/// Every method in cfg.grid_methods, trained in-domain and evaluated on both
/// splits, followed by shift gaps and the parameter-budget check.
GridResult run_grid(const ExperimentConfig& cfg, std::size_t seeds = 1, std::size_t threads = 1);

/// Monte Carlo AUROC of the true mortality risk on a large sample from cfg's generator.
double mortality_bayes_ceiling(const CohortConfig& cfg, std::size_t samples = 200000);

/// Markdown tables for one or more seeds (mean +/- std when several).
std::string render_report(const ExperimentConfig& cfg, const std::vector<MetricsTable>& per_seed, double bayes_ceiling);

/// Trainable parameter count per method for the configured encoder.
std::map<std::string, std::size_t> parameter_budget(const ExperimentConfig& cfg);
/// True when the largest budget is within 10% of the smallest.
bool budget_parity(const std::map<std::string, std::size_t>& budget);

}  // namespace aurora
