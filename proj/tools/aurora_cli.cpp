#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "aurora/cohort.hpp"
#include "aurora/config.hpp"
#include "aurora/embedding_store.hpp"
#include "aurora/encoder.hpp"
#include "aurora/errors.hpp"
#include "aurora/experiment.hpp"
#include "aurora/metrics.hpp"
#include "aurora/training.hpp"

namespace fs = std::filesystem;
using namespace aurora;

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open " + path + " for writing");
  return f;
}

std::string sibling(const std::string& path, const std::string& suffix) {
  fs::path p(path);
  return (p.parent_path() / (p.stem().string() + suffix)).string();
}

void warn_all(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
}

int cmd_generate(const std::string& config, const std::string& out) {
  const auto cfg = ExperimentConfig::load(config);
  write_cohort(out, generate(cfg.cohort, configured_threads()));
  return 0;
}

int cmd_train(const std::string& config, const std::string& out, std::string log_path) {
  const auto cfg = ExperimentConfig::load(config);
  const auto result = train(cfg);
  save_checkpoint(out, result.model);
  if (log_path.empty()) log_path = sibling(out, "_log.csv");
  auto log = open_out(log_path);
  write_training_log(log, result.log, cfg.encoder.subspaces);
  if (result.diverged) {
    std::cerr << "error: training diverged: " << result.error << " (last finite state saved)\n";
    return 3;
  }
  return 0;
}

int cmd_embed(const std::string& ckpt, const std::string& cohort, const std::string& out) {
  write_store(out, embed(load_checkpoint(ckpt), read_cohort(cohort)));
  return 0;
}

int cmd_evaluate(const std::string& store, const std::string& cohort, const std::string& out, const std::string& config,
                 const std::string& method) {
  ExperimentConfig cfg = ExperimentConfig::defaults();
  if (!config.empty()) cfg = ExperimentConfig::load(config);
  const auto ev = evaluate(read_store(store), read_cohort(cohort), cfg, method);
  warn_all(ev.warnings);
  auto f = open_out(out);
  ev.table.write_csv(f);
  return 0;
}

int cmd_grid(const std::string& config, const std::string& out, std::string csv, std::size_t seeds) {
  const auto cfg = ExperimentConfig::load(config);
  const auto result = run_grid(cfg, seeds, configured_threads());
  warn_all(result.warnings);
  if (csv.empty()) csv = sibling(out, "_metrics.csv");
  {
    auto f = open_out(out);
    f << result.report;
  }
  {
    auto f = open_out(csv);
    result.table.write_csv(f);
  }
  if (!result.error.empty()) {
    std::cerr << "error: " << result.error << " (partial results written)\n";
    return 3;
  }
  return 0;
}

int cmd_project(const std::string& store, const std::string& out) {
  const auto set = read_store(store);
  const Tensor xy = pca_project(set.z, 2);
  auto f = open_out(out);
  f << "id,pc1,pc2\n";
  char buf[96];
  for (std::size_t i = 0; i < set.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%llu,%.6f,%.6f\n", static_cast<unsigned long long>(set.ids[i]), xy(i, 0), xy(i, 1));
    f << buf;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"aurora: orthogonal contextual subspaces on a synthetic cohort"};
  app.require_subcommand(1);

  std::string config, out, ckpt, cohort, store, log, csv, method = "model";
  std::size_t seeds = 1;

  auto* gen = app.add_subcommand("generate", "write a synthetic cohort CSV");
  gen->add_option("--config", config)->required()->check(CLI::ExistingFile);
  gen->add_option("--out", out)->required();

  auto* tr = app.add_subcommand("train", "train one method and write a checkpoint");
  tr->add_option("--config", config)->required()->check(CLI::ExistingFile);
  tr->add_option("--out", out)->required();
  tr->add_option("--log", log, "training log CSV (default <out>_log.csv)");

  auto* em = app.add_subcommand("embed", "write frozen embeddings for a cohort");
  em->add_option("--ckpt", ckpt)->required()->check(CLI::ExistingFile);
  em->add_option("--cohort", cohort)->required()->check(CLI::ExistingFile);
  em->add_option("--out", out)->required();

  auto* ev = app.add_subcommand("evaluate", "compute the metric table for an embedding store");
  ev->add_option("--store", store)->required()->check(CLI::ExistingFile);
  ev->add_option("--cohort", cohort)->required()->check(CLI::ExistingFile);
  ev->add_option("--out", out)->required();
  ev->add_option("--config", config, "eval settings (k, test fraction)")->check(CLI::ExistingFile);
  ev->add_option("--method", method, "method label for the rows");

  auto* gr = app.add_subcommand("grid", "train and evaluate every method, in-domain and shifted");
  gr->add_option("--config", config)->required()->check(CLI::ExistingFile);
  gr->add_option("--out", out)->required();
  gr->add_option("--csv", csv, "metrics CSV (default <out>_metrics.csv)");
  gr->add_option("--seeds", seeds, "consecutive seeds starting at the config seed")->check(CLI::PositiveNumber);

  auto* pr = app.add_subcommand("project", "2-D PCA coordinates of an embedding store");
  pr->add_option("--store", store)->required()->check(CLI::ExistingFile);
  pr->add_option("--out", out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*gen) return cmd_generate(config, out);
    if (*tr) return cmd_train(config, out, log);
    if (*em) return cmd_embed(ckpt, cohort, out);
    if (*ev) return cmd_evaluate(store, cohort, out, config, method);
    if (*gr) return cmd_grid(config, out, csv, seeds);
    if (*pr) return cmd_project(store, out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const ContractError& e) {
    std::cerr << "contract error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
