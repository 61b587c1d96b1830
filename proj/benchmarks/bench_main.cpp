#include <benchmark/benchmark.h>

#include <vector>

#include "aurora/autodiff.hpp"
#include "aurora/cohort.hpp"
#include "aurora/config.hpp"
#include "aurora/encoder.hpp"
#include "aurora/metrics.hpp"
#include "aurora/objectives.hpp"
#include "aurora/relational.hpp"
#include "aurora/rng.hpp"
#include "aurora/tensor.hpp"

using namespace aurora;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng = Rng::stream(seed, 0);
  Tensor t({r, c});
  for (auto& v : t.data()) v = rng.normal();
  return t;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor a = random_tensor(n, 64, 1), b = random_tensor(64, 64, 2);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(n));
}
BENCHMARK(BM_Matmul)->Arg(256)->Arg(1024);

void BM_NeighborhoodPurity(benchmark::State& state) {
  CohortConfig cfg;
  cfg.n = static_cast<std::size_t>(state.range(0));
  const Cohort c = generate(cfg);
  const Tensor z = random_tensor(cfg.n, 32, 3);
  std::vector<std::uint64_t> ids;
  std::vector<FactorVector> f;
  for (const auto& r : c.records) {
    ids.push_back(r.id);
    f.push_back(r.factors);
  }
  for (auto _ : state) benchmark::DoNotOptimize(neighborhood_purity(z, ids, f, 10));
}
BENCHMARK(BM_NeighborhoodPurity)->Arg(1000);

void BM_RelationGraph(benchmark::State& state) {
  const Tensor proxies = random_tensor(static_cast<std::size_t>(state.range(0)), 8, 4);
  for (auto _ : state) benchmark::DoNotOptimize(build_graph(proxies, Factor::phys, 10, 1));
}
BENCHMARK(BM_RelationGraph)->Arg(4000);

void BM_AuroraStep(benchmark::State& state) {
  ExperimentConfig cfg = ExperimentConfig::defaults();
  cfg.cohort.n = 1024;
  const Cohort c = generate(cfg.cohort);
  std::vector<std::size_t> rows(256);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  std::vector<RelationGraph> graphs;
  for (auto f : {Factor::phys, Factor::intervention, Factor::obs, Factor::ctx})
    graphs.push_back(build_graph(c, rows, f, cfg.training.neighbors, 1));
  const PairBatch pairs = sample_pairs(graphs, rows);
  const ModelBundle model = ModelBundle::init(Method::aurora, cfg.encoder, 1);
  const Tensor x = c.features(rows);
  for (auto _ : state) {
    ad::Tape tape;
    const BoundParams p(tape, model.params, true);
    const auto enc = encode_graph(p, model.config, tape.constant(x));
    const auto report = aurora_loss(cfg.objective.aurora, enc.components, pairs);
    tape.backward(report.loss);
    benchmark::DoNotOptimize(report.total);
  }
}
BENCHMARK(BM_AuroraStep);

}  // namespace
BENCHMARK_MAIN();
