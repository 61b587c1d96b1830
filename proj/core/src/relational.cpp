#include "aurora/relational.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <thread>

#include "aurora/errors.hpp"

namespace aurora {

double kernel_weight(double dist2, double sigma2) {
  if (!(sigma2 > 0.0)) throw ContractError("kernel_weight: sigma2 must be positive");
  if (!(dist2 >= 0.0)) throw ContractError("kernel_weight: dist2 must be non-negative");
  return std::exp(-dist2 / sigma2);
}

Tensor standardize_columns(const Tensor& x) {
  const std::size_t n = x.rows(), c = x.cols();
  Tensor out({n, c});
  for (std::size_t j = 0; j < c; ++j) {
    double mu = 0.0;
    for (std::size_t i = 0; i < n; ++i) mu += x(i, j);
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (x(i, j) - mu) * (x(i, j) - mu);
    const double sd = std::sqrt(var / static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i) out(i, j) = sd > 0.0 ? (x(i, j) - mu) / sd : 0.0;
  }
  return out;
}

RelationGraph build_graph(const Tensor& proxies, Factor factor, std::size_t m, std::size_t threads) {
  const std::size_t n = proxies.rows(), q = proxies.cols();
  if (m == 0) throw ConfigError("relation graph: m must be >= 1");
  if (m >= n) throw ConfigError("relation graph: m=" + std::to_string(m) + " must be < n=" + std::to_string(n));

  RelationGraph g;
  g.factor = factor;
  g.anchors = n;
  g.m = m;
  g.edges.resize(n * m);

  auto work = [&](std::size_t begin, std::size_t end) {
    std::vector<std::pair<double, std::size_t>> cand;
    cand.reserve(n - 1);
    for (std::size_t i = begin; i < end; ++i) {
      cand.clear();
      const auto xi = proxies.row(i);
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const auto xj = proxies.row(j);
        double d = 0.0;
        for (std::size_t t = 0; t < q; ++t) d += (xi[t] - xj[t]) * (xi[t] - xj[t]);
        cand.emplace_back(d, j);
      }
      std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(m), cand.end());
      for (std::size_t e = 0; e < m; ++e) g.edges[i * m + e] = Edge{cand[e].second, 0.0, cand[e].first};
    }
  };
  threads = std::clamp<std::size_t>(threads, 1, n);
  if (threads == 1) {
    work(0, n);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (n + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
      const std::size_t b = t * chunk, e = std::min(n, b + chunk);
      if (b < e) pool.emplace_back(work, b, e);
    }
    for (auto& th : pool) th.join();
  }

  std::vector<double> d2;
  d2.reserve(g.edges.size());
  for (const auto& e : g.edges) d2.push_back(e.dist2);
  std::sort(d2.begin(), d2.end());
  const std::size_t c = d2.size();
  const double median = (c % 2 == 1) ? d2[c / 2] : 0.5 * (d2[c / 2 - 1] + d2[c / 2]);
  g.bandwidth = median > 0.0 ? median : kMinBandwidth;
  for (auto& e : g.edges) e.weight = kernel_weight(e.dist2, g.bandwidth);
  return g;
}

RelationGraph build_graph(const Cohort& cohort, std::span<const std::size_t> rows, Factor factor, std::size_t m,
                          std::size_t threads) {
  return build_graph(standardize_columns(context_matrix(cohort, rows, factor)), factor, m, threads);
}

std::vector<Pair> PairBatch::of_factor(std::size_t k) const {
  std::vector<Pair> out;
  for (const auto& p : pairs)
    if (p.factor == k) out.push_back(p);
  return out;
}

std::size_t PairBatch::count(std::size_t k) const {
  return static_cast<std::size_t>(std::count_if(pairs.begin(), pairs.end(), [k](const Pair& p) { return p.factor == k; }));
}

PairBatch sample_pairs(std::span<const RelationGraph> graphs, std::span<const std::size_t> batch) {
  PairBatch out;
  if (graphs.empty() || batch.empty()) return out;
  const std::size_t n = graphs.front().anchors;
  constexpr std::size_t kAbsent = static_cast<std::size_t>(-1);
  std::vector<std::size_t> local(n, kAbsent);
  for (std::size_t pos = 0; pos < batch.size(); ++pos) {
    if (batch[pos] >= n) throw ContractError("sample_pairs: batch index out of range");
    local[batch[pos]] = pos;
  }
  for (std::size_t k = 0; k < graphs.size(); ++k) {
    if (graphs[k].anchors != n) throw ContractError("sample_pairs: graphs cover different anchor sets");
    for (std::size_t pos = 0; pos < batch.size(); ++pos) {
      for (const auto& e : graphs[k].neighbors(batch[pos])) {
        const std::size_t j = local[e.neighbor];
        if (j != kAbsent) out.pairs.push_back(Pair{pos, j, k, e.weight});
      }
    }
  }
  return out;
}

void write_graph_csv(std::ostream& out, std::span<const RelationGraph> graphs) {
  out << "factor,anchor,neighbor,weight\n";
  char buf[64];
  for (const auto& g : graphs) {
    for (std::size_t i = 0; i < g.anchors; ++i) {
      for (const auto& e : g.neighbors(i)) {
        std::snprintf(buf, sizeof buf, "%.9g", e.weight);
        out << factor_name(g.factor) << ',' << i << ',' << e.neighbor << ',' << buf << '\n';
      }
    }
  }
}

}  // namespace aurora
