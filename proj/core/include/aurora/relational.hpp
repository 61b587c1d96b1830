#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "aurora/cohort.hpp"
#include "aurora/tensor.hpp"

namespace aurora {

/// Floor applied to a degenerate (zero) median bandwidth.
inline constexpr double kMinBandwidth = 1e-12;

/// exp(-dist2 / sigma2). Throws ContractError unless sigma2 > 0 and dist2 >= 0.
double kernel_weight(double dist2, double sigma2);

struct Edge {
  std::size_t neighbor;
  double weight;
  double dist2;
};

/// Sparse contextual similarity operator for one factor: exactly m weighted
/// out-edges per anchor, no self edges. Immutable once built.
struct RelationGraph {
  Factor factor = Factor::phys;
  std::size_t anchors = 0;
  std::size_t m = 0;
  double bandwidth = 0.0;  // sigma^2
  std::vector<Edge> edges;  // anchors * m, grouped by anchor

  std::span<const Edge> neighbors(std::size_t anchor) const { return {edges.data() + anchor * m, m}; }
};

/// Exact m-nearest-neighbour graph over proxy rows under Euclidean distance,
/// ties broken by lower index. sigma^2 is the median squared distance over all
/// retained edges (mean of the middle two for an even count).
RelationGraph build_graph(const Tensor& proxies, Factor factor, std::size_t m, std::size_t threads = 1);

/// Graph over the cohort rows `rows` (anchor i is rows[i]); the factor's
/// proxy columns are z-scored over those rows first.
RelationGraph build_graph(const Cohort& cohort, std::span<const std::size_t> rows, Factor factor, std::size_t m,
                          std::size_t threads = 1);

/// Column-wise z-score; constant columns become zero.
Tensor standardize_columns(const Tensor& x);

/// One aligned pair. i and j are positions inside the training batch.
struct Pair {
  std::size_t i;
  std::size_t j;
  std::size_t factor;
  double weight;
};

struct PairBatch {
  std::vector<Pair> pairs;

  std::vector<Pair> of_factor(std::size_t k) const;
  std::size_t count(std::size_t k) const;
};

/// For each factor graph and each in-batch anchor, emits the anchor's edges
/// whose endpoint is also in the batch. `batch` holds graph anchor indices.
/// Anchors without an in-batch partner contribute nothing.
PairBatch sample_pairs(std::span<const RelationGraph> graphs, std::span<const std::size_t> batch);

/// Debug dump: `factor,anchor,neighbor,weight`.
void write_graph_csv(std::ostream& out, std::span<const RelationGraph> graphs);

}  // namespace aurora
