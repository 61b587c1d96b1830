#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <tuple>
#include <vector>

#include "aurora/cohort.hpp"
#include "aurora/errors.hpp"
#include "aurora/relational.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace aurora;

namespace {

std::vector<std::tuple<std::size_t, std::size_t, std::size_t>> pair_keys(const PairBatch& b) {
  std::vector<std::tuple<std::size_t, std::size_t, std::size_t>> out;
  for (const auto& p : b.pairs) out.emplace_back(p.factor, p.i, p.j);
  std::sort(out.begin(), out.end());
  return out;
}

RelationGraph line_graph() { return build_graph(Tensor({3, 1}, std::vector<double>{0, 1, 10}), Factor::phys, 1); }

}  // namespace

TEST_CASE("kernel weight examples") {
  CHECK(kernel_weight(0.0, 1.0) == 1.0);
  CHECK(kernel_weight(2.5, 2.5) == doctest::Approx(0.367879).epsilon(1e-6));
  CHECK(kernel_weight(2.0, 1.0) == doctest::Approx(0.135335).epsilon(1e-6));
  CHECK_THROWS_AS(kernel_weight(1.0, 0.0), ContractError);
  CHECK_THROWS_AS(kernel_weight(-1.0, 1.0), ContractError);
}

TEST_CASE("three points on a line") {
  const auto g = line_graph();
  CHECK(g.neighbors(0)[0].neighbor == 1);
  CHECK(g.neighbors(1)[0].neighbor == 0);
  CHECK(g.neighbors(2)[0].neighbor == 1);
}

TEST_CASE("identical points use the bandwidth floor") {
  const auto g = build_graph(Tensor::filled(5, 2, 3.0), Factor::obs, 2);
  CHECK(g.bandwidth == kMinBandwidth);
  for (const auto& e : g.edges) CHECK(e.weight == 1.0);
  // ties broken by lower index
  CHECK(g.neighbors(0)[0].neighbor == 1);
  CHECK(g.neighbors(0)[1].neighbor == 2);
  CHECK(g.neighbors(3)[0].neighbor == 0);
}

TEST_CASE("bandwidth is the median of retained squared distances") {
  const Tensor pts({4, 1}, std::vector<double>{0, 1, 3, 7});
  const auto g = build_graph(pts, Factor::phys, 2);
  // brute force: two nearest per anchor
  std::vector<double> d2;
  for (std::size_t i = 0; i < 4; ++i) {
    std::vector<std::pair<double, std::size_t>> c;
    for (std::size_t j = 0; j < 4; ++j)
      if (j != i) c.push_back({(pts[i] - pts[j]) * (pts[i] - pts[j]), j});
    std::sort(c.begin(), c.end());
    d2.push_back(c[0].first);
    d2.push_back(c[1].first);
  }
  std::sort(d2.begin(), d2.end());
  CHECK(g.bandwidth == doctest::Approx((d2[3] + d2[4]) / 2.0).epsilon(1e-15));
}

TEST_CASE("graph matches brute force and respects the weight formula") {
  const Tensor x = testutil::randn(60, 3, 11);
  const std::size_t m = 5;
  const auto g = build_graph(x, Factor::intervention, m);
  REQUIRE(g.edges.size() == 60 * m);
  std::size_t at_least = 0, at_most = 0;
  for (std::size_t i = 0; i < 60; ++i) {
    std::vector<std::pair<double, std::size_t>> c;
    for (std::size_t j = 0; j < 60; ++j) {
      if (j == i) continue;
      double s = 0;
      for (std::size_t k = 0; k < 3; ++k) s += (x(i, k) - x(j, k)) * (x(i, k) - x(j, k));
      c.push_back({s, j});
    }
    std::sort(c.begin(), c.end());
    for (std::size_t r = 0; r < m; ++r) {
      const Edge& e = g.neighbors(i)[r];
      CHECK(e.neighbor == c[r].second);
      CHECK(e.neighbor != i);
      CHECK(e.weight > 0.0);
      CHECK(e.weight <= 1.0);
      CHECK(std::abs(e.weight - std::exp(-c[r].first / g.bandwidth)) <= 1e-12);
      at_least += e.weight >= std::exp(-1.0) - 1e-9;
      at_most += e.weight <= std::exp(-1.0) + 1e-9;
    }
  }
  CHECK(2 * at_least >= g.edges.size());
  CHECK(2 * at_most >= g.edges.size());
}

TEST_CASE("graph construction is deterministic and thread independent") {
  const Tensor x = testutil::randn(200, 4, 12);
  const auto a = build_graph(x, Factor::obs, 7, 1);
  const auto b = build_graph(x, Factor::obs, 7, 3);
  REQUIRE(a.edges.size() == b.edges.size());
  for (std::size_t i = 0; i < a.edges.size(); ++i) {
    CHECK(a.edges[i].neighbor == b.edges[i].neighbor);
    CHECK(a.edges[i].weight == b.edges[i].weight);
  }
  CHECK(a.bandwidth == b.bandwidth);
}

TEST_CASE("m must be below the anchor count") {
  CHECK_THROWS_AS(build_graph(testutil::randn(4, 2, 1), Factor::phys, 4), ConfigError);
}

TEST_CASE("cohort graph z-scores proxies over the given rows") {
  CohortConfig c;
  c.n = 300;
  const auto g = generate(c);
  std::vector<std::size_t> rows(200);
  std::iota(rows.begin(), rows.end(), 0);
  const auto graph = build_graph(g, rows, Factor::phys, 10);
  const auto direct = build_graph(standardize_columns(context_matrix(g, rows, Factor::phys)), Factor::phys, 10);
  for (std::size_t i = 0; i < graph.edges.size(); ++i) CHECK(graph.edges[i].neighbor == direct.edges[i].neighbor);
  const Tensor s = standardize_columns(context_matrix(g, rows, Factor::phys));
  for (std::size_t j = 0; j < s.cols(); ++j) {
    double m = 0, v = 0;
    for (std::size_t i = 0; i < s.rows(); ++i) m += s(i, j);
    m /= s.rows();
    for (std::size_t i = 0; i < s.rows(); ++i) v += (s(i, j) - m) * (s(i, j) - m);
    CHECK(std::abs(m) < 1e-12);
    CHECK(v / s.rows() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("sample_pairs examples") {
  const std::vector<RelationGraph> graphs = {line_graph()};
  SUBCASE("whole cohort keeps every edge") {
    const std::vector<std::size_t> all = {0, 1, 2};
    CHECK(sample_pairs(graphs, all).pairs.size() == 3);
  }
  SUBCASE("singleton batch is empty") {
    const std::vector<std::size_t> one = {2};
    CHECK(sample_pairs(graphs, one).pairs.empty());
  }
  SUBCASE("chain filtered to {0,1}") {
    const std::vector<std::size_t> b = {0, 1};
    const auto keys = pair_keys(sample_pairs(graphs, b));
    REQUIRE(keys.size() == 2);
    CHECK(keys[0] == std::make_tuple(std::size_t{0}, std::size_t{0}, std::size_t{1}));
    CHECK(keys[1] == std::make_tuple(std::size_t{0}, std::size_t{1}, std::size_t{0}));
  }
}

TEST_CASE("sample_pairs is a multiset invariant of batch order") {
  const Tensor x = testutil::randn(80, 2, 5);
  std::vector<RelationGraph> graphs = {build_graph(x, Factor::phys, 4), build_graph(x, Factor::intervention, 3)};
  graphs[1].factor = Factor::intervention;
  std::vector<std::size_t> batch = {3, 9, 12, 40, 41, 42, 43, 55, 70, 79, 0, 1};
  // Positions differ after permutation, so compare by anchor indices.
  auto by_anchor = [&](const std::vector<std::size_t>& b) {
    std::vector<std::tuple<std::size_t, std::size_t, std::size_t>> out;
    for (const auto& p : sample_pairs(graphs, b).pairs) {
      CHECK(p.i < b.size());
      CHECK(p.j < b.size());
      out.emplace_back(p.factor, b[p.i], b[p.j]);
    }
    std::sort(out.begin(), out.end());
    return out;
  };
  const auto a = by_anchor(batch);
  std::reverse(batch.begin(), batch.end());
  CHECK(by_anchor(batch) == a);
}

TEST_CASE("graph csv dump") {
  std::ostringstream o;
  const std::vector<RelationGraph> graphs = {line_graph()};
  write_graph_csv(o, graphs);
  CHECK(o.str().rfind("factor,anchor,neighbor,weight\n", 0) == 0);
}
