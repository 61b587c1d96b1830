#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <vector>

#include "aurora/cohort.hpp"
#include "aurora/errors.hpp"
#include "aurora/metrics.hpp"
#include "aurora/rng.hpp"
#include "doctest.h"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace aurora;
using testutil::iota_ids;
using testutil::randn;

namespace {

std::vector<FactorVector> factors_of(const Cohort& c) {
  std::vector<FactorVector> f;
  for (const auto& r : c.records) f.push_back(r.factors);
  return f;
}

std::vector<FactorVector> random_factors(std::size_t n, std::uint64_t seed) {
  Rng r(seed);
  std::vector<FactorVector> f(n);
  for (auto& x : f) {
    x.phys = r.normal();
    x.intervention = r.normal();
    x.obs = r.normal();
    x.ctx = static_cast<std::uint32_t>(r.below(4));
  }
  return f;
}

Tensor line_of(const std::vector<double>& v) {
  Tensor t({v.size(), 2});
  for (std::size_t i = 0; i < v.size(); ++i) t(i, 0) = v[i];
  return t;
}

Tensor rigid(const Tensor& z, std::uint64_t seed) {
  const std::size_t d = z.cols();
  Tensor q = randn(d, d, seed);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t k = 0; k < i; ++k) {
      double dot = 0;
      for (std::size_t j = 0; j < d; ++j) dot += q(i, j) * q(k, j);
      for (std::size_t j = 0; j < d; ++j) q(i, j) -= dot * q(k, j);
    }
    double n = 0;
    for (std::size_t j = 0; j < d; ++j) n += q(i, j) * q(i, j);
    for (std::size_t j = 0; j < d; ++j) q(i, j) /= std::sqrt(n);
  }
  Tensor out = matmul(z, q);
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < d; ++j) out(i, j) += 3.0 + static_cast<double>(j);
  return out;
}

}  // namespace

TEST_CASE("auroc examples") {
  CHECK(auroc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, std::vector<int>{0, 0, 1, 1}) == 1.0);
  CHECK(auroc(std::vector<double>{0.9, 0.8, 0.3}, std::vector<int>{1, 0, 1}) == 0.5);
  CHECK(auroc(std::vector<double>{0.5, 0.5}, std::vector<int>{1, 0}) == 0.5);
  CHECK_THROWS_AS(auroc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), ContractError);
  Rng r(1);
  std::vector<double> s(10000);
  std::vector<int> y(10000);
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = r.normal();
    y[i] = r.bernoulli(0.3);
  }
  CHECK(std::abs(auroc(s, y) - 0.5) <= 0.02);
}

TEST_CASE("auroc matches pairwise counting and ignores monotone maps") {
  Rng r(2);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 2 + r.below(49);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(r.below(8));  // plenty of ties
      y[i] = static_cast<int>(i < 1 ? 1 : (i < 2 ? 0 : r.below(2)));
    }
    const double a = auroc(s, y);
    CHECK(a == oracle::auroc(s, y));
    std::vector<double> m(n);
    for (std::size_t i = 0; i < n; ++i) m[i] = std::exp(0.3 * s[i]) + s[i] * s[i] * s[i];
    CHECK(auroc(m, y) == a);
  }
}

TEST_CASE("probe examples") {
  Rng r(3);
  const std::size_t n = 5000;
  Tensor x = randn(n, 4, 4);
  std::vector<int> thr(n), noise(n);
  for (std::size_t i = 0; i < n; ++i) {
    thr[i] = x(i, 2) > 0.1;
    noise[i] = r.bernoulli(0.4);
  }
  CHECK(linear_probe(x, thr, x, thr).auroc == doctest::Approx(1.0));
  const Tensor xt = randn(n, 4, 5);
  std::vector<int> noise_t(n);
  for (auto& v : noise_t) v = r.bernoulli(0.4);
  CHECK(std::abs(linear_probe(x, noise, xt, noise_t).auroc - 0.5) <= 0.03);
}

TEST_CASE("probe on ground-truth factors reaches the oracle ceiling") {
  CohortConfig c;
  c.n = 8000;
  const auto g = generate(c);
  Tensor f({c.n, 3});
  std::vector<int> y(c.n);
  std::vector<double> oracle_scores(c.n);
  for (std::size_t i = 0; i < c.n; ++i) {
    const auto& r = g.records[i];
    f(i, 0) = r.factors.phys;
    f(i, 1) = r.factors.intervention;
    f(i, 2) = r.factors.obs;
    y[i] = r.mortality;
    oracle_scores[i] = mortality_probability(r.factors);
  }
  std::vector<std::size_t> tr(4000), te(4000);
  std::iota(tr.begin(), tr.end(), 0);
  std::iota(te.begin(), te.end(), 4000);
  std::vector<int> ytr(y.begin(), y.begin() + 4000), yte(y.begin() + 4000, y.end());
  const auto res = linear_probe(take_rows(f, tr), ytr, take_rows(f, te), yte);
  const double ceiling = auroc(std::span<const double>(oracle_scores).subspan(4000), yte);
  CHECK(res.auroc == doctest::Approx(ceiling).epsilon(0.01));
}

TEST_CASE("recall examples") {
  CohortConfig c;
  c.n = 400;
  const auto g = generate(c);
  const auto f = factors_of(g);
  std::vector<int> mort;
  for (const auto& r : g.records) mort.push_back(r.mortality);
  const auto quart = factor_bins(f, Factor::phys);
  const auto ids = iota_ids(c.n);
  const auto rel = outcome_quartile_relevance(f, mort);

  SUBCASE("one-hot of the relevance classes, k=1") {
    Tensor z = Tensor::zeros(c.n, 8);
    for (std::size_t i = 0; i < c.n; ++i) z(i, static_cast<std::size_t>(quart[i] * 2 + mort[i])) = 1.0;
    CHECK(recall_at_k(z, ids, z, ids, rel, 1) == 1.0);
  }
  SUBCASE("nested candidate sets and rigid invariance") {
    const Tensor z = randn(c.n, 5, 6);
    const double r10 = recall_at_k(z, ids, z, ids, rel, 10);
    CHECK(recall_at_k(z, ids, z, ids, rel, 20) >= r10);
    const Tensor moved = rigid(z, 7);
    CHECK(recall_at_k(moved, ids, moved, ids, rel, 10) == r10);
    CHECK(r10 == oracle::recall(z, ids, mort, quart, 10));
  }
  SUBCASE("k not below the gallery size") {
    const Tensor z = randn(5, 2, 1);
    const auto small = iota_ids(5);
    CHECK_THROWS_AS(recall_at_k(z, small, z, small, [](auto, auto) { return true; }, 5), ConfigError);
  }
}

TEST_CASE("recall of random embeddings follows the closed form") {
  const std::size_t n = 2000;
  const Tensor z = randn(n, 6, 8);
  const auto ids = iota_ids(n);
  Rng r(9);
  std::vector<int> cls(n);
  for (auto& v : cls) v = static_cast<int>(r.below(8));  // relevance fraction ~1/8
  const double rfrac = 1.0 / 8.0;
  const double got = recall_at_k(z, ids, z, ids, [&](std::size_t q, std::size_t g) { return cls[q] == cls[g]; }, 10);
  CHECK(std::abs(got - (1.0 - std::pow(1.0 - rfrac, 10))) <= 0.03);
}

TEST_CASE("mi_overlap examples") {
  const std::size_t n = 10000;
  const auto f = random_factors(n, 10);
  SUBCASE("independent components") {
    std::vector<Tensor> comps = {randn(n, 3, 11), randn(n, 3, 12), randn(n, 3, 13), randn(n, 3, 14)};
    const auto m = mi_overlap(comps, f);
    CHECK(m.value <= 0.05);
    CHECK(m.value >= 0.0);
    CHECK(m.degenerate == 0);
  }
  SUBCASE("component equal to a non-target factor") {
    // subspace 0 (phys) carries the obs factor along one axis
    std::vector<double> obs(n);
    for (std::size_t i = 0; i < n; ++i) obs[i] = f[i].obs;
    const Tensor same = line_of(obs);
    const std::vector<Tensor> one = {same};
    // mean over the three non-target pairs: obs gives 1, the others ~0
    const double v = mi_overlap(one, f).value;
    CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(0.03));
  }
  SUBCASE("constant component is flagged and scores zero") {
    const std::vector<Tensor> comps = {Tensor::filled(n, 3, 2.0), randn(n, 3, 15)};
    const auto m = mi_overlap(comps, f);
    CHECK(m.degenerate == 1);
    const std::vector<Tensor> only = {Tensor::filled(n, 3, 2.0)};
    CHECK(mi_overlap(only, f).value == 0.0);
  }
  CHECK_THROWS_AS(mi_overlap(std::vector<Tensor>{randn(10, 2, 1)}, random_factors(10, 1)), ContractError);
}

TEST_CASE("self mutual information equals entropy under shared binning") {
  Rng r(16);
  std::vector<double> v(3000);
  for (auto& x : v) x = r.normal();
  const auto b = quantile_bins(v, 8);
  CHECK(std::abs(mutual_information(b, b) - entropy(b)) <= 1e-9);
  CHECK(entropy(b) == doctest::Approx(std::log(8.0)).epsilon(1e-3));
}

TEST_CASE("orthogonality examples") {
  const std::vector<Tensor> ortho = {Tensor::from_rows({{1, 0}, {0, 2}}), Tensor::from_rows({{0, 5}, {3, 0}})};
  CHECK(orthogonality_score(ortho) == 1.0);
  const Tensor a = randn(4, 3, 17);
  const std::vector<Tensor> same = {a, a};
  CHECK(orthogonality_score(same) == doctest::Approx(0.0).epsilon(1e-12));
  const std::vector<Tensor> sixty = {Tensor::from_rows({{1, 0}}), Tensor::from_rows({{0.5, std::sqrt(3.0) / 2}})};
  CHECK(orthogonality_score(sixty) == doctest::Approx(0.5).epsilon(1e-12));
  const std::vector<Tensor> zero = {Tensor::zeros(2, 2), Tensor::from_rows({{1, 1}, {1, 1}})};
  CHECK(orthogonality_score(zero) == 1.0);
}

TEST_CASE("context retrieval examples") {
  SUBCASE("target factor on a line") {
    const std::size_t n = 4000;
    const auto f = random_factors(n, 18);
    std::vector<double> phys(n);
    for (std::size_t i = 0; i < n; ++i) phys[i] = f[i].phys;
    const std::vector<Tensor> comps = {line_of(phys)};
    CHECK(context_retrieval(comps, iota_ids(n), f, 10) >= 0.9);
  }
  SUBCASE("random embeddings sit at the bin prior") {
    const std::size_t n = 2000;
    const auto f = random_factors(n, 19);
    const std::vector<Tensor> comps = {randn(n, 4, 20), randn(n, 4, 21), randn(n, 4, 22), randn(n, 4, 23)};
    CHECK(std::abs(context_retrieval(comps, iota_ids(n), f, 10) - 0.25) <= 0.03);
  }
  SUBCASE("one record per bin") {
    std::vector<FactorVector> f = {{0.1, 0.1, 0.1, 0}, {0.2, 0.2, 0.2, 1}, {0.3, 0.3, 0.3, 2}, {0.4, 0.4, 0.4, 3}};
    const std::vector<Tensor> comps = {randn(4, 2, 1), randn(4, 2, 2), randn(4, 2, 3), randn(4, 2, 4)};
    CHECK(context_retrieval(comps, iota_ids(4), f, 1) == 0.0);
  }
}

TEST_CASE("purity and entropy examples") {
  const std::size_t n = 400;
  const auto f = random_factors(n, 24);
  const auto labels = factor_bins(f, Factor::phys);
  const auto ids = iota_ids(n);
  Tensor onehot = Tensor::zeros(n, 4);
  for (std::size_t i = 0; i < n; ++i) onehot(i, static_cast<std::size_t>(labels[i])) = 1.0;
  CHECK(neighborhood_purity(onehot, ids, f, 10) == 1.0);
  CHECK(context_entropy(onehot, ids, f, 10) == 0.0);

  const std::size_t big = 2000;
  const auto fb = random_factors(big, 25);
  CHECK(std::abs(neighborhood_purity(randn(big, 4, 26), iota_ids(big), fb, 10) - 0.25) <= 0.03);

  // closed-form histograms
  CHECK(oracle::entropy_of({0, 1, 2, 3, 0, 1, 2, 3}) == doctest::Approx(std::log(4.0)));
  CHECK(entropy(std::vector<int>{0, 0, 0, 0, 0, 1, 1, 1, 1, 1}) == doctest::Approx(std::log(2.0)));
  CHECK(entropy(std::vector<int>{2, 2, 2}) == 0.0);
}

TEST_CASE("kNN metrics match brute force on small instances") {
  Rng r(27);
  for (int t = 0; t < 10; ++t) {
    const std::size_t n = 12 + r.below(19);
    const auto f = random_factors(n, 100 + t);
    // coarse grid values create exact distance ties
    Tensor z({n, 2});
    for (auto& v : z.data()) v = static_cast<double>(r.below(4));
    std::vector<Tensor> comps;
    for (int k = 0; k < 4; ++k) {
      Tensor c({n, 2});
      for (auto& v : c.data()) v = static_cast<double>(r.below(3));
      comps.push_back(c);
    }
    std::vector<std::uint64_t> ids(n);
    for (std::size_t i = 0; i < n; ++i) ids[i] = 1000 - 7 * i;  // ids not in row order
    std::vector<int> mort(n);
    for (auto& m : mort) m = static_cast<int>(r.below(2));
    const std::size_t k = 1 + r.below(5);
    const auto phys = oracle::factor_labels(f, Factor::phys);
    for (std::size_t q = 0; q < n; ++q) REQUIRE(nearest_neighbors(z, ids, q, k) == oracle::knn(z, ids, q, k));
    CHECK(neighborhood_purity(z, ids, f, k) == oracle::purity(z, ids, phys, k));
    CHECK(context_entropy(z, ids, f, k) == oracle::neighbor_entropy(z, ids, phys, k));
    CHECK(context_retrieval(comps, ids, f, k) == oracle::context_retrieval(comps, ids, f, k));
    CHECK(recall_at_k(z, ids, z, ids, outcome_quartile_relevance(f, mort), k) == oracle::recall(z, ids, mort, phys, k));
  }
}

TEST_CASE("metric ranges") {
  const std::size_t n = 1200;
  const auto f = random_factors(n, 30);
  const std::vector<Tensor> comps = {randn(n, 3, 31), randn(n, 3, 32), randn(n, 3, 33), randn(n, 3, 34)};
  const Tensor z = randn(n, 3, 35);
  const auto ids = iota_ids(n);
  const double mi = mi_overlap(comps, f).value, orth = orthogonality_score(comps);
  const double ent = context_entropy(z, ids, f, 10), pur = neighborhood_purity(z, ids, f, 10);
  CHECK(mi >= 0.0);
  CHECK(mi <= 1.0);
  CHECK(orth >= 0.0);
  CHECK(orth <= 1.0);
  CHECK(ent >= 0.0);
  CHECK(ent <= std::log(4.0) + 1e-12);
  CHECK(pur >= 0.0);
  CHECK(pur <= 1.0);
}

TEST_CASE("shift_gap examples") {
  MetricsTable in, sh;
  in.add(metric::mortality_auroc, "in_domain", "mae", 0.861);
  in.add(metric::mortality_auroc, "in_domain", "aurora", 0.904);
  sh.add(metric::mortality_auroc, "shifted", "mae", 0.781);
  sh.add(metric::mortality_auroc, "shifted", "aurora", 0.879);
  const auto gaps = shift_gap(in, sh);
  CHECK(gaps.at("mae") == doctest::Approx(0.080));
  CHECK(gaps.at("aurora") == doctest::Approx(0.025));
  MetricsTable same;
  same.add(metric::mortality_auroc, "shifted", "mae", 0.861);
  same.add(metric::mortality_auroc, "shifted", "aurora", 0.904);
  for (const auto& [_, g] : shift_gap(in, same)) CHECK(g == 0.0);
  MetricsTable partial;
  partial.add(metric::mortality_auroc, "shifted", "mae", 0.8);
  CHECK_THROWS_AS(shift_gap(in, partial), ContractError);
}

TEST_CASE("metrics table vocabulary and csv") {
  MetricsTable t;
  CHECK_THROWS_AS(t.add("accuracy", "in_domain", "mae", 0.5), ContractError);
  CHECK_THROWS_AS(t.add(metric::shift_gap, "gap", "mae", NAN), ContractError);
  t.add(metric::orthogonality_score, "in_domain", "aurora", 0.25);
  t.add(metric::param_count, "model", "aurora", 14592);
  CHECK(t.to_csv() == "metric,split,method,value\northogonality_score,in_domain,aurora,0.250000\nparam_count,model,aurora,14592.000000\n");
}

TEST_CASE("pca projection recovers the dominant axis") {
  Rng r(40);
  Tensor x({500, 3});
  for (std::size_t i = 0; i < 500; ++i) {
    const double t = 5.0 * r.normal();
    x(i, 0) = t;
    x(i, 1) = -t + 0.1 * r.normal();
    x(i, 2) = 0.1 * r.normal();
  }
  const Tensor p = pca_project(x, 2);
  CHECK(p.rows() == 500);
  CHECK(p.cols() == 2);
  double var0 = 0, var1 = 0;
  for (std::size_t i = 0; i < 500; ++i) {
    var0 += p(i, 0) * p(i, 0);
    var1 += p(i, 1) * p(i, 1);
  }
  CHECK(var0 > 100 * var1);
}
