#pragma once

// Exhaustive reference implementations used as test oracles. Deliberately
// naive: full sorts, explicit pair loops, no shared code with the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include "aurora/cohort.hpp"
#include "aurora/tensor.hpp"

namespace oracle {

inline std::vector<std::size_t> knn(const aurora::Tensor& x, const std::vector<std::uint64_t>& ids, std::size_t q,
                                    std::size_t k) {
  struct Cand {
    double d;
    std::uint64_t id;
    std::size_t row;
  };
  std::vector<Cand> all;
  for (std::size_t j = 0; j < x.rows(); ++j) {
    if (j == q) continue;
    double d = 0;
    for (std::size_t c = 0; c < x.cols(); ++c) d += (x(q, c) - x(j, c)) * (x(q, c) - x(j, c));
    all.push_back({d, ids[j], j});
  }
  std::sort(all.begin(), all.end(), [](const Cand& a, const Cand& b) { return a.d != b.d ? a.d < b.d : a.id < b.id; });
  std::vector<std::size_t> out;
  for (std::size_t t = 0; t < k; ++t) out.push_back(all[t].row);
  return out;
}

// Rank-based equal-frequency bins: r-th smallest (ties by position) gets r*bins/n.
inline std::vector<int> bins(const std::vector<double>& v, std::size_t nb) {
  std::vector<std::size_t> order(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<int> out(v.size());
  for (std::size_t r = 0; r < order.size(); ++r) out[order[r]] = static_cast<int>(r * nb / v.size());
  return out;
}

inline std::vector<int> factor_labels(const std::vector<aurora::FactorVector>& f, aurora::Factor which) {
  if (which == aurora::Factor::ctx) {
    std::vector<int> out;
    for (const auto& x : f) out.push_back(static_cast<int>(x.ctx));
    return out;
  }
  std::vector<double> v;
  for (const auto& x : f) v.push_back(x.continuous(which));
  return bins(v, 4);
}

inline double purity(const aurora::Tensor& z, const std::vector<std::uint64_t>& ids, const std::vector<int>& labels,
                     std::size_t k) {
  double acc = 0;
  for (std::size_t q = 0; q < z.rows(); ++q) {
    std::size_t same = 0;
    for (auto j : knn(z, ids, q, k)) same += labels[j] == labels[q];
    acc += static_cast<double>(same) / static_cast<double>(k);
  }
  return acc / static_cast<double>(z.rows());
}

inline double entropy_of(const std::vector<int>& xs) {
  std::map<int, double> c;
  for (int x : xs) c[x] += 1;
  double h = 0;
  for (auto& [_, n] : c) {
    const double p = n / static_cast<double>(xs.size());
    h -= p * std::log(p);
  }
  return h;
}

inline double neighbor_entropy(const aurora::Tensor& z, const std::vector<std::uint64_t>& ids,
                               const std::vector<int>& labels, std::size_t k) {
  double acc = 0;
  for (std::size_t q = 0; q < z.rows(); ++q) {
    std::vector<int> nb;
    for (auto j : knn(z, ids, q, k)) nb.push_back(labels[j]);
    acc += entropy_of(nb);
  }
  return acc / static_cast<double>(z.rows());
}

inline double context_retrieval(const std::vector<aurora::Tensor>& comps, const std::vector<std::uint64_t>& ids,
                                const std::vector<aurora::FactorVector>& f, std::size_t k) {
  double acc = 0;
  for (std::size_t s = 0; s < comps.size(); ++s) acc += purity(comps[s], ids, factor_labels(f, aurora::kAllFactors[s]), k);
  return acc / static_cast<double>(comps.size());
}

// Same-set retrieval: queries and gallery are the same rows, self excluded;
// queries without any relevant item are skipped.
inline double recall(const aurora::Tensor& z, const std::vector<std::uint64_t>& ids, const std::vector<int>& outcome,
                     const std::vector<int>& quartile, std::size_t k) {
  std::size_t hits = 0, counted = 0;
  for (std::size_t q = 0; q < z.rows(); ++q) {
    bool any = false;
    for (std::size_t g = 0; g < z.rows(); ++g)
      if (g != q && outcome[g] == outcome[q] && quartile[g] == quartile[q]) any = true;
    if (!any) continue;
    ++counted;
    bool hit = false;
    for (auto j : knn(z, ids, q, k)) hit = hit || (outcome[j] == outcome[q] && quartile[j] == quartile[q]);
    hits += hit;
  }
  return static_cast<double>(hits) / static_cast<double>(counted);
}

inline double auroc(const std::vector<double>& s, const std::vector<int>& y) {
  std::uint64_t wins = 0, ties = 0, pos = 0, neg = 0;
  for (int v : y) (v ? pos : neg) += 1;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (!y[i] || y[j]) continue;
      if (s[i] > s[j]) ++wins;
      if (s[i] == s[j]) ++ties;
    }
  return (static_cast<double>(wins) + static_cast<double>(ties) / 2.0) / (static_cast<double>(pos) * static_cast<double>(neg));
}

}  // namespace oracle
