#include "aurora/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <sstream>

#include "aurora/errors.hpp"

namespace aurora {

namespace {

constexpr std::size_t kMiBins = 8;
constexpr std::size_t kQuartiles = 4;

Eigen::MatrixXd covariance(const Tensor& x) {
  const auto n = static_cast<Eigen::Index>(x.rows());
  const auto d = static_cast<Eigen::Index>(x.cols());
  Eigen::MatrixXd m(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) m(i, j) = x(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
  const Eigen::RowVectorXd mu = m.colwise().mean();
  m.rowwise() -= mu;
  return (m.transpose() * m) / static_cast<double>(n);
}

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t) s += (a[t] - b[t]) * (a[t] - b[t]);
  return s;
}

void require_k(std::size_t k, std::size_t n) {
  if (k == 0) throw ConfigError("neighbour count k must be >= 1");
  if (k >= n) throw ConfigError("k=" + std::to_string(k) + " must be smaller than the gallery size " + std::to_string(n));
}

}  // namespace

// ---------------------------------------------------------------------------

void EmbeddingSet::validate() const {
  const std::size_t n = ids.size();
  if (z.rows() != n) throw ContractError("embedding set: z has " + std::to_string(z.rows()) + " rows for " + std::to_string(n) + " ids");
  for (const auto& c : components)
    if (c.rows() != n || c.cols() != z.cols()) throw ContractError("embedding set: component shape disagrees with z");
}

EmbeddingSet EmbeddingSet::subset(std::span<const std::size_t> rows) const {
  EmbeddingSet out;
  for (auto r : rows) out.ids.push_back(ids.at(r));
  out.z = take_rows(z, rows);
  for (const auto& c : components) out.components.push_back(take_rows(c, rows));
  return out;
}

bool metric::known(const std::string& name) {
  static const char* const all[] = {mortality_auroc, sepsis_auroc,        readmission_auroc, recall_at_10,
                                    mi_overlap,      orthogonality_score, context_retrieval, neighborhood_purity,
                                    context_entropy, shift_gap,           param_count};
  return std::any_of(std::begin(all), std::end(all), [&](const char* m) { return name == m; });
}

void MetricsTable::add(const std::string& m, const std::string& split, const std::string& method, double value) {
  if (!metric::known(m)) throw ContractError("unknown metric name '" + m + "'");
  if (!std::isfinite(value)) throw ContractError("metric '" + m + "' for " + method + " is not finite");
  rows_.push_back({m, split, method, value});
}

void MetricsTable::append(const MetricsTable& other) {
  rows_.insert(rows_.end(), other.rows_.begin(), other.rows_.end());
}

const MetricRow* MetricsTable::find(const std::string& m, const std::string& split, const std::string& method) const {
  for (const auto& r : rows_)
    if (r.metric == m && r.split == split && r.method == method) return &r;
  return nullptr;
}

double MetricsTable::value(const std::string& m, const std::string& split, const std::string& method) const {
  if (const auto* r = find(m, split, method)) return r->value;
  throw ContractError("metrics table has no " + m + "/" + split + "/" + method);
}

std::vector<std::string> MetricsTable::methods() const {
  std::vector<std::string> out;
  for (const auto& r : rows_)
    if (std::find(out.begin(), out.end(), r.method) == out.end()) out.push_back(r.method);
  return out;
}

void MetricsTable::write_csv(std::ostream& out) const {
  out << "metric,split,method,value\n";
  char buf[64];
  for (const auto& r : rows_) {
    std::snprintf(buf, sizeof buf, "%.6f", r.value);
    out << r.metric << ',' << r.split << ',' << r.method << ',' << buf << '\n';
  }
}

std::string MetricsTable::to_csv() const {
  std::ostringstream os;
  write_csv(os);
  return os.str();
}

// ---------------------------------------------------------------------------

double auroc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ContractError("auroc: scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // 2*wins + ties, counted exactly per group of equal scores.
  std::uint64_t pos = 0, neg = 0, twice_wins = 0;
  for (std::size_t g = 0; g < order.size();) {
    std::size_t e = g;
    std::uint64_t gp = 0, gn = 0;
    while (e < order.size() && scores[order[e]] == scores[order[g]]) {
      (labels[order[e]] ? gp : gn) += 1;
      ++e;
    }
    twice_wins += 2 * gp * neg + gp * gn;
    pos += gp;
    neg += gn;
    g = e;
  }
  if (pos == 0 || neg == 0) throw ContractError("auroc needs both positive and negative labels");
  return static_cast<double>(twice_wins) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

void LogisticProbe::fit(const Tensor& x, std::span<const int> labels) {
  const std::size_t n = x.rows(), d = x.cols();
  if (labels.size() != n) throw ContractError("probe: label count differs from row count");
  if (n == 0) throw ContractError("probe: empty training set");
  mean_.assign(d, 0.0);
  scale_.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) mean_[j] += x(i, j);
  for (auto& m : mean_) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) scale_[j] += (x(i, j) - mean_[j]) * (x(i, j) - mean_[j]);
  for (auto& s : scale_) {
    s = std::sqrt(s / static_cast<double>(n));
    s = s > 1e-12 ? 1.0 / s : 0.0;
  }
  Tensor xs({n, d});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) xs(i, j) = (x(i, j) - mean_[j]) * scale_[j];

  // Lipschitz constant of the mean log-loss gradient: 0.25 * lambda_max([X 1]^T [X 1] / n).
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d + 1), static_cast<Eigen::Index>(d + 1));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a <= d; ++a) {
      const double va = a < d ? xs(i, a) : 1.0;
      for (std::size_t b = a; b <= d; ++b) gram(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) += va * (b < d ? xs(i, b) : 1.0);
    }
  }
  gram = gram.selfadjointView<Eigen::Upper>();
  gram /= static_cast<double>(n);
  const double lmax = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(gram, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
  const double step = 1.0 / (0.25 * lmax + kL2);

  weights_.assign(d, 0.0);
  bias_ = 0.0;
  converged_ = false;
  std::vector<double> gw(d), resid(n);
  for (iterations_ = 0; iterations_ < kMaxIter; ++iterations_) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = bias_;
      const double* row = &xs(i, 0);
      for (std::size_t j = 0; j < d; ++j) s += row[j] * weights_[j];
      resid[i] = 1.0 / (1.0 + std::exp(-s)) - static_cast<double>(labels[i] != 0);
    }
    std::fill(gw.begin(), gw.end(), 0.0);
    double gb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = resid[i];
      const double* row = &xs(i, 0);
      for (std::size_t j = 0; j < d; ++j) gw[j] += r * row[j];
      gb += r;
    }
    double norm2 = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      gw[j] = gw[j] / static_cast<double>(n) + kL2 * weights_[j];
      norm2 += gw[j] * gw[j];
    }
    gb /= static_cast<double>(n);
    norm2 += gb * gb;
    if (std::sqrt(norm2) < kGradTol) {
      converged_ = true;
      break;
    }
    for (std::size_t j = 0; j < d; ++j) weights_[j] -= step * gw[j];
    bias_ -= step * gb;
  }
}

std::vector<double> LogisticProbe::scores(const Tensor& x) const {
  if (x.cols() != weights_.size()) throw DimensionError("probe: input width differs from training width");
  std::vector<double> out(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double s = bias_;
    for (std::size_t j = 0; j < weights_.size(); ++j) s += (x(i, j) - mean_[j]) * scale_[j] * weights_[j];
    out[i] = s;
  }
  return out;
}

ProbeResult linear_probe(const Tensor& train_x, std::span<const int> train_y, const Tensor& test_x,
                         std::span<const int> test_y) {
  LogisticProbe probe;
  probe.fit(train_x, train_y);
  ProbeResult r;
  r.converged = probe.converged();
  r.iterations = probe.iterations();
  r.test_scores = probe.scores(test_x);
  r.auroc = auroc(r.test_scores, test_y);
  return r;
}

// ---------------------------------------------------------------------------

std::vector<std::size_t> nearest_neighbors(const Tensor& x, std::span<const std::uint64_t> ids, std::size_t q,
                                           std::size_t k) {
  const std::size_t n = x.rows();
  if (ids.size() != n) throw ContractError("nearest_neighbors: id count differs from row count");
  require_k(k, n);
  std::vector<std::pair<double, std::size_t>> cand;
  cand.reserve(n - 1);
  const auto xq = x.row(q);
  for (std::size_t j = 0; j < n; ++j)
    if (j != q) cand.emplace_back(sq_dist(xq, x.row(j)), j);
  auto before = [&](const auto& a, const auto& b) {
    return a.first < b.first || (a.first == b.first && ids[a.second] < ids[b.second]);
  };
  std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end(), before);
  std::vector<std::size_t> out(k);
  for (std::size_t t = 0; t < k; ++t) out[t] = cand[t].second;
  return out;
}

std::vector<int> quantile_bins(std::span<const double> values, std::size_t bins) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<int> out(n);
  for (std::size_t r = 0; r < n; ++r) out[order[r]] = static_cast<int>(r * bins / n);
  return out;
}

std::vector<int> factor_bins(std::span<const FactorVector> factors, Factor f) {
  if (f == Factor::ctx) {
    std::vector<int> out(factors.size());
    for (std::size_t i = 0; i < factors.size(); ++i) out[i] = static_cast<int>(factors[i].ctx);
    return out;
  }
  std::vector<double> v(factors.size());
  for (std::size_t i = 0; i < factors.size(); ++i) v[i] = factors[i].continuous(f);
  return quantile_bins(v, kQuartiles);
}

double recall_at_k(const Tensor& queries, std::span<const std::uint64_t> query_ids, const Tensor& gallery,
                   std::span<const std::uint64_t> gallery_ids, const Relevance& relevant, std::size_t k) {
  const std::size_t nq = queries.rows(), ng = gallery.rows();
  if (query_ids.size() != nq || gallery_ids.size() != ng) throw ContractError("recall_at_k: id counts disagree");
  if (queries.cols() != gallery.cols()) throw DimensionError("recall_at_k: query and gallery widths differ");
  require_k(k, ng);
  std::size_t hits = 0, counted = 0;
  std::vector<std::pair<double, std::size_t>> cand;
  for (std::size_t q = 0; q < nq; ++q) {
    cand.clear();
    bool any_relevant = false;
    for (std::size_t g = 0; g < ng; ++g) {
      if (gallery_ids[g] == query_ids[q]) continue;
      cand.emplace_back(sq_dist(queries.row(q), gallery.row(g)), g);
      any_relevant = any_relevant || relevant(q, g);
    }
    if (!any_relevant) continue;
    if (cand.size() < k) throw ConfigError("recall_at_k: gallery too small for k");
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end(), [&](const auto& a, const auto& b) {
      return a.first < b.first || (a.first == b.first && gallery_ids[a.second] < gallery_ids[b.second]);
    });
    ++counted;
    for (std::size_t t = 0; t < k; ++t) {
      if (relevant(q, cand[t].second)) {
        ++hits;
        break;
      }
    }
  }
  if (counted == 0) throw ContractError("recall_at_k: no query has a relevant gallery item");
  return static_cast<double>(hits) / static_cast<double>(counted);
}

Relevance outcome_quartile_relevance(std::span<const FactorVector> factors, std::span<const int> mortality) {
  auto bins = factor_bins(factors, Factor::phys);
  std::vector<int> labels(mortality.begin(), mortality.end());
  return [bins = std::move(bins), labels = std::move(labels)](std::size_t q, std::size_t g) {
    return labels[q] == labels[g] && bins[q] == bins[g];
  };
}

double entropy(std::span<const int> a) {
  std::map<int, std::size_t> counts;
  for (int v : a) ++counts[v];
  const double n = static_cast<double>(a.size());
  double h = 0.0;
  for (const auto& [_, c] : counts) {
    const double p = static_cast<double>(c) / n;
    h -= p * std::log(p);
  }
  return h;
}

double mutual_information(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size() || a.empty()) throw ContractError("mutual_information: label vectors differ in length");
  std::map<int, std::size_t> ca, cb;
  std::map<std::pair<int, int>, std::size_t> cab;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ++ca[a[i]];
    ++cb[b[i]];
    ++cab[{a[i], b[i]}];
  }
  const double n = static_cast<double>(a.size());
  double mi = 0.0;
  for (const auto& [key, c] : cab) {
    const double pab = static_cast<double>(c) / n;
    const double pa = static_cast<double>(ca[key.first]) / n;
    const double pb = static_cast<double>(cb[key.second]) / n;
    mi += pab * std::log(pab / (pa * pb));
  }
  return std::max(0.0, mi);
}

MiOverlap mi_overlap(std::span<const Tensor> components, std::span<const FactorVector> factors) {
  const std::size_t n = factors.size();
  if (n < 1000) throw ContractError("mi_overlap needs at least 1000 samples, got " + std::to_string(n));
  if (components.empty() || components.size() > kFactorCount)
    throw ContractError("mi_overlap expects between 1 and 4 subspaces");
  std::vector<std::vector<int>> fbins;
  for (auto f : kAllFactors) {
    if (f == Factor::ctx) {
      fbins.push_back(factor_bins(factors, f));
    } else {
      std::vector<double> v(n);
      for (std::size_t i = 0; i < n; ++i) v[i] = factors[i].continuous(f);
      fbins.push_back(quantile_bins(v, kMiBins));
    }
  }
  MiOverlap out;
  double acc = 0.0;
  std::size_t terms = 0;
  for (std::size_t k = 0; k < components.size(); ++k) {
    const Tensor& c = components[k];
    if (c.rows() != n) throw ContractError("mi_overlap: component rows differ from factor count");
    const Eigen::MatrixXd cov = covariance(c);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    const bool degenerate = cov.trace() <= 1e-24 || es.eigenvalues().maxCoeff() <= 1e-24;
    std::vector<int> pbins;
    if (degenerate) {
      ++out.degenerate;
    } else {
      const Eigen::VectorXd axis = es.eigenvectors().col(es.eigenvectors().cols() - 1);
      std::vector<double> proj(n, 0.0);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c.cols(); ++j) proj[i] += c(i, j) * axis(static_cast<Eigen::Index>(j));
      pbins = quantile_bins(proj, kMiBins);
    }
    for (std::size_t f = 0; f < kFactorCount; ++f) {
      if (f == k) continue;
      ++terms;
      if (degenerate) continue;
      const double hmin = std::min(entropy(pbins), entropy(fbins[f]));
      if (hmin > 0.0) acc += std::min(1.0, mutual_information(pbins, fbins[f]) / hmin);
    }
  }
  out.value = acc / static_cast<double>(terms);
  return out;
}

double orthogonality_score(std::span<const Tensor> components) {
  if (components.size() < 2) throw ContractError("orthogonality_score needs at least two components");
  const std::size_t n = components[0].rows(), d = components[0].cols();
  for (const auto& c : components)
    if (c.rows() != n || c.cols() != d) throw DimensionError("orthogonality_score: component shapes disagree");
  double acc = 0.0;
  std::size_t terms = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < components.size(); ++k) {
      for (std::size_t l = 0; l < components.size(); ++l) {
        if (k == l) continue;
        const auto a = components[k].row(i);
        const auto b = components[l].row(i);
        double dot = 0.0, na = 0.0, nb = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          dot += a[j] * b[j];
          na += a[j] * a[j];
          nb += b[j] * b[j];
        }
        ++terms;
        if (na > 0.0 && nb > 0.0) acc += std::min(1.0, std::abs(dot) / std::sqrt(na * nb));
      }
    }
  }
  return 1.0 - acc / static_cast<double>(terms);
}

double label_purity(const Tensor& z, std::span<const std::uint64_t> ids, std::span<const int> labels, std::size_t k) {
  const std::size_t n = z.rows();
  if (labels.size() != n) throw ContractError("purity: label count differs from row count");
  require_k(k, n);
  double acc = 0.0;
  for (std::size_t q = 0; q < n; ++q) {
    std::size_t same = 0;
    for (auto j : nearest_neighbors(z, ids, q, k)) same += labels[j] == labels[q];
    acc += static_cast<double>(same) / static_cast<double>(k);
  }
  return acc / static_cast<double>(n);
}

double label_entropy(const Tensor& z, std::span<const std::uint64_t> ids, std::span<const int> labels, std::size_t k) {
  const std::size_t n = z.rows();
  if (labels.size() != n) throw ContractError("entropy: label count differs from row count");
  require_k(k, n);
  double acc = 0.0;
  std::vector<int> nb(k);
  for (std::size_t q = 0; q < n; ++q) {
    const auto idx = nearest_neighbors(z, ids, q, k);
    for (std::size_t t = 0; t < k; ++t) nb[t] = labels[idx[t]];
    acc += entropy(nb);
  }
  return acc / static_cast<double>(n);
}

double context_retrieval(std::span<const Tensor> components, std::span<const std::uint64_t> ids,
                         std::span<const FactorVector> factors, std::size_t k) {
  if (components.empty() || components.size() > kFactorCount)
    throw ContractError("context_retrieval expects between 1 and 4 subspaces");
  double acc = 0.0;
  for (std::size_t s = 0; s < components.size(); ++s)
    acc += label_purity(components[s], ids, factor_bins(factors, kAllFactors[s]), k);
  return acc / static_cast<double>(components.size());
}

double neighborhood_purity(const Tensor& z, std::span<const std::uint64_t> ids, std::span<const FactorVector> factors,
                           std::size_t k) {
  return label_purity(z, ids, factor_bins(factors, Factor::phys), k);
}

double context_entropy(const Tensor& z, std::span<const std::uint64_t> ids, std::span<const FactorVector> factors,
                       std::size_t k) {
  return label_entropy(z, ids, factor_bins(factors, Factor::phys), k);
}

std::map<std::string, double> shift_gap(const MetricsTable& in_domain, const MetricsTable& shifted,
                                        const std::string& in_split, const std::string& shifted_split) {
  std::map<std::string, double> out;
  for (const auto& m : in_domain.methods()) {
    const auto* a = in_domain.find(metric::mortality_auroc, in_split, m);
    if (!a) continue;
    const auto* b = shifted.find(metric::mortality_auroc, shifted_split, m);
    if (!b) throw ContractError("shift_gap: method '" + m + "' missing from the shifted table");
    out[m] = a->value - b->value;
  }
  for (const auto& m : shifted.methods())
    if (shifted.find(metric::mortality_auroc, shifted_split, m) && !out.count(m))
      throw ContractError("shift_gap: method '" + m + "' missing from the in-domain table");
  return out;
}

Tensor pca_project(const Tensor& x, std::size_t dims) {
  const std::size_t n = x.rows(), d = x.cols();
  if (dims == 0 || dims > d) throw ContractError("pca_project: dims must lie in [1, d]");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(covariance(x));
  std::vector<double> mu(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) mu[j] += x(i, j) / static_cast<double>(n);
  Tensor out({n, dims});
  for (std::size_t a = 0; a < dims; ++a) {
    Eigen::VectorXd axis = es.eigenvectors().col(static_cast<Eigen::Index>(d - 1 - a));
    Eigen::Index arg;
    axis.cwiseAbs().maxCoeff(&arg);
    if (axis(arg) < 0) axis = -axis;
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += (x(i, j) - mu[j]) * axis(static_cast<Eigen::Index>(j));
      out(i, a) = s;
    }
  }
  return out;
}

}  // namespace aurora
