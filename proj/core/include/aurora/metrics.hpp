#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "aurora/cohort.hpp"
#include "aurora/tensor.hpp"

namespace aurora {

/// Frozen embeddings for a set of records. Row r of every matrix belongs to ids[r].
struct EmbeddingSet {
  std::vector<std::uint64_t> ids;
  Tensor z;                        // [n x d]
  std::vector<Tensor> components;  // K x [n x d]

  std::size_t size() const { return ids.size(); }
  void validate() const;
  EmbeddingSet subset(std::span<const std::size_t> rows) const;
};

/// Closed metric vocabulary.
namespace metric {
inline constexpr const char* mortality_auroc = "mortality_auroc";
inline constexpr const char* sepsis_auroc = "sepsis_auroc";
inline constexpr const char* readmission_auroc = "readmission_auroc";
inline constexpr const char* recall_at_10 = "recall_at_10";
inline constexpr const char* mi_overlap = "mi_overlap";
inline constexpr const char* orthogonality_score = "orthogonality_score";
inline constexpr const char* context_retrieval = "context_retrieval";
inline constexpr const char* neighborhood_purity = "neighborhood_purity";
inline constexpr const char* context_entropy = "context_entropy";
inline constexpr const char* shift_gap = "shift_gap";
inline constexpr const char* param_count = "param_count";
bool known(const std::string& name);
}  // namespace metric

struct MetricRow {
  std::string metric;
  std::string split;
  std::string method;
  double value;
};

class MetricsTable {
 public:
  /// Throws ContractError for names outside the vocabulary or non-finite values.
  void add(const std::string& metric, const std::string& split, const std::string& method, double value);
  void append(const MetricsTable& other);
  const std::vector<MetricRow>& rows() const noexcept { return rows_; }
  const MetricRow* find(const std::string& metric, const std::string& split, const std::string& method) const;
  double value(const std::string& metric, const std::string& split, const std::string& method) const;
  /// Methods in first-appearance order.
  std::vector<std::string> methods() const;

  /// `metric,split,method,value` with six decimals.
  void write_csv(std::ostream& out) const;
  std::string to_csv() const;

 private:
  std::vector<MetricRow> rows_;
};

// ---------------------------------------------------------------------------
// Scalar metrics.

/// Mann-Whitney AUROC with ties counted 1/2. Needs both classes.
double auroc(std::span<const double> scores, std::span<const int> labels);

struct ProbeResult {
  double auroc = 0.5;
  bool converged = false;
  std::size_t iterations = 0;
  std::vector<double> test_scores;
};

/// L2-regularised logistic regression fitted by full-batch gradient descent.
/// Inputs are z-scored with training statistics; the step is 1/L for the
/// loss's Lipschitz constant.
class LogisticProbe {
 public:
  static constexpr double kL2 = 1e-4;
  static constexpr double kGradTol = 1e-6;
  static constexpr std::size_t kMaxIter = 5000;

  void fit(const Tensor& x, std::span<const int> labels);
  std::vector<double> scores(const Tensor& x) const;
  bool converged() const noexcept { return converged_; }
  std::size_t iterations() const noexcept { return iterations_; }

 private:
  std::vector<double> mean_, scale_, weights_;
  double bias_ = 0.0;
  bool converged_ = false;
  std::size_t iterations_ = 0;
};

ProbeResult linear_probe(const Tensor& train_x, std::span<const int> train_y, const Tensor& test_x,
                         std::span<const int> test_y);

// ---------------------------------------------------------------------------
// Neighbour-based metrics. Neighbour queries exclude the query itself and
// break distance ties by ascending record id.

/// Indices (rows of x) of the k nearest neighbours of row q.
std::vector<std::size_t> nearest_neighbors(const Tensor& x, std::span<const std::uint64_t> ids, std::size_t q,
                                           std::size_t k);

/// Equal-frequency bins over values (rank-based, ties by position); bin of
/// the r-th smallest value is floor(r * bins / n).
std::vector<int> quantile_bins(std::span<const double> values, std::size_t bins);
/// Quartile bins for continuous factors, native site categories for ctx.
std::vector<int> factor_bins(std::span<const FactorVector> factors, Factor f);

using Relevance = std::function<bool(std::size_t query, std::size_t gallery)>;

/// Mean over queries of [some relevant item among the k nearest gallery
/// rows]. A gallery row whose id equals the query id is skipped. Queries with
/// no relevant gallery item at all are left out of the mean.
double recall_at_k(const Tensor& queries, std::span<const std::uint64_t> query_ids, const Tensor& gallery,
                   std::span<const std::uint64_t> gallery_ids, const Relevance& relevant, std::size_t k);
/// Default oracle: same mortality label and same phys quartile.
Relevance outcome_quartile_relevance(std::span<const FactorVector> factors, std::span<const int> mortality);

struct MiOverlap {
  double value = 0.0;
  std::size_t degenerate = 0;  // zero-variance components scored as 0
};

/// Plug-in mutual information between two discrete labelings.
double mutual_information(std::span<const int> a, std::span<const int> b);
double entropy(std::span<const int> a);
/// Mean normalised MI between each subspace's first principal projection
/// (8 equal-frequency bins) and every non-target factor. Needs n >= 1000.
MiOverlap mi_overlap(std::span<const Tensor> components, std::span<const FactorVector> factors);

/// 1 - mean over rows and ordered pairs k != l of |cos(z^k, z^l)|.
double orthogonality_score(std::span<const Tensor> components);

/// Mean over subspaces of the fraction of k-NN (within Z^k) sharing the
/// query's target-factor bin.
double context_retrieval(std::span<const Tensor> components, std::span<const std::uint64_t> ids,
                         std::span<const FactorVector> factors, std::size_t k = 10);

/// Fraction of k-NN in full Z sharing the query's phys quartile.
double neighborhood_purity(const Tensor& z, std::span<const std::uint64_t> ids, std::span<const FactorVector> factors,
                           std::size_t k = 10);

/// Mean Shannon entropy (nats) of the phys-quartile histogram among k-NN in Z.
double context_entropy(const Tensor& z, std::span<const std::uint64_t> ids, std::span<const FactorVector> factors,
                       std::size_t k = 10);

/// Same two metrics on explicit labels (used by both of the above).
double label_purity(const Tensor& z, std::span<const std::uint64_t> ids, std::span<const int> labels, std::size_t k);
double label_entropy(const Tensor& z, std::span<const std::uint64_t> ids, std::span<const int> labels, std::size_t k);

/// In-domain minus shifted mortality AUROC per method.
std::map<std::string, double> shift_gap(const MetricsTable& in_domain, const MetricsTable& shifted,
                                        const std::string& in_split = "in_domain",
                                        const std::string& shifted_split = "shifted");

/// Projection of the centred rows onto the top `dims` principal axes; each
/// axis is sign-fixed so its largest-magnitude loading is positive.
Tensor pca_project(const Tensor& x, std::size_t dims);

}  // namespace aurora
