#pragma once

#include <span>
#include <string>
#include <vector>

#include "aurora/autodiff.hpp"
#include "aurora/encoder.hpp"
#include "aurora/relational.hpp"
#include "aurora/rng.hpp"

namespace aurora {

enum class OrthMode { per_sample, batch_gram };
OrthMode parse_orth_mode(const std::string& s);
std::string to_string(OrthMode m);

struct AuroraLossConfig {
  double lambda = 0.1;  // orthogonality weight
  double mu = 1.0;      // variance-guard weight; 0 gives the bare alignment + orthogonality objective
  OrthMode orth_mode = OrthMode::per_sample;
  std::vector<double> align_weights;  // empty means all ones

  void validate(std::size_t subspaces) const;
  double align_weight(std::size_t k) const { return align_weights.empty() ? 1.0 : align_weights.at(k); }
};

struct ObjectiveReport {
  std::vector<double> align;            // per subspace
  std::vector<std::size_t> pair_count;  // 0 marks an empty (zero-valued) alignment term
  double orth = 0.0;
  double guard = 0.0;
  double total = 0.0;
  ad::Var loss;  // differentiable total
};

/// Weighted mean of w * ||Z[i] - Z[j]||^2 over the pairs (which must all belong
/// to one factor). No pairs gives a constant zero.
ad::Var align_loss(ad::Var zk, std::span<const Pair> pairs);

/// per_sample: (1/B) sum over ordered k != l and rows i of (z_i^k . z_i^l)^2.
/// batch_gram: (1/B^2) sum over ordered k != l of ||Z^k^T Z^l||_F^2.
ad::Var orth_loss(std::span<const ad::Var> components, OrthMode mode = OrthMode::per_sample);

/// sum_k sum_j max(0, 1 - std(Z^k[:, j]))^2 with the unbiased batch std. Needs B >= 2.
ad::Var variance_guard(std::span<const ad::Var> components);

ObjectiveReport aurora_loss(const AuroraLossConfig& cfg, std::span<const ad::Var> components, const PairBatch& pairs);

/// Bernoulli(fraction) mask per coordinate (1 = masked); a row with no masked
/// coordinate is redrawn.
Tensor draw_mask(std::size_t rows, std::size_t cols, double fraction, Rng& rng);

/// Mean squared error over coordinates where mask == 1.
ad::Var masked_mse(ad::Var reconstruction, ad::Var target, const Tensor& mask);

/// Zero the masked inputs, encode, decode with the bundle's decoder, and score
/// the masked coordinates only.
ad::Var mae_loss(const BoundParams& params, const EncoderConfig& cfg, const Tensor& x, double mask_fraction, Rng& rng);

/// InfoNCE with cosine similarity; positives[i] is the positive for anchors[i]
/// and every other row of positives is a negative.
ad::Var infonce_loss(ad::Var anchors, ad::Var positives, double temperature);

/// Cross-entropy from softmax((teacher - center) / teacher_temp), held
/// constant, to log_softmax(student / student_temp), averaged over rows.
ad::Var distill_loss(ad::Var student_logits, ad::Var teacher_logits, double student_temp, double teacher_temp,
                     const Tensor& center);

/// center <- rate * center + (1 - rate) * mean over rows of teacher logits.
Tensor update_center(const Tensor& center, const Tensor& teacher_logits, double rate);

}  // namespace aurora
