#include "aurora/objectives.hpp"

#include <cmath>

#include "aurora/errors.hpp"

namespace aurora {

OrthMode parse_orth_mode(const std::string& s) {
  if (s == "per_sample") return OrthMode::per_sample;
  if (s == "batch_gram") return OrthMode::batch_gram;
  throw ConfigError("unknown orth_mode '" + s + "' (expected per_sample|batch_gram)");
}

std::string to_string(OrthMode m) { return m == OrthMode::per_sample ? "per_sample" : "batch_gram"; }

void AuroraLossConfig::validate(std::size_t subspaces) const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("objective: lambda must be finite and >= 0");
  if (!(mu >= 0.0) || !std::isfinite(mu)) throw ConfigError("objective: mu must be finite and >= 0");
  if (!align_weights.empty() && align_weights.size() != subspaces)
    throw ConfigError("objective: align_weights must list one weight per subspace");
  for (double w : align_weights)
    if (!(w >= 0.0)) throw ConfigError("objective: align weights must be >= 0");
}

ad::Var align_loss(ad::Var zk, std::span<const Pair> pairs) {
  ad::Tape& tape = *zk.tape();
  if (pairs.empty()) return tape.constant(Tensor::scalar(0.0));
  const std::size_t rows = zk.rows();
  std::vector<std::size_t> left, right;
  Tensor w({pairs.size(), 1});
  left.reserve(pairs.size());
  right.reserve(pairs.size());
  for (std::size_t t = 0; t < pairs.size(); ++t) {
    if (pairs[t].i >= rows || pairs[t].j >= rows) throw ContractError("align_loss: pair index out of range");
    left.push_back(pairs[t].i);
    right.push_back(pairs[t].j);
    w[t] = pairs[t].weight;
  }
  ad::Var diff = ad::gather_rows(zk, std::move(left)) - ad::gather_rows(zk, std::move(right));
  ad::Var d2 = ad::row_dot(diff, diff);
  return (1.0 / static_cast<double>(pairs.size())) * ad::sum(d2 * tape.constant(std::move(w)));
}

ad::Var orth_loss(std::span<const ad::Var> components, OrthMode mode) {
  if (components.size() < 2) throw ContractError("orth_loss needs at least two components");
  const auto& first = components[0].value();
  for (const auto& c : components)
    if (c.rows() != first.rows() || c.cols() != first.cols())
      throw DimensionError("orth_loss: component shapes disagree " + first.shape_string() + " vs " + c.value().shape_string());
  ad::Tape& tape = *components[0].tape();
  const double b = static_cast<double>(first.rows());
  ad::Var acc = tape.constant(Tensor::scalar(0.0));
  for (std::size_t k = 0; k < components.size(); ++k) {
    for (std::size_t l = k + 1; l < components.size(); ++l) {
      ad::Var term = mode == OrthMode::per_sample
                         ? ad::sum(ad::square(ad::row_dot(components[k], components[l])))
                         : ad::sum(ad::square(ad::matmul(ad::transpose(components[k]), components[l])));
      acc = acc + term;
    }
  }
  // Each unordered pair stands for both orderings.
  const double scale = mode == OrthMode::per_sample ? 2.0 / b : 2.0 / (b * b);
  return scale * acc;
}

ad::Var variance_guard(std::span<const ad::Var> components) {
  if (components.empty()) throw ContractError("variance_guard needs at least one component");
  ad::Tape& tape = *components[0].tape();
  ad::Var acc = tape.constant(Tensor::scalar(0.0));
  for (const auto& c : components) {
    if (c.rows() < 2) throw ContractError("variance_guard needs a batch of at least two rows");
    acc = acc + ad::sum(ad::square(ad::relu(ad::add_scalar(-ad::col_std(c), 1.0))));
  }
  return acc;
}

ObjectiveReport aurora_loss(const AuroraLossConfig& cfg, std::span<const ad::Var> components, const PairBatch& pairs) {
  cfg.validate(components.size());
  ad::Tape& tape = *components[0].tape();
  ObjectiveReport r;
  ad::Var total = tape.constant(Tensor::scalar(0.0));
  for (std::size_t k = 0; k < components.size(); ++k) {
    const auto kp = pairs.of_factor(k);
    ad::Var a = align_loss(components[k], kp);
    r.align.push_back(a.item());
    r.pair_count.push_back(kp.size());
    total = total + cfg.align_weight(k) * a;
  }
  ad::Var orth = orth_loss(components, cfg.orth_mode);
  ad::Var guard = variance_guard(components);
  r.orth = orth.item();
  r.guard = guard.item();
  total = total + cfg.lambda * orth + cfg.mu * guard;
  r.total = total.item();
  r.loss = total;
  return r;
}

Tensor draw_mask(std::size_t rows, std::size_t cols, double fraction, Rng& rng) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("mask fraction must lie in (0, 1)");
  Tensor mask({rows, cols});
  for (std::size_t i = 0; i < rows; ++i) {
    bool any = false;
    while (!any) {
      for (std::size_t j = 0; j < cols; ++j) {
        const bool m = rng.uniform() < fraction;
        mask(i, j) = m ? 1.0 : 0.0;
        any = any || m;
      }
    }
  }
  return mask;
}

ad::Var masked_mse(ad::Var reconstruction, ad::Var target, const Tensor& mask) {
  const auto& rv = reconstruction.value();
  if (rv.rows() != mask.rows() || rv.cols() != mask.cols())
    throw DimensionError("masked_mse: mask " + mask.shape_string() + " does not match " + rv.shape_string());
  double count = 0.0;
  for (double m : mask.data()) count += m;
  if (count <= 0.0) throw ContractError("masked_mse: mask selects no coordinates");
  ad::Var m = reconstruction.tape()->constant(mask);
  return (1.0 / count) * ad::sum(ad::square(reconstruction - target) * m);
}

ad::Var mae_loss(const BoundParams& params, const EncoderConfig& cfg, const Tensor& x, double mask_fraction, Rng& rng) {
  ad::Tape& tape = *params.vars().front().tape();
  const Tensor mask = draw_mask(x.rows(), x.cols(), mask_fraction, rng);
  Tensor visible = x.reshaped({x.rows(), x.cols()});
  for (std::size_t i = 0; i < visible.size(); ++i)
    if (mask[i] != 0.0) visible[i] = 0.0;
  auto enc = encode_graph(params, cfg, tape.constant(std::move(visible)));
  ad::Var recon = linear(params, "decoder", enc.z);
  return masked_mse(recon, tape.constant(x.reshaped({x.rows(), x.cols()})), mask);
}

ad::Var infonce_loss(ad::Var anchors, ad::Var positives, double temperature) {
  if (!(temperature > 0.0)) throw ContractError("infonce: temperature must be positive");
  const auto& a = anchors.value();
  const auto& p = positives.value();
  if (a.rows() != p.rows() || a.cols() != p.cols())
    throw DimensionError("infonce: anchors " + a.shape_string() + " vs positives " + p.shape_string());
  if (a.rows() < 2) throw ContractError("infonce needs B >= 2");
  ad::Tape& tape = *anchors.tape();
  const std::size_t b = a.rows();
  ad::Var sims = (1.0 / temperature) * ad::matmul(ad::normalize_rows(anchors), ad::transpose(ad::normalize_rows(positives)));
  ad::Var logp = ad::log_softmax_rows(sims);
  return (-1.0 / static_cast<double>(b)) * ad::sum(logp * tape.constant(Tensor::identity(b)));
}

ad::Var distill_loss(ad::Var student_logits, ad::Var teacher_logits, double student_temp, double teacher_temp,
                     const Tensor& center) {
  if (!(student_temp > 0.0) || !(teacher_temp > 0.0)) throw ContractError("distill: temperatures must be positive");
  const auto& s = student_logits.value();
  const auto& t = teacher_logits.value();
  if (s.rows() != t.rows() || s.cols() != t.cols())
    throw DimensionError("distill: student " + s.shape_string() + " vs teacher " + t.shape_string());
  if (center.size() != t.cols()) throw DimensionError("distill: center width " + center.shape_string() + " vs logits " + t.shape_string());
  ad::Tape& tape = *student_logits.tape();
  Tensor probs = t;
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    auto r = probs.row(i);
    double mx = -INFINITY;
    for (std::size_t j = 0; j < r.size(); ++j) {
      r[j] = (r[j] - center[j]) / teacher_temp;
      mx = std::max(mx, r[j]);
    }
    double z = 0.0;
    for (auto& v : r) z += (v = std::exp(v - mx));
    for (auto& v : r) v /= z;
  }
  ad::Var logq = ad::log_softmax_rows((1.0 / student_temp) * student_logits);
  return (-1.0 / static_cast<double>(s.rows())) * ad::sum(logq * tape.constant(std::move(probs)));
}

Tensor update_center(const Tensor& center, const Tensor& teacher_logits, double rate) {
  if (center.size() != teacher_logits.cols()) throw DimensionError("update_center: width mismatch");
  Tensor out = center;
  const double inv = 1.0 / static_cast<double>(teacher_logits.rows());
  for (std::size_t j = 0; j < out.size(); ++j) {
    double m = 0.0;
    for (std::size_t i = 0; i < teacher_logits.rows(); ++i) m += teacher_logits(i, j);
    out[j] = rate * center[j] + (1.0 - rate) * m * inv;
  }
  return out;
}

}  // namespace aurora
