#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "aurora/autodiff.hpp"
#include "aurora/optimizer.hpp"
#include "aurora/rng.hpp"
#include "aurora/tensor.hpp"

namespace aurora {

enum class Method { aurora, mae, contrastive, distill };
inline constexpr Method kAllMethods[] = {Method::aurora, Method::mae, Method::contrastive, Method::distill};

std::string to_string(Method m);
Method parse_method(const std::string& s);
/// Human-readable row label used in reports.
std::string display_name(Method m);

struct EncoderConfig {
  std::size_t input_dim = 32;
  std::vector<std::size_t> hidden = {64, 64};
  std::size_t latent = 32;
  std::size_t subspaces = 4;
  /// Width of the method-specific head (decoder output is input_dim; the
  /// projector and prototype heads use this width).
  std::size_t head_width = 32;

  void validate() const;
};

/// Trainable parameters of one method plus its non-trainable state.
///
/// Every method carries the same backbone and K linear subspace heads. MAE
/// adds a decoder, contrastive a projector, distillation a prototype head
/// together with an EMA teacher copy and a logit centre.
struct ModelBundle {
  Method method = Method::aurora;
  EncoderConfig config;
  std::vector<Parameter> params;
  std::vector<Parameter> teacher;  // distill only; same names and shapes as params
  Tensor center;                   // distill only; [1 x head_width]

  static ModelBundle init(Method method, const EncoderConfig& cfg, std::uint64_t seed);

  const Tensor& param(const std::string& name) const;
  bool has(const std::string& name) const;
  std::size_t trainable_count() const;
};

struct SubspaceEmbedding {
  Tensor z;                        // [d]
  std::vector<Tensor> components;  // K x [d], ordered phys, int, obs, ctx
};

struct BatchEmbedding {
  Tensor z;                        // [B x d]
  std::vector<Tensor> components;  // K x [B x d]
};

/// Parameters recorded on a tape, looked up by name.
class BoundParams {
 public:
  BoundParams(ad::Tape& tape, const std::vector<Parameter>& params, bool trainable);
  /// Binds already-recorded vars, e.g. grad_check leaves.
  BoundParams(std::vector<std::string> names, std::vector<ad::Var> vars);
  ad::Var operator[](const std::string& name) const;
  const std::vector<ad::Var>& vars() const noexcept { return vars_; }

 private:
  std::vector<std::string> names_;
  std::vector<ad::Var> vars_;
};

struct EncodedGraph {
  ad::Var z;
  std::vector<ad::Var> components;
};

/// Backbone MLP (relu) to hidden u; component k = u W_k + b_k; z = sum of components.
EncodedGraph encode_graph(const BoundParams& params, const EncoderConfig& cfg, ad::Var x);
/// Linear head named `prefix` (prefix.weight, prefix.bias) applied to rows of x.
ad::Var linear(const BoundParams& params, const std::string& prefix, ad::Var x);

SubspaceEmbedding encode(const ModelBundle& bundle, const Tensor& x);
BatchEmbedding encode_batch(const ModelBundle& bundle, const Tensor& x);

/// teacher <- rate * teacher + (1 - rate) * student, elementwise.
void ema_update(std::vector<Parameter>& teacher, const std::vector<Parameter>& student, double rate);

// Checkpoint file: "AURM", u16 version, u32 entry count, then per entry
// (u32 name length, name bytes, u32 rank, u64 dims, f64 payload), all
// little-endian, followed by an FNV-1a 64 checksum of everything before it.
inline constexpr std::uint16_t kCheckpointVersion = 1;
void save_checkpoint(std::ostream& out, const ModelBundle& bundle);
void save_checkpoint(const std::string& path, const ModelBundle& bundle);
ModelBundle load_checkpoint(std::istream& in);
ModelBundle load_checkpoint(const std::string& path);

}  // namespace aurora
