#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "aurora/tensor.hpp"

namespace aurora {

struct Parameter {
  std::string name;
  Tensor value;
};

enum class OptimizerKind { sgd, adam };

OptimizerKind parse_optimizer_kind(const std::string& s);
std::string to_string(OptimizerKind k);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First-order optimizer state. Moments are allocated on the first step and
/// keyed by parameter position, so the parameter list must keep its order.
class OptimizerState {
 public:
  explicit OptimizerState(OptimizerConfig cfg);

  const OptimizerConfig& config() const noexcept { return cfg_; }
  void set_lr(double lr);
  std::int64_t step_count() const noexcept { return steps_; }

  /// sgd: p <- p - lr g. adam: bias-corrected moment update.
  /// Throws NumericError naming the parameter if a gradient is non-finite.
  void apply(std::span<Parameter> params, std::span<const Tensor> grads);

 private:
  OptimizerConfig cfg_;
  std::int64_t steps_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

}  // namespace aurora
