#include "aurora/optimizer.hpp"

#include <cmath>

#include "aurora/errors.hpp"

namespace aurora {

OptimizerKind parse_optimizer_kind(const std::string& s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adam") return OptimizerKind::adam;
  throw ConfigError("unknown optimizer kind '" + s + "' (expected sgd|adam)");
}

std::string to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adam"; }

OptimizerState::OptimizerState(OptimizerConfig cfg) : cfg_(cfg) { set_lr(cfg.lr); }

void OptimizerState::set_lr(double lr) {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be finite and non-negative");
  cfg_.lr = lr;
}

void OptimizerState::apply(std::span<Parameter> params, std::span<const Tensor> grads) {
  if (params.size() != grads.size()) throw ContractError("optimizer: parameter and gradient counts differ");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].value.size() != grads[i].size())
      throw DimensionError("optimizer: gradient shape " + grads[i].shape_string() + " does not match parameter '" +
                           params[i].name + "' " + params[i].value.shape_string());
    if (!grads[i].all_finite()) throw NumericError("non-finite gradient for parameter '" + params[i].name + "'");
  }
  ++steps_;
  if (cfg_.kind == OptimizerKind::sgd) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto p = params[i].value.data();
      auto g = grads[i].data();
      for (std::size_t j = 0; j < p.size(); ++j) p[j] -= cfg_.lr * g[j];
    }
    return;
  }
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.value.shape());
      v_.emplace_back(p.value.shape());
    }
  }
  if (m_.size() != params.size()) throw ContractError("optimizer: parameter list changed between steps");
  const double b1 = cfg_.beta1, b2 = cfg_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].value.data();
    auto g = grads[i].data();
    auto m = m_[i].data();
    auto v = v_[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = b1 * m[j] + (1.0 - b1) * g[j];
      v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      p[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.epsilon);
    }
  }
}

}  // namespace aurora
