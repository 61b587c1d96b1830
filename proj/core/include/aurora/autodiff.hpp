#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "aurora/tensor.hpp"

namespace aurora::ad {

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; only valid while the
/// owning tape is alive.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }
  const Tensor& value() const;
  /// Gradient after Tape::backward; exact zeros if the node was unreachable.
  Tensor grad() const;
  double item() const { return value().item(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Define-by-run reverse-mode tape. Nodes are appended in creation order,
/// which is a topological order, so backward walks the node list in reverse
/// and visits each node once.
class Tape {
 public:
  using Backprop = std::function<void(Tape&, std::size_t self, const Tensor& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Differentiable leaf (a parameter or an input we want gradients for).
  Var leaf(Tensor value);
  /// Non-differentiable input.
  Var constant(Tensor value);
  Var record(Tensor value, std::vector<std::size_t> parents, Backprop backprop);

  /// Root must be 1x1. Clears gradients from any previous call.
  void backward(Var root);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  Tensor grad(std::size_t id) const;
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  void accumulate(std::size_t id, const Tensor& contribution);
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;  // empty until first accumulate
    bool needs_grad = false;
    Backprop backprop;
  };
  std::deque<Node> nodes_;  // deque: value references stay valid while recording
};

// Elementwise / shape-preserving.
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);  // Hadamard
Var operator*(double c, Var a);
Var operator-(Var a);
Var add_scalar(Var a, double c);
Var relu(Var a);
Var square(Var a);
Var exp(Var a);
Var log(Var a);
Var detach(Var a);

// Linear algebra and broadcasting.
Var matmul(Var a, Var b);
Var transpose(Var a);
/// m (B x n) plus row vector r (1 x n) added to every row.
Var add_row(Var m, Var r);
Var gather_rows(Var a, std::vector<std::size_t> indices);

// Reductions.
Var sum(Var a);
Var mean(Var a);
Var row_sum(Var a);         // B x 1
Var row_dot(Var a, Var b);  // B x 1, per-row inner product
Var col_mean(Var a);        // 1 x n
/// Unbiased per-column standard deviation (1 x n). The derivative at zero
/// spread is defined as 0, mirroring the relu convention.
Var col_std(Var a);

// Row-wise normalisations.
/// Unit L2 rows; a row with norm below 1e-12 raises NumericError.
Var normalize_rows(Var a);
Var log_softmax_rows(Var a);

/// Scalar-valued function of parameters recorded on a fresh tape.
using ScalarFn = std::function<Var(Tape&, std::span<const Var>)>;

/// Max over all coordinates of |analytic - central difference| / max(1, |analytic|).
double grad_check(const ScalarFn& fn, std::span<const Tensor> point, double step = 1e-5);
double grad_check(const std::function<Var(Tape&, Var)>& fn, const Tensor& point, double step = 1e-5);

/// Evaluates fn on a fresh tape and returns its gradients, one per parameter.
std::vector<Tensor> gradients(const ScalarFn& fn, std::span<const Tensor> point, double* value = nullptr);

}  // namespace aurora::ad
