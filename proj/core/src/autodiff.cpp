#include "aurora/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "aurora/errors.hpp"

namespace aurora::ad {

namespace {

constexpr double kNormFloor = 1e-12;

Tape& same_tape(Var a, Var b) {
  if (a.tape() == nullptr || a.tape() != b.tape()) throw ContractError("operands recorded on different tapes");
  return *a.tape();
}

Tape& tape_of(Var a) {
  if (a.tape() == nullptr) throw ContractError("operation on a detached Var");
  return *a.tape();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError(std::string(op) + ": shapes disagree " + a.shape_string() + " vs " + b.shape_string());
}

Tensor as_matrix(Tensor t) {
  if (t.rank() == 2) return t;
  const std::size_t r = t.rows(), c = t.cols();
  return t.reshaped({r, c});
}

template <class F>
Tensor map(const Tensor& a, F f) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

}  // namespace

const Tensor& Var::value() const { return tape_of(*this).value(id_); }

Tensor Var::grad() const { return tape_of(*this).grad(id_); }

Var Tape::leaf(Tensor value) {
  value = as_matrix(std::move(value));
  if (!value.all_finite()) throw NumericError("non-finite leaf value");
  nodes_.push_back(Node{std::move(value), {}, true, {}});
  return {this, nodes_.size() - 1};
}

Var Tape::constant(Tensor value) {
  value = as_matrix(std::move(value));
  if (!value.all_finite()) throw NumericError("non-finite constant value");
  nodes_.push_back(Node{std::move(value), {}, false, {}});
  return {this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::vector<std::size_t> parents, Backprop backprop) {
  if (!value.all_finite()) throw NumericError("non-finite value produced in autodiff graph");
  const bool needs = std::any_of(parents.begin(), parents.end(), [&](std::size_t p) { return nodes_[p].needs_grad; });
  nodes_.push_back(Node{std::move(value), {}, needs, needs ? std::move(backprop) : Backprop{}});
  return {this, nodes_.size() - 1};
}

Tensor Tape::grad(std::size_t id) const {
  const Node& n = nodes_[id];
  if (n.grad.empty()) return Tensor(n.value.shape());
  return n.grad;
}

void Tape::accumulate(std::size_t id, const Tensor& contribution) {
  Node& n = nodes_[id];
  if (!n.needs_grad) return;
  if (contribution.size() != n.value.size())
    throw DimensionError("gradient " + contribution.shape_string() + " does not fit node " + n.value.shape_string());
  if (n.grad.empty()) {
    n.grad = contribution.same_shape(n.value) ? contribution : contribution.reshaped(n.value.shape());
    return;
  }
  auto g = n.grad.data();
  auto c = contribution.data();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += c[i];
}

void Tape::backward(Var root) {
  if (root.tape() != this) throw ContractError("backward root belongs to another tape");
  const Tensor& rv = nodes_[root.id()].value;
  if (rv.size() != 1) throw ContractError("backward requires a scalar root, got " + rv.shape_string());
  for (auto& n : nodes_) n.grad = Tensor();
  if (!nodes_[root.id()].needs_grad) return;
  nodes_[root.id()].grad = Tensor(rv.shape(), 1.0);
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.empty() || !n.backprop) continue;
    n.backprop(*this, i, n.grad);
  }
}

Var operator+(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape(av, bv, "add");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return t.record(std::move(out), {a.id(), b.id()}, [ai = a.id(), bi = b.id()](Tape& tp, std::size_t, const Tensor& g) {
    tp.accumulate(ai, g);
    tp.accumulate(bi, g);
  });
}

Var operator-(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape(av, bv, "sub");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return t.record(std::move(out), {a.id(), b.id()}, [ai = a.id(), bi = b.id()](Tape& tp, std::size_t, const Tensor& g) {
    tp.accumulate(ai, g);
    tp.accumulate(bi, map(g, [](double v) { return -v; }));
  });
}

Var operator*(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape(av, bv, "mul");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return t.record(std::move(out), {a.id(), b.id()}, [ai = a.id(), bi = b.id()](Tape& tp, std::size_t, const Tensor& g) {
    const Tensor& x = tp.value(ai);
    const Tensor& y = tp.value(bi);
    if (tp.needs_grad(ai)) {
      Tensor ga = g;
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= y[i];
      tp.accumulate(ai, ga);
    }
    if (tp.needs_grad(bi)) {
      Tensor gb = g;
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] *= x[i];
      tp.accumulate(bi, gb);
    }
  });
}

Var operator*(double c, Var a) {
  Tape& t = tape_of(a);
  return t.record(map(a.value(), [c](double v) { return c * v; }), {a.id()},
                  [ai = a.id(), c](Tape& tp, std::size_t, const Tensor& g) {
                    tp.accumulate(ai, map(g, [c](double v) { return c * v; }));
                  });
}

Var operator-(Var a) { return -1.0 * a; }

Var add_scalar(Var a, double c) {
  Tape& t = tape_of(a);
  return t.record(map(a.value(), [c](double v) { return v + c; }), {a.id()},
                  [ai = a.id()](Tape& tp, std::size_t, const Tensor& g) { tp.accumulate(ai, g); });
}

Var relu(Var a) {
  Tape& t = tape_of(a);
  return t.record(map(a.value(), [](double v) { return v > 0.0 ? v : 0.0; }), {a.id()},
                  [ai = a.id()](Tape& tp, std::size_t, const Tensor& g) {
                    const Tensor& x = tp.value(ai);
                    Tensor gx = g;
                    for (std::size_t i = 0; i < gx.size(); ++i)
                      if (!(x[i] > 0.0)) gx[i] = 0.0;
                    tp.accumulate(ai, gx);
                  });
}

Var square(Var a) {
  Tape& t = tape_of(a);
  return t.record(map(a.value(), [](double v) { return v * v; }), {a.id()},
                  [ai = a.id()](Tape& tp, std::size_t, const Tensor& g) {
                    const Tensor& x = tp.value(ai);
                    Tensor gx = g;
                    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] *= 2.0 * x[i];
                    tp.accumulate(ai, gx);
                  });
}

Var exp(Var a) {
  Tape& t = tape_of(a);
  return t.record(map(a.value(), [](double v) { return std::exp(v); }), {a.id()},
                  [ai = a.id()](Tape& tp, std::size_t self, const Tensor& g) {
                    const Tensor& y = tp.value(self);
                    Tensor gx = g;
                    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] *= y[i];
                    tp.accumulate(ai, gx);
                  });
}

Var log(Var a) {
  Tape& t = tape_of(a);
  const Tensor& av = a.value();
  for (std::size_t i = 0; i < av.size(); ++i)
    if (!(av[i] > 0.0)) throw NumericError("log of non-positive value");
  return t.record(map(av, [](double v) { return std::log(v); }), {a.id()},
                  [ai = a.id()](Tape& tp, std::size_t, const Tensor& g) {
                    const Tensor& x = tp.value(ai);
                    Tensor gx = g;
                    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] /= x[i];
                    tp.accumulate(ai, gx);
                  });
}

Var detach(Var a) { return tape_of(a).constant(a.value()); }

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  return t.record(aurora::matmul(a.value(), b.value()), {a.id(), b.id()},
                  [ai = a.id(), bi = b.id()](Tape& tp, std::size_t, const Tensor& g) {
                    if (tp.needs_grad(ai)) tp.accumulate(ai, aurora::matmul(g, aurora::transpose(tp.value(bi))));
                    if (tp.needs_grad(bi)) tp.accumulate(bi, aurora::matmul(aurora::transpose(tp.value(ai)), g));
                  });
}

Var transpose(Var a) {
  Tape& t = tape_of(a);
  return t.record(aurora::transpose(a.value()), {a.id()}, [ai = a.id()](Tape& tp, std::size_t, const Tensor& g) {
    tp.accumulate(ai, aurora::transpose(g));
  });
}

Var add_row(Var m, Var r) {
  Tape& t = same_tape(m, r);
  const Tensor& mv = m.value();
  const Tensor& rv = r.value();
  if (rv.rows() != 1 || rv.cols() != mv.cols())
    throw DimensionError("add_row: row vector " + rv.shape_string() + " does not fit " + mv.shape_string());
  Tensor out = mv;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += rv[j];
  return t.record(std::move(out), {m.id(), r.id()}, [mi = m.id(), ri = r.id()](Tape& tp, std::size_t, const Tensor& g) {
    tp.accumulate(mi, g);
    if (tp.needs_grad(ri)) {
      Tensor gr({1, g.cols()});
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) gr[j] += g(i, j);
      tp.accumulate(ri, gr);
    }
  });
}

Var gather_rows(Var a, std::vector<std::size_t> indices) {
  Tape& t = tape_of(a);
  if (indices.empty()) throw ContractError("gather_rows with no indices");
  Tensor out = aurora::take_rows(a.value(), indices);
  return t.record(std::move(out), {a.id()}, [ai = a.id(), idx = std::move(indices)](Tape& tp, std::size_t, const Tensor& g) {
    const Tensor& x = tp.value(ai);
    Tensor gx(x.shape());
    const std::size_t c = x.cols();
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < c; ++j) gx(idx[i], j) += g(i, j);
    tp.accumulate(ai, gx);
  });
}

Var sum(Var a) {
  Tape& t = tape_of(a);
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return t.record(Tensor::scalar(s), {a.id()}, [ai = a.id()](Tape& tp, std::size_t, const Tensor& g) {
    tp.accumulate(ai, Tensor(tp.value(ai).shape(), g[0]));
  });
}

Var mean(Var a) { return (1.0 / static_cast<double>(a.value().size())) * sum(a); }

Var row_sum(Var a) {
  Tape& t = tape_of(a);
  const Tensor& x = a.value();
  Tensor out({x.rows(), 1});
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (double v : x.row(i)) out[i] += v;
  return t.record(std::move(out), {a.id()}, [ai = a.id()](Tape& tp, std::size_t, const Tensor& g) {
    const Tensor& x = tp.value(ai);
    Tensor gx(x.shape());
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < x.cols(); ++j) gx(i, j) = g[i];
    tp.accumulate(ai, gx);
  });
}

Var row_dot(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_same_shape(x, y, "row_dot");
  Tensor out({x.rows(), 1});
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) out[i] += x(i, j) * y(i, j);
  return t.record(std::move(out), {a.id(), b.id()}, [ai = a.id(), bi = b.id()](Tape& tp, std::size_t, const Tensor& g) {
    const Tensor& x = tp.value(ai);
    const Tensor& y = tp.value(bi);
    if (tp.needs_grad(ai)) {
      Tensor gx(x.shape());
      for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.cols(); ++j) gx(i, j) = g[i] * y(i, j);
      tp.accumulate(ai, gx);
    }
    if (tp.needs_grad(bi)) {
      Tensor gy(y.shape());
      for (std::size_t i = 0; i < y.rows(); ++i)
        for (std::size_t j = 0; j < y.cols(); ++j) gy(i, j) = g[i] * x(i, j);
      tp.accumulate(bi, gy);
    }
  });
}

Var col_mean(Var a) {
  Tape& t = tape_of(a);
  const Tensor& x = a.value();
  const double inv = 1.0 / static_cast<double>(x.rows());
  Tensor out({1, x.cols()});
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) out[j] += x(i, j);
  for (auto& v : out.data()) v *= inv;
  return t.record(std::move(out), {a.id()}, [ai = a.id(), inv](Tape& tp, std::size_t, const Tensor& g) {
    const Tensor& x = tp.value(ai);
    Tensor gx(x.shape());
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < x.cols(); ++j) gx(i, j) = g[j] * inv;
    tp.accumulate(ai, gx);
  });
}

Var col_std(Var a) {
  Tape& t = tape_of(a);
  const Tensor& x = a.value();
  const std::size_t n = x.rows(), c = x.cols();
  if (n < 2) throw ContractError("col_std needs at least two rows");
  Tensor mu({1, c});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) mu[j] += x(i, j);
  for (auto& v : mu.data()) v /= static_cast<double>(n);
  Tensor out({1, c});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      const double d = x(i, j) - mu[j];
      out[j] += d * d;
    }
  for (auto& v : out.data()) v = std::sqrt(v / static_cast<double>(n - 1));
  return t.record(std::move(out), {a.id()}, [ai = a.id(), mu](Tape& tp, std::size_t self, const Tensor& g) {
    const Tensor& x = tp.value(ai);
    const Tensor& sd = tp.value(self);
    const double denom = static_cast<double>(x.rows() - 1);
    Tensor gx(x.shape());
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < x.cols(); ++j)
        gx(i, j) = sd[j] > 0.0 ? g[j] * (x(i, j) - mu[j]) / (denom * sd[j]) : 0.0;
    tp.accumulate(ai, gx);
  });
}

Var normalize_rows(Var a) {
  Tape& t = tape_of(a);
  const Tensor& x = a.value();
  Tensor norms({x.rows(), 1});
  Tensor out = x;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double s = 0.0;
    for (double v : x.row(i)) s += v * v;
    const double nrm = std::sqrt(s);
    if (nrm < kNormFloor) throw NumericError("normalize_rows: row " + std::to_string(i) + " has zero norm");
    norms[i] = nrm;
    for (auto& v : out.row(i)) v /= nrm;
  }
  return t.record(std::move(out), {a.id()}, [ai = a.id(), norms](Tape& tp, std::size_t self, const Tensor& g) {
    const Tensor& y = tp.value(self);
    Tensor gx(y.shape());
    for (std::size_t i = 0; i < y.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < y.cols(); ++j) dot += g(i, j) * y(i, j);
      for (std::size_t j = 0; j < y.cols(); ++j) gx(i, j) = (g(i, j) - dot * y(i, j)) / norms[i];
    }
    tp.accumulate(ai, gx);
  });
}

Var log_softmax_rows(Var a) {
  Tape& t = tape_of(a);
  const Tensor& x = a.value();
  Tensor out = x;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto r = out.row(i);
    const double mx = *std::max_element(r.begin(), r.end());
    double s = 0.0;
    for (double v : r) s += std::exp(v - mx);
    const double lse = mx + std::log(s);
    for (auto& v : r) v -= lse;
  }
  return t.record(std::move(out), {a.id()}, [ai = a.id()](Tape& tp, std::size_t self, const Tensor& g) {
    const Tensor& y = tp.value(self);
    Tensor gx(y.shape());
    for (std::size_t i = 0; i < y.rows(); ++i) {
      double gs = 0.0;
      for (std::size_t j = 0; j < y.cols(); ++j) gs += g(i, j);
      for (std::size_t j = 0; j < y.cols(); ++j) gx(i, j) = g(i, j) - std::exp(y(i, j)) * gs;
    }
    tp.accumulate(ai, gx);
  });
}

std::vector<Tensor> gradients(const ScalarFn& fn, std::span<const Tensor> point, double* value) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(point.size());
  for (const auto& p : point) leaves.push_back(tape.leaf(p));
  Var out = fn(tape, leaves);
  tape.backward(out);
  if (value) *value = out.item();
  std::vector<Tensor> grads;
  grads.reserve(leaves.size());
  for (std::size_t i = 0; i < leaves.size(); ++i) grads.push_back(leaves[i].grad().reshaped(point[i].shape()));
  return grads;
}

double grad_check(const ScalarFn& fn, std::span<const Tensor> point, double step) {
  if (!(step > 0.0)) throw ContractError("grad_check step must be positive");
  double f0 = 0.0;
  const auto analytic = gradients(fn, point, &f0);
  if (!std::isfinite(f0)) throw NumericError("grad_check: non-finite function value");

  auto evaluate = [&](const std::vector<Tensor>& at) {
    Tape tape;
    std::vector<Var> vars;
    for (const auto& p : at) vars.push_back(tape.constant(p));
    const double v = fn(tape, vars).item();
    if (!std::isfinite(v)) throw NumericError("grad_check: non-finite function value");
    return v;
  };

  std::vector<Tensor> probe(point.begin(), point.end());
  double worst = 0.0;
  for (std::size_t p = 0; p < probe.size(); ++p) {
    for (std::size_t i = 0; i < probe[p].size(); ++i) {
      const double orig = probe[p][i];
      probe[p][i] = orig + step;
      const double up = evaluate(probe);
      probe[p][i] = orig - step;
      const double down = evaluate(probe);
      probe[p][i] = orig;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[p][i];
      worst = std::max(worst, std::abs(a - numeric) / std::max(1.0, std::abs(a)));
    }
  }
  return worst;
}

double grad_check(const std::function<Var(Tape&, Var)>& fn, const Tensor& point, double step) {
  const Tensor pts[] = {point};
  return grad_check([&](Tape& t, std::span<const Var> v) { return fn(t, v[0]); }, pts, step);
}

}  // namespace aurora::ad
