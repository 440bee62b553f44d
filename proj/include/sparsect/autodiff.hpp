#pragma once

// Reverse-mode tape over the operators in ops.hpp.
//
// Under a half-precision policy every non-exempt operator rounds its output
// to binary16 (FP16 storage), and its backward rounds the gradients it hands
// to its inputs. Internal reductions stay in FP32 or wider. Batch norm is
// exempt: its output and its input gradients remain FP32.

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "sparsect/error.hpp"
#include "sparsect/ops.hpp"
#include "sparsect/precision.hpp"
#include "sparsect/tensor.hpp"

namespace sparsect {

struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
};

struct BackwardResult {
  bool overflow = false;  // a parameter gradient was non-finite
};

enum class OpKind { input, parameter, conv2d, conv_transpose2d, maxpool2d, batchnorm2d, relu, sigmoid, add, mul, scale,
                    concat, mse_loss };

template <class T>
class Tape {
 public:
  explicit Tape(const PrecisionPolicy& policy = PrecisionPolicy::o0()) : half_(policy.half()) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool half() const noexcept { return half_; }
  std::size_t size() const noexcept { return nodes_.size(); }
  OpKind kind(Var v) const { return node(v).kind; }

  const Tensor<T>& value(Var v) const { return node(v).value; }
  /// Gradient of the last backward() w.r.t. an input or parameter node;
  /// empty if none flowed. Intermediate gradients are released as consumed.
  const Tensor<T>& grad(Var v) const { return node(v).grad; }
  double scalar(Var v) const { return node(v).scalar; }

  Var input(Tensor<T> x) {
    if (half_) x = to_half(std::move(x));
    return push(OpKind::input, std::move(x), {}, nullptr);
  }

  /// Binds the compute copy under a half policy, the master otherwise.
  Var parameter(Parameter<T>& p) {
    Var v = push(OpKind::parameter, half_ ? p.compute : p.master, {}, nullptr);
    params_.push_back({v.id, &p});
    return v;
  }

  Var conv2d(Var x, Var w, Var b, int stride, int pad) {
    Tensor<T> y = ops::conv2d(value(x), value(w), value(b), stride, pad);
    return push(OpKind::conv2d, rounded(std::move(y)), {x, w, b}, [this, x, w, b, stride, pad](std::size_t self) {
      auto g = ops::conv2d_backward(value(x), value(w), grad_of(self), stride, pad);
      accumulate(x, rounded(std::move(g.dx)));
      accumulate(w, rounded(std::move(g.dw)));
      accumulate(b, rounded(std::move(g.db)));
    });
  }

  Var conv_transpose2d(Var x, Var w, Var b, int stride) {
    Tensor<T> y = ops::conv_transpose2d(value(x), value(w), value(b), stride);
    return push(OpKind::conv_transpose2d, rounded(std::move(y)), {x, w, b}, [this, x, w, b, stride](std::size_t self) {
      auto g = ops::conv_transpose2d_backward(value(x), value(w), grad_of(self), stride);
      accumulate(x, rounded(std::move(g.dx)));
      accumulate(w, rounded(std::move(g.dw)));
      accumulate(b, rounded(std::move(g.db)));
    });
  }

  Var maxpool2d(Var x, int k = 2, int stride = 2) {
    auto r = ops::maxpool2d(value(x), k, stride);
    auto argmax = std::make_shared<std::vector<std::int64_t>>(std::move(r.argmax));
    return push(OpKind::maxpool2d, std::move(r.y), {x}, [this, x, argmax](std::size_t self) {
      accumulate(x, rounded(ops::maxpool2d_backward(value(x).shape(), *argmax, grad_of(self))));
    });
  }

  /// Exempt from half rounding. `stats` is updated in train mode when given.
  Var batchnorm2d(Var x, Var gamma, Var beta, double eps, ops::Mode mode, ops::BatchNormStats<T>* stats) {
    auto r = std::make_shared<ops::BatchNormResult<T>>(
        ops::batchnorm2d(value(x), value(gamma), value(beta), eps, mode, stats));
    Tensor<T> y = std::move(r->y);
    y.set_dtype(DType::FP32);
    return push(OpKind::batchnorm2d, std::move(y), {x, gamma, beta}, [this, x, gamma, beta, r, mode](std::size_t self) {
      auto g = ops::batchnorm2d_backward(*r, value(gamma), grad_of(self), mode);
      accumulate(x, std::move(g.dx));
      accumulate(gamma, std::move(g.dgamma));
      accumulate(beta, std::move(g.dbeta));
    });
  }

  Var relu(Var x) {
    return push(OpKind::relu, rounded(ops::relu(value(x))), {x}, [this, x](std::size_t self) {
      accumulate(x, rounded(ops::relu_backward(value(x), grad_of(self))));
    });
  }

  Var sigmoid(Var x) {
    return push(OpKind::sigmoid, rounded(ops::sigmoid(value(x))), {x}, [this, x](std::size_t self) {
      accumulate(x, rounded(ops::sigmoid_backward(value(Var{self}), grad_of(self))));
    });
  }

  Var add(Var a, Var b) {
    return push(OpKind::add, rounded(ops::add(value(a), value(b))), {a, b}, [this, a, b](std::size_t self) {
      accumulate(a, grad_of(self));
      accumulate(b, grad_of(self));
    });
  }

  /// Elementwise product; `b` may be a (B,1,H,W) map broadcast over channels.
  Var mul(Var a, Var b) {
    return push(OpKind::mul, rounded(ops::mul(value(a), value(b))), {a, b}, [this, a, b](std::size_t self) {
      auto [da, db] = ops::mul_backward(value(a), value(b), grad_of(self));
      accumulate(a, rounded(std::move(da)));
      accumulate(b, rounded(std::move(db)));
    });
  }

  Var scale(Var x, T s) {
    return push(OpKind::scale, rounded(ops::scale(value(x), s)), {x}, [this, x, s](std::size_t self) {
      accumulate(x, rounded(ops::scale(grad_of(self), s)));
    });
  }

  Var concat(Var a, Var b) {
    const std::int64_t first = value(a).shape().c();
    return push(OpKind::concat, rounded(ops::concat_channels(value(a), value(b))), {a, b},
                [this, a, b, first](std::size_t self) {
                  auto [da, db] = ops::split_channels(grad_of(self), first);
                  accumulate(a, std::move(da));
                  accumulate(b, std::move(db));
                });
  }

  /// Scalar mean-squared error against a constant target.
  Var mse_loss(Var pred, const Tensor<T>& target) {
    const double loss = ops::mse_loss(value(pred), target);
    auto tgt = std::make_shared<Tensor<T>>(target);
    Var v = push(OpKind::mse_loss, Tensor<T>(Shape{1}, {static_cast<T>(loss)}), {pred},
                 [this, pred, tgt](std::size_t self) {
                   const double upstream = static_cast<double>(grad_of(self)[0]);
                   accumulate(pred, rounded(ops::mse_loss_backward(value(pred), *tgt, upstream)));
                 });
    nodes_[v.id].scalar = loss;
    return v;
  }

  /// Seeds d(loss)/d(loss) with `loss_scale`, propagates in reverse tape
  /// order and adds the unscaled parameter gradients into Parameter::grad.
  BackwardResult backward(Var loss, double loss_scale = 1.0) {
    if (value(loss).size() != 1) throw GraphError("backward: loss must be a scalar");
    if (!(loss_scale > 0)) throw ParameterError("backward: loss scale must be positive");
    for (auto& n : nodes_) n.grad = Tensor<T>();
    node(loss).grad = Tensor<T>(Shape{1}, {static_cast<T>(loss_scale)});
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.backward && !n.grad.empty()) {
        n.backward(i);
        if (n.kind != OpKind::mse_loss) n.grad = Tensor<T>();  // intermediate grads are not retained
      }
    }
    BackwardResult result;
    for (const auto& [id, p] : params_) {
      const Tensor<T>& g = nodes_[id].grad;
      if (g.empty()) continue;
      if (!g.all_finite()) {
        result.overflow = true;
        continue;
      }
      for (std::size_t k = 0; k < g.size(); ++k) p->grad[k] += static_cast<T>(static_cast<double>(g[k]) / loss_scale);
    }
    return result;
  }

 private:
  struct Node {
    OpKind kind;
    Tensor<T> value;
    Tensor<T> grad;
    std::vector<Var> inputs;
    std::function<void(std::size_t)> backward;
    double scalar = 0.0;
  };

  Node& node(Var v) {
    if (v.id >= nodes_.size()) throw GraphError("tape: invalid variable");
    return nodes_[v.id];
  }
  const Node& node(Var v) const {
    if (v.id >= nodes_.size()) throw GraphError("tape: invalid variable");
    return nodes_[v.id];
  }
  const Tensor<T>& grad_of(std::size_t id) const { return nodes_[id].grad; }

  Tensor<T> rounded(Tensor<T> t) const {
    if (half_) return to_half(std::move(t));
    return t;
  }

  Var push(OpKind kind, Tensor<T> value, std::vector<Var> inputs, std::function<void(std::size_t)> bw) {
    nodes_.push_back(Node{kind, std::move(value), Tensor<T>(), std::move(inputs), std::move(bw)});
    return Var{nodes_.size() - 1};
  }

  void accumulate(Var v, Tensor<T> g) {
    Tensor<T>& dst = nodes_[v.id].grad;
    if (dst.empty()) {
      dst = std::move(g);
      return;
    }
    if (!(dst.shape() == g.shape())) throw GraphError("tape: gradient shape mismatch");
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
  }

  bool half_;
  std::vector<Node> nodes_;
  std::vector<std::pair<std::size_t, Parameter<T>*>> params_;
};

}  // namespace sparsect
