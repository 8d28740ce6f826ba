#pragma once

#include "hrg/kernels.hpp"
#include "hrg/tensor.hpp"

#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace hrg {

enum class OpKind {
  input,
  parameter,
  conv2d,
  upsample,
  batchnorm,
  relu,
  sigmoid,
  tanh,
  add,
  concat,
  slice,
  taps_as_pointwise,
  tap_sum,
  sum,
  mse,
  grasp_loss,
  scale,
};

const char* op_name(OpKind kind);

/// Append-only tape of tensor operations with reverse-mode differentiation.
///
/// Nodes are created in evaluation order, so every input id is smaller than
/// the id of its consumer. A node requires a gradient when it is a parameter
/// or when any of its inputs does. Gradients accumulate across fan-out.
template <typename Scalar>
class Graph {
 public:
  using Id = std::size_t;
  using T = Tensor<Scalar>;
  using Gradients = std::map<std::string, T>;

  Id input(T value, std::string name = {}) { return leaf(OpKind::input, std::move(value), std::move(name), false); }
  Id parameter(T value, std::string name) {
    return leaf(OpKind::parameter, std::move(value), std::move(name), true);
  }

  Id conv2d(Id x, Id weight, Id bias, Index stride, Index padding) {
    T out = kernels::conv2d(value(x), value(weight), value(bias), stride, padding);
    return add_node(OpKind::conv2d, {x, weight, bias}, std::move(out), [stride, padding](Graph& g, Id self) {
      const auto& in = g.nodes_[self].inputs;
      kernels::conv2d_backward(g.value(in[0]), g.value(in[1]), g.value(in[2]), stride, padding, g.grad_of(self),
                               g.grad_target(in[0]), g.grad_target(in[1]), g.grad_target(in[2]));
    });
  }

  Id upsample(Id x, Index scale) {
    T out = kernels::bilinear_upsample(value(x), scale);
    return add_node(OpKind::upsample, {x}, std::move(out), [scale](Graph& g, Id self) {
      if (T* gi = g.grad_target(g.nodes_[self].inputs[0])) {
        kernels::bilinear_upsample_backward(g.grad_of(self), scale, *gi);
      }
    });
  }

  /// Batch normalization. In train mode the running statistics are updated in
  /// place; `running` must outlive the forward call only.
  Id batchnorm(Id x, Id gamma, Id beta, kernels::RunningStats<Scalar>& running, Scalar momentum, Scalar epsilon,
               kernels::NormMode mode) {
    auto cache = std::make_shared<kernels::NormCache<Scalar>>();
    T out = kernels::batchnorm2d(value(x), value(gamma), value(beta), running, momentum, epsilon, mode, cache.get());
    return add_node(OpKind::batchnorm, {x, gamma, beta}, std::move(out), [cache, mode](Graph& g, Id self) {
      const auto& in = g.nodes_[self].inputs;
      kernels::batchnorm2d_backward(*cache, g.value(in[1]), mode, g.grad_of(self), g.grad_target(in[0]),
                                    g.grad_target(in[1]), g.grad_target(in[2]));
    });
  }

  Id relu(Id x) {
    T out = value(x);
    out.values() = out.values().cwiseMax(Scalar(0));
    return add_node(OpKind::relu, {x}, std::move(out), [](Graph& g, Id self) {
      if (T* gi = g.grad_target(g.nodes_[self].inputs[0])) {
        const auto& y = g.value(self).values();
        gi->values().array() += (y.array() > Scalar(0)).select(g.grad_of(self).values().array(), Scalar(0));
      }
    });
  }

  Id sigmoid(Id x) {
    T out = value(x);
    out.values() = (Scalar(1) + (-out.values().array()).exp()).inverse().matrix();
    return add_node(OpKind::sigmoid, {x}, std::move(out), [](Graph& g, Id self) {
      if (T* gi = g.grad_target(g.nodes_[self].inputs[0])) {
        const auto y = g.value(self).values().array();
        gi->values().array() += g.grad_of(self).values().array() * y * (Scalar(1) - y);
      }
    });
  }

  Id tanh(Id x) {
    T out = value(x);
    out.values() = out.values().array().tanh().matrix();
    return add_node(OpKind::tanh, {x}, std::move(out), [](Graph& g, Id self) {
      if (T* gi = g.grad_target(g.nodes_[self].inputs[0])) {
        const auto y = g.value(self).values().array();
        gi->values().array() += g.grad_of(self).values().array() * (Scalar(1) - y.square());
      }
    });
  }

  Id add(Id a, Id b) {
    if (value(a).shape() != value(b).shape()) {
      throw std::invalid_argument("add: shape mismatch " + value(a).shape().str() + " vs " + value(b).shape().str());
    }
    T out = value(a);
    out.values() += value(b).values();
    return add_node(OpKind::add, {a, b}, std::move(out), [](Graph& g, Id self) {
      for (Id in : g.nodes_[self].inputs) {
        if (T* gi = g.grad_target(in)) gi->values() += g.grad_of(self).values();
      }
    });
  }

  Id scale(Id x, Scalar factor) {
    T out = value(x);
    out.values() *= factor;
    return add_node(OpKind::scale, {x}, std::move(out), [factor](Graph& g, Id self) {
      if (T* gi = g.grad_target(g.nodes_[self].inputs[0])) gi->values() += factor * g.grad_of(self).values();
    });
  }

  Id concat(const std::vector<Id>& xs) {
    std::vector<const T*> parts;
    for (Id x : xs) parts.push_back(&value(x));
    T out = kernels::concat_channels(parts);
    return add_node(OpKind::concat, xs, std::move(out), [](Graph& g, Id self) {
      const T& go = g.grad_of(self);
      Index c0 = 0;
      for (Id in : g.nodes_[self].inputs) {
        const Index c = g.value(in).shape().c;
        if (T* gi = g.grad_target(in)) {
          for (Index n = 0; n < go.shape().n; ++n) gi->matrix(n) += go.matrix(n).middleRows(c0, c);
        }
        c0 += c;
      }
    });
  }

  Id slice_channels(Id x, Index begin, Index count) {
    const Shape s = value(x).shape();
    if (begin < 0 || count < 1 || begin + count > s.c) {
      throw std::invalid_argument("slice_channels: range outside " + s.str());
    }
    T out(Shape{s.n, count, s.h, s.w});
    for (Index n = 0; n < s.n; ++n) out.matrix(n) = value(x).matrix(n).middleRows(begin, count);
    return add_node(OpKind::slice, {x}, std::move(out), [begin, count](Graph& g, Id self) {
      if (T* gi = g.grad_target(g.nodes_[self].inputs[0])) {
        const T& go = g.grad_of(self);
        for (Index n = 0; n < go.shape().n; ++n) gi->matrix(n).middleRows(begin, count) += go.matrix(n);
      }
    });
  }

  Id taps_as_pointwise(Id weight) {
    T out = kernels::taps_as_pointwise(value(weight));
    return add_node(OpKind::taps_as_pointwise, {weight}, std::move(out), [](Graph& g, Id self) {
      if (T* gi = g.grad_target(g.nodes_[self].inputs[0])) kernels::taps_as_pointwise_backward(g.grad_of(self), *gi);
    });
  }

  Id tap_sum(Id x, Id bias, Index kernel) {
    T out = kernels::tap_sum(value(x), value(bias), kernel);
    return add_node(OpKind::tap_sum, {x, bias}, std::move(out), [kernel](Graph& g, Id self) {
      const auto& in = g.nodes_[self].inputs;
      kernels::tap_sum_backward(g.grad_of(self), kernel, g.grad_target(in[0]), g.grad_target(in[1]));
    });
  }

  /// Sum of all elements as a (1,1,1,1) tensor.
  Id sum(Id x) {
    T out(Shape{1, 1, 1, 1}, value(x).values().sum());
    return add_node(OpKind::sum, {x}, std::move(out), [](Graph& g, Id self) {
      if (T* gi = g.grad_target(g.nodes_[self].inputs[0])) gi->values().array() += g.grad_of(self)[0];
    });
  }

  /// Mean squared difference over all elements.
  Id mse(Id a, Id b) { return squared_error(OpKind::mse, a, b, Scalar(1) / Scalar(value(a).size())); }

  /// (1 / 2N) * sum_i mean_over_elements((pred_i - target_i)^2).
  Id grasp_loss(Id pred, Id target) {
    const Shape s = value(pred).shape();
    const Scalar per_sample = Scalar(s.c * s.h * s.w);
    return squared_error(OpKind::grasp_loss, pred, target, Scalar(1) / (Scalar(2) * Scalar(s.n) * per_sample));
  }

  const T& value(Id id) const { return node(id).value; }
  OpKind kind(Id id) const { return node(id).kind; }
  const std::string& name(Id id) const { return node(id).name; }
  const std::vector<Id>& inputs(Id id) const { return node(id).inputs; }
  bool requires_grad(Id id) const { return node(id).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Gradient of a node after backward(); leaves keep theirs, intermediates are
  /// released once propagated.
  const T& grad(Id id) const { return node(id).grad; }

  /// Reverse-mode accumulation from a scalar loss. Returns the gradient of every
  /// named parameter on the tape; parameters that do not reach the loss get
  /// zero tensors.
  Gradients backward(Id loss) {
    validate();
    if (loss >= nodes_.size()) throw std::out_of_range("backward: unknown loss node");
    if (value(loss).size() != 1) {
      throw std::invalid_argument("backward: loss must be scalar, got shape " + value(loss).shape().str());
    }
    for (auto& n : nodes_) n.grad = T();
    if (nodes_[loss].requires_grad) {
      nodes_[loss].grad = T(value(loss).shape(), Scalar(1));
      for (Id id = loss + 1; id-- > 0;) {
        Node& n = nodes_[id];
        if (!n.requires_grad || n.grad.empty() || !n.backprop) continue;
        n.backprop(*this, id);
        n.grad = T();
      }
    }
    Gradients out;
    for (auto& n : nodes_) {
      if (n.kind != OpKind::parameter) continue;
      out[n.name] = n.grad.empty() ? T(n.value.shape()) : n.grad;
    }
    return out;
  }

  /// Checks the tape is a DAG in topological order.
  void validate() const {
    for (Id id = 0; id < nodes_.size(); ++id) {
      for (Id in : nodes_[id].inputs) {
        if (in >= id) {
          throw std::logic_error(std::string("graph: cycle or forward reference at node ") + std::to_string(id) +
                                 " (" + op_name(nodes_[id].kind) + ")");
        }
      }
    }
  }

  /// Test hook: rewires an input edge without re-evaluating. Used to exercise
  /// cycle detection.
  void rewire_for_test(Id node_id, std::size_t slot, Id new_input) { nodes_.at(node_id).inputs.at(slot) = new_input; }

 private:
  using Backprop = std::function<void(Graph&, Id)>;

  struct Node {
    OpKind kind;
    std::vector<Id> inputs;
    T value;
    T grad;
    bool requires_grad = false;
    std::string name;
    Backprop backprop;
  };

  const Node& node(Id id) const {
    if (id >= nodes_.size()) throw std::out_of_range("graph: unknown node " + std::to_string(id));
    return nodes_[id];
  }

  Id leaf(OpKind kind, T value, std::string name, bool requires_grad) {
    if (!value.all_finite()) throw std::invalid_argument("graph: non-finite values in leaf '" + name + "'");
    nodes_.push_back(Node{kind, {}, std::move(value), T(), requires_grad, std::move(name), nullptr});
    return nodes_.size() - 1;
  }

  Id add_node(OpKind kind, std::vector<Id> inputs, T value, Backprop backprop) {
    bool needs = false;
    for (Id in : inputs) needs = needs || node(in).requires_grad;
    nodes_.push_back(Node{kind, std::move(inputs), std::move(value), T(), needs, {}, needs ? std::move(backprop) : nullptr});
    return nodes_.size() - 1;
  }

  Id squared_error(OpKind kind, Id a, Id b, Scalar factor) {
    if (value(a).shape() != value(b).shape()) {
      throw std::invalid_argument(std::string(op_name(kind)) + ": shape mismatch " + value(a).shape().str() + " vs " +
                                  value(b).shape().str());
    }
    const auto diff = (value(a).values() - value(b).values()).eval();
    T out(Shape{1, 1, 1, 1}, factor * diff.squaredNorm());
    return add_node(kind, {a, b}, std::move(out), [factor](Graph& g, Id self) {
      const auto& in = g.nodes_[self].inputs;
      const Scalar upstream = g.grad_of(self)[0] * Scalar(2) * factor;
      const auto d = (g.value(in[0]).values() - g.value(in[1]).values()).eval();
      if (T* ga = g.grad_target(in[0])) ga->values() += upstream * d;
      if (T* gb = g.grad_target(in[1])) gb->values() -= upstream * d;
    });
  }

  const T& grad_of(Id id) const { return nodes_[id].grad; }

  T* grad_target(Id id) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return nullptr;
    if (n.grad.empty()) n.grad = T(n.value.shape());
    return &n.grad;
  }

  std::vector<Node> nodes_;
};

inline const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::input: return "input";
    case OpKind::parameter: return "parameter";
    case OpKind::conv2d: return "conv2d";
    case OpKind::upsample: return "upsample";
    case OpKind::batchnorm: return "batchnorm";
    case OpKind::relu: return "relu";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::tanh: return "tanh";
    case OpKind::add: return "add";
    case OpKind::concat: return "concat";
    case OpKind::slice: return "slice";
    case OpKind::taps_as_pointwise: return "taps_as_pointwise";
    case OpKind::tap_sum: return "tap_sum";
    case OpKind::sum: return "sum";
    case OpKind::mse: return "mse";
    case OpKind::grasp_loss: return "grasp_loss";
    case OpKind::scale: return "scale";
  }
  return "unknown";
}

}  // namespace hrg
