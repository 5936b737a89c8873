#pragma once

// Reverse-mode automatic differentiation over a linear tape.
//
// Every differentiable op appends one node holding its output value, the
// indices of its parents and a closure that turns the node's gradient into
// parent gradients. Nodes are appended in execution order, so the tape is
// topologically sorted by construction and backward is a single reverse sweep.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sfnet/tensor.hpp"

namespace sfnet {

/// A named model tensor. Non-trainable parameters are buffers (batch-norm
/// running statistics) that are checkpointed but never optimized.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool trainable = true;
  bool decay = true;  // subject to decoupled weight decay

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v, bool train = true, bool wd = true)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()), trainable(train),
        decay(wd) {}

  void zero_grad() { grad.fill(T{0}); }
};

template <typename T>
class Tape;

/// Handle to a node on a tape.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t index) : tape_(tape), index_(index) {}

  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  std::size_t index() const { return index_; }
  Tape<T>& tape() const { return *tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t index_ = 0;
};

template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor<T>& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Disables closure recording; used for evaluation passes.
  void set_grad_enabled(bool on) { grad_enabled_ = on; }
  bool grad_enabled() const { return grad_enabled_; }

  /// Piecewise ops (relu, max pool) fold the branch they took into a running
  /// hash while tracking is on. Two evaluations with equal signatures ran
  /// through the same linear pieces.
  void set_track_branches(bool on) { track_branches_ = on; }
  bool track_branches() const { return track_branches_; }
  void mix_branch(std::uint64_t h) {
    branch_sig_ ^= h + 0x9e3779b97f4a7c15ULL + (branch_sig_ << 6) + (branch_sig_ >> 2);
  }
  std::uint64_t branch_signature() const { return branch_sig_; }

  Var<T> constant(Tensor<T> value) { return push_node("constant", std::move(value), {}, false); }

  /// Leaf bound to a parameter; its gradient is added into param.grad by backward().
  Var<T> parameter(Parameter<T>& param) {
    const bool rg = grad_enabled_ && param.trainable;
    Var<T> v = push_node("param:" + param.name, param.value, {}, rg);
    nodes_[v.index()].param = &param;
    return v;
  }

  /// Appends an op output. The closure is dropped when no parent needs a gradient.
  Var<T> push(std::string op, Tensor<T> value, std::vector<Var<T>> parents, BackwardFn fn) {
    bool rg = false;
    std::vector<std::size_t> idx;
    idx.reserve(parents.size());
    for (const Var<T>& p : parents) {
      if (&p.tape() != this) throw std::logic_error("op mixes vars from different tapes");
      idx.push_back(p.index());
      rg = rg || nodes_[p.index()].requires_grad;
    }
    rg = rg && grad_enabled_;
    Var<T> v = push_node(std::move(op), std::move(value), std::move(idx), rg);
    if (rg) nodes_[v.index()].backward = std::move(fn);
    return v;
  }

  const Tensor<T>& value(std::size_t i) const { return nodes_.at(i).value; }
  bool requires_grad(std::size_t i) const { return nodes_.at(i).requires_grad; }
  const std::string& op(std::size_t i) const { return nodes_.at(i).op; }
  std::size_t size() const { return nodes_.size(); }
  const std::vector<std::size_t>& parents(std::size_t i) const { return nodes_.at(i).parents; }

  /// Gradient buffer of node i, allocated on first use; null when the node
  /// does not require a gradient.
  Tensor<T>* grad_buffer(std::size_t i) {
    Node& n = nodes_.at(i);
    if (!n.requires_grad) return nullptr;
    if (n.grad.empty()) n.grad = Tensor<T>(n.value.shape());
    return &n.grad;
  }
  Tensor<T>* grad_buffer(const Var<T>& v) { return grad_buffer(v.index()); }

  /// Gradient accumulated on a node after backward (empty if never reached).
  const Tensor<T>& grad(const Var<T>& v) const { return nodes_.at(v.index()).grad; }

  /// Reverse sweep from a scalar loss. Parameter gradients are accumulated
  /// into Parameter::grad, so callers zero them between steps.
  void backward(const Var<T>& loss) {
    const Tensor<T>& lv = value(loss.index());
    if (lv.numel() != 1) {
      throw std::invalid_argument("backward needs a scalar loss, got shape " +
                                  shape_str(lv.shape()));
    }
    if (!requires_grad(loss.index())) return;
    grad_buffer(loss.index())->fill(T{1});
    for (std::size_t i = loss.index() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.grad.empty()) continue;
      if (n.backward) n.backward(*this, n.grad);
      if (n.param) {
        Tensor<T>& pg = n.param->grad;
        for (std::size_t k = 0; k < pg.numel(); ++k) pg[k] += n.grad[k];
      }
    }
  }

 private:
  struct Node {
    std::string op;
    Tensor<T> value;
    Tensor<T> grad;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    Parameter<T>* param = nullptr;
    bool requires_grad = false;
  };

  Var<T> push_node(std::string op, Tensor<T> value, std::vector<std::size_t> parents, bool rg) {
    Node n;
    n.op = std::move(op);
    n.value = std::move(value);
    n.parents = std::move(parents);
    n.requires_grad = rg;
    nodes_.push_back(std::move(n));
    return Var<T>(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
  bool grad_enabled_ = true;
  bool track_branches_ = false;
  std::uint64_t branch_sig_ = 0;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return tape_->value(index_);
}

template <typename T>
bool Var<T>::requires_grad() const {
  return tape_->requires_grad(index_);
}

}  // namespace sfnet
