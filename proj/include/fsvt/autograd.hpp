#pragma once

#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "fsvt/tensor.hpp"

namespace fsvt {

// A trainable tensor with its accumulated gradient.
template <class T>
struct Parameter {
  Tensor<T> value;
  Tensor<T> grad;

  Parameter() = default;
  explicit Parameter(Tensor<T> v) : value(std::move(v)), grad(value.shape()) {}

  void zero_grad() {
    if (!(grad.shape() == value.shape())) grad = Tensor<T>(value.shape());
    grad.fill(T(0));
  }
};

template <class T>
class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
template <class T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, int id) : tape_(tape), id_(id) {}

  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  int id() const { return id_; }
  Tape<T>* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }
  bool requires_grad() const;

 private:
  Tape<T>* tape_ = nullptr;
  int id_ = -1;
};

// Reverse-mode tape. Nodes are appended in evaluation order, so a reverse sweep
// visits every node after all of its consumers.
template <class T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Tensor<T>& out_grad)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var<T> constant(Tensor<T> v) { return push(std::move(v), false, nullptr); }

  // Leaf whose gradient can be read back with grad().
  Var<T> leaf(Tensor<T> v) { return push(std::move(v), grad_enabled_, nullptr); }

  // Leaf bound to a parameter; backward() accumulates into p.grad.
  Var<T> param(Parameter<T>& p) {
    if (!grad_enabled_) return push(p.value, false, nullptr);
    Parameter<T>* target = &p;
    return push(p.value, true, [target](Tape&, const Tensor<T>& g) {
      if (!(target->grad.shape() == target->value.shape())) target->grad = Tensor<T>(target->value.shape());
      target->grad += g;
    });
  }

  // Frozen parameter: value participates, gradient is dropped.
  Var<T> frozen(const Parameter<T>& p) { return push(p.value, false, nullptr); }

  Var<T> push(Tensor<T> value, bool requires_grad, Backward fn) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad && grad_enabled_;
    if (n.requires_grad) n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var<T>(this, static_cast<int>(nodes_.size()) - 1);
  }

  const Tensor<T>& value(int id) const { return nodes_[id].value; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }

  // Adds g into the gradient buffer of node id (no-op for constants).
  void accumulate(int id, const Tensor<T>& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.empty()) {
      n.grad = g;
      return;
    }
    n.grad += g;
  }

  // Mutable gradient buffer for node id, allocated on first use.
  Tensor<T>& grad_buffer(int id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad = Tensor<T>(n.value.shape());
    return n.grad;
  }

  // Gradient of the last backward() target w.r.t. node id; zeros if unreached.
  Tensor<T> grad(Var<T> v) const {
    const Node& n = nodes_[v.id()];
    if (n.grad.empty()) return Tensor<T>(n.value.shape());
    return n.grad;
  }

  void backward(Var<T> root, T seed = T(1)) {
    require(root.value().size() == 1, "shape", "backward() needs a scalar root");
    backward(root, Tensor<T>(root.shape(), seed));
  }

  // Vector-Jacobian product: propagates `seed` (shaped like root) backwards.
  void backward(Var<T> root, const Tensor<T>& seed) {
    require_same_shape(root.value(), seed, "backward seed");
    if (!nodes_[root.id()].requires_grad) return;
    accumulate(root.id(), seed);
    for (int id = root.id(); id >= 0; --id) {
      Node& n = nodes_[id];
      if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
      // Keep the gradient alive across the call; the closure may grow nodes_.
      Tensor<T> out_grad = std::move(n.grad);
      n.grad = Tensor<T>();
      nodes_[id].backward(*this, out_grad);
      nodes_[id].grad = std::move(out_grad);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    Backward backward;
    bool requires_grad = false;
  };

  std::deque<Node> nodes_;  // deque: node references survive later pushes
  bool grad_enabled_;
};

template <class T>
const Tensor<T>& Var<T>::value() const {
  return tape_->value(id_);
}

template <class T>
bool Var<T>::requires_grad() const {
  return tape_->requires_grad(id_);
}

// Puts parameters on a tape. Trainable binding routes gradients into
// Parameter::grad; frozen binding treats values as constants.
template <class T>
class Binder {
 public:
  enum class Mode { trainable, frozen };
  using Hook = std::function<Var<T>(Tape<T>&, Parameter<T>&)>;

  Binder(Tape<T>& tape, Mode mode) : tape_(&tape), mode_(mode) {}
  Binder(Tape<T>& tape, Hook hook) : tape_(&tape), mode_(Mode::trainable), hook_(std::move(hook)) {}

  static Binder trainable(Tape<T>& tape) { return Binder(tape, Mode::trainable); }
  static Binder frozen(Tape<T>& tape) { return Binder(tape, Mode::frozen); }

  Var<T> operator()(Parameter<T>& p) const {
    if (hook_) return hook_(*tape_, p);
    return mode_ == Mode::trainable ? tape_->param(p) : tape_->frozen(p);
  }

  Tape<T>& tape() const { return *tape_; }

 private:
  Tape<T>* tape_;
  Mode mode_;
  Hook hook_;
};

// Helper for ops: true if any input needs a gradient.
template <class T, class... Vs>
bool any_requires_grad(const Vs&... vs) {
  return (vs.requires_grad() || ...);
}

}  // namespace fsvt
