#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <string_view>
#include <utility>
#include <vector>

#include "meta_rdre/error.hpp"
#include "meta_rdre/numgrad/tensor.hpp"

namespace meta_rdre::numgrad {

class Tape;

// Handle to a value recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;
};

// Reverse-mode tape. Operations append nodes in execution order; backward()
// walks them in exact reverse order, calling each node's adjoint with the
// accumulated output gradient. Nodes whose inputs carry no gradient store no
// adjoint, so a tape with only constants doubles as a forward evaluator.
class Tape {
 public:
  // Receives the gradient of the node's output.
  using Adjoint = std::function<void(Tape&, const Tensor&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value) { return push(std::move(value), nullptr, false, {}); }

  // Borrows `value`; it must outlive the tape.
  Var constant_ref(const Tensor& value) { return push(Tensor{}, &value, false, {}); }

  // Borrowed leaf whose gradient is collected by backward().
  Var parameter(const Tensor& value) { return push(Tensor{}, &value, true, {}); }

  // Records the output of an operation. `adjoint` is kept only when some
  // input requires a gradient. Non-finite outputs are rejected here.
  Var record(std::string_view op, Tensor value, std::initializer_list<Var> inputs, Adjoint adjoint) {
    if (!value.all_finite()) {
      throw NumericalError(std::string(op) + " produced a non-finite value");
    }
    bool needs_grad = false;
    for (const Var& v : inputs) needs_grad = needs_grad || requires_grad(v);
    return push(std::move(value), nullptr, needs_grad, needs_grad ? std::move(adjoint) : Adjoint{});
  }

  [[nodiscard]] const Tensor& value(Var v) const {
    const Node& n = nodes_.at(v.id);
    return n.borrowed ? *n.borrowed : n.owned;
  }

  [[nodiscard]] bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

  // Gradient accumulated for `v` by the last backward(); zeros of the
  // value's shape if `v` was not reached.
  [[nodiscard]] const Tensor& grad(Var v) {
    Node& n = nodes_.at(v.id);
    if (n.grad.empty()) n.grad = Tensor(value(v).shape());
    return n.grad;
  }

  // Mutable gradient slot used by adjoints; allocated on first touch.
  Tensor& grad_slot(Var v) {
    Node& n = nodes_.at(v.id);
    if (n.grad.empty()) n.grad = Tensor(value(v).shape());
    return n.grad;
  }

  void backward(Var loss) {
    if (value(loss).size() != 1) {
      throw ShapeError("backward() requires a scalar loss, got " + shape_string(value(loss).shape()));
    }
    for (Node& n : nodes_) n.grad = Tensor{};
    grad_slot(loss)[0] = 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.adjoint || n.grad.empty()) continue;
      // Adjoints only touch gradients of earlier nodes; nodes_ never grows here.
      n.adjoint(*this, n.grad);
    }
  }

  [[nodiscard]] std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor owned;
    const Tensor* borrowed = nullptr;
    bool requires_grad = false;
    Adjoint adjoint;
    Tensor grad;
  };

  Var push(Tensor owned, const Tensor* borrowed, bool requires_grad, Adjoint adjoint) {
    nodes_.push_back(Node{std::move(owned), borrowed, requires_grad, std::move(adjoint), Tensor{}});
    return Var{this, nodes_.size() - 1};
  }

  std::vector<Node> nodes_;
};

}  // namespace meta_rdre::numgrad
