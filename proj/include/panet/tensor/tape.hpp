#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "panet/errors.hpp"
#include "panet/tensor/tensor.hpp"

namespace panet {

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  inline const Tensor& value() const;
  const Extents& shape() const { return value().shape(); }
  std::size_t dim(std::size_t axis) const { return value().dim(axis); }
  std::size_t numel() const { return value().numel(); }
  inline bool requires_grad() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Gradient destinations handed to an op's backward rule, one per input.
// An empty span means that input does not need a gradient.
using GradSlots = std::span<const std::span<double>>;
using BackwardFn = std::function<void(std::span<const double> grad_out, GradSlots inputs)>;

struct TapeNode {
  std::string op;
  Tensor value;
  std::vector<std::size_t> inputs;
  bool requires_grad = false;
  bool leaf = false;
  BackwardFn backward;
};

/// Gradients of a scalar with respect to every requires_grad leaf.
class Gradients {
 public:
  const Tensor& operator[](const Var& v) const { return of(v.id()); }
  const Tensor& of(std::size_t id) const {
    if (id >= grads_.size() || grads_[id].empty())
      throw UsageError("no gradient recorded for node " + std::to_string(id));
    return grads_[id];
  }
  bool has(std::size_t id) const { return id < grads_.size() && !grads_[id].empty(); }

 private:
  friend class Tape;
  std::vector<Tensor> grads_;
};

/// Define-by-run record of a computation. One tape per forward pass; nodes
/// are appended in execution order, so the node list is already a
/// topological order and backward is a single reverse sweep.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var variable(Tensor value) { return leaf(std::move(value), true); }
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  // Appends an op result. `backward` may be null when no input needs a
  // gradient; it is dropped in that case anyway so saved activations are
  // released immediately.
  Var record(std::string op, Tensor value, std::span<const Var> inputs, BackwardFn backward) {
    if (!value.all_finite())
      throw NumericError(op + ": non-finite value in forward result " + shape_str(value.shape()));
    TapeNode node;
    node.op = std::move(op);
    node.value = std::move(value);
    node.inputs.reserve(inputs.size());
    for (const Var& in : inputs) {
      if (&in.tape() != this) throw UsageError(node.op + ": operand recorded on a different tape");
      node.inputs.push_back(in.id());
      node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
    }
    if (node.requires_grad) node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
  }

  Var record(std::string op, Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
    return record(std::move(op), std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                  std::move(backward));
  }

  const TapeNode& node(std::size_t id) const { return nodes_.at(id); }
  std::size_t size() const { return nodes_.size(); }

  /// Reverse-mode sweep from a scalar. Every requires_grad leaf receives a
  /// gradient of its own shape (zeros if the loss does not depend on it).
  Gradients backward(const Var& loss) {
    if (&loss.tape() != this) throw UsageError("backward: loss recorded on a different tape");
    if (loss.numel() != 1)
      throw UsageError("backward: loss must be a scalar, got shape " + shape_str(loss.shape()));

    std::vector<std::vector<double>> acc(nodes_.size());
    if (nodes_[loss.id()].requires_grad) acc[loss.id()].assign(1, 1.0);

    std::vector<std::span<double>> slots;
    for (std::size_t id = loss.id() + 1; id-- > 0;) {
      TapeNode& node = nodes_[id];
      if (node.leaf || acc[id].empty() || !node.backward) continue;
      slots.assign(node.inputs.size(), {});
      for (std::size_t k = 0; k < node.inputs.size(); ++k) {
        std::size_t in = node.inputs[k];
        if (!nodes_[in].requires_grad) continue;
        if (acc[in].empty()) acc[in].assign(nodes_[in].value.numel(), 0.0);
        slots[k] = std::span<double>(acc[in]);
      }
      node.backward(std::span<const double>(acc[id]), GradSlots(slots));
      std::vector<double>().swap(acc[id]);
    }

    Gradients out;
    out.grads_.resize(nodes_.size());
    for (std::size_t id = 0; id < nodes_.size(); ++id) {
      const TapeNode& node = nodes_[id];
      if (!node.leaf || !node.requires_grad) continue;
      if (acc[id].empty()) acc[id].assign(node.value.numel(), 0.0);
      out.grads_[id] = Tensor(node.value.shape(), std::move(acc[id]));
    }
    return out;
  }

 private:
  Var leaf(Tensor value, bool requires_grad) {
    if (value.empty()) throw UsageError("leaf: empty tensor");
    if (!value.all_finite()) throw NumericError("leaf: non-finite input " + shape_str(value.shape()));
    TapeNode node;
    node.op = requires_grad ? "variable" : "constant";
    node.value = std::move(value);
    node.requires_grad = requires_grad;
    node.leaf = true;
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
  }

  std::deque<TapeNode> nodes_;  // stable addresses: Var::value() references stay valid
};

inline const Tensor& Var::value() const { return tape_->node(id_).value; }
inline bool Var::requires_grad() const { return tape_->node(id_).requires_grad; }

}  // namespace panet
