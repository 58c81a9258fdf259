#pragma once

#include <cstddef>
#include <functional>
#include <unordered_map>
#include <vector>

#include "logsparse/autodiff/parameter.hpp"
#include "logsparse/autodiff/tensor.hpp"

namespace logsparse::ad {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the
/// tape is alive and not cleared.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Records primitive operations in execution order so adjoints can be
/// replayed in reverse. Nodes only ever reference earlier nodes.
class Tape {
 public:
  /// Accumulates the adjoint of node `self` into its inputs.
  using Backward = std::function<void(Tape& tape, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Leaf bound to `param`; repeated calls return the same node.
  Var parameter(Parameter& param);

  /// Appends an operation result. `inputs` decide whether the node needs an
  /// adjoint; `backward` is dropped when none of them does.
  Var record(Tensor value, std::initializer_list<Var> inputs, Backward backward);
  Var record(Tensor value, const std::vector<Var>& inputs, Backward backward);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }

  /// Adjoint of node `id`, allocated (zeroed) on first access.
  Tensor& grad(std::size_t id);
  /// Adjoint of `id` if it participates in differentiation, else nullptr.
  Tensor* grad_if_needed(std::size_t id) { return needs_grad(id) ? &grad(id) : nullptr; }

  /// Seeds d(loss)/d(loss) = 1 and runs every recorded adjoint in reverse.
  /// Throws ArgumentError unless `loss` is a single-element tensor.
  void propagate(Var loss);

  /// Calls fn(param, adjoint) for each parameter leaf reached by the last
  /// propagate().
  void for_each_parameter_gradient(
      const std::function<void(Parameter&, const Tensor&)>& fn) const;

  /// Adds parameter-leaf adjoints into Parameter::grad.
  void accumulate_parameter_gradients() const;

  std::size_t size() const noexcept { return nodes_.size(); }
  void clear();

 private:
  struct Node {
    Tensor value;
    Tensor adjoint;
    Backward backward;
    Parameter* param = nullptr;
    bool needs_grad = false;
  };

  Var push(Node node);

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> leaves_;
};

/// Reverse sweep from `loss` followed by accumulation into every reached
/// Parameter's gradient. Parameters not on the tape are left untouched,
/// so after ParameterStore::zero_grad() they read zero.
void backward(Tape& tape, Var loss);

}  // namespace logsparse::ad
