#include "logsparse/autodiff/tape.hpp"

#include "logsparse/common/error.hpp"

namespace logsparse::ad {

const Tensor& Var::value() const { return tape_->value(id_); }

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  Node node;
  node.value = std::move(value);
  return push(std::move(node));
}

Var Tape::parameter(Parameter& param) {
  if (auto it = leaves_.find(&param); it != leaves_.end()) return Var(this, it->second);
  Node node;
  node.value = param.value;
  node.param = &param;
  node.needs_grad = true;
  Var v = push(std::move(node));
  leaves_.emplace(&param, v.id());
  return v;
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, Backward backward) {
  Node node;
  node.value = std::move(value);
  for (const Var& in : inputs) {
    if (in.tape_ != this) throw ArgumentError("operation mixes tapes");
    node.needs_grad = node.needs_grad || nodes_[in.id_].needs_grad;
  }
  if (node.needs_grad) node.backward = std::move(backward);
  return push(std::move(node));
}

Var Tape::record(Tensor value, const std::vector<Var>& inputs, Backward backward) {
  Node node;
  node.value = std::move(value);
  for (const Var& in : inputs) {
    if (in.tape_ != this) throw ArgumentError("operation mixes tapes");
    node.needs_grad = node.needs_grad || nodes_[in.id_].needs_grad;
  }
  if (node.needs_grad) node.backward = std::move(backward);
  return push(std::move(node));
}

Tensor& Tape::grad(std::size_t id) {
  Node& node = nodes_[id];
  if (node.adjoint.size() != node.value.size()) node.adjoint = Tensor(node.value.shape());
  return node.adjoint;
}

void Tape::propagate(Var loss) {
  if (loss.tape_ != this) throw ArgumentError("loss belongs to another tape");
  if (nodes_[loss.id_].value.size() != 1) {
    throw ArgumentError("backward needs a scalar loss, got shape " +
                        shape_string(nodes_[loss.id_].value.shape()));
  }
  for (auto& node : nodes_) node.adjoint = Tensor();
  grad(loss.id_)[0] = 1.0;
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.backward || node.adjoint.empty()) continue;
    node.backward(*this, i);
  }
}

void Tape::for_each_parameter_gradient(
    const std::function<void(Parameter&, const Tensor&)>& fn) const {
  for (const auto& [param, id] : leaves_) {
    const Node& node = nodes_[id];
    if (!node.adjoint.empty()) fn(*node.param, node.adjoint);
  }
}

void Tape::accumulate_parameter_gradients() const {
  for_each_parameter_gradient([](Parameter& p, const Tensor& adjoint) {
    as_matrix(p.grad) += as_matrix(adjoint);
  });
}

void Tape::clear() {
  nodes_.clear();
  leaves_.clear();
}

void backward(Tape& tape, Var loss) {
  tape.propagate(loss);
  tape.accumulate_parameter_gradients();
}

}  // namespace logsparse::ad
