#include "logsparse/autodiff/parameter.hpp"

#include "logsparse/common/error.hpp"

namespace logsparse::ad {

Parameter::Parameter(std::string name_, Tensor initial, std::size_t index_)
    : name(std::move(name_)),
      index(index_),
      value(std::move(initial)),
      grad(value.shape()),
      first_moment(value.shape()),
      second_moment(value.shape()) {}

Parameter& ParameterStore::add(std::string name, Tensor initial) {
  if (find(name) != nullptr) throw ArgumentError("duplicate parameter name '" + name + "'");
  params_.push_back(std::make_unique<Parameter>(std::move(name), std::move(initial), params_.size()));
  return *params_.back();
}

Parameter* ParameterStore::find(const std::string& name) {
  for (auto& p : params_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

const Parameter* ParameterStore::find(const std::string& name) const {
  for (const auto& p : params_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

std::vector<Tensor> ParameterStore::snapshot_values() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p->value);
  return out;
}

void ParameterStore::restore_values(const std::vector<Tensor>& values) {
  if (values.size() != params_.size()) throw ShapeError("snapshot size mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!values[i].same_shape(params_[i]->value)) {
      throw ShapeError("snapshot shape mismatch for '" + params_[i]->name + "'");
    }
    params_[i]->value = values[i];
  }
}

Tensor uniform_tensor(Shape shape, double bound, std::mt19937_64& rng) {
  Tensor out(std::move(shape));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : out.values()) v = dist(rng);
  return out;
}

}  // namespace logsparse::ad
