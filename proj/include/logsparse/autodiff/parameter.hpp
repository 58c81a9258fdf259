#pragma once

#include <cstddef>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "logsparse/autodiff/tensor.hpp"

namespace logsparse::ad {

/// A learnable tensor with its gradient and Adam moment estimates.
struct Parameter {
  Parameter(std::string name, Tensor initial, std::size_t index);

  std::string name;
  std::size_t index;  // position in the owning store
  Tensor value;
  Tensor grad;
  Tensor first_moment;
  Tensor second_moment;

  void zero_grad() { grad.fill(0.0); }
};

/// Owns parameters with stable addresses, in registration order.
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;
  ParameterStore(ParameterStore&&) noexcept = default;
  ParameterStore& operator=(ParameterStore&&) noexcept = default;

  /// Throws ArgumentError on a duplicate name.
  Parameter& add(std::string name, Tensor initial);

  std::size_t size() const noexcept { return params_.size(); }
  Parameter& operator[](std::size_t i) { return *params_[i]; }
  const Parameter& operator[](std::size_t i) const { return *params_[i]; }

  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;

  std::size_t scalar_count() const;
  void zero_grad();

  std::vector<Tensor> snapshot_values() const;
  void restore_values(const std::vector<Tensor>& values);

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

/// U(-bound, bound) initial values.
Tensor uniform_tensor(Shape shape, double bound, std::mt19937_64& rng);

}  // namespace logsparse::ad
