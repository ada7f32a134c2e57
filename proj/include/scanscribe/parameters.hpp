#pragma once

#include <map>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "scanscribe/autograd.hpp"
#include "scanscribe/error.hpp"
#include "scanscribe/tensor.hpp"

namespace scanscribe::nn {

// Ordered float tensors keyed by name, the unit of persistence.
using TensorTable = std::vector<std::pair<std::string, Tensor<float>>>;

// Trainable parameters plus non-trainable buffers (batch-norm running
// statistics), in registration order.
template <typename T>
class ParameterSet {
 public:
  const Var<T>& add(const std::string& name, Tensor<T> init) {
    if (index_.count(name) || buffers_.count(name)) {
      throw usage_error("duplicate parameter name " + name);
    }
    index_[name] = params_.size();
    params_.emplace_back(name, parameter(std::move(init)));
    return params_.back().second;
  }

  Tensor<T>& add_buffer(const std::string& name, Tensor<T> init) {
    if (index_.count(name) || buffers_.count(name)) {
      throw usage_error("duplicate buffer name " + name);
    }
    buffer_order_.push_back(name);
    return buffers_[name] = std::move(init);
  }

  const Var<T>& param(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw usage_error("unknown parameter " + name);
    return params_[it->second].second;
  }

  Tensor<T>& buffer(const std::string& name) {
    auto it = buffers_.find(name);
    if (it == buffers_.end()) throw usage_error("unknown buffer " + name);
    return it->second;
  }

  const std::vector<std::pair<std::string, Var<T>>>& parameters() const { return params_; }

  std::vector<Var<T>> trainable() const {
    std::vector<Var<T>> out;
    for (const auto& [_, v] : params_) out.push_back(v);
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& [_, v] : params_) n += v->value.size();
    return n;
  }

  void zero_grad() {
    for (auto& [_, v] : params_) v->zero_grad();
  }

  TensorTable export_table() const {
    TensorTable out;
    for (const auto& [name, v] : params_) out.emplace_back(name, v->value.template cast<float>());
    for (const auto& name : buffer_order_) {
      out.emplace_back(name, buffers_.at(name).template cast<float>());
    }
    return out;
  }

  // Every registered tensor must be present with a matching shape.
  void import_table(const TensorTable& table) {
    std::unordered_map<std::string, const Tensor<float>*> by_name;
    for (const auto& [name, t] : table) by_name[name] = &t;
    auto fetch = [&](const std::string& name, const Shape& shape) -> const Tensor<float>& {
      auto it = by_name.find(name);
      if (it == by_name.end()) throw data_error("missing tensor: " + name);
      if (it->second->shape() != shape) {
        throw data_error("tensor " + name + " has shape " + shape_string(it->second->shape()) +
                         ", expected " + shape_string(shape));
      }
      return *it->second;
    };
    for (auto& [name, v] : params_) {
      v->value = fetch(name, v->value.shape()).template cast<T>();
      v->zero_grad();
    }
    for (const auto& name : buffer_order_) {
      auto& b = buffers_.at(name);
      b = fetch(name, b.shape()).template cast<T>();
    }
  }

 private:
  std::vector<std::pair<std::string, Var<T>>> params_;
  std::unordered_map<std::string, std::size_t> index_;
  std::map<std::string, Tensor<T>> buffers_;
  std::vector<std::string> buffer_order_;
};

}  // namespace scanscribe::nn
