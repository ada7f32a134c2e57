#pragma once

// Adam with bias-corrected moments.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "scanscribe/autograd.hpp"
#include "scanscribe/error.hpp"
#include "scanscribe/tensor.hpp"

namespace scanscribe::nn {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct OptimizerState {
  AdamConfig config;
  std::size_t step = 0;
  std::vector<Tensor<T>> first_moment;
  std::vector<Tensor<T>> second_moment;
};

// One update of every parameter from its accumulated gradient. Parameters
// with no gradient are treated as having a zero gradient.
template <typename T>
void adam_step(std::span<const Var<T>> params, OptimizerState<T>& state) {
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p->value.shape());
      state.second_moment.emplace_back(p->value.shape());
    }
  }
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
    throw data_error("adam_step: optimizer state does not match the parameter list");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    require_same_shape(p->value.shape(), state.first_moment[i].shape(), "adam_step");
    require_same_shape(p->value.shape(), state.second_moment[i].shape(), "adam_step");
    if (!p->grad.empty()) require_same_shape(p->value.shape(), p->grad.shape(), "adam_step");
  }

  ++state.step;
  const auto& c = state.config;
  const double correction1 = 1.0 - std::pow(c.beta1, double(state.step));
  const double correction2 = 1.0 - std::pow(c.beta2, double(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    const bool has_grad = !p.grad.empty();
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double g = has_grad ? double(p.grad[k]) : 0.0;
      const double mk = c.beta1 * m[k] + (1.0 - c.beta1) * g;
      const double vk = c.beta2 * v[k] + (1.0 - c.beta2) * g * g;
      m[k] = T(mk);
      v[k] = T(vk);
      const double update = c.learning_rate * (mk / correction1) /
                            (std::sqrt(vk / correction2) + c.eps);
      p.value[k] = T(double(p.value[k]) - update);
    }
  }
}

}  // namespace scanscribe::nn
