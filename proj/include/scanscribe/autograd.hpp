#pragma once

// Tape-based reverse-mode differentiation.
//
// Every operation appends a closure to the tape; backward() runs them in
// reverse order. Parameters are long-lived variables whose gradients
// accumulate across tapes until zero_grad().

#include <functional>
#include <memory>
#include <vector>

#include "scanscribe/error.hpp"
#include "scanscribe/tensor.hpp"

namespace scanscribe::nn {

template <typename T>
struct Variable {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  const void* producer = nullptr;

  bool has_grad() const noexcept { return !grad.empty() || value.empty(); }

  // Lazily allocated gradient buffer, zero-initialised.
  Tensor<T>& grad_buffer() {
    if (grad.size() != value.size() || grad.shape() != value.shape()) {
      grad = Tensor<T>(value.shape());
    }
    return grad;
  }

  void zero_grad() { grad = Tensor<T>(); }
};

template <typename T>
using Var = std::shared_ptr<Variable<T>>;

template <typename T>
Var<T> parameter(Tensor<T> value) {
  auto v = std::make_shared<Variable<T>>();
  v->value = std::move(value);
  v->requires_grad = true;
  return v;
}

template <typename T>
Var<T> constant(Tensor<T> value) {
  auto v = std::make_shared<Variable<T>>();
  v->value = std::move(value);
  return v;
}

template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> output(Tensor<T> value, bool requires_grad) {
    auto v = std::make_shared<Variable<T>>();
    v->value = std::move(value);
    v->requires_grad = requires_grad;
    v->producer = this;
    return v;
  }

  void on_backward(std::function<void()> fn) { ops_.push_back(std::move(fn)); }

  std::size_t size() const noexcept { return ops_.size(); }

  // Seeds d(loss)/d(loss) = 1 and propagates to every reachable variable.
  void backward(const Var<T>& loss) {
    if (!loss || loss->producer != this || consumed_) {
      throw numeric_error("backward before forward: loss was not recorded on this tape");
    }
    if (loss->value.size() != 1) throw numeric_error("backward needs a scalar loss");
    consumed_ = true;
    if (!loss->requires_grad) return;
    loss->grad_buffer()[0] += T{1};
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
    ops_.clear();
  }

 private:
  std::vector<std::function<void()>> ops_;
  bool consumed_ = false;
};

template <typename T>
bool any_requires_grad(std::initializer_list<const Var<T>*> vars) {
  for (auto v : vars) {
    if (*v && (*v)->requires_grad) return true;
  }
  return false;
}

}  // namespace scanscribe::nn
