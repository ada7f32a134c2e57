#pragma once

// Central finite-difference verification of reverse-mode gradients.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "scanscribe/autograd.hpp"

namespace scanscribe::nn {

struct GradCheckOptions {
  double step = 1e-5;
  // Entries sampled per tensor; 0 checks every entry.
  std::size_t max_entries_per_tensor = 0;
  std::uint64_t seed = 1;
  // Denominator floor for the relative error.
  double floor = 1e-6;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_entry;
  std::size_t entries_checked = 0;
};

// `loss_fn` must rebuild the same computation on a fresh tape each call.
// Error per entry is |analytic - numeric| / max(|analytic|, |numeric|, floor).
template <typename T>
GradCheckReport gradient_check(const std::function<Var<T>(Tape<T>&)>& loss_fn,
                               std::span<const std::pair<std::string, Var<T>>> checked,
                               GradCheckOptions opt = {}) {
  for (const auto& [_, v] : checked) v->zero_grad();
  {
    Tape<T> tape;
    auto loss = loss_fn(tape);
    tape.backward(loss);
  }
  auto evaluate = [&] {
    Tape<T> tape;
    return double(loss_fn(tape)->value[0]);
  };

  GradCheckReport report;
  std::mt19937_64 rng(opt.seed);
  for (const auto& [name, v] : checked) {
    const Tensor<T> analytic = v->grad.empty() ? Tensor<T>(v->value.shape()) : v->grad;
    std::vector<std::size_t> entries(v->value.size());
    for (std::size_t i = 0; i < entries.size(); ++i) entries[i] = i;
    if (opt.max_entries_per_tensor && entries.size() > opt.max_entries_per_tensor) {
      std::shuffle(entries.begin(), entries.end(), rng);
      entries.resize(opt.max_entries_per_tensor);
    }
    for (auto i : entries) {
      const T saved = v->value[i];
      v->value[i] = T(double(saved) + opt.step);
      const double up = evaluate();
      v->value[i] = T(double(saved) - opt.step);
      const double down = evaluate();
      v->value[i] = saved;
      const double numeric = (up - down) / (2.0 * opt.step);
      const double a = double(analytic[i]);
      const double rel =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), opt.floor});
      ++report.entries_checked;
      if (rel > report.max_relative_error) {
        report.max_relative_error = rel;
        report.worst_entry = name + "[" + std::to_string(i) + "]";
      }
    }
  }
  for (const auto& [_, v] : checked) v->zero_grad();
  return report;
}

}  // namespace scanscribe::nn
