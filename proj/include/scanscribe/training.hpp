#pragma once

// Minibatch training of one regressor instance and evaluation of an
// instance pair on a dataset split.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "scanscribe/data.hpp"
#include "scanscribe/models.hpp"
#include "scanscribe/optim.hpp"
#include "scanscribe/stats.hpp"

namespace scanscribe {

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t max_steps = 0;  // when non-zero, stop after this many updates
  std::size_t batch_size = 8;
  double learning_rate = 1e-3;
  // Cosine decay from learning_rate down to learning_rate * final_lr_fraction.
  double final_lr_fraction = 0.05;
  bool augment = true;
  std::vector<int> shifts_x;  // empty: reference sets rescaled to the image
  std::vector<int> shifts_y;
  std::uint64_t seed = 1;
};

struct EpochReport {
  std::size_t epoch = 0;
  std::size_t steps = 0;
  double train_loss = 0.0;  // mean over the epoch's steps
  double val_loss = 0.0;    // NaN when there is no validation split
};

struct TrainResult {
  ModelWeights weights;  // best-validation weights
  std::vector<double> loss_history;
  std::vector<EpochReport> epochs;
  std::size_t best_epoch = 0;
  std::size_t shift_attempts = 0;
  std::size_t shift_rejections = 0;
};

// The two normalised boundary coordinates an instance regresses.
inline std::array<double, 2> normalized_target(const DatasetRecord& r, BoundaryPair pair) {
  if (pair == BoundaryPair::top_bottom) {
    const double H = double(r.stack.height());
    return {r.label.top / H, r.label.bottom / H};
  }
  const double W = double(r.stack.width());
  return {r.label.left / W, r.label.right / W};
}

template <typename T>
double validation_loss(RoiRegressor<T>& model, BoundaryPair pair,
                       const std::vector<const DatasetRecord*>& records) {
  double acc = 0.0;
  for (const auto* r : records) {
    const auto [a, b] = model.infer(r->stack);
    const auto t = normalized_target(*r, pair);
    acc += (double(a) - t[0]) * (double(a) - t[0]) + (double(b) - t[1]) * (double(b) - t[1]);
  }
  return acc / (2.0 * double(records.size()));
}

template <typename T = float>
TrainResult train(const ArchitectureConfig& arch, BoundaryPair pair,
                  const std::vector<const DatasetRecord*>& train_set,
                  const std::vector<const DatasetRecord*>& val_set, const TrainConfig& cfg,
                  const std::function<void(const EpochReport&)>& on_epoch = {}) {
  if (train_set.empty()) throw data_error("empty training split");
  if (cfg.batch_size < 1) throw usage_error("batch size must be >= 1");
  if (cfg.epochs < 1 && cfg.max_steps == 0) throw usage_error("need epochs >= 1 or max_steps > 0");

  std::seed_seq seq{std::uint32_t(cfg.seed), std::uint32_t(cfg.seed >> 32),
                    std::uint32_t(pair), std::uint32_t(arch.kind)};
  std::mt19937_64 rng(seq);
  RoiRegressor<T> model(arch, rng());

  std::vector<DatasetRecord> pool;
  for (const auto* r : train_set) {
    pool.push_back(*r);
    if (cfg.augment) pool.push_back(augment_flip(*r));
  }
  const std::size_t size = arch.height;
  const auto sx = cfg.shifts_x.empty() ? scaled_shift_set(reference_shifts_x(), arch.width) : cfg.shifts_x;
  const auto sy = cfg.shifts_y.empty() ? scaled_shift_set(reference_shifts_y(), size) : cfg.shifts_y;

  const std::size_t batches_per_epoch = (pool.size() + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total_steps = cfg.max_steps ? cfg.max_steps : cfg.epochs * batches_per_epoch;

  nn::OptimizerState<T> opt;
  opt.config.learning_rate = cfg.learning_rate;
  const auto params = model.parameters().trainable();

  TrainResult result;
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order(pool.size());
  std::size_t step = 0;
  for (std::size_t epoch = 0; step < total_steps; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    std::size_t epoch_steps = 0;
    for (std::size_t start = 0; start < order.size() && step < total_steps; start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<DatasetRecord> shifted;
      shifted.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) {
        const auto& rec = pool[order[i]];
        if (!cfg.augment) {
          shifted.push_back(rec);
          continue;
        }
        const int dx = sx[rng() % sx.size()];
        const int dy = sy[rng() % sy.size()];
        ++result.shift_attempts;
        auto s = augment_cyclic_shift(rec, dx, dy);
        result.shift_rejections += !s.accepted;
        shifted.push_back(std::move(s.record));
      }
      std::vector<const LocalizerStack*> stacks;
      Tensor<T> target({shifted.size(), 2});
      for (std::size_t b = 0; b < shifted.size(); ++b) {
        stacks.push_back(&shifted[b].stack);
        const auto t = normalized_target(shifted[b], pair);
        target[2 * b] = T(t[0]);
        target[2 * b + 1] = T(t[1]);
      }

      const double progress = double(step) / double(std::max<std::size_t>(total_steps, 1));
      const double f = cfg.final_lr_fraction;
      opt.config.learning_rate =
          cfg.learning_rate * (f + (1.0 - f) * 0.5 * (1.0 + std::cos(3.14159265358979 * progress)));

      model.parameters().zero_grad();
      double loss_value = 0.0;
      {
        nn::Tape<T> tape;
        const auto loss = nn::mse_loss(tape, model.forward(tape, stacks, nn::Mode::train), target);
        loss_value = double(loss->value[0]);
        if (!std::isfinite(loss_value)) {
          throw numeric_error("training diverged: non-finite loss at step " + std::to_string(step));
        }
        tape.backward(loss);
      }
      nn::adam_step<T>(params, opt);
      result.loss_history.push_back(loss_value);
      epoch_loss += loss_value;
      ++epoch_steps;
      ++step;
    }

    EpochReport report{epoch, step, epoch_loss / double(std::max<std::size_t>(epoch_steps, 1)),
                       std::numeric_limits<double>::quiet_NaN()};
    const bool last = step >= total_steps;
    if (!val_set.empty()) {
      report.val_loss = validation_loss(model, pair, val_set);
      if (report.val_loss < best) {
        best = report.val_loss;
        result.best_epoch = epoch;
        result.weights = export_weights(model, pair);
      }
    } else if (last) {
      result.best_epoch = epoch;
      result.weights = export_weights(model, pair);
    }
    result.epochs.push_back(report);
    if (on_epoch) on_epoch(report);
  }
  return result;
}

inline MetricsTable score_predictions(const std::vector<const DatasetRecord*>& records,
                                      const std::vector<Box>& predictions) {
  if (records.empty()) throw data_error("empty evaluation split");
  if (predictions.size() != records.size()) throw usage_error("one prediction per record required");
  MetricsTable table;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = *records[i];
    table.cases.push_back({r.id, iou(predictions[i], r.label), boundary_error(predictions[i], r.label),
                           predictions[i], r.label});
  }
  return table;
}

template <typename T>
MetricsTable evaluate(RoiRegressor<T>& left_right, RoiRegressor<T>& top_bottom,
                      const std::vector<const DatasetRecord*>& records) {
  if (records.empty()) throw data_error("empty evaluation split");
  std::vector<Box> boxes;
  for (const auto* r : records) boxes.push_back(predict_roi(r->stack, left_right, top_bottom).box);
  return score_predictions(records, boxes);
}

}  // namespace scanscribe
