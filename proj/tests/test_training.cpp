#include <gtest/gtest.h>

#include <cmath>

#include "scanscribe/training.hpp"

namespace ss = scanscribe;

namespace {

std::vector<ss::DatasetRecord> small_dataset(std::size_t count, std::uint64_t seed) {
  ss::PhantomSpec spec;
  spec.size = 32;
  spec.max_slices = 3;
  spec.roi_margin = 2;
  spec.seed = seed;
  return ss::generate_dataset(spec, count);
}

std::vector<const ss::DatasetRecord*> all_of(const std::vector<ss::DatasetRecord>& v) {
  std::vector<const ss::DatasetRecord*> out;
  for (const auto& r : v) out.push_back(&r);
  return out;
}

ss::ArchitectureConfig small_arch(ss::ArchitectureKind kind) {
  ss::ArchitectureConfig a;
  a.kind = kind;
  a.height = a.width = 32;
  a.max_slices = 3;
  return a;
}

}  // namespace

TEST(Training, OverfitsTenRecords) {
  const auto records = small_dataset(10, 5);
  ss::TrainConfig cfg;
  cfg.max_steps = 500;
  cfg.batch_size = 10;
  cfg.augment = false;
  const auto result = ss::train<float>(small_arch(ss::ArchitectureKind::attention),
                                       ss::BoundaryPair::top_bottom, all_of(records), {}, cfg);
  ASSERT_EQ(result.loss_history.size(), 500u);
  EXPECT_TRUE(std::isfinite(result.loss_history.front()));
  EXPECT_LT(result.loss_history.front(), 1.0);
  EXPECT_LT(result.loss_history.back(), 1e-3);
}

TEST(Training, FixedSeedReproducesLossHistory) {
  const auto records = small_dataset(12, 6);
  ss::TrainConfig cfg;
  cfg.max_steps = 6;
  cfg.batch_size = 4;
  cfg.seed = 99;
  for (auto kind : {ss::ArchitectureKind::attention, ss::ArchitectureKind::stacked2d,
                    ss::ArchitectureKind::conv3d}) {
    const auto a = ss::train<float>(small_arch(kind), ss::BoundaryPair::left_right, all_of(records), {}, cfg);
    const auto b = ss::train<float>(small_arch(kind), ss::BoundaryPair::left_right, all_of(records), {}, cfg);
    EXPECT_EQ(a.loss_history, b.loss_history) << ss::to_string(kind);
    EXPECT_EQ(a.weights.tensors, b.weights.tensors);
  }
}

TEST(Training, ReturnsBestValidationWeights) {
  const auto records = small_dataset(30, 7);
  const auto train_set = ss::select_split(records, ss::Split::train);
  const auto val_set = ss::select_split(records, ss::Split::val);
  ss::TrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 6;
  const auto r = ss::train<float>(small_arch(ss::ArchitectureKind::stacked2d),
                                  ss::BoundaryPair::top_bottom, train_set, val_set, cfg);
  ASSERT_EQ(r.epochs.size(), 4u);
  double best = r.epochs.front().val_loss;
  for (const auto& e : r.epochs) best = std::min(best, e.val_loss);
  EXPECT_EQ(r.epochs[r.best_epoch].val_loss, best);
  auto model = ss::instantiate<float>(r.weights);
  EXPECT_NEAR(ss::validation_loss(model, ss::BoundaryPair::top_bottom, val_set), best, 1e-6);
  EXPECT_GT(r.shift_attempts, 0u);
}

TEST(Training, EmptyTrainingSplit) {
  EXPECT_THROW(ss::train<float>(small_arch(ss::ArchitectureKind::attention),
                                ss::BoundaryPair::top_bottom, {}, {}, {}),
               ss::Error);
}

TEST(Evaluation, PerfectPredictionsScoreOneAndZero) {
  const auto records = small_dataset(8, 8);
  const auto ptrs = all_of(records);
  std::vector<ss::Box> boxes;
  for (const auto* r : ptrs) boxes.push_back(r->label);
  const auto table = ss::score_predictions(ptrs, boxes);
  EXPECT_EQ(table.iou_summary().mean, 1.0);
  EXPECT_EQ(table.boundary_error_summary().mean, 0.0);
  EXPECT_THROW(ss::score_predictions({}, {}), ss::Error);
}

TEST(Evaluation, RepeatRunsAreIdentical) {
  const auto records = small_dataset(6, 9);
  const auto ptrs = all_of(records);
  ss::RoiRegressor<float> lr(small_arch(ss::ArchitectureKind::attention), 1);
  ss::RoiRegressor<float> tb(small_arch(ss::ArchitectureKind::attention), 2);
  const auto a = ss::evaluate(lr, tb, ptrs), b = ss::evaluate(lr, tb, ptrs);
  EXPECT_EQ(a.ious(), b.ious());
  EXPECT_EQ(a.boundary_errors(), b.boundary_errors());
  for (const auto& c : a.cases) {
    EXPECT_TRUE(c.predicted.valid());
    EXPECT_GE(c.predicted.top, 0);
    EXPECT_LE(c.predicted.right, 32);
  }
}

TEST(Evaluation, NormalizedTargets) {
  const auto records = small_dataset(1, 10);
  const auto& r = records.front();
  const auto tb = ss::normalized_target(r, ss::BoundaryPair::top_bottom);
  const auto lr = ss::normalized_target(r, ss::BoundaryPair::left_right);
  EXPECT_EQ(tb[0], r.label.top / 32);
  EXPECT_EQ(tb[1], r.label.bottom / 32);
  EXPECT_EQ(lr[0], r.label.left / 32);
  EXPECT_EQ(lr[1], r.label.right / 32);
}
