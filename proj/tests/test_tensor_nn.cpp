#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "scanscribe/gradcheck.hpp"
#include "scanscribe/ops.hpp"
#include "scanscribe/optim.hpp"
#include "scanscribe/weights_io.hpp"

namespace ss = scanscribe;
namespace nn = scanscribe::nn;

namespace {

template <typename T>
ss::Tensor<T> random_tensor(ss::Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  ss::Tensor<T> t(std::move(shape));
  for (auto& v : t.storage()) v = T(u(rng));
  return t;
}

// Direct 2D cross-correlation with explicit padding, no im2col.
ss::Tensor<double> naive_conv2d(const ss::Tensor<double>& x, const ss::Tensor<double>& w,
                                const ss::Tensor<double>& b, std::size_t stride, std::size_t pad_h,
                                std::size_t pad_w, std::size_t oh, std::size_t ow) {
  const auto N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const auto O = w.dim(0), KH = w.dim(2), KW = w.dim(3);
  ss::Tensor<double> out({N, O, oh, ow});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          double acc = b[o];
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t u = 0; u < KH; ++u)
              for (std::size_t v = 0; v < KW; ++v) {
                const long r = long(i * stride + u) - long(pad_h);
                const long s = long(j * stride + v) - long(pad_w);
                if (r < 0 || s < 0 || r >= long(H) || s >= long(W)) continue;
                acc += x[((n * C + c) * H + r) * W + s] * w[((o * C + c) * KH + u) * KW + v];
              }
          out[((n * O + o) * oh + i) * ow + j] = acc;
        }
  return out;
}

}  // namespace

TEST(Convolution, IdentityKernelIsIdentity) {
  std::mt19937_64 rng(1);
  auto x = nn::constant(random_tensor<float>({2, 1, 5, 7}, rng));
  auto w = nn::constant(ss::Tensor<float>({1, 1, 1, 1}, 1.0f));
  auto b = nn::constant(ss::Tensor<float>({1}));
  nn::Tape<float> tape;
  EXPECT_EQ(nn::conv2d(tape, x, w, b)->value, x->value);
}

TEST(Convolution, AllOnesValid) {
  auto x = nn::constant(ss::Tensor<float>({1, 1, 3, 3}, 1.0f));
  auto w = nn::constant(ss::Tensor<float>({1, 1, 3, 3}, 1.0f));
  auto b = nn::constant(ss::Tensor<float>({1}));
  nn::Tape<float> tape;
  const auto y = nn::conv2d(tape, x, w, b, 1, nn::Padding::valid);
  EXPECT_EQ(y->value.shape(), (ss::Shape{1, 1, 1, 1}));
  EXPECT_EQ(y->value[0], 9.0f);
}

TEST(Convolution, SamePaddingStrideTwoShape) {
  std::mt19937_64 rng(2);
  auto x = nn::constant(random_tensor<float>({1, 3, 8, 8}, rng));
  auto w = nn::constant(random_tensor<float>({5, 3, 3, 3}, rng));
  auto b = nn::constant(ss::Tensor<float>({5}));
  nn::Tape<float> tape;
  EXPECT_EQ(nn::conv2d(tape, x, w, b, 2)->value.shape(), (ss::Shape{1, 5, 4, 4}));
  auto odd = nn::constant(random_tensor<float>({1, 3, 7, 9}, rng));
  EXPECT_EQ(nn::conv2d(tape, odd, w, b, 2)->value.shape(), (ss::Shape{1, 5, 4, 5}));
}

TEST(Convolution, ShapeMismatchNamesBothShapes) {
  auto x = nn::constant(ss::Tensor<float>({1, 2, 4, 4}));
  auto w = nn::constant(ss::Tensor<float>({1, 3, 3, 3}));
  auto b = nn::constant(ss::Tensor<float>({1}));
  nn::Tape<float> tape;
  try {
    nn::conv2d(tape, x, w, b);
    FAIL();
  } catch (const ss::Error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[1,2,4,4]"), std::string::npos);
    EXPECT_NE(msg.find("[1,3,3,3]"), std::string::npos);
  }
}

TEST(Convolution, MatchesDirectLoops) {
  std::mt19937_64 rng(3);
  for (std::size_t stride : {1u, 2u}) {
    const auto x = random_tensor<double>({2, 3, 9, 6}, rng);
    const auto w = random_tensor<double>({4, 3, 3, 3}, rng);
    const auto b = random_tensor<double>({4}, rng);
    nn::Tape<double> tape;
    const auto y = nn::conv2d(tape, nn::constant(x), nn::constant(w), nn::constant(b), stride);
    const std::size_t oh = (9 + stride - 1) / stride, ow = (6 + stride - 1) / stride;
    const std::size_t ph = ((oh - 1) * stride + 3 - 9) / 2, pw = ((ow - 1) * stride + 3 - 6) / 2;
    const auto ref = naive_conv2d(x, w, b, stride, ph, pw, oh, ow);
    ASSERT_EQ(y->value.shape(), ref.shape());
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(y->value[i], ref[i], 1e-12);
  }
}

TEST(Convolution, Conv3dWithUnitDepthMatchesConv2d) {
  std::mt19937_64 rng(4);
  const auto x = random_tensor<double>({1, 2, 6, 6}, rng);
  const auto w = random_tensor<double>({3, 2, 3, 3}, rng);
  const auto b = random_tensor<double>({3}, rng);
  nn::Tape<double> tape;
  const auto y2 = nn::conv2d(tape, nn::constant(x), nn::constant(w), nn::constant(b), 2);
  const auto y3 = nn::conv3d(tape, nn::constant(x.reshaped({1, 2, 1, 6, 6})),
                             nn::constant(w.reshaped({3, 2, 1, 3, 3})), nn::constant(b), {1, 2, 2});
  for (std::size_t i = 0; i < y2->value.size(); ++i) EXPECT_NEAR(y2->value[i], y3->value[i], 1e-12);
}

TEST(Convolution, LinearInInput) {
  std::mt19937_64 rng(5);
  const auto x1 = random_tensor<double>({1, 2, 5, 5}, rng);
  const auto x2 = random_tensor<double>({1, 2, 5, 5}, rng);
  auto w = nn::constant(random_tensor<double>({3, 2, 3, 3}, rng));
  auto zero = nn::constant(ss::Tensor<double>({3}));
  ss::Tensor<double> combo(x1.shape());
  for (std::size_t i = 0; i < combo.size(); ++i) combo[i] = 2.0 * x1[i] - 3.0 * x2[i];
  nn::Tape<double> tape;
  const auto y1 = nn::conv2d(tape, nn::constant(x1), w, zero);
  const auto y2 = nn::conv2d(tape, nn::constant(x2), w, zero);
  const auto yc = nn::conv2d(tape, nn::constant(combo), w, zero);
  for (std::size_t i = 0; i < yc->value.size(); ++i)
    EXPECT_NEAR(yc->value[i], 2.0 * y1->value[i] - 3.0 * y2->value[i], 1e-12);
}

TEST(BatchNorm, ConstantInputNormalisesToZero) {
  auto x = nn::constant(ss::Tensor<double>({4, 2, 3, 3}, 7.0));
  auto g = nn::parameter(ss::Tensor<double>({2}, 1.0));
  auto b = nn::parameter(ss::Tensor<double>({2}, 0.0));
  ss::Tensor<double> rm({2}), rv({2}, 1.0);
  nn::Tape<double> tape;
  const auto y = nn::batch_norm(tape, x, g, b, rm, rv, nn::Mode::train);
  for (double v : y->value.data()) EXPECT_NEAR(v, 0.0, 1e-9);
}

TEST(BatchNorm, TwoValueChannel) {
  auto x = nn::constant(ss::Tensor<double>({2, 1}, {1.0, 3.0}).reshaped({2, 1, 1}));
  auto g = nn::parameter(ss::Tensor<double>({1}, 1.0));
  auto b = nn::parameter(ss::Tensor<double>({1}, 0.0));
  ss::Tensor<double> rm({1}), rv({1}, 1.0);
  nn::Tape<double> tape;
  const auto y = nn::batch_norm(tape, x, g, b, rm, rv, nn::Mode::train, {1e-12, 0.1});
  EXPECT_NEAR(y->value[0], -1.0, 1e-9);
  EXPECT_NEAR(y->value[1], 1.0, 1e-9);

  g->value[0] = 2.0;
  b->value[0] = 5.0;
  nn::Tape<double> tape2;
  const auto z = nn::batch_norm(tape2, x, g, b, rm, rv, nn::Mode::train, {1e-12, 0.1});
  EXPECT_NEAR(z->value[0], 3.0, 1e-9);
  EXPECT_NEAR(z->value[1], 7.0, 1e-9);
}

TEST(BatchNorm, TrainOutputIsStandardised) {
  std::mt19937_64 rng(6);
  auto x = nn::constant(random_tensor<double>({5, 3, 4, 4}, rng, 10.0));
  auto g = nn::parameter(ss::Tensor<double>({3}, 1.0));
  auto b = nn::parameter(ss::Tensor<double>({3}, 0.0));
  ss::Tensor<double> rm({3}), rv({3}, 1.0);
  nn::Tape<double> tape;
  const auto y = nn::batch_norm(tape, x, g, b, rm, rv, nn::Mode::train);
  for (std::size_t c = 0; c < 3; ++c) {
    double s = 0, s2 = 0;
    int n = 0;
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t k = 0; k < 16; ++k) {
        const double v = y->value[(i * 3 + c) * 16 + k];
        s += v;
        s2 += v * v;
        ++n;
      }
    EXPECT_LT(std::abs(s / n), 1e-5);
    EXPECT_NEAR(s2 / n - (s / n) * (s / n), 1.0, 1e-4);
  }
}

TEST(BatchNorm, InferUsesRunningStatistics) {
  auto x = nn::constant(ss::Tensor<double>({1, 1, 1, 2}, {4.0, 6.0}));
  auto g = nn::parameter(ss::Tensor<double>({1}, 1.0));
  auto b = nn::parameter(ss::Tensor<double>({1}, 0.0));
  ss::Tensor<double> rm({1}, 5.0), rv({1}, 4.0);
  nn::Tape<double> tape;
  const auto y = nn::batch_norm(tape, x, g, b, rm, rv, nn::Mode::infer, {0.0, 0.1});
  EXPECT_DOUBLE_EQ(y->value[0], -0.5);
  EXPECT_DOUBLE_EQ(y->value[1], 0.5);
  EXPECT_EQ(rm[0], 5.0);
}

TEST(BatchNorm, RaggedInputsShareStatistics) {
  std::mt19937_64 rng(7);
  const auto a = random_tensor<double>({1, 2, 2, 3, 3}, rng);
  const auto c = random_tensor<double>({1, 2, 4, 3, 3}, rng);
  ss::Tensor<double> joined({1, 2, 6, 3, 3});
  // Concatenate along depth per channel.
  for (std::size_t ch = 0; ch < 2; ++ch) {
    std::copy_n(a.raw() + ch * 18, 18, joined.raw() + ch * 54);
    std::copy_n(c.raw() + ch * 36, 36, joined.raw() + ch * 54 + 18);
  }
  auto g = nn::parameter(ss::Tensor<double>({2}, 1.5));
  auto b = nn::parameter(ss::Tensor<double>({2}, 0.25));
  ss::Tensor<double> rm1({2}), rv1({2}, 1.0), rm2({2}), rv2({2}, 1.0);
  nn::Tape<double> tape;
  const std::vector<nn::Var<double>> parts{nn::constant(a), nn::constant(c)};
  const auto ys = nn::batch_norm<double>(tape, parts, g, b, rm1, rv1, nn::Mode::train);
  const auto yj = nn::batch_norm(tape, nn::constant(joined), g, b, rm2, rv2, nn::Mode::train);
  for (std::size_t ch = 0; ch < 2; ++ch) {
    for (std::size_t k = 0; k < 18; ++k) EXPECT_NEAR(ys[0]->value[ch * 18 + k], yj->value[ch * 54 + k], 1e-12);
    for (std::size_t k = 0; k < 36; ++k) EXPECT_NEAR(ys[1]->value[ch * 36 + k], yj->value[ch * 54 + 18 + k], 1e-12);
  }
  EXPECT_NEAR(rm1[0], rm2[0], 1e-12);
  EXPECT_NEAR(rv1[1], rv2[1], 1e-12);
}

TEST(BatchNorm, ZeroElementsRejected) {
  auto x = nn::constant(ss::Tensor<double>({0, 2, 3}));
  auto g = nn::parameter(ss::Tensor<double>({2}, 1.0));
  auto b = nn::parameter(ss::Tensor<double>({2}, 0.0));
  ss::Tensor<double> rm({2}), rv({2}, 1.0);
  nn::Tape<double> tape;
  EXPECT_THROW(nn::batch_norm(tape, x, g, b, rm, rv, nn::Mode::train), ss::Error);
}

TEST(FullyConnected, Examples) {
  nn::Tape<double> tape;
  auto x = nn::constant(ss::Tensor<double>({1, 2}, {1.0, 1.0}));
  auto w = nn::constant(ss::Tensor<double>({2, 2}, {1.0, 2.0, 3.0, 4.0}));
  auto zero = nn::constant(ss::Tensor<double>({2}));
  EXPECT_EQ(nn::fully_connected(tape, x, w, zero)->value.values(), (std::vector<double>{3, 7}));

  auto eye = nn::constant(ss::Tensor<double>({2, 2}, {1.0, 0.0, 0.0, 1.0}));
  auto v = nn::constant(ss::Tensor<double>({1, 2}, {-2.5, 4.0}));
  EXPECT_EQ(nn::fully_connected(tape, v, eye, zero)->value.values(), v->value.values());

  auto zw = nn::constant(ss::Tensor<double>({2, 2}));
  auto bias = nn::constant(ss::Tensor<double>({2}, {0.5, -1.0}));
  EXPECT_EQ(nn::fully_connected(tape, v, zw, bias)->value.values(), (std::vector<double>{0.5, -1.0}));

  auto bad = nn::constant(ss::Tensor<double>({1, 3}));
  EXPECT_THROW(nn::fully_connected(tape, bad, w, zero), ss::Error);
}

TEST(Activations, ReluAndSoftmax) {
  nn::Tape<double> tape;
  const auto r = nn::relu(tape, nn::constant(ss::Tensor<double>({2}, {-1.0, 2.0})));
  EXPECT_EQ(r->value.values(), (std::vector<double>{0.0, 2.0}));

  const auto eq = nn::softmax(tape, nn::constant(ss::Tensor<double>({4}, 0.3)));
  for (double v : eq->value.data()) EXPECT_NEAR(v, 0.25, 1e-15);

  const auto s = nn::softmax(tape, nn::constant(ss::Tensor<double>({2}, {0.0, std::log(3.0)})));
  EXPECT_NEAR(s->value[0], 0.25, 1e-12);
  EXPECT_NEAR(s->value[1], 0.75, 1e-12);
}

TEST(Activations, SoftmaxSumsToOneAndIgnoresShift) {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 50; ++t) {
    const auto logits = random_tensor<float>({7}, rng, 30.0);
    auto shifted = logits;
    for (auto& v : shifted.storage()) v += 100.0f;
    nn::Tape<float> tape;
    const auto a = nn::softmax(tape, nn::constant(logits));
    const auto b = nn::softmax(tape, nn::constant(shifted));
    double sum = 0;
    for (std::size_t i = 0; i < 7; ++i) {
      sum += a->value[i];
      EXPECT_GT(a->value[i], 0.0f);
      EXPECT_NEAR(a->value[i], b->value[i], 1e-5);
    }
    EXPECT_NEAR(sum, 1.0, 1e-6);
  }
}

TEST(MseLoss, Examples) {
  nn::Tape<double> tape;
  const ss::Tensor<double> target({2}, {3.0, 4.0});
  EXPECT_EQ(nn::mse_loss(tape, nn::constant(target), target)->value[0], 0.0);
  const auto l = nn::mse_loss(tape, nn::constant(ss::Tensor<double>({2})), target);
  EXPECT_DOUBLE_EQ(l->value[0], 12.5);
  ss::Tensor<double> scaled({2}, {-6.0, -8.0});
  EXPECT_DOUBLE_EQ(nn::mse_loss(tape, nn::constant(scaled), ss::Tensor<double>({2}))->value[0],
                   4.0 * 12.5);
  EXPECT_THROW(nn::mse_loss(tape, nn::constant(ss::Tensor<double>({3})), target), ss::Error);
}

TEST(Backward, UnusedParameterGetsZeroGradient) {
  auto used = nn::parameter(ss::Tensor<double>({1, 2}, {1.0, 2.0}));
  auto unused = nn::parameter(ss::Tensor<double>({3}, 1.0));
  nn::Tape<double> tape;
  auto loss = nn::mse_loss(tape, used, ss::Tensor<double>({1, 2}));
  tape.backward(loss);
  EXPECT_TRUE(unused->grad.empty());
  EXPECT_EQ(used->grad.values(), (std::vector<double>{1.0, 2.0}));
}

TEST(Backward, BeforeForwardIsAnError) {
  nn::Tape<double> tape;
  auto loose = nn::parameter(ss::Tensor<double>({1}, 1.0));
  EXPECT_THROW(tape.backward(loose), ss::Error);
  auto loss = nn::mse_loss(tape, loose, ss::Tensor<double>({1}));
  tape.backward(loss);
  EXPECT_THROW(tape.backward(loss), ss::Error);
}

TEST(Backward, LinearLayerMatchesFiniteDifferences) {
  std::mt19937_64 rng(9);
  const auto x = random_tensor<double>({3, 4}, rng);
  auto w = nn::parameter(random_tensor<double>({2, 4}, rng));
  auto b = nn::parameter(random_tensor<double>({2}, rng));
  const auto target = random_tensor<double>({3, 2}, rng);
  auto loss_of = [&](nn::Tape<double>& tape) {
    return nn::mse_loss(tape, nn::fully_connected(tape, nn::constant(x), w, b), target);
  };
  nn::Tape<double> tape;
  tape.backward(loss_of(tape));
  for (std::size_t i = 0; i < w->value.size(); ++i) {
    auto f = [&](double v) {
      const double saved = w->value[i];
      w->value[i] = v;
      nn::Tape<double> t;
      const double out = loss_of(t)->value[0];
      w->value[i] = saved;
      return out;
    };
    const double fd = ss::testing::central_difference(f, w->value[i], 1e-3);
    EXPECT_LT(std::abs(fd - w->grad[i]) / std::max(std::abs(fd), 1e-12), 1e-6);
  }
}

namespace {

using Named = std::vector<std::pair<std::string, nn::Var<double>>>;

double check(const std::function<nn::Var<double>(nn::Tape<double>&)>& fn, const Named& vars) {
  const auto report = nn::gradient_check<double>(fn, vars);
  EXPECT_GT(report.entries_checked, 0u);
  return report.max_relative_error;
}

}  // namespace

TEST(GradientCheck, EveryLayerInIsolation) {
  std::mt19937_64 rng(10);
  const double tol = 1e-3;

  auto x4 = nn::parameter(random_tensor<double>({2, 2, 6, 5}, rng));
  auto w4 = nn::parameter(random_tensor<double>({3, 2, 3, 3}, rng));
  auto b4 = nn::parameter(random_tensor<double>({3}, rng));
  const auto t4 = random_tensor<double>({2, 3, 3, 3}, rng);
  EXPECT_LT(check([&](auto& tp) { return nn::mse_loss(tp, nn::conv2d(tp, x4, w4, b4, 2), t4); },
                  {{"x", x4}, {"w", w4}, {"b", b4}}),
            tol);

  auto x5 = nn::parameter(random_tensor<double>({1, 2, 3, 4, 4}, rng));
  auto w5 = nn::parameter(random_tensor<double>({2, 2, 3, 3, 3}, rng));
  auto b5 = nn::parameter(random_tensor<double>({2}, rng));
  const auto t5 = random_tensor<double>({1, 2, 3, 2, 2}, rng);
  EXPECT_LT(check([&](auto& tp) { return nn::mse_loss(tp, nn::conv3d(tp, x5, w5, b5, {1, 2, 2}), t5); },
                  {{"x", x5}, {"w", w5}, {"b", b5}}),
            tol);

  auto g = nn::parameter(random_tensor<double>({2}, rng));
  auto be = nn::parameter(random_tensor<double>({2}, rng));
  auto xa = nn::parameter(random_tensor<double>({1, 2, 2, 3}, rng));
  auto xb = nn::parameter(random_tensor<double>({2, 2, 3, 1}, rng));
  const auto ta = random_tensor<double>({1, 2, 2, 3}, rng);
  const auto tb = random_tensor<double>({2, 2, 3, 1}, rng);
  ss::Tensor<double> rm({2}), rv({2}, 1.0);
  for (auto mode : {nn::Mode::train, nn::Mode::infer}) {
    auto fn = [&](nn::Tape<double>& tp) {
      const std::vector<nn::Var<double>> xs{xa, xb};
      auto ys = nn::batch_norm<double>(tp, xs, g, be, rm, rv, mode);
      // Only the first output feeds the loss: the second input still
      // receives gradient through the shared statistics in train mode.
      auto l1 = nn::mse_loss(tp, nn::relu(tp, ys[0]), ta);
      auto l2 = nn::mse_loss(tp, ys[1], tb);
      return nn::add(tp, l1, l2);
    };
    EXPECT_LT(check(fn, {{"xa", xa}, {"xb", xb}, {"gamma", g}, {"beta", be}}), tol);
    auto first_only = [&](nn::Tape<double>& tp) {
      const std::vector<nn::Var<double>> xs{xa, xb};
      auto ys = nn::batch_norm<double>(tp, xs, g, be, rm, rv, mode);
      return nn::mse_loss(tp, ys[0], ta);
    };
    EXPECT_LT(check(first_only, {{"xa", xa}, {"xb", xb}, {"gamma", g}}), tol);
  }

  auto xf = nn::parameter(random_tensor<double>({3, 5}, rng));
  auto wf = nn::parameter(random_tensor<double>({4, 5}, rng));
  auto bf = nn::parameter(random_tensor<double>({4}, rng));
  const auto tf = random_tensor<double>({3, 4}, rng);
  EXPECT_LT(check([&](auto& tp) {
              return nn::mse_loss(tp, nn::relu(tp, nn::fully_connected(tp, xf, wf, bf)), tf);
            },
                  {{"x", xf}, {"w", wf}, {"b", bf}}),
            tol);

  auto xg = nn::parameter(random_tensor<double>({2, 3, 2, 2}, rng));
  const auto tg = random_tensor<double>({2, 3}, rng);
  EXPECT_LT(check([&](auto& tp) { return nn::mse_loss(tp, nn::global_average_pool(tp, xg), tg); },
                  {{"x", xg}}),
            tol);

  auto p1 = nn::parameter(random_tensor<double>({1, 3}, rng));
  auto p2 = nn::parameter(random_tensor<double>({2, 3}, rng));
  const auto tc = random_tensor<double>({3, 3}, rng);
  EXPECT_LT(check([&](auto& tp) {
              const std::vector<nn::Var<double>> parts{p1, p2};
              return nn::mse_loss(tp, nn::concat<double>(tp, parts), tc);
            },
                  {{"p1", p1}, {"p2", p2}}),
            tol);

  auto logits = nn::parameter(random_tensor<double>({5}, rng, 2.0));
  auto feats = nn::parameter(random_tensor<double>({5, 2, 2, 2}, rng));
  const auto tw = random_tensor<double>({2, 2, 2, 2}, rng);
  const std::vector<std::size_t> sizes{2, 3};
  EXPECT_LT(check([&](auto& tp) {
              auto alpha = nn::segment_softmax<double>(tp, logits, sizes);
              return nn::mse_loss(tp, nn::segment_weighted_sum<double>(tp, feats, alpha, sizes), tw);
            },
                  {{"logits", logits}, {"features", feats}}),
            tol);

  auto r = nn::parameter(random_tensor<double>({2, 6}, rng));
  const auto tr = random_tensor<double>({2, 3, 2}, rng);
  EXPECT_LT(check([&](auto& tp) { return nn::mse_loss(tp, nn::reshape(tp, r, {2, 3, 2}), tr); },
                  {{"r", r}}),
            tol);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  auto p = nn::parameter(ss::Tensor<double>({3}, {1.0, -2.0, 0.5}));
  p->grad_buffer();
  const auto before = p->value;
  nn::OptimizerState<double> state;
  const std::vector<nn::Var<double>> params{p};
  nn::adam_step<double>(params, state);
  EXPECT_EQ(p->value, before);
}

TEST(Adam, FirstStepIsSignedLearningRate) {
  auto p = nn::parameter(ss::Tensor<double>({3}, 0.0));
  p->grad_buffer().storage() = {0.5, -2.0, 1e-3};
  nn::OptimizerState<double> state;
  state.config.learning_rate = 0.01;
  const std::vector<nn::Var<double>> params{p};
  nn::adam_step<double>(params, state);
  const std::vector<double> g{0.5, -2.0, 1e-3};
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(p->value[i], -0.01 * g[i] / (std::abs(g[i]) + 1e-8), 1e-12);
  }
}

TEST(Adam, DeterministicAndShapeChecked) {
  std::mt19937_64 rng(12);
  const auto init = random_tensor<float>({4, 4}, rng);
  const auto grad = random_tensor<float>({4, 4}, rng);
  auto run = [&] {
    auto p = nn::parameter(init);
    nn::OptimizerState<float> state;
    const std::vector<nn::Var<float>> params{p};
    for (int i = 0; i < 5; ++i) {
      p->grad = grad;
      nn::adam_step<float>(params, state);
    }
    return p->value;
  };
  EXPECT_EQ(run(), run());

  auto p = nn::parameter(init);
  nn::OptimizerState<float> bad;
  bad.first_moment.emplace_back(ss::Shape{2, 2});
  bad.second_moment.emplace_back(ss::Shape{2, 2});
  const std::vector<nn::Var<float>> params{p};
  EXPECT_THROW(nn::adam_step<float>(params, bad), ss::Error);
}

TEST(WeightsIo, RoundTripIsBitExact) {
  std::mt19937_64 rng(13);
  nn::WeightsFile w;
  w.header = {1, 2, 3};
  w.tensors.emplace_back("conv.w", random_tensor<float>({2, 1, 3, 3}, rng));
  w.tensors.emplace_back("bias", random_tensor<float>({2}, rng));
  ss::Tensor<float> odd({3});
  odd.storage() = {-0.0f, std::numeric_limits<float>::denorm_min(), 1e30f};
  w.tensors.emplace_back("odd", odd);
  const auto bytes = nn::encode_weights(w);
  const auto back = nn::decode_weights(bytes);
  EXPECT_EQ(back.header, w.header);
  ASSERT_EQ(back.tensors.size(), 3u);
  EXPECT_EQ(nn::encode_weights(back), bytes);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back.tensors[i].first, w.tensors[i].first);
    EXPECT_EQ(std::memcmp(back.tensors[i].second.raw(), w.tensors[i].second.raw(),
                          w.tensors[i].second.size() * 4),
              0);
  }
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "SSWT");
}

TEST(WeightsIo, CorruptInputsGiveDistinctErrors) {
  nn::WeightsFile w;
  w.tensors.emplace_back("a", ss::Tensor<float>({2}, 1.0f));
  auto bytes = nn::encode_weights(w);

  auto message = [](const std::vector<std::uint8_t>& b) {
    try {
      nn::decode_weights(b);
    } catch (const ss::Error& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_EQ(message(bad_magic), "bad magic");
  auto bad_version = bytes;
  bad_version[4] = 9;
  EXPECT_EQ(message(bad_version), "unsupported version 9");
  auto truncated = bytes;
  truncated.resize(truncated.size() - 3);
  EXPECT_EQ(message(truncated), "truncated file");

  nn::ParameterSet<float> params;
  params.add("a", ss::Tensor<float>({2}));
  params.add("b", ss::Tensor<float>({1}));
  try {
    params.import_table(w.tensors);
    FAIL();
  } catch (const ss::Error& e) {
    EXPECT_STREQ(e.what(), "missing tensor: b");
  }
}
