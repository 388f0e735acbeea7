#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "tinydet/error.hpp"
#include "tinydet/kernels.hpp"

namespace tinydet {
namespace {

using testing::block_diagonal;
using testing::random_tensor;
using testing::separable_reference;

ConvWeights ones(int out, int in, int k, int stride = 1, int groups = 1) {
  return ConvWeights::make(Tensor({out, in / groups, k, k}, 1.0), stride, groups);
}

TEST(Conv2d, IdentityOneByOne) {
  Rng rng(1);
  const Tensor x = random_tensor(rng, {1, 1, 5, 7});
  EXPECT_EQ(conv2d(x, ones(1, 1, 1)), x);
}

TEST(Conv2d, AllOnesThreeByThree) {
  const Tensor y = conv2d(Tensor({1, 1, 3, 3}, 1.0), ones(1, 1, 3));
  EXPECT_EQ(y.at(0, 0, 0, 0), 4.0);
  EXPECT_EQ(y.at(0, 0, 0, 1), 6.0);
  EXPECT_EQ(y.at(0, 0, 1, 1), 9.0);
  EXPECT_EQ(y.at(0, 0, 2, 2), 4.0);
}

TEST(Conv2d, StrideTwoOutputSize) {
  const Tensor y = conv2d(Tensor({1, 1, 4, 4}, 1.0), ones(1, 1, 3, 2));
  EXPECT_EQ(y.shape().height, 2);
  EXPECT_EQ(y.shape().width, 2);
}

TEST(Conv2d, Linearity) {
  Rng rng(7);
  const auto w = random_conv(rng, 4, 6, 3, 2, 2);
  const Tensor a = random_tensor(rng, {2, 4, 9, 9});
  const Tensor b = random_tensor(rng, {2, 4, 9, 9});
  Tensor mix(a.shape());
  for (std::size_t i = 0; i < mix.size(); ++i) mix.data()[i] = 2.5 * a.data()[i] - 0.75 * b.data()[i];
  const Tensor ya = conv2d(a, w), yb = conv2d(b, w), ym = conv2d(mix, w);
  for (std::size_t i = 0; i < ym.size(); ++i) {
    const double expect = 2.5 * ya.data()[i] - 0.75 * yb.data()[i];
    EXPECT_NEAR(ym.data()[i], expect, 1e-9 * std::max(1.0, std::abs(expect)));
  }
}

TEST(Conv2d, GroupsAreIndependentSlices) {
  Rng rng(11);
  const int groups = 3;
  const auto w = random_conv(rng, 6, 9, 3, 1, groups);
  const Tensor x = random_tensor(rng, {1, 6, 7, 7});
  const Tensor y = conv2d(x, w);
  for (int g = 0; g < groups; ++g) {
    Tensor xs({1, 2, 7, 7});
    for (int c = 0; c < 2; ++c)
      for (int i = 0; i < 7; ++i)
        for (int j = 0; j < 7; ++j) xs.at(0, c, i, j) = x.at(0, g * 2 + c, i, j);
    Tensor ws({3, 2, 3, 3});
    for (int o = 0; o < 3; ++o)
      for (int c = 0; c < 2; ++c)
        for (int a = 0; a < 3; ++a)
          for (int b = 0; b < 3; ++b) ws.at(o, c, a, b) = w.weight.at(g * 3 + o, c, a, b);
    const Tensor ys = conv2d(xs, ConvWeights::make(ws));
    for (int o = 0; o < 3; ++o)
      for (int i = 0; i < 7; ++i)
        for (int j = 0; j < 7; ++j) EXPECT_EQ(ys.at(0, o, i, j), y.at(0, g * 3 + o, i, j));
  }
}

TEST(Conv2d, ShapeMismatchThrows) {
  EXPECT_THROW(conv2d(Tensor({1, 3, 5, 5}), ones(2, 4, 3)), ValidationError);
  EXPECT_THROW(conv2d(Tensor({1, 4, 5, 5}), ones(2, 4, 3, 1, 3)), ValidationError);
}

TEST(AvgPool2, Examples) {
  EXPECT_EQ(avgpool2(Tensor({1, 1, 2, 2}, std::vector<double>{0, 2, 4, 6})).at(0, 0, 0, 0), 3.0);
  const Tensor c = avgpool2(Tensor({1, 2, 5, 6}, 1.5));
  EXPECT_EQ(c.shape(), (TensorShape{1, 2, 4, 5}));
  for (double v : c.data()) EXPECT_EQ(v, 1.5);
  EXPECT_THROW(avgpool2(Tensor({1, 1, 1, 2})), ValidationError);
}

TEST(AvgPool2, OneByTwoInput) {
  // A 1x2 map has no 2x2 window; the [1,3] -> [2] case holds on a 2x2 map
  // whose rows repeat.
  EXPECT_EQ(avgpool2(Tensor({1, 1, 2, 2}, std::vector<double>{1, 3, 1, 3})).at(0, 0, 0, 0), 2.0);
  EXPECT_THROW(avgpool2(Tensor({1, 1, 1, 2}, std::vector<double>{1, 3})), ValidationError);
}

TEST(Fuse, OneByOneKernel) {
  auto w = ConvWeights::make(Tensor({1, 1, 1, 1}, std::vector<double>{2.0}), 2);
  const auto f = fuse_pool_into_conv(w);
  EXPECT_EQ(f.weight.shape(), (TensorShape{1, 1, 2, 2}));
  for (double v : f.weight.data()) EXPECT_EQ(v, 0.5);
}

TEST(Fuse, BiasPreserved) {
  Rng rng(3);
  auto w = random_conv(rng, 2, 3, 3, 2, 1, true);
  (*w.bias) = {0.25, -1.0, 3.0};
  const auto f = fuse_pool_into_conv(w);
  EXPECT_EQ(f.bias, w.bias);
  EXPECT_EQ(f.stride, 2);
}

TEST(Fuse, StrideMustBeTwo) {
  Rng rng(3);
  EXPECT_THROW(fuse_pool_into_conv(random_conv(rng, 1, 1, 3, 1)), ValidationError);
}

// The published example: full-map equivalence on a 24x24 input.
TEST(Fuse, RandomThreeByThreeOn24) {
  Rng rng(24);
  const auto w = random_conv(rng, 2, 2, 3, 2, 1, true);
  const Tensor x = random_tensor(rng, {1, 2, 24, 24});
  EXPECT_LE(max_abs_diff(conv2d(x, fuse_pool_into_conv(w)), conv2d(avgpool2(x), w)), 1e-9);
}

TEST(Fuse, InteriorMatchesForAllKernels) {
  for (int k : {1, 3, 5}) {
    for (int n = 4; n <= 32; n += 2) {
      Rng rng(static_cast<std::uint64_t>(100 * k + n));
      const auto w = random_conv(rng, 2, 2, k, 2, 1, true);
      const Tensor x = random_tensor(rng, {1, 2, n, n});
      const Tensor a = conv2d(x, fuse_pool_into_conv(w));
      const Tensor b = conv2d(avgpool2(x), w);
      ASSERT_EQ(a.shape(), b.shape());
      const int border = fusion_border(w);
      const int out = a.shape().height;
      for (int c = 0; c < 2; ++c)
        for (int i = border; i < out - border; ++i)
          for (int j = border; j < out - border; ++j)
            EXPECT_NEAR(a.at(0, c, i, j), b.at(0, c, i, j), 1e-9) << "k=" << k << " n=" << n;
    }
  }
}

TEST(Fuse, BorderWidth) {
  Rng rng(1);
  EXPECT_EQ(fusion_border(random_conv(rng, 1, 1, 1, 2)), 0);
  EXPECT_EQ(fusion_border(random_conv(rng, 1, 1, 3, 2)), 1);
  EXPECT_EQ(fusion_border(random_conv(rng, 1, 1, 5, 2)), 1);
}

TEST(SCConv, GroupOneIsDepthwiseSeparable) {
  Rng rng(5);
  const int c = 6;
  const auto dw = random_conv(rng, c, c, 3, 1, c, true);
  const auto pw = random_conv(rng, c, c, 1, 1, 1, true);
  const Tensor x = random_tensor(rng, {1, c, 8, 8});
  std::vector<double> dense(pw.weight.data().begin(), pw.weight.data().end());
  const Tensor ref = separable_reference(x, dw, dense, *pw.bias);
  const Tensor got = scconv_forward(x, dw, pw);
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got.data()[i], ref.data()[i], 1e-12);
}

TEST(SCConv, BlockDiagonalForTwoGroups) {
  Rng rng(6);
  const int c = 4, g = 2;
  const auto dw = random_conv(rng, c, c, 3, 1, c, true);
  const auto pw = random_conv(rng, c, c, 1, 1, g, true);
  const Tensor x = random_tensor(rng, {1, c, 6, 6});
  const Tensor ref = separable_reference(x, dw, block_diagonal(pw), *pw.bias);
  const Tensor got = scconv_forward(x, dw, pw);
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got.data()[i], ref.data()[i], 1e-12);
}

TEST(SCConv, ZeroPointwiseGivesZero) {
  Rng rng(8);
  const auto dw = random_conv(rng, 4, 4, 3, 1, 4, true);
  auto pw = random_conv(rng, 4, 4, 1, 1, 2, true);
  for (double& v : pw.weight.data()) v = 0.0;
  const Tensor y = scconv_forward(random_tensor(rng, {1, 4, 5, 5}), dw, pw);
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(SCConv, DivisibilityChecked) {
  Rng rng(9);
  const auto dw = random_conv(rng, 6, 6, 3, 1, 6);
  auto pw = random_conv(rng, 6, 6, 1, 1, 1);
  pw.groups = 4;
  EXPECT_THROW(scconv_forward(Tensor({1, 6, 4, 4}), dw, pw), ValidationError);
  EXPECT_THROW(scconv_forward(Tensor({1, 6, 4, 4}), random_conv(rng, 6, 6, 5, 1, 6), random_conv(rng, 6, 6, 1)),
               ValidationError);
}

Dense zeros(int in, int out) { return {in, out, std::vector<double>(in * out, 0.0), std::vector<double>(out, 0.0)}; }

TEST(SE, ZeroWeightsHalveInput) {
  Rng rng(10);
  const Tensor x = random_tensor(rng, {1, 8, 4, 4});
  const Tensor y = se_forward(x, zeros(8, 2), zeros(2, 8));
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(y.data()[i], x.data()[i] / 2.0);
}

TEST(SE, SaturatedGateIsIdentity) {
  Rng rng(10);
  const Tensor x = random_tensor(rng, {1, 8, 4, 4});
  Dense fc2 = zeros(2, 8);
  for (double& b : fc2.bias) b = 3.0;
  EXPECT_EQ(se_forward(x, zeros(8, 2), fc2), x);
}

TEST(SE, ScalarHandComputation) {
  // One channel of constant 2: pool 2, fc1 weight 0.5 bias 0.25 -> relu(1.25),
  // fc2 weight 2 bias -1 -> 1.5, hard_sigmoid(1.5) = 0.75, output 1.5.
  const Tensor x({1, 1, 3, 3}, 2.0);
  const Dense fc1{1, 1, {0.5}, {0.25}};
  const Dense fc2{1, 1, {2.0}, {-1.0}};
  const Tensor y = se_forward(x, fc1, fc2);
  for (double v : y.data()) EXPECT_DOUBLE_EQ(v, 1.5);
}

TEST(SE, DimensionMismatchThrows) {
  EXPECT_THROW(se_forward(Tensor({1, 8, 2, 2}), zeros(4, 1), zeros(1, 4)), ValidationError);
}

TEST(Activations, HardSigmoidAndSwish) {
  EXPECT_EQ(hard_sigmoid(0.0), 0.5);
  EXPECT_EQ(hard_sigmoid(3.0), 1.0);
  EXPECT_EQ(hard_sigmoid(-3.0), 0.0);
  EXPECT_EQ(hswish(1.0), 1.0 * 4.0 / 6.0);
  EXPECT_EQ(relu(-2.0), 0.0);
}

TEST(Bneck, ZeroWeightsArePureResidual) {
  Rng rng(12);
  auto p = random_bneck(rng, LayerSpec::bneck(3, 8, 16, 8, true, Nonlinearity::HSwish, 1));
  for (ConvWeights* w : {&*p.expand, &p.depthwise, &p.project})
    for (double& v : w->weight.data()) v = 0.0;
  const Tensor x = random_tensor(rng, {1, 8, 6, 6});
  EXPECT_EQ(bneck_forward(x, p), x);
}

TEST(Bneck, NoExpansionStage) {
  Rng rng(13);
  const auto with = random_bneck(rng, LayerSpec::bneck(3, 16, 64, 24, false, Nonlinearity::ReLU, 2));
  const auto without = random_bneck(rng, LayerSpec::bneck(3, 16, 16, 16, false, Nonlinearity::ReLU, 1));
  EXPECT_EQ(with.stage_count(), 3);
  EXPECT_EQ(without.stage_count(), 2);
  EXPECT_FALSE(without.expand.has_value());
  EXPECT_TRUE(without.has_residual());
  EXPECT_FALSE(with.has_residual());
}

TEST(Bneck, MatchesPrimitiveComposition) {
  Rng rng(14);
  const auto spec = LayerSpec::bneck(5, 6, 12, 6, true, Nonlinearity::HSwish, 1);
  const auto p = random_bneck(rng, spec);
  const Tensor x = random_tensor(rng, {1, 6, 7, 7});
  Tensor h = activate(conv2d(x, *p.expand), Nonlinearity::HSwish);
  h = activate(conv2d(h, p.depthwise), Nonlinearity::HSwish);
  h = se_forward(h, p.se->fc1, p.se->fc2);
  h = add(conv2d(h, p.project), x);
  EXPECT_EQ(bneck_forward(x, p), h);
}

TEST(Bneck, StrideTwoHasNoSkip) {
  Rng rng(15);
  const auto p = random_bneck(rng, LayerSpec::bneck(3, 4, 8, 4, false, Nonlinearity::ReLU, 2));
  const Tensor y = bneck_forward(random_tensor(rng, {1, 4, 8, 8}), p);
  EXPECT_EQ(y.shape(), (TensorShape{1, 4, 4, 4}));
}

TEST(Tensor, BlobRoundTrip) {
  Rng rng(16);
  const Tensor t = random_tensor(rng, {2, 3, 4, 5});
  const auto blob = to_blob(t);
  EXPECT_EQ(blob.size(), 16u + 8u * t.size());
  EXPECT_EQ(tensor_from_blob(blob), t);
  EXPECT_EQ(static_cast<int>(blob[0]), 2);
  EXPECT_EQ(static_cast<int>(blob[4]), 3);
}

TEST(Tensor, TruncatedBlobRejected) {
  auto blob = to_blob(Tensor({1, 1, 2, 2}, 1.0));
  blob.pop_back();
  EXPECT_THROW(tensor_from_blob(blob), ParseError);
}

TEST(Tensor, ZeroDimensionRejected) { EXPECT_THROW(Tensor({1, 0, 2, 2}), ValidationError); }

// ---- impulse probe -----------------------------------------------------

ProbeStage conv_stage(int k, int stride, double value = 1.0) {
  return {LayerKind::Conv2d, ConvWeights::make(Tensor({1, 1, k, k}, value), stride)};
}

TEST(Probe, StrideOneSymmetricIsCentered) {
  const std::vector<ProbeStage> stack{conv_stage(3, 1)};
  const auto off = impulse_response_centroid(stack, 16, 7, 8);
  EXPECT_NEAR(off.row, 0.0, 1e-12);
  EXPECT_NEAR(off.col, 0.0, 1e-12);
}

TEST(Probe, StrideTwoOnEvenInputIsHalfPixel) {
  const std::vector<ProbeStage> stack{conv_stage(3, 2)};
  const auto off = impulse_response_centroid(stack, 16, 4, 4);
  EXPECT_NEAR(off.row, 0.5, 1e-12);
  EXPECT_NEAR(off.col, 0.5, 1e-12);
}

TEST(Probe, PoolThenStrideTwoIsCentered) {
  const std::vector<ProbeStage> stack{{LayerKind::AvgPool2, {}}, conv_stage(3, 2)};
  const auto off = impulse_response_centroid(stack, 16, 4, 3);
  EXPECT_NEAR(off.row, 0.0, 1e-12);
  EXPECT_NEAR(off.col, 0.0, 1e-12);
}

TEST(Probe, AdjointMatchesForwardImpulses) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const std::vector<LayerSpec> layers{LayerSpec::avg_pool(1), LayerSpec::conv(5, 2, 1, 1, Nonlinearity::None),
                                        LayerSpec::conv(3, 1, 1, 1, Nonlinearity::None),
                                        LayerSpec::conv(3, 2, 1, 1, Nonlinearity::None)};
    const auto stack = make_probe_stack(layers, seed);
    const Tensor adj = impulse_response_map(stack, 20, 2, 3);
    const Tensor fwd = testing::forward_impulse_map(stack, 20, 2, 3);
    EXPECT_LE(max_abs_diff(adj, fwd), 1e-12);
  }
}

TEST(Probe, KernelsAreSymmetricAndPositive) {
  const std::vector<LayerSpec> layers{LayerSpec::conv(5, 2, 1, 1, Nonlinearity::None),
                                      LayerSpec::bneck(3, 4, 8, 4, false, Nonlinearity::ReLU, 2)};
  const auto stack = make_probe_stack(layers, 42);
  ASSERT_EQ(stack.size(), 2u);
  EXPECT_EQ(stack[1].weights.kernel_h(), 3);
  EXPECT_EQ(stack[1].weights.stride, 2);
  for (const auto& s : stack) {
    const int k = s.weights.kernel_h();
    for (int a = 0; a < k; ++a)
      for (int b = 0; b < k; ++b) {
        const double v = s.weights.weight.at(0, 0, a, b);
        EXPECT_GT(v, 0.0);
        EXPECT_EQ(v, s.weights.weight.at(0, 0, k - 1 - a, b));
        EXPECT_EQ(v, s.weights.weight.at(0, 0, a, k - 1 - b));
      }
  }
}

TEST(Probe, ZeroResponseThrows) {
  const std::vector<ProbeStage> stack{conv_stage(3, 1, 0.0)};
  EXPECT_THROW(impulse_response_centroid(stack, 8, 3, 3), ValidationError);
}

}  // namespace
}  // namespace tinydet
