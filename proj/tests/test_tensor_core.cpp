#include <gtest/gtest.h>

#include <cmath>

#include "drfn/gradcheck.hpp"
#include "drfn/ops.hpp"
#include "support.hpp"

using namespace drfn;
using drfn::testing::random_tensor;
using drfn::testing::weighted_sum;

namespace {

constexpr double kGate = 1e-4;

// Runs the finite-difference check of y = op(x) against sum(y * w).
double check_unary(const std::function<Var(Var)>& op, const Tensor& x, CounterRng& rng)
{
    Tape probe;
    const Shape out_shape = op(probe.constant(x)).shape();
    const Tensor w = random_tensor(out_shape, rng);
    return finite_difference_check([&](Tape& t, Var v) { return weighted_sum(t, op(v), w); }, x);
}

}  // namespace

TEST(Tensor, RejectsInconsistentShapes)
{
    EXPECT_THROW(Tensor({2, 2}, std::vector<double>(3)), std::invalid_argument);
    EXPECT_THROW(Tensor(Shape{2, 0}), std::invalid_argument);
    EXPECT_EQ(Tensor({2, 3}).size(), 6u);
}

TEST(Conv2d, ScalarKernelScales)
{
    Tape t;
    Var y = conv2d(t.constant(Tensor::ones({1, 1, 3, 3})), t.constant(Tensor({1, 1, 1, 1}, 2.0)), std::nullopt);
    EXPECT_EQ(y.value(), Tensor({1, 1, 3, 3}, 2.0));
}

TEST(Conv2d, DilatedSamePaddingKeepsShape)
{
    Tape t;
    Var y = conv2d(t.constant(Tensor({1, 1, 5, 5}, 1.0)), t.constant(Tensor({1, 1, 3, 3}, 1.0)), std::nullopt,
                   Conv2dOptions{1, 2, 2});
    EXPECT_EQ(y.shape(), (Shape{1, 1, 5, 5}));
}

TEST(Conv2d, IdentityKernelIsExact)
{
    CounterRng rng(1);
    const Tensor x = random_tensor({2, 3, 5, 4}, rng);
    Tensor k({3, 3, 1, 1}, 0.0);
    for (std::size_t c = 0; c < 3; ++c) k.at(c, c, 0, 0) = 1.0;
    Tape t;
    EXPECT_EQ(conv2d(t.constant(x), t.constant(k), std::nullopt).value(), x);
}

TEST(Conv2d, MatchesDirectSummation)
{
    CounterRng rng(2);
    for (const Conv2dOptions o : {Conv2dOptions{1, 0, 1}, Conv2dOptions{2, 1, 1}, Conv2dOptions{1, 2, 2}, Conv2dOptions{2, 3, 2}}) {
        const Tensor x = random_tensor({2, 3, 7, 6}, rng);
        const Tensor k = random_tensor({4, 3, 3, 3}, rng);
        Tape t;
        const Tensor y = conv2d(t.constant(x), t.constant(k), std::nullopt, o).value();
        EXPECT_LE(max_abs_diff(y, drfn::testing::reference_conv2d(x, k, o)), 1e-12);
    }
}

TEST(Conv2d, Errors)
{
    Tape t;
    EXPECT_THROW(conv2d(t.constant(Tensor({1, 2, 4, 4})), t.constant(Tensor({1, 3, 3, 3})), std::nullopt),
                 std::invalid_argument);
    EXPECT_THROW(conv2d(t.constant(Tensor({1, 1, 2, 2})), t.constant(Tensor({1, 1, 3, 3})), std::nullopt),
                 std::invalid_argument);
    EXPECT_THROW(conv2d(t.constant(Tensor({1, 1, 4, 4})), t.constant(Tensor({2, 1, 3, 3})), t.constant(Tensor({3}))),
                 std::invalid_argument);
}

TEST(Conv2d, GradientsMatchFiniteDifferences)
{
    CounterRng rng(3);
    const Tensor x = random_tensor({1, 2, 6, 6}, rng);
    const Tensor k = random_tensor({3, 2, 3, 3}, rng);
    const Tensor b = random_tensor({3}, rng);
    for (const Conv2dOptions o : {Conv2dOptions{1, 1, 1}, Conv2dOptions{1, 2, 2}, Conv2dOptions{2, 1, 1}}) {
        Tape probe;
        const Tensor w = random_tensor(conv2d(probe.constant(x), probe.constant(k), std::nullopt, o).shape(), rng);
        EXPECT_LE(finite_difference_check([&](Tape& t, Var v) {
                      return weighted_sum(t, conv2d(v, t.constant(k), t.constant(b), o), w);
                  }, x), kGate);
        EXPECT_LE(finite_difference_check([&](Tape& t, Var v) {
                      return weighted_sum(t, conv2d(t.constant(x), v, t.constant(b), o), w);
                  }, k), kGate);
        EXPECT_LE(finite_difference_check([&](Tape& t, Var v) {
                      return weighted_sum(t, conv2d(t.constant(x), t.constant(k), v, o), w);
                  }, b), kGate);
    }
}

TEST(Conv2d, ShapeFuzz)
{
    CounterRng rng(4);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t h = rng.uniform_int(1, 9), w = rng.uniform_int(1, 9), k = rng.uniform_int(1, 3);
        const Conv2dOptions o{static_cast<std::size_t>(rng.uniform_int(1, 3)), static_cast<std::size_t>(rng.uniform_int(0, 2)),
                              static_cast<std::size_t>(rng.uniform_int(1, 2))};
        const long span = static_cast<long>(o.dilation * (k - 1) + 1);
        const long eh = (static_cast<long>(h + 2 * o.padding) - span) / static_cast<long>(o.stride) + 1;
        const long ew = (static_cast<long>(w + 2 * o.padding) - span) / static_cast<long>(o.stride) + 1;
        Tape t;
        auto run = [&] {
            return conv2d(t.constant(Tensor({1, 2, h, w})), t.constant(Tensor({3, 2, k, k})), std::nullopt, o).shape();
        };
        if (static_cast<long>(h + 2 * o.padding) < span || static_cast<long>(w + 2 * o.padding) < span) {
            EXPECT_THROW(run(), std::invalid_argument);
        } else {
            EXPECT_EQ(run(), (Shape{1, 3, static_cast<std::size_t>(eh), static_cast<std::size_t>(ew)}));
        }
    }
}

TEST(DepthwiseSeparable, DeltaAndIdentityComposeToIdentity)
{
    CounterRng rng(5);
    const Tensor x = random_tensor({1, 3, 5, 5}, rng);
    Tensor dw({3, 1, 3, 3}, 0.0), pw({3, 3, 1, 1}, 0.0);
    for (std::size_t c = 0; c < 3; ++c) {
        dw.at(c, 0, 1, 1) = 1.0;
        pw.at(c, c, 0, 0) = 1.0;
    }
    Tape t;
    EXPECT_EQ(depthwise_separable_conv(t.constant(x), t.constant(dw), t.constant(pw), Conv2dOptions{1, 1, 1}).value(), x);
}

TEST(DepthwiseSeparable, ShapeContract)
{
    Tape t;
    Var y = depthwise_separable_conv(t.constant(Tensor({1, 4, 8, 8}, 1.0)), t.constant(Tensor({4, 1, 3, 3}, 1.0)),
                                     t.constant(Tensor({2, 4, 1, 1}, 1.0)), Conv2dOptions{1, 1, 1});
    EXPECT_EQ(y.shape(), (Shape{1, 2, 8, 8}));
}

// Oracle: grouped conv assembled from one single-channel conv2d per channel,
// then a 1x1 conv2d.
TEST(DepthwiseSeparable, EqualsGroupedConvComposition)
{
    CounterRng rng(6);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t C = 3, H = 6, W = 7;
        const Tensor x = random_tensor({2, C, H, W}, rng);
        const Tensor dw = random_tensor({C, 1, 3, 3}, rng);
        const Tensor pw = random_tensor({4, C, 1, 1}, rng);
        const Conv2dOptions o{1, 1, 1};

        Tensor grouped({2, C, H, W});
        for (std::size_t n = 0; n < 2; ++n)
            for (std::size_t c = 0; c < C; ++c) {
                Tensor plane({1, 1, H, W}), kern({1, 1, 3, 3});
                for (std::size_t i = 0; i < H * W; ++i) plane[i] = x[(n * C + c) * H * W + i];
                for (std::size_t i = 0; i < 9; ++i) kern[i] = dw[c * 9 + i];
                Tape t;
                const Tensor y = conv2d(t.constant(plane), t.constant(kern), std::nullopt, o).value();
                for (std::size_t i = 0; i < H * W; ++i) grouped[(n * C + c) * H * W + i] = y[i];
            }
        Tape t;
        const Tensor oracle = conv2d(t.constant(grouped), t.constant(pw), std::nullopt).value();
        const Tensor got = depthwise_separable_conv(t.constant(x), t.constant(dw), t.constant(pw), o).value();
        EXPECT_LE(max_abs_diff(got, oracle), 1e-12);
    }
}

TEST(DepthwiseSeparable, ChannelMismatchThrows)
{
    Tape t;
    EXPECT_THROW(depthwise_separable_conv(t.constant(Tensor({1, 4, 8, 8})), t.constant(Tensor({3, 1, 3, 3})),
                                          t.constant(Tensor({2, 4, 1, 1})), Conv2dOptions{1, 1, 1}),
                 std::invalid_argument);
    EXPECT_THROW(depthwise_separable_conv(t.constant(Tensor({1, 4, 8, 8})), t.constant(Tensor({4, 1, 3, 3})),
                                          t.constant(Tensor({2, 3, 1, 1})), Conv2dOptions{1, 1, 1}),
                 std::invalid_argument);
}

TEST(DepthwiseSeparable, Gradients)
{
    CounterRng rng(7);
    const Tensor x = random_tensor({1, 3, 5, 5}, rng);
    const Tensor dw = random_tensor({3, 1, 3, 3}, rng);
    const Tensor pw = random_tensor({2, 3, 1, 1}, rng);
    const Tensor w = random_tensor({1, 2, 5, 5}, rng);
    const Conv2dOptions o{1, 1, 1};
    EXPECT_LE(finite_difference_check([&](Tape& t, Var v) {
                  return weighted_sum(t, depthwise_separable_conv(v, t.constant(dw), t.constant(pw), o), w);
              }, x), kGate);
    EXPECT_LE(finite_difference_check([&](Tape& t, Var v) {
                  return weighted_sum(t, depthwise_separable_conv(t.constant(x), v, t.constant(pw), o), w);
              }, dw), kGate);
}

TEST(BatchNorm, EvalWithUnitStatsIsIdentityUpToEpsilon)
{
    CounterRng rng(8);
    const Tensor x = random_tensor({2, 3, 4, 4}, rng);
    BatchNormStats stats(3);
    Tape t;
    const Tensor y =
        batch_norm(t.constant(x), t.constant(Tensor::ones({3})), t.constant(Tensor::zeros({3})), stats, Mode::eval).value();
    // y = x / sqrt(1 + 1e-5): exact formula to 1e-15, identity to within the epsilon term
    for (std::size_t i = 0; i < x.size(); ++i) {
        EXPECT_NEAR(y[i], x[i] / std::sqrt(1.0 + 1e-5), 1e-15);
        EXPECT_NEAR(y[i], x[i], 5e-6 * std::abs(x[i]) + 1e-15);
    }
    EXPECT_EQ(stats.running_mean, Tensor::zeros({3}));
}

TEST(BatchNorm, TrainModeNormalizesAndUpdatesRunningStats)
{
    CounterRng rng(9);
    const Tensor x = random_tensor({2, 3, 4, 4}, rng, -3.0, 5.0);
    const Tensor gamma({3}, std::vector<double>{1.5, -0.5, 2.0});
    const Tensor beta({3}, std::vector<double>{0.1, -0.2, 0.3});
    BatchNormStats stats(3);
    Tape t;
    const Tensor y = batch_norm(t.constant(x), t.constant(gamma), t.constant(beta), stats, Mode::train,
                                BatchNormOptions{0.1, 1e-12}).value();
    const std::size_t m = 2 * 16;
    for (std::size_t c = 0; c < 3; ++c) {
        double mean = 0, xmean = 0;
        for (std::size_t n = 0; n < 2; ++n)
            for (std::size_t i = 0; i < 16; ++i) {
                mean += y.at(n, c, i / 4, i % 4);
                xmean += x.at(n, c, i / 4, i % 4);
            }
        mean /= m;
        xmean /= m;
        double var = 0;
        for (std::size_t n = 0; n < 2; ++n)
            for (std::size_t i = 0; i < 16; ++i) var += std::pow(y.at(n, c, i / 4, i % 4) - mean, 2);
        EXPECT_NEAR(mean, beta[c], 1e-9);
        EXPECT_NEAR(std::sqrt(var / m), std::abs(gamma[c]), 1e-9);
        EXPECT_NEAR(stats.running_mean[c], 0.1 * xmean, 1e-12);
    }
}

TEST(BatchNorm, SingleValuePerChannelInTrainModeThrows)
{
    BatchNormStats stats(2);
    Tape t;
    EXPECT_THROW(batch_norm(t.constant(Tensor({1, 2, 1, 1})), t.constant(Tensor::ones({2})), t.constant(Tensor::zeros({2})),
                            stats, Mode::train),
                 std::invalid_argument);
    EXPECT_NO_THROW(batch_norm(t.constant(Tensor({1, 2, 1, 1})), t.constant(Tensor::ones({2})),
                               t.constant(Tensor::zeros({2})), stats, Mode::eval));
}

TEST(BatchNorm, Gradients)
{
    CounterRng rng(10);
    const Tensor x = random_tensor({2, 3, 4, 4}, rng);
    const Tensor gamma = random_tensor({3}, rng, 0.5, 1.5);
    const Tensor beta = random_tensor({3}, rng);
    const Tensor w = random_tensor({2, 3, 4, 4}, rng);
    for (Mode mode : {Mode::train, Mode::eval}) {
        BatchNormStats stats(3);
        stats.running_var.fill(0.7);
        auto bn = [&](Tape& t, Var xv, Var g, Var b) {
            BatchNormStats scratch = stats;
            return weighted_sum(t, batch_norm(xv, g, b, scratch, mode), w);
        };
        EXPECT_LE(finite_difference_check([&](Tape& t, Var v) { return bn(t, v, t.constant(gamma), t.constant(beta)); }, x), kGate);
        EXPECT_LE(finite_difference_check([&](Tape& t, Var v) { return bn(t, t.constant(x), v, t.constant(beta)); }, gamma), kGate);
        EXPECT_LE(finite_difference_check([&](Tape& t, Var v) { return bn(t, t.constant(x), t.constant(gamma), v); }, beta), kGate);
    }
}

TEST(Activations, Examples)
{
    Tape t;
    EXPECT_EQ(sigmoid(t.constant(Tensor::scalar(0.0))).value().item(), 0.5);
    const Tensor s = softmax(t.constant(Tensor({2}, std::vector<double>{0.0, 0.0})), 0).value();
    EXPECT_EQ(s[0], 0.5);
    EXPECT_EQ(s[1], 0.5);
    const Tensor big = softmax(t.constant(Tensor({2}, std::vector<double>{1000.0, 0.0})), 0).value();
    EXPECT_TRUE(big.all_finite());
    EXPECT_NEAR(big[0], 1.0, 1e-15);
    EXPECT_NEAR(big[1], 0.0, 1e-15);
    const Tensor r = relu(t.constant(Tensor({3}, std::vector<double>{-1.0, 0.0, 2.0}))).value();
    EXPECT_EQ(r, Tensor({3}, std::vector<double>{0.0, 0.0, 2.0}));
    const Tensor sg = sigmoid(t.constant(Tensor({2}, std::vector<double>{-800.0, 800.0}))).value();
    EXPECT_TRUE(sg.all_finite());
    EXPECT_EQ(sg[1], 1.0);
    EXPECT_THROW(softmax(t.constant(Tensor({2, 2})), 2), std::invalid_argument);
}

TEST(Activations, SoftmaxSumsToOneProperty)
{
    CounterRng rng(11);
    for (int trial = 0; trial < 100; ++trial) {
        const Shape shape{static_cast<std::size_t>(rng.uniform_int(1, 3)), static_cast<std::size_t>(rng.uniform_int(1, 5)),
                          static_cast<std::size_t>(rng.uniform_int(1, 4))};
        const std::size_t axis = static_cast<std::size_t>(rng.uniform_int(0, 2));
        const Tensor x = random_tensor(shape, rng, -1e4, 1e4);
        Tape t;
        const Tensor y = softmax(t.constant(x), axis).value();
        std::size_t outer = 1, inner = 1;
        for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
        for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
        for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t i = 0; i < inner; ++i) {
                double s = 0.0;
                for (std::size_t a = 0; a < shape[axis]; ++a) s += y[(o * shape[axis] + a) * inner + i];
                EXPECT_NEAR(s, 1.0, 1e-12);
            }
    }
}

TEST(Activations, Gradients)
{
    CounterRng rng(12);
    const Tensor x = random_tensor({2, 3, 4}, rng, -2.0, 2.0);
    EXPECT_LE(check_unary([](Var v) { return relu(v); }, x, rng), kGate);
    EXPECT_LE(check_unary([](Var v) { return sigmoid(v); }, x, rng), kGate);
    EXPECT_LE(check_unary([](Var v) { return softmax(v, 1); }, x, rng), kGate);
    EXPECT_LE(check_unary([](Var v) { return softmax(v, 2); }, x, rng), kGate);
}

TEST(GlobalAvgPool, Examples)
{
    Tape t;
    EXPECT_EQ(global_avg_pool(t.constant(Tensor({1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4}))).value().item(), 2.5);
    EXPECT_EQ(global_avg_pool(t.constant(Tensor({1, 1, 3, 5}, 1.75))).value().item(), 1.75);

    Var x = t.variable(Tensor({2, 3, 4, 5}, 0.3));
    t.backward(sum(global_avg_pool(x)));
    EXPECT_EQ(t.grad(x), Tensor({2, 3, 4, 5}, 1.0 / 20.0));
}

TEST(BilinearUpsample, FactorOneIsIdentity)
{
    CounterRng rng(13);
    const Tensor x = random_tensor({2, 3, 5, 4}, rng);
    Tape t;
    EXPECT_EQ(bilinear_upsample(t.constant(x), 1).value(), x);
}

TEST(BilinearUpsample, ConstantStaysConstant)
{
    Tape t;
    EXPECT_EQ(bilinear_upsample(t.constant(Tensor({1, 2, 3, 4}, 0.625)), 2).value(), Tensor({1, 2, 6, 8}, 0.625));
}

TEST(BilinearUpsample, HalfPixelWeights)
{
    // align_corners=false sampling of [[0, 1], [2, 3]] at 2x
    Tape t;
    const Tensor y = bilinear_upsample(t.constant(Tensor({1, 1, 2, 2}, std::vector<double>{0, 1, 2, 3})), 2).value();
    const std::vector<double> expected{0.0, 0.25, 0.75, 1.0, 0.5,  0.75, 1.25, 1.5,
                                       1.5, 1.75, 2.25, 2.5, 2.0, 2.25, 2.75, 3.0};
    EXPECT_EQ(y, Tensor({1, 1, 4, 4}, expected));
}

TEST(BilinearUpsample, Gradients)
{
    CounterRng rng(14);
    const Tensor x = random_tensor({1, 2, 3, 3}, rng);
    EXPECT_LE(check_unary([](Var v) { return bilinear_upsample(v, 2); }, x, rng), kGate);
    EXPECT_LE(check_unary([](Var v) { return bilinear_upsample(v, 4); }, x, rng), kGate);
}

TEST(Elementwise, ConcatAddMulChannelwise)
{
    CounterRng rng(15);
    Tape t;
    EXPECT_EQ(concat(t.constant(Tensor({1, 2, 4, 4})), t.constant(Tensor({1, 3, 4, 4}))).shape(), (Shape{1, 5, 4, 4}));
    EXPECT_THROW(concat(t.constant(Tensor({1, 2, 4, 4})), t.constant(Tensor({1, 3, 4, 5}))), std::invalid_argument);
    EXPECT_THROW(add(t.constant(Tensor({1, 2})), t.constant(Tensor({2, 1}))), std::invalid_argument);

    const Tensor x = random_tensor({2, 3, 4, 4}, rng);
    EXPECT_EQ(mul_channelwise(t.constant(x), t.constant(Tensor::ones({2, 3, 1, 1}))).value(), x);
    EXPECT_EQ(mul_channelwise(t.constant(x), t.constant(Tensor::zeros({2, 3, 1, 1}))).value(), Tensor::zeros(x.shape()));
    EXPECT_THROW(mul_channelwise(t.constant(x), t.constant(Tensor::ones({2, 2, 1, 1}))), std::invalid_argument);
}

TEST(Elementwise, Gradients)
{
    CounterRng rng(16);
    const Tensor a = random_tensor({1, 2, 3, 3}, rng);
    const Tensor b = random_tensor({1, 3, 3, 3}, rng);
    const Tensor c = random_tensor({1, 2, 3, 3}, rng);
    const Tensor g = random_tensor({1, 2, 1, 1}, rng);
    EXPECT_LE(check_unary([&](Var v) { return concat(v, v.tape->constant(b)); }, a, rng), kGate);
    EXPECT_LE(check_unary([&](Var v) { return concat(v.tape->constant(a), v); }, b, rng), kGate);
    EXPECT_LE(check_unary([&](Var v) { return add(v, v.tape->constant(c)); }, a, rng), kGate);
    EXPECT_LE(check_unary([&](Var v) { return mul(v, v.tape->constant(c)); }, a, rng), kGate);
    EXPECT_LE(check_unary([&](Var v) { return mul_channelwise(v, v.tape->constant(g)); }, a, rng), kGate);
    EXPECT_LE(check_unary([&](Var v) { return mul_channelwise(v.tape->constant(a), v); }, g, rng), kGate);
    EXPECT_LE(check_unary([&](Var v) { return slice(v, 1, 1, 2); }, b, rng), kGate);
}

TEST(CrossEntropy, Examples)
{
    std::vector<int> labels(9, 2);
    Tape t;
    EXPECT_NEAR(cross_entropy_loss(t.constant(Tensor({1, 4, 3, 3}, 0.0)), labels).value().item(), std::log(4.0), 1e-15);
    EXPECT_NEAR(std::log(4.0), 1.386294, 1e-6);

    Tensor saturated({1, 4, 3, 3}, 0.0);
    for (std::size_t p = 0; p < 9; ++p) saturated[2 * 9 + p] = 1e3;
    EXPECT_NEAR(cross_entropy_loss(t.constant(saturated), labels).value().item(), 0.0, 1e-12);
}

TEST(CrossEntropy, IgnoredPixelsAndErrors)
{
    Tape t;
    Tensor z({1, 2, 1, 2}, std::vector<double>{3.0, 0.0, 0.0, 0.0});
    const std::vector<int> labels{0, 255};
    const double expected = std::log(1.0 + std::exp(-3.0));
    EXPECT_NEAR(cross_entropy_loss(t.constant(z), labels, 255).value().item(), expected, 1e-15);
    EXPECT_THROW(cross_entropy_loss(t.constant(z), std::vector<int>{0, 2}), std::invalid_argument);
    EXPECT_THROW(cross_entropy_loss(t.constant(z), std::vector<int>{255, 255}, 255), std::invalid_argument);
}

TEST(CrossEntropy, Gradients)
{
    CounterRng rng(17);
    const Tensor z = random_tensor({1, 4, 3, 3}, rng, -2.0, 2.0);
    std::vector<int> labels(9);
    for (auto& l : labels) l = rng.uniform_int(0, 3);
    labels[4] = -1;
    EXPECT_LE(finite_difference_check([&](Tape&, Var v) { return cross_entropy_loss(v, labels, -1); }, z), kGate);
}

TEST(Backward, LinearAndQuadratic)
{
    CounterRng rng(18);
    const Tensor x0 = random_tensor({2, 3}, rng);
    {
        Tape t;
        Var x = t.variable(x0);
        t.backward(sum(x));
        EXPECT_EQ(t.grad(x), Tensor::ones({2, 3}));
    }
    {
        Tape t;
        Var x = t.variable(x0);
        t.backward(sum(mul(x, x)));
        Tensor expected = x0;
        for (auto& v : expected.data()) v *= 2.0;
        EXPECT_EQ(t.grad(x), expected);
    }
}

TEST(Backward, NonScalarLossThrows)
{
    Tape t;
    Var x = t.variable(Tensor({2}, 1.0));
    EXPECT_THROW(t.backward(x), std::invalid_argument);
}

TEST(Backward, AccumulatesIntoParametersAcrossCalls)
{
    Parameter p("p", Tensor({3}, 2.0), false);
    Tape t;
    Var loss = sum(scale(t.param(p), 3.0));
    t.backward(loss);
    EXPECT_EQ(p.grad, Tensor({3}, 3.0));
    t.backward(loss);
    EXPECT_EQ(p.grad, Tensor({3}, 6.0));
    // non-trainable values are never touched by backward
    EXPECT_EQ(p.value, Tensor({3}, 2.0));
}

TEST(FiniteDifference, LinearIsExactAndSmoothIsTight)
{
    CounterRng rng(19);
    // dyadic values keep every partial sum exact, so the linear case has no rounding at all
    Tensor x({3, 4});
    for (auto& v : x.data()) v = rng.uniform_int(-16, 16) / 8.0;
    EXPECT_EQ(finite_difference_check([](Tape&, Var v) { return sum(v); }, x), 0.0);
    EXPECT_LE(finite_difference_check([](Tape&, Var v) { return sum(sigmoid(v)); }, random_tensor({3, 4}, rng)), 1e-6);
}

TEST(FiniteDifference, ReportSeparatesKinksFromWrongGradients)
{
    // relu at 2e-6: the +-2^-17 stencil straddles the kink, a 64x finer one does not
    const Tensor x({2}, std::vector<double>{2e-6, 0.5});
    const auto kink = finite_difference_report([](Tape&, Var v) { return sum(relu(v)); }, x);
    EXPECT_GT(kink.max_error, 1e-4);
    EXPECT_EQ(kink.nonsmooth, 1u);
    EXPECT_EQ(kink.unexplained, 0u);

    // a backward rule that is off by 10% is never attributed to a kink
    auto bad_square = [](Tape& t, Var v) {
        Tensor y = v.value();
        for (auto& e : y.data()) e *= e;
        Var out = t.record(y, {v}, [v](Tape& tape, const Tensor& g) {
            Tensor& gx = tape.grad_of(v);
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += 2.2 * v.value()[i] * g[i];
        });
        return sum(out);
    };
    const auto wrong = finite_difference_report(bad_square, Tensor({3}, std::vector<double>{0.3, -0.7, 1.1}));
    EXPECT_EQ(wrong.nonsmooth, 0u);
    EXPECT_EQ(wrong.unexplained, 3u);
    EXPECT_EQ(wrong.max_error, finite_difference_check(bad_square, Tensor({3}, std::vector<double>{0.3, -0.7, 1.1})));
}
