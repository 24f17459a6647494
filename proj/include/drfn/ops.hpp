#pragma once

#include <cstddef>
#include <optional>
#include <span>

#include "drfn/autodiff.hpp"

namespace drfn {

struct Conv2dOptions {
    std::size_t stride = 1;
    std::size_t padding = 0;
    std::size_t dilation = 1;
};

// Output spatial extent of a convolution; throws invalid_argument when < 1.
std::size_t conv_output_size(std::size_t in, std::size_t kernel, const Conv2dOptions& opt);

// Cross-correlation (no kernel flip). input N x Cin x H x W, kernel Cout x Cin x Kh x Kw,
// optional bias of Cout elements.
Var conv2d(Var input, Var kernel, std::optional<Var> bias, const Conv2dOptions& opt = {});

// Per-channel spatial convolution, kernel C x 1 x Kh x Kw.
Var depthwise_conv2d(Var input, Var kernel, const Conv2dOptions& opt = {});

// depthwise_conv2d followed by a 1x1 conv2d (pointwise kernel Cout x C x 1 x 1).
Var depthwise_separable_conv(Var input, Var depthwise_kernel, Var pointwise_kernel, const Conv2dOptions& opt = {});

enum class Mode { train, eval };

struct BatchNormStats {
    Tensor running_mean;
    Tensor running_var;

    BatchNormStats() = default;
    explicit BatchNormStats(std::size_t channels)
        : running_mean(Tensor::zeros({channels})), running_var(Tensor::ones({channels}))
    {}
};

struct BatchNormOptions {
    double momentum = 0.1;
    double epsilon = 1e-5;
};

// Train mode normalizes with biased batch statistics and updates the running
// statistics (running_var receives the unbiased batch variance). Eval mode uses
// the running statistics and leaves them untouched.
Var batch_norm(Var input, Var gamma, Var beta, BatchNormStats& stats, Mode mode, const BatchNormOptions& opt = {});

Var relu(Var x);
Var sigmoid(Var x);
Var softmax(Var x, std::size_t axis);

Var global_avg_pool(Var x);

// align_corners=false: output pixel o samples input coordinate
// (o + 0.5) / factor - 0.5, clamped at 0 and at the last row/column.
Var bilinear_upsample(Var x, std::size_t factor);

Var concat(Var a, Var b, std::size_t axis = 1);
Var add(Var a, Var b);
Var mul(Var a, Var b);
// features N x C x H x W scaled by weights N x C x 1 x 1
Var mul_channelwise(Var features, Var weights);
Var scale(Var x, double s);
Var sum(Var x);
Var reshape(Var x, Shape shape);
// Elements [start, start + length) along axis.
Var slice(Var x, std::size_t axis, std::size_t start, std::size_t length);

// Mean over non-ignored pixels of -log softmax(logits)[label].
// logits N x K x H x W, labels N*H*W entries in row-major N,H,W order.
Var cross_entropy_loss(Var logits, std::span<const int> labels, std::optional<int> ignore_label = std::nullopt);

}  // namespace drfn
