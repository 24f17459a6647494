#pragma once

#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "drfn/model/layers.hpp"

namespace drfn {

// Two 3x3 conv + BN + relu layers. Padding equals the dilation so stride-1
// paths preserve spatial size.
struct ResPath {
    Conv2d conv1;
    BatchNorm2d bn1;
    Conv2d conv2;
    BatchNorm2d bn2;

    ResPath() = default;
    ResPath(Initializer& init, std::size_t in, std::size_t out, std::size_t stride, std::size_t dilation);

    Var forward(Tape& t, Var x, Mode mode);
    void visit(const std::string& prefix, const StateVisitor& v);
    void freeze();
};

// Identity, or 1x1 projection + BN when channels or stride change.
struct Shortcut {
    std::optional<Conv2d> conv;
    std::optional<BatchNorm2d> bn;

    Shortcut() = default;
    Shortcut(Initializer& init, std::size_t in, std::size_t out, std::size_t stride);

    bool is_identity() const { return !conv.has_value(); }
    Var forward(Tape& t, Var x, Mode mode);
    void visit(const std::string& prefix, const StateVisitor& v);
    void freeze();
};

// Produces the per-channel path weights (S_t, S_f) from the two path outputs:
// concat -> GAP -> 1x1 conv -> BN -> relu -> 1x1 conv -> reshape C x 2 ->
// softmax over the pair -> split.
struct SelectorHead {
    std::size_t channels = 0;
    Conv2d conv1;
    BatchNorm2d bn;
    Conv2d conv2;

    SelectorHead() = default;
    SelectorHead(Initializer& init, std::size_t channels, std::size_t reduction_ratio);

    std::size_t hidden_width() const { return conv1.weight.value.dim(0); }
    void visit(const std::string& prefix, const StateVisitor& v);
};

std::pair<Var, Var> select_weights(SelectorHead& selector, Tape& t, Var f_t, Var f_f, Mode mode);

struct DsTrace {
    double mean_select_trainable = 0.5;
};

// Encoder residual block. Without DSM it is a plain residual block with a
// single trainable path. With DSM it holds a frozen copy and a trainable copy
// of that path and mixes them as S_t * P_t(x) + S_f * P_f(x) + shortcut(x).
struct DSBlock {
    bool dsm = false;
    ResPath trainable_path;
    ResPath frozen_path;
    SelectorHead selector;
    Shortcut shortcut;
    // Test hook: when set, S_t is this constant and S_f = 1 - S_t.
    std::optional<double> forced_select;

    DSBlock() = default;
    DSBlock(Initializer& init, std::size_t in, std::size_t out, std::size_t stride, std::size_t dilation,
            std::size_t reduction_ratio, bool dsm);

    Var forward(Tape& t, Var x, Mode mode, DsTrace* trace = nullptr);
    void visit(const std::string& prefix, const StateVisitor& v);
};

// Decoder block: output = up(high) + g * SepConv3x3(concat(low, up(high))),
// with guidance g from GAP + two 1x1 convs (BN, relu between) + sigmoid over up(high).
struct DRFFBlock {
    std::size_t low_channels = 0;
    std::size_t high_channels = 0;
    SepConv fusion;
    Conv2d guide_conv1;
    BatchNorm2d guide_bn;
    Conv2d guide_conv2;

    DRFFBlock() = default;
    DRFFBlock(Initializer& init, std::size_t low_channels, std::size_t high_channels, std::size_t reduction_ratio);

    std::size_t bottleneck() const { return guide_conv1.weight.value.dim(0); }
    Var guidance_weight(Tape& t, Var high_up, Mode mode);
    Var forward(Tape& t, Var low, Var high, Mode mode);
    void visit(const std::string& prefix, const StateVisitor& v);
};

// Spatial pyramid pooling: parallel 1x1 / dilated 3x3 branches plus an
// image-level pooling branch, concatenated and projected back to C channels.
struct SppNeck {
    std::vector<ConvBnRelu> branches;
    Conv2d image_pool;
    ConvBnRelu project;

    SppNeck() = default;
    SppNeck(Initializer& init, std::size_t channels, const std::vector<std::size_t>& dilations);

    std::size_t branch_count() const { return branches.size() + 1; }
    Var forward(Tape& t, Var x, Mode mode);
    void visit(const std::string& prefix, const StateVisitor& v);
};

}  // namespace drfn
