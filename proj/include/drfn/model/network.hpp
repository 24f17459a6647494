#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "drfn/model/blocks.hpp"
#include "drfn/model/config.hpp"

namespace drfn {

// Raised when parameters cannot be transferred between networks or loaded
// from a checkpoint; names the first offending parameter.
class CheckpointIncompatible : public std::runtime_error {
public:
    CheckpointIncompatible(std::string param, const std::string& why)
        : std::runtime_error("incompatible checkpoint at '" + param + "': " + why), param_(std::move(param))
    {}
    const std::string& parameter() const { return param_; }

private:
    std::string param_;
};

struct ForwardTrace {
    Shape encoder_shape;
    std::array<DsTrace, 4> blocks{};
};

// Encoder (stride-4 conv stem, four DSBlocks with strides 1,2,2,1 and
// dilation 2 in the last), SPP neck, two DRFF decoder blocks fed by the
// 1/8 and 1/4 skips, 1x1 classifier and a final 4x bilinear upsample.
class DRFN {
public:
    explicit DRFN(ModelConfig config, std::uint64_t seed = 0);

    const ModelConfig& config() const { return config_; }

    // image N x 3 x H x W with H, W divisible by 16; returns N x K x H x W logits.
    Var forward(Tape& t, Var image, Mode mode, ForwardTrace* trace = nullptr);
    // Eval-mode logits for a plain tensor.
    Tensor infer(const Tensor& image);

    void visit(const StateVisitor& v);
    std::vector<Parameter*> parameters();
    std::vector<Parameter*> trainable_parameters();
    void zero_grad();

    ConvBnRelu stem1;
    ConvBnRelu stem2;
    std::array<DSBlock, 4> blocks;
    SppNeck spp;
    DRFFBlock drff_mid;   // 1/16 -> 1/8, skip from block 2
    DRFFBlock drff_fine;  // 1/8 -> 1/4, skip from block 1
    Conv2d classifier;

private:
    ModelConfig config_;
};

// Arms the dynamic select mechanism: every encoder block of the pretrained
// single-path network is copied into both the frozen and the trainable path,
// projection shortcuts are copied and frozen, and selector heads start with a
// zeroed final layer so that S_t = S_f = 0.5. All other parameters and BN
// statistics are copied and stay trainable.
DRFN init_finetune(DRFN pretrained, std::uint64_t seed = 0);

}  // namespace drfn
