#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>

#include "drfn/autodiff.hpp"
#include "drfn/ops.hpp"
#include "drfn/rng.hpp"

namespace drfn {

// Walks learnable parameters and non-learnable buffers with hierarchical names.
struct StateVisitor {
    std::function<void(const std::string&, Parameter&)> param;
    std::function<void(const std::string&, Tensor&)> buffer;
};

inline std::string join_name(const std::string& prefix, const std::string& name)
{
    return prefix.empty() ? name : prefix + "." + name;
}

// Hands out independent seeded streams in construction order.
class Initializer {
public:
    explicit Initializer(std::uint64_t seed) : seed_(seed) {}

    // Kaiming-normal with fan-in scaling.
    Tensor kaiming(const Shape& shape, std::size_t fan_in);

private:
    std::uint64_t seed_;
    std::uint64_t stream_ = 0;
};

enum class WeightInit { kaiming, zeros };

struct Conv2d {
    Parameter weight;
    std::optional<Parameter> bias;
    Conv2dOptions opt;

    Conv2d() = default;
    Conv2d(Initializer& init, std::size_t in, std::size_t out, std::size_t kernel, Conv2dOptions opt, bool with_bias,
           WeightInit w = WeightInit::kaiming);

    Var forward(Tape& t, Var x);
    void visit(const std::string& prefix, const StateVisitor& v);
};

struct BatchNorm2d {
    Parameter gamma;
    Parameter beta;
    BatchNormStats stats;
    BatchNormOptions opt;
    // Frozen layers always normalize with running statistics.
    bool frozen = false;

    BatchNorm2d() = default;
    explicit BatchNorm2d(std::size_t channels);

    Var forward(Tape& t, Var x, Mode mode);
    void visit(const std::string& prefix, const StateVisitor& v);
};

struct ConvBnRelu {
    Conv2d conv;
    BatchNorm2d bn;

    ConvBnRelu() = default;
    ConvBnRelu(Initializer& init, std::size_t in, std::size_t out, std::size_t kernel, Conv2dOptions opt);

    Var forward(Tape& t, Var x, Mode mode);
    void visit(const std::string& prefix, const StateVisitor& v);
};

// 3x3 depthwise + 1x1 pointwise, spatial size preserved.
struct SepConv {
    Parameter depthwise;
    Parameter pointwise;

    SepConv() = default;
    SepConv(Initializer& init, std::size_t in, std::size_t out);

    Var forward(Tape& t, Var x);
    void visit(const std::string& prefix, const StateVisitor& v);
};

// Marks every parameter reachable through visit() as (non-)trainable.
template <typename Layer>
void set_trainable(Layer& layer, bool trainable)
{
    layer.visit("", StateVisitor{[trainable](const std::string&, Parameter& p) { p.trainable = trainable; },
                                 [](const std::string&, Tensor&) {}});
}

}  // namespace drfn
