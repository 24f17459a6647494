#include "drfn/model/layers.hpp"

#include <cmath>

namespace drfn {

Tensor Initializer::kaiming(const Shape& shape, std::size_t fan_in)
{
    CounterRng rng(seed_, stream_++);
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    Tensor t(shape);
    for (auto& v : t.data()) v = stddev * rng.normal();
    return t;
}

Conv2d::Conv2d(Initializer& init, std::size_t in, std::size_t out, std::size_t kernel, Conv2dOptions o, bool with_bias,
               WeightInit w)
    : opt(o)
{
    const Shape shape{out, in, kernel, kernel};
    weight = Parameter("weight", w == WeightInit::zeros ? Tensor::zeros(shape) : init.kaiming(shape, in * kernel * kernel));
    if (with_bias) bias = Parameter("bias", Tensor::zeros({out}));
}

Var Conv2d::forward(Tape& t, Var x)
{
    std::optional<Var> b;
    if (bias) b = t.param(*bias);
    return conv2d(x, t.param(weight), b, opt);
}

void Conv2d::visit(const std::string& prefix, const StateVisitor& v)
{
    v.param(join_name(prefix, "weight"), weight);
    if (bias) v.param(join_name(prefix, "bias"), *bias);
}

BatchNorm2d::BatchNorm2d(std::size_t channels)
    : gamma("gamma", Tensor::ones({channels})), beta("beta", Tensor::zeros({channels})), stats(channels)
{}

Var BatchNorm2d::forward(Tape& t, Var x, Mode mode)
{
    return batch_norm(x, t.param(gamma), t.param(beta), stats, frozen ? Mode::eval : mode, opt);
}

void BatchNorm2d::visit(const std::string& prefix, const StateVisitor& v)
{
    v.param(join_name(prefix, "gamma"), gamma);
    v.param(join_name(prefix, "beta"), beta);
    v.buffer(join_name(prefix, "running_mean"), stats.running_mean);
    v.buffer(join_name(prefix, "running_var"), stats.running_var);
}

ConvBnRelu::ConvBnRelu(Initializer& init, std::size_t in, std::size_t out, std::size_t kernel, Conv2dOptions opt)
    : conv(init, in, out, kernel, opt, false), bn(out)
{}

Var ConvBnRelu::forward(Tape& t, Var x, Mode mode)
{
    return relu(bn.forward(t, conv.forward(t, x), mode));
}

void ConvBnRelu::visit(const std::string& prefix, const StateVisitor& v)
{
    conv.visit(join_name(prefix, "conv"), v);
    bn.visit(join_name(prefix, "bn"), v);
}

SepConv::SepConv(Initializer& init, std::size_t in, std::size_t out)
    : depthwise("depthwise", init.kaiming({in, 1, 3, 3}, 9)), pointwise("pointwise", init.kaiming({out, in, 1, 1}, in))
{}

Var SepConv::forward(Tape& t, Var x)
{
    return depthwise_separable_conv(x, t.param(depthwise), t.param(pointwise), Conv2dOptions{1, 1, 1});
}

void SepConv::visit(const std::string& prefix, const StateVisitor& v)
{
    v.param(join_name(prefix, "depthwise"), depthwise);
    v.param(join_name(prefix, "pointwise"), pointwise);
}

}  // namespace drfn
