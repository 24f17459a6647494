#include "drfn/model/blocks.hpp"

#include <stdexcept>
#include <string>

#include "drfn/model/config.hpp"

namespace drfn {

ResPath::ResPath(Initializer& init, std::size_t in, std::size_t out, std::size_t stride, std::size_t dilation)
    : conv1(init, in, out, 3, Conv2dOptions{stride, dilation, dilation}, false),
      bn1(out),
      conv2(init, out, out, 3, Conv2dOptions{1, dilation, dilation}, false),
      bn2(out)
{}

Var ResPath::forward(Tape& t, Var x, Mode mode)
{
    Var h = relu(bn1.forward(t, conv1.forward(t, x), mode));
    return relu(bn2.forward(t, conv2.forward(t, h), mode));
}

void ResPath::visit(const std::string& prefix, const StateVisitor& v)
{
    conv1.visit(join_name(prefix, "conv1"), v);
    bn1.visit(join_name(prefix, "bn1"), v);
    conv2.visit(join_name(prefix, "conv2"), v);
    bn2.visit(join_name(prefix, "bn2"), v);
}

void ResPath::freeze()
{
    set_trainable(*this, false);
    bn1.frozen = bn2.frozen = true;
}

Shortcut::Shortcut(Initializer& init, std::size_t in, std::size_t out, std::size_t stride)
{
    if (in == out && stride == 1) return;
    conv.emplace(init, in, out, 1, Conv2dOptions{stride, 0, 1}, false);
    bn.emplace(out);
}

Var Shortcut::forward(Tape& t, Var x, Mode mode)
{
    if (is_identity()) return x;
    return bn->forward(t, conv->forward(t, x), mode);
}

void Shortcut::visit(const std::string& prefix, const StateVisitor& v)
{
    if (is_identity()) return;
    conv->visit(join_name(prefix, "conv"), v);
    bn->visit(join_name(prefix, "bn"), v);
}

void Shortcut::freeze()
{
    if (is_identity()) return;
    set_trainable(*this, false);
    bn->frozen = true;
}

SelectorHead::SelectorHead(Initializer& init, std::size_t c, std::size_t reduction_ratio)
    : channels(c),
      conv1(init, 2 * c, bottleneck_width(2 * c, reduction_ratio), 1, {}, false),
      bn(bottleneck_width(2 * c, reduction_ratio)),
      conv2(init, bottleneck_width(2 * c, reduction_ratio), 2 * c, 1, {}, true, WeightInit::zeros)
{}

void SelectorHead::visit(const std::string& prefix, const StateVisitor& v)
{
    conv1.visit(join_name(prefix, "conv1"), v);
    bn.visit(join_name(prefix, "bn"), v);
    conv2.visit(join_name(prefix, "conv2"), v);
}

std::pair<Var, Var> select_weights(SelectorHead& s, Tape& t, Var f_t, Var f_f, Mode mode)
{
    if (f_t.shape() != f_f.shape())
        throw std::invalid_argument("select_weights: path outputs differ in shape: " + shape_str(f_t.shape()) + " vs " +
                                    shape_str(f_f.shape()));
    if (f_t.value().rank() != 4 || f_t.value().dim(1) != s.channels)
        throw std::invalid_argument("select_weights: expected " + std::to_string(s.channels) + " channels, got shape " +
                                    shape_str(f_t.shape()));
    const std::size_t N = f_t.value().dim(0), C = s.channels;
    Var pooled = global_avg_pool(concat(f_t, f_f, 1));
    Var h = relu(s.bn.forward(t, s.conv1.forward(t, pooled), mode));
    Var logits = reshape(s.conv2.forward(t, h), {N, C, 2, 1});
    Var w = softmax(logits, 2);
    return {reshape(slice(w, 2, 0, 1), {N, C, 1, 1}), reshape(slice(w, 2, 1, 1), {N, C, 1, 1})};
}

DSBlock::DSBlock(Initializer& init, std::size_t in, std::size_t out, std::size_t stride, std::size_t dilation,
                 std::size_t reduction_ratio, bool dsm_)
    : dsm(dsm_), trainable_path(init, in, out, stride, dilation), shortcut(init, in, out, stride)
{
    if (!dsm) return;
    frozen_path = ResPath(init, in, out, stride, dilation);
    selector = SelectorHead(init, out, reduction_ratio);
    frozen_path.freeze();
    shortcut.freeze();
}

Var DSBlock::forward(Tape& t, Var x, Mode mode, DsTrace* trace)
{
    Var residual = shortcut.forward(t, x, mode);
    Var p_t = trainable_path.forward(t, x, mode);
    if (!dsm) {
        if (p_t.shape() != residual.shape())
            throw std::invalid_argument("ds_block_forward: path output " + shape_str(p_t.shape()) +
                                        " does not match shortcut " + shape_str(residual.shape()));
        return add(p_t, residual);
    }
    Var p_f = frozen_path.forward(t, x, mode);

    Var s_t, s_f;
    if (forced_select) {
        const Shape ws{p_t.value().dim(0), p_t.value().dim(1), 1, 1};
        s_t = t.constant(Tensor(ws, *forced_select));
        s_f = t.constant(Tensor(ws, 1.0 - *forced_select));
    } else {
        std::tie(s_t, s_f) = select_weights(selector, t, p_t, p_f, mode);
    }
    if (trace) {
        double m = 0.0;
        for (double v : s_t.value().data()) m += v;
        trace->mean_select_trainable = m / static_cast<double>(s_t.value().size());
    }
    return add(add(mul_channelwise(p_t, s_t), mul_channelwise(p_f, s_f)), residual);
}

void DSBlock::visit(const std::string& prefix, const StateVisitor& v)
{
    if (dsm) {
        trainable_path.visit(join_name(prefix, "pt"), v);
        frozen_path.visit(join_name(prefix, "pf"), v);
        selector.visit(join_name(prefix, "sel"), v);
    } else {
        trainable_path.visit(join_name(prefix, "path"), v);
    }
    shortcut.visit(join_name(prefix, "shortcut"), v);
}

DRFFBlock::DRFFBlock(Initializer& init, std::size_t low, std::size_t high, std::size_t reduction_ratio)
    : low_channels(low),
      high_channels(high),
      fusion(init, low + high, high),
      guide_conv1(init, high, bottleneck_width(high, reduction_ratio), 1, {}, false),
      guide_bn(bottleneck_width(high, reduction_ratio)),
      guide_conv2(init, bottleneck_width(high, reduction_ratio), high, 1, {}, true, WeightInit::zeros)
{}

Var DRFFBlock::guidance_weight(Tape& t, Var high_up, Mode mode)
{
    if (high_up.value().rank() != 4 || high_up.value().dim(1) != high_channels)
        throw std::invalid_argument("guidance_weight: expected " + std::to_string(high_channels) +
                                    " channels, got shape " + shape_str(high_up.shape()));
    Var h = relu(guide_bn.forward(t, guide_conv1.forward(t, global_avg_pool(high_up)), mode));
    return sigmoid(guide_conv2.forward(t, h));
}

Var DRFFBlock::forward(Tape& t, Var low, Var high, Mode mode)
{
    const Tensor& l = low.value();
    const Tensor& h = high.value();
    if (l.rank() != 4 || h.rank() != 4 || l.dim(0) != h.dim(0) || l.dim(2) != 2 * h.dim(2) || l.dim(3) != 2 * h.dim(3))
        throw std::invalid_argument("drff_forward: low features " + shape_str(l.shape()) +
                                    " must be exactly twice the spatial size of high features " + shape_str(h.shape()));
    if (l.dim(1) != low_channels || h.dim(1) != high_channels)
        throw std::invalid_argument("drff_forward: channel mismatch, expected low " + std::to_string(low_channels) +
                                    " / high " + std::to_string(high_channels));
    Var up = bilinear_upsample(high, 2);
    Var fused = fusion.forward(t, concat(low, up, 1));
    Var g = guidance_weight(t, up, mode);
    return add(up, mul_channelwise(fused, g));
}

void DRFFBlock::visit(const std::string& prefix, const StateVisitor& v)
{
    fusion.visit(join_name(prefix, "fusion"), v);
    guide_conv1.visit(join_name(prefix, "guide.conv1"), v);
    guide_bn.visit(join_name(prefix, "guide.bn"), v);
    guide_conv2.visit(join_name(prefix, "guide.conv2"), v);
}

SppNeck::SppNeck(Initializer& init, std::size_t channels, const std::vector<std::size_t>& dilations)
{
    const std::size_t width = std::max<std::size_t>(kMinBottleneck, channels / 2);
    for (std::size_t d : dilations) {
        if (d == 1)
            branches.emplace_back(init, channels, width, 1, Conv2dOptions{});
        else
            branches.emplace_back(init, channels, width, 3, Conv2dOptions{1, d, d});
    }
    image_pool = Conv2d(init, channels, width, 1, {}, true);
    project = ConvBnRelu(init, width * (dilations.size() + 1), channels, 1, {});
}

Var SppNeck::forward(Tape& t, Var x, Mode mode)
{
    const Tensor& in = x.value();
    if (in.rank() != 4) throw std::invalid_argument("spp_forward: expected N x C x H x W input");
    std::optional<Var> cat;
    for (auto& b : branches) {
        Var y = b.forward(t, x, mode);
        cat = cat ? concat(*cat, y, 1) : y;
    }
    Var pooled = relu(image_pool.forward(t, global_avg_pool(x)));
    const Shape spread{in.dim(0), pooled.value().dim(1), in.dim(2), in.dim(3)};
    Var image_level = mul_channelwise(t.constant(Tensor::ones(spread)), pooled);
    return project.forward(t, concat(*cat, image_level, 1), mode);
}

void SppNeck::visit(const std::string& prefix, const StateVisitor& v)
{
    for (std::size_t i = 0; i < branches.size(); ++i) branches[i].visit(join_name(prefix, "branch" + std::to_string(i)), v);
    image_pool.visit(join_name(prefix, "image_pool"), v);
    project.visit(join_name(prefix, "project"), v);
}

}  // namespace drfn
