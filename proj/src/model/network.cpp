#include "drfn/model/network.hpp"

#include <map>

namespace drfn {

namespace {

void name_parameters(DRFN& net)
{
    net.visit(StateVisitor{[](const std::string& name, Parameter& p) { p.name = name; },
                           [](const std::string&, Tensor&) {}});
}

}  // namespace

DRFN::DRFN(ModelConfig config, std::uint64_t seed)
    : config_(std::move(config))
{
    config_.validate();
    Initializer init(seed);
    const auto& c = config_.stage_channels;
    const std::size_t r = config_.reduction_ratio;
    const bool dsm = config_.dsm_enabled;

    stem1 = ConvBnRelu(init, 3, c[0], 3, Conv2dOptions{2, 1, 1});
    stem2 = ConvBnRelu(init, c[0], c[0], 3, Conv2dOptions{2, 1, 1});
    blocks[0] = DSBlock(init, c[0], c[0], 1, 1, r, dsm);
    blocks[1] = DSBlock(init, c[0], c[1], 2, 1, r, dsm);
    blocks[2] = DSBlock(init, c[1], c[2], 2, 1, r, dsm);
    blocks[3] = DSBlock(init, c[2], c[3], 1, 2, r, dsm);
    spp = SppNeck(init, c[3], config_.spp_branch_dilations);
    drff_mid = DRFFBlock(init, c[1], c[3], r);
    drff_fine = DRFFBlock(init, c[0], c[3], r);
    classifier = Conv2d(init, c[3], config_.num_classes, 1, {}, true);
    name_parameters(*this);
}

Var DRFN::forward(Tape& t, Var image, Mode mode, ForwardTrace* trace)
{
    const Tensor& x = image.value();
    if (x.rank() != 4 || x.dim(1) != 3)
        throw std::invalid_argument("drfn_forward: expected N x 3 x H x W image, got " + shape_str(x.shape()));
    if (x.dim(2) % 16 != 0 || x.dim(3) % 16 != 0)
        throw std::invalid_argument("drfn_forward: height and width must be divisible by 16, got " + shape_str(x.shape()));

    Var h = stem2.forward(t, stem1.forward(t, image, mode), mode);
    std::array<Var, 4> feats;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        h = blocks[i].forward(t, h, mode, trace ? &trace->blocks[i] : nullptr);
        feats[i] = h;
    }
    if (trace) trace->encoder_shape = h.shape();

    Var f = spp.forward(t, h, mode);
    f = drff_mid.forward(t, feats[1], f, mode);
    f = drff_fine.forward(t, feats[0], f, mode);
    return bilinear_upsample(classifier.forward(t, f), 4);
}

Tensor DRFN::infer(const Tensor& image)
{
    Tape t;
    return forward(t, t.constant(image), Mode::eval).value();
}

void DRFN::visit(const StateVisitor& v)
{
    stem1.visit("stem.conv1", v);
    stem2.visit("stem.conv2", v);
    for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].visit("encoder.ds" + std::to_string(i + 1), v);
    spp.visit("spp", v);
    drff_mid.visit("decoder.drff1", v);
    drff_fine.visit("decoder.drff2", v);
    classifier.visit("classifier", v);
}

std::vector<Parameter*> DRFN::parameters()
{
    std::vector<Parameter*> out;
    visit(StateVisitor{[&](const std::string&, Parameter& p) { out.push_back(&p); }, [](const std::string&, Tensor&) {}});
    return out;
}

std::vector<Parameter*> DRFN::trainable_parameters()
{
    std::vector<Parameter*> out;
    for (Parameter* p : parameters())
        if (p->trainable) out.push_back(p);
    return out;
}

void DRFN::zero_grad()
{
    for (Parameter* p : parameters()) p->zero_grad();
}

namespace {

// Name in a single-path network that feeds `name` in the armed network.
std::string source_name(const std::string& name)
{
    for (const char* tag : {".pt.", ".pf."}) {
        const auto pos = name.find(tag);
        if (pos != std::string::npos) return name.substr(0, pos) + ".path." + name.substr(pos + 4);
    }
    return name;
}

bool is_selector(const std::string& name)
{
    return name.find(".sel.") != std::string::npos;
}

}  // namespace

DRFN init_finetune(DRFN pretrained, std::uint64_t seed)
{
    if (pretrained.config().dsm_enabled)
        throw CheckpointIncompatible("<config>", "pretrained network must be single-path (dsm_enabled=false)");

    std::map<std::string, const Tensor*> source;
    pretrained.visit(StateVisitor{[&](const std::string& n, Parameter& p) { source[n] = &p.value; },
                                  [&](const std::string& n, Tensor& b) { source[n] = &b; }});

    ModelConfig cfg = pretrained.config();
    cfg.dsm_enabled = true;
    DRFN armed(cfg, seed);
    auto copy_from = [&](const std::string& name, Tensor& dst) {
        if (is_selector(name)) return;
        const auto it = source.find(source_name(name));
        if (it == source.end()) throw CheckpointIncompatible(name, "no matching pretrained entry");
        if (it->second->shape() != dst.shape())
            throw CheckpointIncompatible(name, "shape " + shape_str(it->second->shape()) + " vs " + shape_str(dst.shape()));
        dst = *it->second;
    };
    armed.visit(StateVisitor{[&](const std::string& n, Parameter& p) { copy_from(n, p.value); },
                             [&](const std::string& n, Tensor& b) { copy_from(n, b); }});
    return armed;
}

}  // namespace drfn
