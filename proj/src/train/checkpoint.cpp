#include "drfn/train/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "drfn/io/image.hpp"

namespace drfn {

using nlohmann::json;

json config_to_json(const ModelConfig& c)
{
    return json{{"num_classes", c.num_classes},
                {"stage_channels", c.stage_channels},
                {"reduction_ratio", c.reduction_ratio},
                {"output_stride", c.output_stride},
                {"spp_branch_dilations", c.spp_branch_dilations},
                {"dsm_enabled", c.dsm_enabled}};
}

ModelConfig config_from_json(const json& j)
{
    ModelConfig c;
    j.at("num_classes").get_to(c.num_classes);
    j.at("stage_channels").get_to(c.stage_channels);
    j.at("reduction_ratio").get_to(c.reduction_ratio);
    j.at("output_stride").get_to(c.output_stride);
    j.at("spp_branch_dilations").get_to(c.spp_branch_dilations);
    j.at("dsm_enabled").get_to(c.dsm_enabled);
    c.validate();
    return c;
}

Checkpoint capture(DRFN& model, const AdamState* optimizer)
{
    Checkpoint ck;
    ck.config = model.config();
    model.visit({[&](const std::string& n, Parameter& p) { ck.entries.push_back({n, false, p.value}); },
                 [&](const std::string& n, Tensor& b) { ck.entries.push_back({n, true, b}); }});
    if (optimizer) ck.optimizer = *optimizer;
    return ck;
}

void restore(DRFN& model, const Checkpoint& ck)
{
    std::map<std::string, const CheckpointEntry*> by_name;
    for (const auto& e : ck.entries) by_name.emplace(e.name, &e);
    std::size_t used = 0;
    std::map<std::string, bool> seen;
    auto copy = [&](const std::string& n, Tensor& dst, bool buffer) {
        auto it = by_name.find(n);
        if (it == by_name.end()) throw CheckpointIncompatible(n, "missing from checkpoint");
        const CheckpointEntry& e = *it->second;
        if (e.buffer != buffer) throw CheckpointIncompatible(n, "parameter/buffer kind differs");
        if (e.value.shape() != dst.shape())
            throw CheckpointIncompatible(n, "shape " + shape_str(e.value.shape()) + " in checkpoint, model expects " +
                                                shape_str(dst.shape()));
        dst = e.value;
        seen[n] = true;
        ++used;
    };
    model.visit({[&](const std::string& n, Parameter& p) { copy(n, p.value, false); },
                 [&](const std::string& n, Tensor& b) { copy(n, b, true); }});
    if (used != ck.entries.size())
        for (const auto& e : ck.entries)
            if (!seen.count(e.name)) throw CheckpointIncompatible(e.name, "not present in the model");
}

DRFN model_from_checkpoint(const Checkpoint& ck)
{
    DRFN m(ck.config);
    restore(m, ck);
    return m;
}

namespace {

constexpr char kMagic[4] = {'D', 'R', 'F', 'N'};

template <class U>
void put_le(std::vector<std::uint8_t>& out, U v)
{
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <class U>
U get_le(const std::uint8_t* p)
{
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(p[i]) << (8 * i);
    return v;
}

void put_tensor(std::vector<std::uint8_t>& blob, const Tensor& t)
{
    for (double d : t.data()) put_le(blob, std::bit_cast<std::uint64_t>(d));
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ck)
{
    std::vector<std::uint8_t> blob;
    json entries = json::array();
    auto add = [&](const std::string& name, const char* kind, const Tensor& t) {
        entries.push_back({{"name", name}, {"kind", kind}, {"shape", t.shape()}, {"offset", blob.size()}});
        put_tensor(blob, t);
    };
    for (const auto& e : ck.entries) add(e.name, e.buffer ? "buffer" : "param", e.value);

    json header{{"format", "drfn-checkpoint"}, {"config", config_to_json(ck.config)}};
    if (ck.optimizer) {
        const AdamState& a = *ck.optimizer;
        header["optimizer"] = {{"type", "adam"},   {"lr", a.lr},           {"beta1", a.beta1},
                               {"beta2", a.beta2}, {"epsilon", a.epsilon}, {"t", a.t}};
        for (const auto& [name, mo] : a.moments) {
            add(name, "adam_m", mo.m);
            add(name, "adam_v", mo.v);
        }
    } else {
        header["optimizer"] = nullptr;
    }
    header["entries"] = std::move(entries);
    header["data_bytes"] = blob.size();

    const std::string text = header.dump();
    std::vector<std::uint8_t> out(kMagic, kMagic + 4);
    put_le<std::uint32_t>(out, kCheckpointVersion);
    put_le<std::uint64_t>(out, text.size());
    out.insert(out.end(), text.begin(), text.end());
    out.insert(out.end(), blob.begin(), blob.end());
    return out;
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes)
{
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw CheckpointFormatError("not a DRFN checkpoint (bad magic)");
    const auto version = get_le<std::uint32_t>(bytes.data() + 4);
    if (version != kCheckpointVersion) throw UnsupportedCheckpointVersion(version);
    const auto hlen = get_le<std::uint64_t>(bytes.data() + 8);
    if (hlen > bytes.size() - 16) throw CheckpointFormatError("truncated checkpoint header");
    const std::uint8_t* blob = bytes.data() + 16 + hlen;
    const std::size_t blob_size = bytes.size() - 16 - hlen;

    Checkpoint ck;
    try {
        const json header = json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(hlen));
        ck.config = config_from_json(header.at("config"));
        if (!header.at("optimizer").is_null()) {
            const json& o = header["optimizer"];
            AdamState a;
            o.at("lr").get_to(a.lr);
            o.at("beta1").get_to(a.beta1);
            o.at("beta2").get_to(a.beta2);
            o.at("epsilon").get_to(a.epsilon);
            o.at("t").get_to(a.t);
            ck.optimizer = a;
        }
        for (const json& e : header.at("entries")) {
            const auto name = e.at("name").get<std::string>();
            const auto kind = e.at("kind").get<std::string>();
            const auto shape = e.at("shape").get<Shape>();
            const auto offset = e.at("offset").get<std::size_t>();
            const std::size_t n = shape_numel(shape);
            if (offset > blob_size || n > (blob_size - offset) / 8)
                throw CheckpointFormatError("entry '" + name + "' runs past the end of the file");
            std::vector<double> data(n);
            for (std::size_t i = 0; i < n; ++i) data[i] = std::bit_cast<double>(get_le<std::uint64_t>(blob + offset + 8 * i));
            Tensor t(shape, std::move(data));
            if (kind == "param" || kind == "buffer") {
                ck.entries.push_back({name, kind == "buffer", std::move(t)});
            } else if ((kind == "adam_m" || kind == "adam_v") && ck.optimizer) {
                auto& mo = ck.optimizer->moments[name];
                (kind == "adam_m" ? mo.m : mo.v) = std::move(t);
            } else {
                throw CheckpointFormatError("unknown entry kind '" + kind + "'");
            }
        }
    } catch (const json::exception& e) {
        throw CheckpointFormatError(std::string("malformed checkpoint header: ") + e.what());
    }
    return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck)
{
    const auto bytes = serialize_checkpoint(ck);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

void save_checkpoint(const std::filesystem::path& path, DRFN& model, const AdamState* optimizer)
{
    save_checkpoint(path, capture(model, optimizer));
}

Checkpoint load_checkpoint(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_checkpoint(bytes);
}

}  // namespace drfn
