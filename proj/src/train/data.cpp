#include "drfn/train/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace drfn {

Tensor image_to_tensor(const Image8& rgb)
{
    if (rgb.channels != 3) throw std::invalid_argument("expected an RGB image");
    const std::size_t H = rgb.height, W = rgb.width;
    Tensor t({3, H, W});
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) t[(c * H + y) * W + x] = rgb.at(x, y, c) / 255.0;
    return t;
}

Sample make_sample(const Image8& rgb, const Image8& mask)
{
    if (mask.channels != 1) throw std::invalid_argument("mask must have one channel");
    if (mask.width != rgb.width || mask.height != rgb.height) throw std::invalid_argument("image/mask size mismatch");
    Sample s{image_to_tensor(rgb), {}};
    s.mask.assign(mask.pixels.begin(), mask.pixels.end());
    return s;
}

std::vector<Sample> load_dataset(const std::filesystem::path& dir, std::size_t num_classes)
{
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw IoError("dataset directory not found: " + dir.string());

    std::vector<std::pair<fs::path, fs::path>> files;
    const fs::path manifest = dir / "manifest.json";
    if (fs::exists(manifest)) {
        std::ifstream in(manifest);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw IoError("bad manifest " + manifest.string() + ": " + e.what());
        }
        for (const auto& e : j.at("samples"))
            files.emplace_back(dir / e.at("image").get<std::string>(), dir / e.at("mask").get<std::string>());
    } else {
        std::vector<fs::path> images;
        for (const auto& e : fs::directory_iterator(dir)) {
            const std::string n = e.path().filename().string();
            if (n.starts_with("img_") && n.ends_with(".png")) images.push_back(e.path());
        }
        std::sort(images.begin(), images.end());
        for (const auto& p : images) {
            const std::string n = p.filename().string();
            files.emplace_back(p, dir / ("mask_" + n.substr(4)));
        }
    }

    std::vector<Sample> out;
    out.reserve(files.size());
    for (const auto& [img, msk] : files) {
        Sample s = make_sample(read_png(img), read_png(msk));
        for (int v : s.mask)
            if (v != kIgnoreLabel && (v < 0 || static_cast<std::size_t>(v) >= num_classes))
                throw IoError("mask " + msk.string() + " has label " + std::to_string(v));
        out.push_back(std::move(s));
    }
    return out;
}

std::size_t round_up(std::size_t n, std::size_t m) { return (n + m - 1) / m * m; }

Sample pad_sample(const Sample& s, std::size_t multiple, double fill)
{
    const std::size_t H = s.height(), W = s.width();
    const std::size_t PH = round_up(H, multiple), PW = round_up(W, multiple);
    if (PH == H && PW == W) return s;
    Sample p{Tensor({3, PH, PW}, fill), std::vector<int>(PH * PW, kIgnoreLabel)};
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < H; ++y)
            std::copy_n(s.image.ptr() + (c * H + y) * W, W, p.image.ptr() + (c * PH + y) * PW);
    for (std::size_t y = 0; y < H; ++y) std::copy_n(s.mask.begin() + y * W, W, p.mask.begin() + y * PW);
    return p;
}

Tensor stack_images(const std::vector<const Sample*>& batch)
{
    if (batch.empty()) throw std::invalid_argument("empty batch");
    const std::size_t H = batch[0]->height(), W = batch[0]->width();
    Tensor t({batch.size(), 3, H, W});
    for (std::size_t n = 0; n < batch.size(); ++n) {
        if (batch[n]->height() != H || batch[n]->width() != W) throw std::invalid_argument("batch samples differ in size");
        std::copy_n(batch[n]->image.ptr(), 3 * H * W, t.ptr() + n * 3 * H * W);
    }
    return t;
}

std::vector<int> stack_masks(const std::vector<const Sample*>& batch)
{
    std::vector<int> out;
    for (const Sample* s : batch) out.insert(out.end(), s->mask.begin(), s->mask.end());
    return out;
}

AugmentConfig AugmentConfig::identity(std::size_t height, std::size_t width)
{
    return AugmentConfig{0.0, 0.0, 1.0, height, width};
}

void AugmentConfig::validate() const
{
    if (!(hflip_prob >= 0.0 && hflip_prob <= 1.0) || !(vflip_prob >= 0.0 && vflip_prob <= 1.0))
        throw std::invalid_argument("flip probabilities must be in [0, 1]");
    if (!(crop_ratio > 0.0 && crop_ratio <= 1.0)) throw std::invalid_argument("crop ratio must be in (0, 1]");
    if (height == 0 || width == 0 || height % 16 || width % 16)
        throw std::invalid_argument("train resolution must be a positive multiple of 16, got " + std::to_string(height) +
                                    "x" + std::to_string(width));
}

AugmentDraw draw_augment(const AugmentConfig& cfg, std::size_t height, std::size_t width, CounterRng& rng)
{
    AugmentDraw d;
    d.hflip = rng.bernoulli(cfg.hflip_prob);
    d.vflip = rng.bernoulli(cfg.vflip_prob);
    d.crop_h = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(cfg.crop_ratio * height)), 1, height);
    d.crop_w = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(cfg.crop_ratio * width)), 1, width);
    d.crop_y = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(height - d.crop_h)));
    d.crop_x = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(width - d.crop_w)));
    return d;
}

namespace {

// align_corners=false source coordinate, clamped to the valid range
double source_coord(std::size_t o, std::size_t in, std::size_t out)
{
    const double s = (static_cast<double>(o) + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5;
    return std::clamp(s, 0.0, static_cast<double>(in - 1));
}

std::size_t nearest_coord(std::size_t o, std::size_t in, std::size_t out)
{
    const auto s = static_cast<std::size_t>((static_cast<double>(o) + 0.5) * static_cast<double>(in) / static_cast<double>(out));
    return std::min(s, in - 1);
}

}  // namespace

Sample apply_augment(const Sample& s, const AugmentDraw& d, const AugmentConfig& cfg)
{
    const std::size_t H = s.height(), W = s.width();
    if (s.mask.size() != H * W) throw std::invalid_argument("augment: image/mask size mismatch");
    if (d.crop_h == 0 || d.crop_w == 0 || d.crop_y + d.crop_h > H || d.crop_x + d.crop_w > W)
        throw std::invalid_argument("augment: crop window outside the image");

    // position in the flipped-then-cropped frame -> position in the source
    auto src_y = [&](std::size_t y) { y += d.crop_y; return d.vflip ? H - 1 - y : y; };
    auto src_x = [&](std::size_t x) { x += d.crop_x; return d.hflip ? W - 1 - x : x; };

    const std::size_t OH = cfg.height, OW = cfg.width;
    Sample out{Tensor({3, OH, OW}), std::vector<int>(OH * OW)};
    for (std::size_t oy = 0; oy < OH; ++oy) {
        const double fy = source_coord(oy, d.crop_h, OH);
        const auto y0 = static_cast<std::size_t>(fy);
        const std::size_t y1 = std::min(y0 + 1, d.crop_h - 1);
        const double wy = fy - static_cast<double>(y0);
        const std::size_t ny = nearest_coord(oy, d.crop_h, OH);
        for (std::size_t ox = 0; ox < OW; ++ox) {
            const double fx = source_coord(ox, d.crop_w, OW);
            const auto x0 = static_cast<std::size_t>(fx);
            const std::size_t x1 = std::min(x0 + 1, d.crop_w - 1);
            const double wx = fx - static_cast<double>(x0);
            for (std::size_t c = 0; c < 3; ++c) {
                const double* p = s.image.ptr() + c * H * W;
                auto px = [&](std::size_t y, std::size_t x) { return p[src_y(y) * W + src_x(x)]; };
                const double top = (1 - wx) * px(y0, x0) + wx * px(y0, x1);
                const double bot = (1 - wx) * px(y1, x0) + wx * px(y1, x1);
                out.image[(c * OH + oy) * OW + ox] = (1 - wy) * top + wy * bot;
            }
            out.mask[oy * OW + ox] = s.mask[src_y(ny) * W + src_x(nearest_coord(ox, d.crop_w, OW))];
        }
    }
    return out;
}

Sample augment(const Sample& s, const AugmentConfig& cfg, CounterRng& rng)
{
    return apply_augment(s, draw_augment(cfg, s.height(), s.width(), rng), cfg);
}

}  // namespace drfn
