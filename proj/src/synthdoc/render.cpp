#include <algorithm>
#include <cmath>

#include "drfn/rng.hpp"
#include "drfn/synthdoc/synthdoc.hpp"

namespace drfn::synthdoc {

namespace {

Rgb hsv(double h, double s, double v)
{
    h = (h - std::floor(h)) * 6.0;
    const int i = static_cast<int>(h) % 6;
    const double f = h - std::floor(h);
    const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
    double r = v, g = t, b = p;
    switch (i) {
    case 0: r = v, g = t, b = p; break;
    case 1: r = q, g = v, b = p; break;
    case 2: r = p, g = v, b = t; break;
    case 3: r = p, g = q, b = v; break;
    case 4: r = t, g = p, b = v; break;
    default: r = v, g = p, b = q; break;
    }
    auto u8 = [](double x) { return static_cast<std::uint8_t>(std::lround(std::clamp(x, 0.0, 1.0) * 255.0)); };
    return {u8(r), u8(g), u8(b)};
}

class Canvas {
public:
    Canvas(Image8& img, const Rect& clip) : img_(img), clip_(clip) {}

    void put(int x, int y, const Rgb& c)
    {
        if (x < clip_.x || y < clip_.y || x >= clip_.x + clip_.w || y >= clip_.y + clip_.h) return;
        for (std::size_t ch = 0; ch < 3; ++ch) img_.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y), ch) = c[ch];
    }

    void hline(int x0, int x1, int y, int thickness, const Rgb& c)
    {
        for (int dy = 0; dy < thickness; ++dy)
            for (int x = x0; x < x1; ++x) put(x, y + dy, c);
    }

    void vline(int x, int y0, int y1, int thickness, const Rgb& c)
    {
        for (int dx = 0; dx < thickness; ++dx)
            for (int y = y0; y < y1; ++y) put(x + dx, y, c);
    }

private:
    Image8& img_;
    Rect clip_;
};

Rgb jitter_ink(const Rgb& ink, CounterRng& rng)
{
    const int d = rng.uniform_int(-15, 15);
    Rgb out;
    for (std::size_t ch = 0; ch < 3; ++ch) out[ch] = static_cast<std::uint8_t>(std::clamp(ink[ch] + d, 0, 255));
    return out;
}

// Word-like dash runs from x0 up to x1.
void stroke_words(Canvas& cv, int x0, int x1, int y, int thickness, const Rgb& ink, CounterRng& rng)
{
    int x = x0;
    while (x < x1) {
        const int len = rng.uniform_int(2, 6);
        cv.hline(x, std::min(x + len, x1), y, thickness, ink);
        x += len + rng.uniform_int(1, 2);
    }
}

void draw_text(Canvas& cv, const Rect& r, const RegionStyle& st, const PageStyle& page, CounterRng& rng)
{
    const Rgb ink = jitter_ink(page.ink, rng);
    const int pitch = st.line_pitch;
    const int thickness = pitch >= 5 ? 2 : 1;
    int lines_left_in_paragraph = rng.uniform_int(2, 6);
    for (int y = r.y; y + thickness <= r.y + r.h; y += pitch) {
        int right = r.x + r.w;
        if (--lines_left_in_paragraph == 0) {
            right = r.x + std::max(3, static_cast<int>(r.w * rng.uniform(0.3, 0.9)));
            lines_left_in_paragraph = rng.uniform_int(2, 6);
        }
        stroke_words(cv, r.x, right, y, thickness, ink, rng);
    }
}

void draw_figure(Canvas& cv, const Rect& r, const PageStyle& page, CounterRng& rng)
{
    const double hue = page.figure_hue + rng.uniform(-0.08, 0.08);
    const Rgb a = hsv(hue, rng.uniform(0.4, 0.9), rng.uniform(0.55, 0.95));
    const Rgb b = hsv(hue + rng.uniform(0.1, 0.4), rng.uniform(0.4, 0.9), rng.uniform(0.35, 0.8));
    const bool diagonal = rng.bernoulli(0.5);
    for (int y = 0; y < r.h; ++y)
        for (int x = 0; x < r.w; ++x) {
            const double t = diagonal ? (x + y) / static_cast<double>(r.w + r.h) : y / static_cast<double>(r.h);
            Rgb c;
            for (std::size_t ch = 0; ch < 3; ++ch)
                c[ch] = static_cast<std::uint8_t>(std::lround((1.0 - t) * a[ch] + t * b[ch]));
            cv.put(r.x + x, r.y + y, c);
        }
    // a contrasting blob
    const Rgb blob = hsv(hue + 0.5, rng.uniform(0.5, 1.0), rng.uniform(0.3, 0.9));
    const double cx = r.x + rng.uniform(0.2, 0.8) * r.w, cy = r.y + rng.uniform(0.2, 0.8) * r.h;
    const double rx = rng.uniform(0.15, 0.4) * r.w, ry = rng.uniform(0.15, 0.4) * r.h;
    for (int y = r.y; y < r.y + r.h; ++y)
        for (int x = r.x; x < r.x + r.w; ++x) {
            const double dx = (x + 0.5 - cx) / rx, dy = (y + 0.5 - cy) / ry;
            if (dx * dx + dy * dy <= 1.0) cv.put(x, y, blob);
        }
}

void draw_table(Canvas& cv, const Rect& r, const RegionStyle& st, const PageStyle& page, CounterRng& rng)
{
    const Rgb ink = jitter_ink(page.ink, rng);
    const int t = st.rule_thickness;
    const int row_h = std::max(4, 2 * st.line_pitch);
    const int ncols = std::clamp(r.w / 8, 1, 4);

    cv.hline(r.x, r.x + r.w, r.y, t, ink);
    cv.hline(r.x, r.x + r.w, r.y + r.h - t, t, ink);
    cv.vline(r.x, r.y, r.y + r.h, t, ink);
    cv.vline(r.x + r.w - t, r.y, r.y + r.h, t, ink);

    std::vector<int> xs{r.x};
    for (int c = 1; c < ncols; ++c) {
        const int x = r.x + (r.w * c) / ncols;
        cv.vline(x, r.y, r.y + r.h, t, ink);
        xs.push_back(x);
    }
    xs.push_back(r.x + r.w);
    for (int y = r.y; y < r.y + r.h - t; y += row_h) {
        if (y > r.y) cv.hline(r.x, r.x + r.w, y, t, ink);
        // cell content on the middle line of the row
        const int ty = y + t + (row_h - t) / 2;
        if (ty >= r.y + r.h - t) break;
        for (std::size_t c = 0; c + 1 < xs.size(); ++c) {
            const int x0 = xs[c] + t + 1, x1 = xs[c + 1] - 1;
            if (x1 - x0 < 2) continue;
            stroke_words(cv, x0, x0 + std::max(2, static_cast<int>((x1 - x0) * rng.uniform(0.4, 1.0))), ty, 1, ink, rng);
        }
    }
}

}  // namespace

RenderedSample render(const LayoutSpec& layout, std::uint64_t seed)
{
    const auto W = static_cast<std::size_t>(layout.width), H = static_cast<std::size_t>(layout.height);
    RenderedSample out{Image8(W, H, 3), Image8(W, H, 1, 0)};
    for (std::size_t p = 0; p < W * H; ++p)
        for (std::size_t ch = 0; ch < 3; ++ch) out.image.pixels[p * 3 + ch] = layout.style.background[ch];

    for (const RegionBox& box : layout.regions) {
        const Rect& r = box.rect;
        CounterRng rng(box.style.texture_seed, seed);
        Canvas cv(out.image, r);
        switch (box.cls) {
        case RegionClass::text: draw_text(cv, r, box.style, layout.style, rng); break;
        case RegionClass::figure: draw_figure(cv, r, layout.style, rng); break;
        case RegionClass::table: draw_table(cv, r, box.style, layout.style, rng); break;
        case RegionClass::background: break;
        }
        for (int y = r.y; y < r.y + r.h; ++y)
            for (int x = r.x; x < r.x + r.w; ++x)
                out.mask.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) = static_cast<std::uint8_t>(box.cls);
    }

    if (layout.style.noise > 0.0) {
        CounterRng rng(seed, 0x6e6f697365ULL);
        for (auto& v : out.image.pixels)
            v = static_cast<std::uint8_t>(std::clamp<long>(std::lround(v + layout.style.noise * rng.normal()), 0, 255));
    }
    return out;
}

std::array<std::uint64_t, kNumClasses> class_histogram(const Image8& mask)
{
    std::array<std::uint64_t, kNumClasses> h{};
    for (std::uint8_t v : mask.pixels)
        if (v < kNumClasses) ++h[v];
    return h;
}

}  // namespace drfn::synthdoc
