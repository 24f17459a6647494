#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "drfn/rng.hpp"
#include "drfn/synthdoc/synthdoc.hpp"

namespace drfn::synthdoc {

namespace {

constexpr int kMinRegionSide = 8;

void require(bool ok, const std::string& what)
{
    if (!ok) throw std::invalid_argument("invalid corpus config: " + what);
}

std::uint8_t clamp_u8(int v)
{
    return static_cast<std::uint8_t>(std::clamp(v, 0, 255));
}

}  // namespace

const char* class_name(RegionClass c)
{
    switch (c) {
    case RegionClass::background: return "background";
    case RegionClass::figure: return "figure";
    case RegionClass::text: return "text";
    case RegionClass::table: return "table";
    }
    return "?";
}

CorpusConfig CorpusConfig::shift0()
{
    return CorpusConfig{};
}

CorpusConfig CorpusConfig::shift1()
{
    CorpusConfig c;
    c.background = {246, 236, 210};
    c.background_jitter = 8;
    c.ink = {45, 35, 95};
    c.noise = 10.0;
    c.text_pitch_min = 4;
    c.text_pitch_max = 5;
    c.rule_thickness_max = 2;
    c.figure_hue_min = 0.45;
    c.figure_hue_max = 0.75;
    return c;
}

CorpusConfig CorpusConfig::preset(const std::string& name)
{
    if (name == "shift0") return shift0();
    if (name == "shift1") return shift1();
    throw std::invalid_argument("unknown corpus preset '" + name + "' (expected shift0 or shift1)");
}

void CorpusConfig::validate() const
{
    require(page_height > 0 && page_width > 0, "page size must be positive");
    require(margin >= 0 && gutter >= 4, "margin must be >= 0 and gutter >= 4");
    require(min_columns >= 1 && min_columns <= max_columns, "column range must be non-empty and start at >= 1");
    require(min_regions_per_column >= 1 && min_regions_per_column <= max_regions_per_column,
            "regions-per-column range must be non-empty and start at >= 1");
    require(min_total_regions >= 0, "min_total_regions must be >= 0");
    require(std::all_of(class_weights.begin(), class_weights.end(), [](double w) { return w >= 0.0; }) &&
                std::accumulate(class_weights.begin(), class_weights.end(), 0.0) > 0.0,
            "class weights must be >= 0 with a positive sum");
    require(all_classes_prob >= 0.0 && all_classes_prob <= 1.0, "all_classes_prob must be in [0,1]");
    require(fill_min > 0.0 && fill_min <= 1.0, "fill_min must be in (0,1]");
    require(text_pitch_min >= 2 && text_pitch_min <= text_pitch_max, "text pitch range must be non-empty and >= 2");
    require(rule_thickness_max >= 1, "rule_thickness_max must be >= 1");
    require(background_jitter >= 0 && noise >= 0.0, "jitter and noise must be >= 0");
    require(figure_hue_min >= 0.0 && figure_hue_min <= figure_hue_max && figure_hue_max <= 1.0,
            "figure hue range must be a non-empty sub-range of [0,1]");
}

void to_json(nlohmann::json& j, const CorpusConfig& c)
{
    j = nlohmann::json{{"page_height", c.page_height},
                       {"page_width", c.page_width},
                       {"margin", c.margin},
                       {"gutter", c.gutter},
                       {"min_columns", c.min_columns},
                       {"max_columns", c.max_columns},
                       {"min_regions_per_column", c.min_regions_per_column},
                       {"max_regions_per_column", c.max_regions_per_column},
                       {"min_total_regions", c.min_total_regions},
                       {"class_weights", c.class_weights},
                       {"all_classes_prob", c.all_classes_prob},
                       {"fill_min", c.fill_min},
                       {"text_pitch_min", c.text_pitch_min},
                       {"text_pitch_max", c.text_pitch_max},
                       {"rule_thickness_max", c.rule_thickness_max},
                       {"background", c.background},
                       {"background_jitter", c.background_jitter},
                       {"ink", c.ink},
                       {"noise", c.noise},
                       {"figure_hue_min", c.figure_hue_min},
                       {"figure_hue_max", c.figure_hue_max}};
}

void from_json(const nlohmann::json& j, CorpusConfig& c)
{
    CorpusConfig d;
    c.page_height = j.value("page_height", d.page_height);
    c.page_width = j.value("page_width", d.page_width);
    c.margin = j.value("margin", d.margin);
    c.gutter = j.value("gutter", d.gutter);
    c.min_columns = j.value("min_columns", d.min_columns);
    c.max_columns = j.value("max_columns", d.max_columns);
    c.min_regions_per_column = j.value("min_regions_per_column", d.min_regions_per_column);
    c.max_regions_per_column = j.value("max_regions_per_column", d.max_regions_per_column);
    c.min_total_regions = j.value("min_total_regions", d.min_total_regions);
    c.class_weights = j.value("class_weights", d.class_weights);
    c.all_classes_prob = j.value("all_classes_prob", d.all_classes_prob);
    c.fill_min = j.value("fill_min", d.fill_min);
    c.text_pitch_min = j.value("text_pitch_min", d.text_pitch_min);
    c.text_pitch_max = j.value("text_pitch_max", d.text_pitch_max);
    c.rule_thickness_max = j.value("rule_thickness_max", d.rule_thickness_max);
    c.background = j.value("background", d.background);
    c.background_jitter = j.value("background_jitter", d.background_jitter);
    c.ink = j.value("ink", d.ink);
    c.noise = j.value("noise", d.noise);
    c.figure_hue_min = j.value("figure_hue_min", d.figure_hue_min);
    c.figure_hue_max = j.value("figure_hue_max", d.figure_hue_max);
}

LayoutSpec sample_layout(std::uint64_t seed, const CorpusConfig& cfg)
{
    cfg.validate();
    CounterRng rng(seed, 0);

    const int content_w = cfg.page_width - 2 * cfg.margin;
    const int content_h = cfg.page_height - 2 * cfg.margin;
    const int fit_cols = content_w < kMinRegionSide ? 0 : (content_w + cfg.gutter) / (kMinRegionSide + cfg.gutter);
    const int fit_rows = content_h < kMinRegionSide ? 0 : (content_h + cfg.gutter) / (kMinRegionSide + cfg.gutter);
    if (fit_cols < cfg.min_columns || fit_rows < cfg.min_regions_per_column)
        throw std::invalid_argument("sample_layout: page " + std::to_string(cfg.page_width) + "x" +
                                    std::to_string(cfg.page_height) + " is too small for the minimum regions");

    const int cols = std::min(rng.uniform_int(cfg.min_columns, cfg.max_columns), fit_cols);
    std::vector<int> counts(static_cast<std::size_t>(cols));
    for (auto& k : counts) k = std::min(rng.uniform_int(cfg.min_regions_per_column, cfg.max_regions_per_column), fit_rows);
    int total = std::accumulate(counts.begin(), counts.end(), 0);
    for (std::size_t c = 0; total < cfg.min_total_regions; c = (c + 1) % counts.size()) {
        if (std::all_of(counts.begin(), counts.end(), [&](int k) { return k >= fit_rows; }))
            throw std::invalid_argument("sample_layout: page is too small for " + std::to_string(cfg.min_total_regions) +
                                        " regions");
        if (counts[c] < fit_rows) {
            ++counts[c];
            ++total;
        }
    }

    LayoutSpec layout;
    layout.height = cfg.page_height;
    layout.width = cfg.page_width;
    const int col_w = (content_w - (cols - 1) * cfg.gutter) / cols;
    for (int c = 0; c < cols; ++c) {
        const int k = counts[static_cast<std::size_t>(c)];
        const int col_x = cfg.margin + c * (col_w + cfg.gutter);
        // every slot gets the minimum side, the spare height is split by random weights
        const int spare = content_h - (k - 1) * cfg.gutter - k * kMinRegionSide;
        std::vector<double> weights(static_cast<std::size_t>(k));
        for (auto& w : weights) w = rng.uniform(0.2, 1.0);
        const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
        int used = 0, y = cfg.margin;
        for (int i = 0; i < k; ++i) {
            int extra = static_cast<int>(spare * weights[static_cast<std::size_t>(i)] / wsum);
            if (i == k - 1) extra = spare - used;
            used += extra;
            const int slot_h = kMinRegionSide + extra;
            RegionBox box;
            box.rect.h = std::max(kMinRegionSide, static_cast<int>(std::lround(slot_h * rng.uniform(cfg.fill_min, 1.0))));
            box.rect.w = std::max(kMinRegionSide, static_cast<int>(std::lround(col_w * rng.uniform(cfg.fill_min, 1.0))));
            box.rect.h = std::min(box.rect.h, slot_h);
            box.rect.w = std::min(box.rect.w, col_w);
            box.rect.x = col_x + rng.uniform_int(0, col_w - box.rect.w);
            box.rect.y = y;
            box.style.line_pitch = rng.uniform_int(cfg.text_pitch_min, cfg.text_pitch_max);
            box.style.rule_thickness = rng.uniform_int(1, cfg.rule_thickness_max);
            box.style.texture_seed = rng.next_u64();
            layout.regions.push_back(box);
            y += slot_h + cfg.gutter;
        }
    }

    // class assignment
    std::vector<RegionClass> positive;
    for (int i = 0; i < 3; ++i)
        if (cfg.class_weights[static_cast<std::size_t>(i)] > 0.0) positive.push_back(static_cast<RegionClass>(i + 1));
    const double weight_sum = std::accumulate(cfg.class_weights.begin(), cfg.class_weights.end(), 0.0);
    auto draw_class = [&] {
        double u = rng.uniform() * weight_sum;
        for (int i = 0; i < 3; ++i) {
            u -= cfg.class_weights[static_cast<std::size_t>(i)];
            if (u < 0.0) return static_cast<RegionClass>(i + 1);
        }
        return positive.back();
    };
    std::vector<RegionClass> classes;
    if (rng.bernoulli(cfg.all_classes_prob) && layout.regions.size() >= positive.size()) classes = positive;
    while (classes.size() < layout.regions.size()) classes.push_back(draw_class());
    for (std::size_t i = classes.size(); i > 1; --i) std::swap(classes[i - 1], classes[rng.next_u64() % i]);
    for (std::size_t i = 0; i < classes.size(); ++i) layout.regions[i].cls = classes[i];

    PageStyle& ps = layout.style;
    for (std::size_t ch = 0; ch < 3; ++ch) {
        const int jitter = cfg.background_jitter ? rng.uniform_int(-cfg.background_jitter, cfg.background_jitter) : 0;
        ps.background[ch] = clamp_u8(cfg.background[ch] + jitter);
    }
    ps.ink = cfg.ink;
    ps.noise = cfg.noise;
    ps.figure_hue = rng.uniform(cfg.figure_hue_min, cfg.figure_hue_max);
    return layout;
}

}  // namespace drfn::synthdoc
