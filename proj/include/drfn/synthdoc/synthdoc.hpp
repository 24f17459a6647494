#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "drfn/io/image.hpp"

namespace drfn::synthdoc {

enum class RegionClass : std::uint8_t { background = 0, figure = 1, text = 2, table = 3 };
inline constexpr std::size_t kNumClasses = 4;

const char* class_name(RegionClass c);

struct Rect {
    int x = 0, y = 0, w = 0, h = 0;

    long area() const { return static_cast<long>(w) * h; }
    bool overlaps(const Rect& o) const { return x < o.x + o.w && o.x < x + w && y < o.y + o.h && o.y < y + h; }
    friend bool operator==(const Rect&, const Rect&) = default;
};

struct RegionStyle {
    int line_pitch = 3;
    int rule_thickness = 1;
    std::uint64_t texture_seed = 0;
    friend bool operator==(const RegionStyle&, const RegionStyle&) = default;
};

struct RegionBox {
    RegionClass cls = RegionClass::text;
    Rect rect;
    RegionStyle style;
    friend bool operator==(const RegionBox&, const RegionBox&) = default;
};

using Rgb = std::array<std::uint8_t, 3>;

// Page-level appearance; carries the domain-shift knobs into rendering.
struct PageStyle {
    Rgb background{255, 255, 255};
    Rgb ink{20, 20, 20};
    double noise = 0.0;       // stddev of additive per-channel noise, intensity units
    double figure_hue = 0.0;  // base hue in [0,1) for figure palettes
    friend bool operator==(const PageStyle&, const PageStyle&) = default;
};

struct LayoutSpec {
    int height = 0;
    int width = 0;
    std::vector<RegionBox> regions;
    PageStyle style;
    friend bool operator==(const LayoutSpec&, const LayoutSpec&) = default;
};

struct RenderedSample {
    Image8 image;  // RGB
    Image8 mask;   // one channel, class indices
};

struct CorpusConfig {
    int page_height = 64;
    int page_width = 64;
    int margin = 4;
    int gutter = 4;
    int min_columns = 1;
    int max_columns = 3;
    int min_regions_per_column = 1;
    int max_regions_per_column = 3;
    int min_total_regions = 3;
    // relative sampling weights for figure, text, table
    std::array<double, 3> class_weights{1.0, 1.0, 1.0};
    // probability that a page is forced to contain every class with positive weight
    double all_classes_prob = 1.0;
    // regions occupy a uniform fraction in [fill_min, 1] of their slot per dimension
    double fill_min = 0.7;
    int text_pitch_min = 3;
    int text_pitch_max = 4;
    int rule_thickness_max = 1;
    // domain shift
    Rgb background{255, 255, 255};
    int background_jitter = 0;  // per-page, per-channel tint offset range
    Rgb ink{20, 20, 20};
    double noise = 0.0;
    double figure_hue_min = 0.0;
    double figure_hue_max = 1.0;

    static CorpusConfig shift0();
    static CorpusConfig shift1();
    static CorpusConfig preset(const std::string& name);

    void validate() const;
};

void to_json(nlohmann::json& j, const CorpusConfig& c);
void from_json(const nlohmann::json& j, CorpusConfig& c);

// Deterministic in (seed, config). Columns are filled top to bottom with
// gutters between regions, so regions never overlap.
LayoutSpec sample_layout(std::uint64_t seed, const CorpusConfig& config);

// Deterministic in (layout, seed).
RenderedSample render(const LayoutSpec& layout, std::uint64_t seed);

std::array<std::uint64_t, kNumClasses> class_histogram(const Image8& mask);

struct ManifestEntry {
    std::size_t index = 0;
    std::uint64_t seed = 0;
    std::string image;
    std::string mask;
    std::array<std::uint64_t, kNumClasses> class_pixels{};
};

struct Manifest {
    CorpusConfig config;
    std::uint64_t base_seed = 0;
    std::vector<ManifestEntry> samples;
    std::array<std::uint64_t, kNumClasses> class_pixels{};
};

std::string image_file_name(std::size_t index);
std::string mask_file_name(std::size_t index);

// Writes img_%06d.png / mask_%06d.png for seeds base_seed + i and manifest.json.
// Samples are independent, so threads > 1 only changes wall time.
Manifest generate_dataset(std::size_t n, std::uint64_t base_seed, const CorpusConfig& config,
                          const std::filesystem::path& out_dir, unsigned threads = 1);

nlohmann::json manifest_to_json(const Manifest& m);

}  // namespace drfn::synthdoc
