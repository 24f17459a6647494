#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "drfn/synthdoc/synthdoc.hpp"

using namespace drfn;
using namespace drfn::synthdoc;

namespace {

std::filesystem::path scratch_dir(const std::string& name)
{
    auto p = std::filesystem::temp_directory_path() / ("drfn_synthdoc_" + name);
    std::filesystem::remove_all(p);
    return p;
}

std::string slurp(const std::filesystem::path& p)
{
    std::ifstream is(p, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

}  // namespace

TEST(Layout, Deterministic)
{
    const auto cfg = CorpusConfig::shift0();
    EXPECT_EQ(sample_layout(42, cfg), sample_layout(42, cfg));
    EXPECT_NE(sample_layout(42, cfg), sample_layout(43, cfg));
}

TEST(Layout, SingleFullPageTextRegion)
{
    CorpusConfig cfg;
    cfg.min_columns = cfg.max_columns = 1;
    cfg.min_regions_per_column = cfg.max_regions_per_column = 1;
    cfg.min_total_regions = 1;
    cfg.class_weights = {0.0, 1.0, 0.0};
    cfg.fill_min = 1.0;
    const LayoutSpec l = sample_layout(7, cfg);
    ASSERT_EQ(l.regions.size(), 1u);
    EXPECT_EQ(l.regions[0].cls, RegionClass::text);
    EXPECT_EQ(l.regions[0].rect, (Rect{cfg.margin, cfg.margin, 64 - 2 * cfg.margin, 64 - 2 * cfg.margin}));
}

TEST(Layout, NoOverlapsAndInBounds)
{
    for (const auto& cfg : {CorpusConfig::shift0(), CorpusConfig::shift1()})
        for (std::uint64_t seed = 0; seed < 1000; ++seed) {
            const LayoutSpec l = sample_layout(seed, cfg);
            for (std::size_t i = 0; i < l.regions.size(); ++i) {
                const Rect& a = l.regions[i].rect;
                ASSERT_GE(a.w, 8);
                ASSERT_GE(a.h, 8);
                ASSERT_TRUE(a.x >= 0 && a.y >= 0 && a.x + a.w <= l.width && a.y + a.h <= l.height);
                ASSERT_NE(l.regions[i].cls, RegionClass::background);
                for (std::size_t j = i + 1; j < l.regions.size(); ++j) ASSERT_FALSE(a.overlaps(l.regions[j].rect)) << seed;
            }
        }
}

TEST(Layout, PageTooSmallAndBadConfig)
{
    CorpusConfig cfg;
    cfg.page_width = cfg.page_height = 12;
    EXPECT_THROW(sample_layout(1, cfg), std::invalid_argument);
    CorpusConfig bad;
    bad.all_classes_prob = 1.5;
    EXPECT_THROW(sample_layout(1, bad), std::invalid_argument);
    bad = CorpusConfig{};
    bad.min_columns = 3;
    bad.max_columns = 2;
    EXPECT_THROW(sample_layout(1, bad), std::invalid_argument);
}

TEST(Layout, ClassCoverage)
{
    const auto cfg = CorpusConfig::shift0();
    std::array<int, 4> present{};
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        const auto h = class_histogram(render(sample_layout(seed, cfg), seed).mask);
        for (std::size_t c = 0; c < 4; ++c) present[c] += h[c] > 0;
    }
    for (std::size_t c = 0; c < 4; ++c) EXPECT_GE(present[c], 950) << class_name(static_cast<RegionClass>(c));
}

TEST(Render, EmptyLayoutIsBlankPage)
{
    LayoutSpec l;
    l.width = 40;
    l.height = 24;
    const RenderedSample s = render(l, 3);
    EXPECT_EQ(s.image, Image8(40, 24, 3, 255));
    EXPECT_EQ(s.mask, Image8(40, 24, 1, 0));
}

TEST(Render, MaskMatchesGeometryAndIsDeterministic)
{
    for (const auto& cfg : {CorpusConfig::shift0(), CorpusConfig::shift1()})
        for (std::uint64_t seed = 0; seed < 200; ++seed) {
            const LayoutSpec l = sample_layout(seed, cfg);
            const RenderedSample s = render(l, seed);
            std::array<std::uint64_t, 4> expected{};
            long covered = 0;
            for (const auto& r : l.regions) {
                expected[static_cast<std::size_t>(r.cls)] += static_cast<std::uint64_t>(r.rect.area());
                covered += r.rect.area();
            }
            expected[0] = static_cast<std::uint64_t>(l.width * l.height - covered);
            ASSERT_EQ(class_histogram(s.mask), expected);
            ASSERT_EQ(s.mask.width, s.image.width);
            ASSERT_EQ(s.mask.height, s.image.height);
            if (seed < 20) {
                const RenderedSample again = render(l, seed);
                ASSERT_EQ(again.image, s.image);
                ASSERT_EQ(again.mask, s.mask);
            }
        }
}

TEST(Dataset, EmptyCorpus)
{
    const auto dir = scratch_dir("empty");
    const Manifest m = generate_dataset(0, 5, CorpusConfig::shift0(), dir);
    EXPECT_TRUE(m.samples.empty());
    std::size_t files = 0;
    for (auto& e : std::filesystem::directory_iterator(dir)) files += e.path().filename() != "manifest.json";
    EXPECT_EQ(files, 0u);
    const auto j = nlohmann::json::parse(slurp(dir / "manifest.json"));
    EXPECT_EQ(j["count"], 0);
}

TEST(Dataset, ByteIdenticalReruns)
{
    const auto a = scratch_dir("a"), b = scratch_dir("b");
    generate_dataset(10, 77, CorpusConfig::shift1(), a);
    generate_dataset(10, 77, CorpusConfig::shift1(), b, 3);
    for (std::size_t i = 0; i < 10; ++i) {
        EXPECT_EQ(slurp(a / image_file_name(i)), slurp(b / image_file_name(i)));
        EXPECT_EQ(slurp(a / mask_file_name(i)), slurp(b / mask_file_name(i)));
    }
    EXPECT_EQ(slurp(a / "manifest.json"), slurp(b / "manifest.json"));
}

TEST(Dataset, ManifestTotalsMatchRecount)
{
    const auto dir = scratch_dir("recount");
    const Manifest m = generate_dataset(100, 1000, CorpusConfig::shift0(), dir);
    std::array<std::uint64_t, 4> recount{};
    for (std::size_t i = 0; i < 100; ++i) {
        const Image8 mask = read_png(dir / mask_file_name(i));
        ASSERT_EQ(mask.channels, 1u);
        const auto h = class_histogram(mask);
        for (std::size_t c = 0; c < 4; ++c) recount[c] += h[c];
        const Image8 img = read_png(dir / image_file_name(i));
        ASSERT_EQ(img.channels, 3u);
        ASSERT_EQ(img.width, mask.width);
    }
    EXPECT_EQ(m.class_pixels, recount);
    const auto j = nlohmann::json::parse(slurp(dir / "manifest.json"));
    EXPECT_EQ(j["class_pixels"].get<std::vector<std::uint64_t>>(), std::vector<std::uint64_t>(recount.begin(), recount.end()));
    EXPECT_EQ(j["config"].get<CorpusConfig>().page_width, 64);
}

TEST(Dataset, UnwritableDirectoryNamesPath)
{
    try {
        generate_dataset(1, 0, CorpusConfig::shift0(), "/proc/drfn_forbidden/x");
        FAIL() << "expected IoError";
    } catch (const IoError& e) {
        EXPECT_NE(std::string(e.what()).find("/proc/drfn_forbidden"), std::string::npos);
    }
}
