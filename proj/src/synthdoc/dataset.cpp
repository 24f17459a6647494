#include <cstdio>
#include <exception>
#include <fstream>
#include <thread>

#include "drfn/synthdoc/synthdoc.hpp"

namespace drfn::synthdoc {

std::string image_file_name(std::size_t index)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "img_%06zu.png", index);
    return buf;
}

std::string mask_file_name(std::size_t index)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "mask_%06zu.png", index);
    return buf;
}

nlohmann::json manifest_to_json(const Manifest& m)
{
    nlohmann::json samples = nlohmann::json::array();
    for (const ManifestEntry& e : m.samples)
        samples.push_back({{"index", e.index}, {"seed", e.seed}, {"image", e.image}, {"mask", e.mask},
                           {"class_pixels", e.class_pixels}});
    return {{"config", m.config},
            {"base_seed", m.base_seed},
            {"count", m.samples.size()},
            {"classes", {"background", "figure", "text", "table"}},
            {"class_pixels", m.class_pixels},
            {"samples", samples}};
}

Manifest generate_dataset(std::size_t n, std::uint64_t base_seed, const CorpusConfig& config,
                          const std::filesystem::path& out_dir, unsigned threads)
{
    config.validate();
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create '" + out_dir.string() + "': " + ec.message());

    Manifest m;
    m.config = config;
    m.base_seed = base_seed;
    m.samples.resize(n);

    auto make = [&](std::size_t i) {
        const std::uint64_t seed = base_seed + i;
        const RenderedSample s = render(sample_layout(seed, config), seed);
        ManifestEntry& e = m.samples[i];
        e.index = i;
        e.seed = seed;
        e.image = image_file_name(i);
        e.mask = mask_file_name(i);
        e.class_pixels = class_histogram(s.mask);
        write_png(out_dir / e.image, s.image);
        write_png(out_dir / e.mask, s.mask);
    };

    threads = std::max(1u, threads);
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) make(i);
    } else {
        std::vector<std::exception_ptr> errors(threads);
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < threads; ++w)
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t i = w; i < n; i += threads) make(i);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        for (auto& t : pool) t.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    for (const ManifestEntry& e : m.samples)
        for (std::size_t c = 0; c < kNumClasses; ++c) m.class_pixels[c] += e.class_pixels[c];

    const auto path = out_dir / "manifest.json";
    std::ofstream os(path, std::ios::binary);
    os << manifest_to_json(m).dump(2) << '\n';
    if (!os) throw IoError("failed writing '" + path.string() + "'");
    return m;
}

}  // namespace drfn::synthdoc
