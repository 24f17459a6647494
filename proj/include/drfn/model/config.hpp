#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

namespace drfn {

struct ModelConfig {
    std::size_t num_classes = 4;
    std::array<std::size_t, 4> stage_channels{8, 16, 32, 64};
    std::size_t reduction_ratio = 16;
    std::size_t output_stride = 16;
    // 1 selects the 1x1 branch; every other rate adds a dilated 3x3 branch.
    std::vector<std::size_t> spp_branch_dilations{1, 2, 4};
    bool dsm_enabled = false;

    static ModelConfig tiny() { return ModelConfig{}; }
    static ModelConfig full()
    {
        ModelConfig c;
        c.stage_channels = {64, 128, 256, 512};
        return c;
    }
    static ModelConfig preset(const std::string& name);

    void validate() const;

    // Structural equality, ignoring dsm_enabled.
    bool same_structure(const ModelConfig& other) const;
};

inline constexpr std::size_t kMinBottleneck = 4;

// Width of the squeeze layer in guidance and selector heads.
inline std::size_t bottleneck_width(std::size_t channels, std::size_t reduction_ratio)
{
    const std::size_t w = channels / reduction_ratio;
    return w < kMinBottleneck ? kMinBottleneck : w;
}

}  // namespace drfn
