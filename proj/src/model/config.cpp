#include "drfn/model/config.hpp"

#include <stdexcept>

namespace drfn {

ModelConfig ModelConfig::preset(const std::string& name)
{
    if (name == "tiny") return tiny();
    if (name == "full") return full();
    throw std::invalid_argument("unknown model preset '" + name + "' (expected tiny or full)");
}

void ModelConfig::validate() const
{
    if (output_stride != 16) throw std::invalid_argument("output_stride must be 16");
    if (num_classes < 2) throw std::invalid_argument("num_classes must be >= 2");
    if (reduction_ratio == 0) throw std::invalid_argument("reduction_ratio must be positive");
    for (std::size_t c : stage_channels)
        if (c < kMinBottleneck) throw std::invalid_argument("stage channels must be >= 4");
    if (spp_branch_dilations.empty()) throw std::invalid_argument("spp_branch_dilations must not be empty");
    for (std::size_t d : spp_branch_dilations)
        if (d == 0) throw std::invalid_argument("spp dilations must be positive");
}

bool ModelConfig::same_structure(const ModelConfig& o) const
{
    return num_classes == o.num_classes && stage_channels == o.stage_channels && reduction_ratio == o.reduction_ratio &&
           output_stride == o.output_stride && spp_branch_dilations == o.spp_branch_dilations;
}

}  // namespace drfn
