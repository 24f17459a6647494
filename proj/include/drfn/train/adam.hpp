#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "drfn/autodiff.hpp"

namespace drfn {

class NonFiniteGradient : public std::runtime_error {
public:
    explicit NonFiniteGradient(const std::string& param)
        : std::runtime_error("non-finite gradient in parameter '" + param + "'"), param_(param)
    {}
    const std::string& parameter() const { return param_; }

private:
    std::string param_;
};

struct AdamMoments {
    Tensor m;
    Tensor v;
};

struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t t = 0;
    // keyed by parameter name
    std::map<std::string, AdamMoments> moments;
};

// One bias-corrected Adam update of every trainable parameter. Gradients are
// checked for finiteness before anything is written; non-trainable parameters
// are skipped entirely. t advances once per call.
void adam_step(AdamState& state, const std::vector<Parameter*>& params);

}  // namespace drfn
