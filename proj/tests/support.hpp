#pragma once

// Shared helpers for the unit and acceptance suites.

#include <cstdint>

#include "drfn/autodiff.hpp"
#include "drfn/ops.hpp"
#include "drfn/rng.hpp"

namespace drfn::testing {

inline Tensor random_tensor(const Shape& shape, CounterRng& rng, double lo = -1.0, double hi = 1.0)
{
    Tensor t(shape);
    for (auto& v : t.data()) v = rng.uniform(lo, hi);
    return t;
}

// sum(y * w) for a fixed random w, so no gradient coordinate is structurally zero.
inline Var weighted_sum(Tape& t, Var y, const Tensor& w)
{
    return sum(mul(y, t.constant(w)));
}

// Reference cross-correlation by direct summation, independent of im2col.
inline Tensor reference_conv2d(const Tensor& x, const Tensor& k, const Conv2dOptions& o)
{
    const std::size_t N = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t Cout = k.dim(0), KH = k.dim(2), KW = k.dim(3);
    const std::size_t Ho = (H + 2 * o.padding - o.dilation * (KH - 1) - 1) / o.stride + 1;
    const std::size_t Wo = (W + 2 * o.padding - o.dilation * (KW - 1) - 1) / o.stride + 1;
    Tensor out({N, Cout, Ho, Wo});
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t co = 0; co < Cout; ++co)
            for (std::size_t oh = 0; oh < Ho; ++oh)
                for (std::size_t ow = 0; ow < Wo; ++ow) {
                    double s = 0.0;
                    for (std::size_t ci = 0; ci < Cin; ++ci)
                        for (std::size_t i = 0; i < KH; ++i)
                            for (std::size_t j = 0; j < KW; ++j) {
                                const auto ih = static_cast<long>(oh * o.stride + i * o.dilation) - static_cast<long>(o.padding);
                                const auto iw = static_cast<long>(ow * o.stride + j * o.dilation) - static_cast<long>(o.padding);
                                if (ih < 0 || iw < 0 || ih >= static_cast<long>(H) || iw >= static_cast<long>(W)) continue;
                                s += x.at(n, ci, static_cast<std::size_t>(ih), static_cast<std::size_t>(iw)) * k.at(co, ci, i, j);
                            }
                    out.at(n, co, oh, ow) = s;
                }
    return out;
}

}  // namespace drfn::testing
