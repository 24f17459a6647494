#include "drfn/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace drfn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

[[noreturn]] void fail(const std::string& op, const std::string& msg)
{
    throw std::invalid_argument(op + ": " + msg);
}

void require_rank(const std::string& op, const Tensor& t, std::size_t rank, const char* what)
{
    if (t.rank() != rank)
        fail(op, std::string(what) + " must have rank " + std::to_string(rank) + ", got shape " + shape_str(t.shape()));
}

struct ConvGeom {
    std::size_t channels, height, width;
    std::size_t kh, kw;
    std::size_t out_h, out_w;
    Conv2dOptions opt;

    std::size_t patch() const { return channels * kh * kw; }
    std::size_t out_pixels() const { return out_h * out_w; }
    bool trivial() const
    {
        return kh == 1 && kw == 1 && opt.stride == 1 && opt.padding == 0;
    }
};

// col is (C*Kh*Kw) x (Ho*Wo)
void im2col(const double* img, const ConvGeom& g, double* col)
{
    const auto pad = static_cast<std::ptrdiff_t>(g.opt.padding);
    const auto H = static_cast<std::ptrdiff_t>(g.height);
    const auto W = static_cast<std::ptrdiff_t>(g.width);
    std::size_t row = 0;
    for (std::size_t c = 0; c < g.channels; ++c) {
        const double* plane = img + c * g.height * g.width;
        for (std::size_t i = 0; i < g.kh; ++i) {
            for (std::size_t j = 0; j < g.kw; ++j, ++row) {
                double* dst = col + row * g.out_pixels();
                for (std::size_t oh = 0; oh < g.out_h; ++oh) {
                    const auto ih = static_cast<std::ptrdiff_t>(oh * g.opt.stride + i * g.opt.dilation) - pad;
                    double* drow = dst + oh * g.out_w;
                    if (ih < 0 || ih >= H) {
                        std::fill(drow, drow + g.out_w, 0.0);
                        continue;
                    }
                    const double* srow = plane + ih * W;
                    for (std::size_t ow = 0; ow < g.out_w; ++ow) {
                        const auto iw = static_cast<std::ptrdiff_t>(ow * g.opt.stride + j * g.opt.dilation) - pad;
                        drow[ow] = (iw >= 0 && iw < W) ? srow[iw] : 0.0;
                    }
                }
            }
        }
    }
}

void col2im_add(const double* col, const ConvGeom& g, double* img)
{
    const auto pad = static_cast<std::ptrdiff_t>(g.opt.padding);
    const auto H = static_cast<std::ptrdiff_t>(g.height);
    const auto W = static_cast<std::ptrdiff_t>(g.width);
    std::size_t row = 0;
    for (std::size_t c = 0; c < g.channels; ++c) {
        double* plane = img + c * g.height * g.width;
        for (std::size_t i = 0; i < g.kh; ++i) {
            for (std::size_t j = 0; j < g.kw; ++j, ++row) {
                const double* src = col + row * g.out_pixels();
                for (std::size_t oh = 0; oh < g.out_h; ++oh) {
                    const auto ih = static_cast<std::ptrdiff_t>(oh * g.opt.stride + i * g.opt.dilation) - pad;
                    if (ih < 0 || ih >= H) continue;
                    double* drow = plane + ih * W;
                    const double* srow = src + oh * g.out_w;
                    for (std::size_t ow = 0; ow < g.out_w; ++ow) {
                        const auto iw = static_cast<std::ptrdiff_t>(ow * g.opt.stride + j * g.opt.dilation) - pad;
                        if (iw >= 0 && iw < W) drow[iw] += srow[ow];
                    }
                }
            }
        }
    }
}

// Splits a shape around axis into (outer, extent, inner) for generic
// reductions and concatenations.
struct AxisSplit {
    std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_axis(const Shape& s, std::size_t axis)
{
    AxisSplit a;
    for (std::size_t i = 0; i < axis; ++i) a.outer *= s[i];
    a.extent = s[axis];
    for (std::size_t i = axis + 1; i < s.size(); ++i) a.inner *= s[i];
    return a;
}

double stable_sigmoid(double x)
{
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

std::size_t conv_output_size(std::size_t in, std::size_t kernel, const Conv2dOptions& opt)
{
    if (opt.stride == 0 || opt.dilation == 0) fail("conv2d", "stride and dilation must be positive");
    const auto span = static_cast<std::ptrdiff_t>(opt.dilation * (kernel - 1) + 1);
    const auto padded = static_cast<std::ptrdiff_t>(in + 2 * opt.padding);
    if (padded < span)
        fail("conv2d", "computed output size is not positive (input " + std::to_string(in) + ", kernel " +
                           std::to_string(kernel) + ")");
    return static_cast<std::size_t>((padded - span) / static_cast<std::ptrdiff_t>(opt.stride)) + 1;
}

Var conv2d(Var input, Var kernel, std::optional<Var> bias, const Conv2dOptions& opt)
{
    const Tensor& x = input.value();
    const Tensor& k = kernel.value();
    require_rank("conv2d", x, 4, "input");
    require_rank("conv2d", k, 4, "kernel");
    if (x.dim(1) != k.dim(1))
        fail("conv2d", "input channels " + std::to_string(x.dim(1)) + " do not match kernel " + shape_str(k.shape()));
    const std::size_t N = x.dim(0), Cout = k.dim(0);
    if (bias && bias->value().size() != Cout)
        fail("conv2d", "bias has " + std::to_string(bias->value().size()) + " elements, expected " + std::to_string(Cout));

    ConvGeom g{x.dim(1), x.dim(2), x.dim(3), k.dim(2), k.dim(3), 0, 0, opt};
    g.out_h = conv_output_size(g.height, g.kh, opt);
    g.out_w = conv_output_size(g.width, g.kw, opt);

    Tensor out({N, Cout, g.out_h, g.out_w});
    const std::size_t P = g.out_pixels(), in_stride = g.channels * g.height * g.width;
    std::vector<double> col(g.trivial() ? 0 : g.patch() * P);
    ConstMap K(k.ptr(), Cout, g.patch());
    for (std::size_t n = 0; n < N; ++n) {
        const double* colp = x.ptr() + n * in_stride;
        if (!g.trivial()) {
            im2col(colp, g, col.data());
            colp = col.data();
        }
        MutMap O(out.ptr() + n * Cout * P, Cout, P);
        O.noalias() = K * ConstMap(colp, g.patch(), P);
        if (bias) {
            const Tensor& b = bias->value();
            for (std::size_t c = 0; c < Cout; ++c) O.row(c).array() += b[c];
        }
    }

    std::vector<Var> inputs{input, kernel};
    if (bias) inputs.push_back(*bias);
    return input.tape->record(std::move(out), inputs, [input, kernel, bias, g, N, Cout](Tape& t, const Tensor& gout) {
        const Tensor& x = t.value(input);
        const Tensor& k = t.value(kernel);
        const std::size_t P = g.out_pixels(), in_stride = g.channels * g.height * g.width;
        const bool need_x = t.requires_grad(input), need_k = t.requires_grad(kernel);
        std::vector<double> col(g.trivial() ? 0 : g.patch() * P);
        std::vector<double> gcol(need_x && !g.trivial() ? g.patch() * P : 0);
        ConstMap K(k.ptr(), Cout, g.patch());
        double* gk = need_k ? t.grad_of(kernel).ptr() : nullptr;
        double* gx = need_x ? t.grad_of(input).ptr() : nullptr;
        for (std::size_t n = 0; n < N; ++n) {
            ConstMap GO(gout.ptr() + n * Cout * P, Cout, P);
            if (need_k) {
                const double* colp = x.ptr() + n * in_stride;
                if (!g.trivial()) {
                    im2col(colp, g, col.data());
                    colp = col.data();
                }
                MutMap GK(gk, Cout, g.patch());
                GK.noalias() += GO * ConstMap(colp, g.patch(), P).transpose();
            }
            if (need_x) {
                if (g.trivial()) {
                    MutMap GX(gx + n * in_stride, g.patch(), P);
                    GX.noalias() += K.transpose() * GO;
                } else {
                    MutMap GC(gcol.data(), g.patch(), P);
                    GC.noalias() = K.transpose() * GO;
                    col2im_add(gcol.data(), g, gx + n * in_stride);
                }
            }
        }
        if (bias && t.requires_grad(*bias)) {
            Tensor& gb = t.grad_of(*bias);
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t c = 0; c < Cout; ++c) {
                    const double* p = gout.ptr() + (n * Cout + c) * P;
                    double s = 0.0;
                    for (std::size_t i = 0; i < P; ++i) s += p[i];
                    gb[c] += s;
                }
        }
    });
}

Var depthwise_conv2d(Var input, Var kernel, const Conv2dOptions& opt)
{
    const Tensor& x = input.value();
    const Tensor& k = kernel.value();
    require_rank("depthwise_conv2d", x, 4, "input");
    require_rank("depthwise_conv2d", k, 4, "kernel");
    if (k.dim(0) != x.dim(1) || k.dim(1) != 1)
        fail("depthwise_conv2d", "kernel " + shape_str(k.shape()) + " does not match " + std::to_string(x.dim(1)) +
                                     " input channels (expected C x 1 x Kh x Kw)");
    const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3), KH = k.dim(2), KW = k.dim(3);
    const std::size_t Ho = conv_output_size(H, KH, opt), Wo = conv_output_size(W, KW, opt);

    // visits (input index, output index, kernel index) triples
    auto for_each_tap = [=](auto&& fn) {
        const auto pad = static_cast<std::ptrdiff_t>(opt.padding);
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t c = 0; c < C; ++c) {
                const std::size_t in_base = (n * C + c) * H * W, out_base = (n * C + c) * Ho * Wo;
                for (std::size_t i = 0; i < KH; ++i)
                    for (std::size_t j = 0; j < KW; ++j) {
                        const std::size_t kidx = (c * KH + i) * KW + j;
                        for (std::size_t oh = 0; oh < Ho; ++oh) {
                            const auto ih = static_cast<std::ptrdiff_t>(oh * opt.stride + i * opt.dilation) - pad;
                            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
                            for (std::size_t ow = 0; ow < Wo; ++ow) {
                                const auto iw = static_cast<std::ptrdiff_t>(ow * opt.stride + j * opt.dilation) - pad;
                                if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W)) continue;
                                fn(in_base + static_cast<std::size_t>(ih) * W + static_cast<std::size_t>(iw),
                                   out_base + oh * Wo + ow, kidx);
                            }
                        }
                    }
            }
    };

    Tensor out({N, C, Ho, Wo});
    for_each_tap([&](std::size_t in, std::size_t o, std::size_t kk) { out[o] += x[in] * k[kk]; });

    return input.tape->record(std::move(out), {input, kernel}, [input, kernel, for_each_tap](Tape& t, const Tensor& gout) {
        const Tensor& x = t.value(input);
        const Tensor& k = t.value(kernel);
        if (t.requires_grad(input)) {
            Tensor& gx = t.grad_of(input);
            for_each_tap([&](std::size_t in, std::size_t o, std::size_t kk) { gx[in] += gout[o] * k[kk]; });
        }
        if (t.requires_grad(kernel)) {
            Tensor& gk = t.grad_of(kernel);
            for_each_tap([&](std::size_t in, std::size_t o, std::size_t kk) { gk[kk] += gout[o] * x[in]; });
        }
    });
}

Var depthwise_separable_conv(Var input, Var depthwise_kernel, Var pointwise_kernel, const Conv2dOptions& opt)
{
    const Tensor& pw = pointwise_kernel.value();
    require_rank("depthwise_separable_conv", pw, 4, "pointwise kernel");
    if (pw.dim(2) != 1 || pw.dim(3) != 1)
        fail("depthwise_separable_conv", "pointwise kernel must be Cout x C x 1 x 1, got " + shape_str(pw.shape()));
    if (pw.dim(1) != input.value().dim(1))
        fail("depthwise_separable_conv", "pointwise kernel " + shape_str(pw.shape()) + " does not match " +
                                             std::to_string(input.value().dim(1)) + " input channels");
    return conv2d(depthwise_conv2d(input, depthwise_kernel, opt), pointwise_kernel, std::nullopt);
}

Var batch_norm(Var input, Var gamma, Var beta, BatchNormStats& stats, Mode mode, const BatchNormOptions& opt)
{
    const Tensor& x = input.value();
    require_rank("batch_norm", x, 4, "input");
    const std::size_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3), m = N * HW;
    const Tensor& gm = gamma.value();
    const Tensor& bt = beta.value();
    if (gm.size() != C || bt.size() != C || stats.running_mean.size() != C || stats.running_var.size() != C)
        fail("batch_norm", "per-channel tensors must have " + std::to_string(C) + " elements");
    if (mode == Mode::train && m < 2)
        fail("batch_norm", "train mode needs at least 2 values per channel, got input " + shape_str(x.shape()));

    std::vector<double> invstd(C);
    Tensor xhat(x.shape());
    Tensor out(x.shape());
    for (std::size_t c = 0; c < C; ++c) {
        double mean, var;
        if (mode == Mode::train) {
            double s = 0.0;
            for (std::size_t n = 0; n < N; ++n) {
                const double* p = x.ptr() + (n * C + c) * HW;
                for (std::size_t i = 0; i < HW; ++i) s += p[i];
            }
            mean = s / static_cast<double>(m);
            double v = 0.0;
            for (std::size_t n = 0; n < N; ++n) {
                const double* p = x.ptr() + (n * C + c) * HW;
                for (std::size_t i = 0; i < HW; ++i) v += (p[i] - mean) * (p[i] - mean);
            }
            var = v / static_cast<double>(m);
            stats.running_mean[c] = (1.0 - opt.momentum) * stats.running_mean[c] + opt.momentum * mean;
            stats.running_var[c] = (1.0 - opt.momentum) * stats.running_var[c] +
                                   opt.momentum * v / static_cast<double>(m - 1);
        } else {
            mean = stats.running_mean[c];
            var = stats.running_var[c];
        }
        invstd[c] = 1.0 / std::sqrt(var + opt.epsilon);
        for (std::size_t n = 0; n < N; ++n) {
            const std::size_t base = (n * C + c) * HW;
            for (std::size_t i = 0; i < HW; ++i) {
                xhat[base + i] = (x[base + i] - mean) * invstd[c];
                out[base + i] = gm[c] * xhat[base + i] + bt[c];
            }
        }
    }

    return input.tape->record(std::move(out), {input, gamma, beta},
        [input, gamma, beta, mode, N, C, HW, m, invstd = std::move(invstd), xhat = std::move(xhat)](Tape& t, const Tensor& gout) {
            const Tensor& gm = t.value(gamma);
            std::vector<double> sum_g(C, 0.0), sum_gx(C, 0.0);
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t n = 0; n < N; ++n) {
                    const std::size_t base = (n * C + c) * HW;
                    for (std::size_t i = 0; i < HW; ++i) {
                        sum_g[c] += gout[base + i];
                        sum_gx[c] += gout[base + i] * xhat[base + i];
                    }
                }
            if (t.requires_grad(gamma)) {
                Tensor& gg = t.grad_of(gamma);
                for (std::size_t c = 0; c < C; ++c) gg[c] += sum_gx[c];
            }
            if (t.requires_grad(beta)) {
                Tensor& gb = t.grad_of(beta);
                for (std::size_t c = 0; c < C; ++c) gb[c] += sum_g[c];
            }
            if (!t.requires_grad(input)) return;
            Tensor& gx = t.grad_of(input);
            const auto md = static_cast<double>(m);
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t n = 0; n < N; ++n) {
                    const std::size_t base = (n * C + c) * HW;
                    for (std::size_t i = 0; i < HW; ++i) {
                        if (mode == Mode::train)
                            gx[base + i] += gm[c] * invstd[c] / md *
                                            (md * gout[base + i] - sum_g[c] - xhat[base + i] * sum_gx[c]);
                        else
                            gx[base + i] += gm[c] * invstd[c] * gout[base + i];
                    }
                }
        });
}

Var relu(Var x)
{
    Tensor out = x.value();
    for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
    return x.tape->record(std::move(out), {x}, [x](Tape& t, const Tensor& gout) {
        const Tensor& in = t.value(x);
        Tensor& gx = t.grad_of(x);
        for (std::size_t i = 0; i < in.size(); ++i)
            if (in[i] > 0.0) gx[i] += gout[i];
    });
}

Var sigmoid(Var x)
{
    Tensor out = x.value();
    for (auto& v : out.data()) v = stable_sigmoid(v);
    const std::size_t self = x.tape->size();
    return x.tape->record(std::move(out), {x}, [x, self](Tape& t, const Tensor& gout) {
        const Tensor& y = t.value(Var{&t, self});
        Tensor& gx = t.grad_of(x);
        for (std::size_t i = 0; i < y.size(); ++i) gx[i] += gout[i] * y[i] * (1.0 - y[i]);
    });
}

Var softmax(Var x, std::size_t axis)
{
    const Tensor& in = x.value();
    if (axis >= in.rank()) fail("softmax", "axis " + std::to_string(axis) + " out of range for shape " + shape_str(in.shape()));
    const AxisSplit s = split_axis(in.shape(), axis);
    Tensor out(in.shape());
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t i = 0; i < s.inner; ++i) {
            const std::size_t base = o * s.extent * s.inner + i;
            double mx = in[base];
            for (std::size_t a = 1; a < s.extent; ++a) mx = std::max(mx, in[base + a * s.inner]);
            double z = 0.0;
            for (std::size_t a = 0; a < s.extent; ++a) {
                const double e = std::exp(in[base + a * s.inner] - mx);
                out[base + a * s.inner] = e;
                z += e;
            }
            for (std::size_t a = 0; a < s.extent; ++a) out[base + a * s.inner] /= z;
        }
    const std::size_t self = x.tape->size();
    return x.tape->record(std::move(out), {x}, [x, s, self](Tape& t, const Tensor& gout) {
        const Tensor& y = t.value(Var{&t, self});
        Tensor& gx = t.grad_of(x);
        for (std::size_t o = 0; o < s.outer; ++o)
            for (std::size_t i = 0; i < s.inner; ++i) {
                const std::size_t base = o * s.extent * s.inner + i;
                double dot = 0.0;
                for (std::size_t a = 0; a < s.extent; ++a) dot += gout[base + a * s.inner] * y[base + a * s.inner];
                for (std::size_t a = 0; a < s.extent; ++a) {
                    const std::size_t idx = base + a * s.inner;
                    gx[idx] += y[idx] * (gout[idx] - dot);
                }
            }
    });
}

Var global_avg_pool(Var x)
{
    const Tensor& in = x.value();
    require_rank("global_avg_pool", in, 4, "input");
    const std::size_t N = in.dim(0), C = in.dim(1), HW = in.dim(2) * in.dim(3);
    Tensor out({N, C, 1, 1});
    for (std::size_t nc = 0; nc < N * C; ++nc) {
        double s = 0.0;
        for (std::size_t i = 0; i < HW; ++i) s += in[nc * HW + i];
        out[nc] = s / static_cast<double>(HW);
    }
    return x.tape->record(std::move(out), {x}, [x, N, C, HW](Tape& t, const Tensor& gout) {
        Tensor& gx = t.grad_of(x);
        const double inv = 1.0 / static_cast<double>(HW);
        for (std::size_t nc = 0; nc < N * C; ++nc)
            for (std::size_t i = 0; i < HW; ++i) gx[nc * HW + i] += gout[nc] * inv;
    });
}

namespace {

struct InterpTap {
    std::size_t lo, hi;
    double frac;
};

std::vector<InterpTap> interp_taps(std::size_t in, std::size_t factor)
{
    std::vector<InterpTap> taps(in * factor);
    for (std::size_t o = 0; o < taps.size(); ++o) {
        double src = (static_cast<double>(o) + 0.5) / static_cast<double>(factor) - 0.5;
        if (src < 0.0) src = 0.0;
        auto lo = static_cast<std::size_t>(std::floor(src));
        if (lo > in - 1) lo = in - 1;
        const std::size_t hi = std::min(lo + 1, in - 1);
        taps[o] = {lo, hi, lo == hi ? 0.0 : src - static_cast<double>(lo)};
    }
    return taps;
}

}  // namespace

Var bilinear_upsample(Var x, std::size_t factor)
{
    const Tensor& in = x.value();
    require_rank("bilinear_upsample", in, 4, "input");
    if (factor == 0) fail("bilinear_upsample", "factor must be >= 1");
    if (factor == 1)
        return x.tape->record(in, {x}, [x](Tape& t, const Tensor& gout) { t.grad_of(x) += gout; });

    const std::size_t NC = in.dim(0) * in.dim(1), H = in.dim(2), W = in.dim(3);
    const std::size_t Ho = H * factor, Wo = W * factor;
    auto rows = interp_taps(H, factor);
    auto cols = interp_taps(W, factor);
    Tensor out({in.dim(0), in.dim(1), Ho, Wo});
    for (std::size_t p = 0; p < NC; ++p) {
        const double* src = in.ptr() + p * H * W;
        double* dst = out.ptr() + p * Ho * Wo;
        for (std::size_t oh = 0; oh < Ho; ++oh) {
            const InterpTap& r = rows[oh];
            for (std::size_t ow = 0; ow < Wo; ++ow) {
                const InterpTap& c = cols[ow];
                const double top = (1.0 - c.frac) * src[r.lo * W + c.lo] + c.frac * src[r.lo * W + c.hi];
                const double bot = (1.0 - c.frac) * src[r.hi * W + c.lo] + c.frac * src[r.hi * W + c.hi];
                dst[oh * Wo + ow] = (1.0 - r.frac) * top + r.frac * bot;
            }
        }
    }
    return x.tape->record(std::move(out), {x},
        [x, NC, H, W, Ho, Wo, rows = std::move(rows), cols = std::move(cols)](Tape& t, const Tensor& gout) {
            Tensor& gx = t.grad_of(x);
            for (std::size_t p = 0; p < NC; ++p) {
                double* g = gx.ptr() + p * H * W;
                const double* go = gout.ptr() + p * Ho * Wo;
                for (std::size_t oh = 0; oh < Ho; ++oh) {
                    const InterpTap& r = rows[oh];
                    for (std::size_t ow = 0; ow < Wo; ++ow) {
                        const InterpTap& c = cols[ow];
                        const double v = go[oh * Wo + ow];
                        g[r.lo * W + c.lo] += (1.0 - r.frac) * (1.0 - c.frac) * v;
                        g[r.lo * W + c.hi] += (1.0 - r.frac) * c.frac * v;
                        g[r.hi * W + c.lo] += r.frac * (1.0 - c.frac) * v;
                        g[r.hi * W + c.hi] += r.frac * c.frac * v;
                    }
                }
            }
        });
}

Var concat(Var a, Var b, std::size_t axis)
{
    const Tensor& ta = a.value();
    const Tensor& tb = b.value();
    if (ta.rank() != tb.rank() || axis >= ta.rank())
        fail("concat", "incompatible shapes " + shape_str(ta.shape()) + " and " + shape_str(tb.shape()));
    for (std::size_t i = 0; i < ta.rank(); ++i)
        if (i != axis && ta.dim(i) != tb.dim(i))
            fail("concat", "non-concat dimensions differ: " + shape_str(ta.shape()) + " vs " + shape_str(tb.shape()));
    Shape s = ta.shape();
    s[axis] += tb.dim(axis);
    const AxisSplit sa = split_axis(ta.shape(), axis), sb = split_axis(tb.shape(), axis);
    const std::size_t ca = sa.extent * sa.inner, cb = sb.extent * sb.inner;
    Tensor out(s);
    for (std::size_t o = 0; o < sa.outer; ++o) {
        std::copy_n(ta.ptr() + o * ca, ca, out.ptr() + o * (ca + cb));
        std::copy_n(tb.ptr() + o * cb, cb, out.ptr() + o * (ca + cb) + ca);
    }
    return a.tape->record(std::move(out), {a, b}, [a, b, outer = sa.outer, ca, cb](Tape& t, const Tensor& gout) {
        if (t.requires_grad(a)) {
            Tensor& ga = t.grad_of(a);
            for (std::size_t o = 0; o < outer; ++o)
                for (std::size_t i = 0; i < ca; ++i) ga[o * ca + i] += gout[o * (ca + cb) + i];
        }
        if (t.requires_grad(b)) {
            Tensor& gb = t.grad_of(b);
            for (std::size_t o = 0; o < outer; ++o)
                for (std::size_t i = 0; i < cb; ++i) gb[o * cb + i] += gout[o * (ca + cb) + ca + i];
        }
    });
}

Var add(Var a, Var b)
{
    if (a.shape() != b.shape()) fail("add", "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor out = a.value();
    out += b.value();
    return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& gout) {
        if (t.requires_grad(a)) t.grad_of(a) += gout;
        if (t.requires_grad(b)) t.grad_of(b) += gout;
    });
}

Var mul(Var a, Var b)
{
    if (a.shape() != b.shape()) fail("mul", "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor out = a.value();
    const Tensor& tb = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= tb[i];
    return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& gout) {
        const Tensor& va = t.value(a);
        const Tensor& vb = t.value(b);
        if (t.requires_grad(a)) {
            Tensor& ga = t.grad_of(a);
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gout[i] * vb[i];
        }
        if (t.requires_grad(b)) {
            Tensor& gb = t.grad_of(b);
            for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += gout[i] * va[i];
        }
    });
}

Var mul_channelwise(Var features, Var weights)
{
    const Tensor& f = features.value();
    const Tensor& w = weights.value();
    require_rank("mul_channelwise", f, 4, "features");
    if (w.shape() != Shape{f.dim(0), f.dim(1), 1, 1})
        fail("mul_channelwise", "weights " + shape_str(w.shape()) + " do not match features " + shape_str(f.shape()));
    const std::size_t NC = f.dim(0) * f.dim(1), HW = f.dim(2) * f.dim(3);
    Tensor out = f;
    for (std::size_t p = 0; p < NC; ++p)
        for (std::size_t i = 0; i < HW; ++i) out[p * HW + i] *= w[p];
    return features.tape->record(std::move(out), {features, weights}, [features, weights, NC, HW](Tape& t, const Tensor& gout) {
        const Tensor& f = t.value(features);
        const Tensor& w = t.value(weights);
        if (t.requires_grad(features)) {
            Tensor& gf = t.grad_of(features);
            for (std::size_t p = 0; p < NC; ++p)
                for (std::size_t i = 0; i < HW; ++i) gf[p * HW + i] += gout[p * HW + i] * w[p];
        }
        if (t.requires_grad(weights)) {
            Tensor& gw = t.grad_of(weights);
            for (std::size_t p = 0; p < NC; ++p) {
                double s = 0.0;
                for (std::size_t i = 0; i < HW; ++i) s += gout[p * HW + i] * f[p * HW + i];
                gw[p] += s;
            }
        }
    });
}

Var scale(Var x, double s)
{
    Tensor out = x.value();
    for (auto& v : out.data()) v *= s;
    return x.tape->record(std::move(out), {x}, [x, s](Tape& t, const Tensor& gout) {
        Tensor& gx = t.grad_of(x);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += s * gout[i];
    });
}

Var sum(Var x)
{
    double s = 0.0;
    for (double v : x.value().data()) s += v;
    return x.tape->record(Tensor::scalar(s), {x}, [x](Tape& t, const Tensor& gout) {
        Tensor& gx = t.grad_of(x);
        for (auto& g : gx.data()) g += gout[0];
    });
}

Var reshape(Var x, Shape shape)
{
    if (shape_numel(shape) != x.value().size())
        fail("reshape", "cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
    return x.tape->record(x.value().reshaped(std::move(shape)), {x}, [x](Tape& t, const Tensor& gout) {
        Tensor& gx = t.grad_of(x);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gout[i];
    });
}

Var slice(Var x, std::size_t axis, std::size_t start, std::size_t length)
{
    const Tensor& in = x.value();
    if (axis >= in.rank() || length == 0 || start + length > in.dim(axis))
        fail("slice", "range [" + std::to_string(start) + ", " + std::to_string(start + length) + ") on axis " +
                          std::to_string(axis) + " invalid for shape " + shape_str(in.shape()));
    const AxisSplit s = split_axis(in.shape(), axis);
    Shape os = in.shape();
    os[axis] = length;
    Tensor out(os);
    for (std::size_t o = 0; o < s.outer; ++o)
        std::copy_n(in.ptr() + (o * s.extent + start) * s.inner, length * s.inner, out.ptr() + o * length * s.inner);
    return x.tape->record(std::move(out), {x}, [x, s, start, length](Tape& t, const Tensor& gout) {
        Tensor& gx = t.grad_of(x);
        for (std::size_t o = 0; o < s.outer; ++o)
            for (std::size_t i = 0; i < length * s.inner; ++i)
                gx[(o * s.extent + start) * s.inner + i] += gout[o * length * s.inner + i];
    });
}

Var cross_entropy_loss(Var logits, std::span<const int> labels, std::optional<int> ignore_label)
{
    const Tensor& z = logits.value();
    require_rank("cross_entropy_loss", z, 4, "logits");
    const std::size_t N = z.dim(0), K = z.dim(1), HW = z.dim(2) * z.dim(3);
    if (labels.size() != N * HW)
        fail("cross_entropy_loss", "expected " + std::to_string(N * HW) + " labels, got " + std::to_string(labels.size()));

    // probabilities are kept for the backward pass; rows of ignored pixels stay zero
    Tensor prob(z.shape());
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t p = 0; p < HW; ++p) {
            const int label = labels[n * HW + p];
            if (ignore_label && label == *ignore_label) continue;
            if (label < 0 || static_cast<std::size_t>(label) >= K)
                fail("cross_entropy_loss", "label " + std::to_string(label) + " outside [0, " + std::to_string(K) + ")");
            const double* zp = z.ptr() + n * K * HW + p;
            double mx = zp[0];
            for (std::size_t k = 1; k < K; ++k) mx = std::max(mx, zp[k * HW]);
            double s = 0.0;
            for (std::size_t k = 0; k < K; ++k) s += std::exp(zp[k * HW] - mx);
            const double log_z = mx + std::log(s);
            total += log_z - zp[static_cast<std::size_t>(label) * HW];
            for (std::size_t k = 0; k < K; ++k) prob[n * K * HW + k * HW + p] = std::exp(zp[k * HW] - log_z);
            ++count;
        }
    if (count == 0) fail("cross_entropy_loss", "every pixel is ignored");

    std::vector<int> lab(labels.begin(), labels.end());
    return logits.tape->record(Tensor::scalar(total / static_cast<double>(count)), {logits},
        [logits, prob = std::move(prob), lab = std::move(lab), ignore_label, N, K, HW, count](Tape& t, const Tensor& gout) {
            Tensor& gz = t.grad_of(logits);
            const double s = gout[0] / static_cast<double>(count);
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t p = 0; p < HW; ++p) {
                    const int label = lab[n * HW + p];
                    if (ignore_label && label == *ignore_label) continue;
                    for (std::size_t k = 0; k < K; ++k) {
                        const std::size_t idx = n * K * HW + k * HW + p;
                        gz[idx] += s * (prob[idx] - (static_cast<std::size_t>(label) == k ? 1.0 : 0.0));
                    }
                }
        });
}

}  // namespace drfn
