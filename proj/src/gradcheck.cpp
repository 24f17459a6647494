#include "drfn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "drfn/rng.hpp"

namespace drfn {

double relative_error(double analytic, double numeric)
{
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    return std::abs(analytic - numeric) / denom;
}

namespace {

std::vector<std::size_t> pick_coords(std::size_t n, const GradCheckOptions& opt)
{
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    if (opt.max_coords == 0 || opt.max_coords >= n) return idx;
    CounterRng rng(opt.seed, 0x6772616463686bULL);
    // partial Fisher-Yates
    for (std::size_t i = 0; i < opt.max_coords; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.next_u64() % (n - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(opt.max_coords);
    return idx;
}

// x +- h with h the power of two nearest eps; width is the exact distance
// between the rounded endpoints.
struct Step {
    double lo, hi, width;
};

Step representable_step(double x, double eps)
{
    const double h = std::exp2(std::round(std::log2(eps)));
    const double hi = x + h, lo = x - h;
    return {lo, hi, (hi - x) + (x - lo)};
}

// Shared driver: `set` writes coordinate c, `eval` re-runs the loss.
GradCheckReport run_check(std::size_t n, const std::function<double(std::size_t)>& analytic,
                          const std::function<double(std::size_t)>& get, const std::function<void(std::size_t, double)>& set,
                          const std::function<double()>& eval, const GradCheckOptions& opt, double tolerance)
{
    auto central = [&](std::size_t c, double eps) {
        const double orig = get(c);
        const Step s = representable_step(orig, eps);
        set(c, s.hi);
        const double up = eval();
        set(c, s.lo);
        const double down = eval();
        set(c, orig);
        return (up - down) / s.width;
    };

    GradCheckReport r;
    for (std::size_t c : pick_coords(n, opt)) {
        ++r.coords;
        const double a = analytic(c);
        const double num = central(c, opt.eps);
        const double err = relative_error(a, num);
        r.max_error = std::max(r.max_error, err);
        if (err <= tolerance) continue;
        r.max_abs_diff_over = std::max(r.max_abs_diff_over, std::abs(a - num));
        // A kink inside [x - eps, x + eps] breaks the oracle's smoothness
        // precondition; a 64x finer step then agrees with the analytic value.
        if (relative_error(a, central(c, opt.eps / 64)) <= tolerance)
            ++r.nonsmooth;
        else
            ++r.unexplained;
    }
    return r;
}

}  // namespace

GradCheckReport finite_difference_report(const ScalarFn& f, const Tensor& input, const GradCheckOptions& opt, double tolerance)
{
    Tensor analytic;
    {
        Tape tape;
        Var x = tape.variable(input);
        tape.backward(f(tape, x));
        analytic = tape.grad(x);
    }
    Tensor probe = input;
    return run_check(
        input.size(), [&](std::size_t i) { return analytic[i]; }, [&](std::size_t i) { return probe[i]; },
        [&](std::size_t i, double v) { probe[i] = v; },
        [&] {
            Tape tape;
            return f(tape, tape.variable(probe)).value().item();
        },
        opt, tolerance);
}

GradCheckReport finite_difference_report_params(const std::function<Var(Tape&)>& loss, const std::vector<Parameter*>& params,
                                                const GradCheckOptions& opt, double tolerance)
{
    for (Parameter* p : params) p->zero_grad();
    {
        Tape tape;
        tape.backward(loss(tape));
    }
    std::vector<std::pair<Parameter*, std::size_t>> coords;
    for (Parameter* p : params)
        for (std::size_t i = 0; i < p->value.size(); ++i) coords.emplace_back(p, i);
    return run_check(
        coords.size(), [&](std::size_t c) { return coords[c].first->grad[coords[c].second]; },
        [&](std::size_t c) { return coords[c].first->value[coords[c].second]; },
        [&](std::size_t c, double v) { coords[c].first->value[coords[c].second] = v; },
        [&] {
            Tape tape;
            return loss(tape).value().item();
        },
        opt, tolerance);
}

double finite_difference_check(const ScalarFn& f, const Tensor& input, const GradCheckOptions& opt)
{
    return finite_difference_report(f, input, opt, std::numeric_limits<double>::infinity()).max_error;
}

double finite_difference_check_params(const std::function<Var(Tape&)>& loss, const std::vector<Parameter*>& params,
                                      const GradCheckOptions& opt)
{
    return finite_difference_report_params(loss, params, opt, std::numeric_limits<double>::infinity()).max_error;
}

}  // namespace drfn
