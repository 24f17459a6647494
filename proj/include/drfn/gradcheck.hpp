#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "drfn/autodiff.hpp"

namespace drfn {

// f maps a fresh tape and the recorded input to a scalar.
using ScalarFn = std::function<Var(Tape&, Var)>;

struct GradCheckOptions {
    double eps = 1e-5;
    // 0 checks every coordinate; otherwise a seeded random subset of this size.
    std::size_t max_coords = 0;
    std::uint64_t seed = 0;
};

// Largest elementwise relative error between the tape gradient of f at input
// and the central difference (f(x + h e_i) - f(x - h e_i)) / (2 h), where h is
// eps rounded to the nearest power of two (1e-5 -> 2^-17) so the perturbation
// itself is exact. Relative error uses max(|analytic|, |numeric|, 1e-8) as the
// denominator.
double finite_difference_check(const ScalarFn& f, const Tensor& input, const GradCheckOptions& opt = {});

// Same comparison against Parameter::grad, perturbing parameter values in place
// (restored afterwards). loss builds the forward pass on the supplied tape.
double finite_difference_check_params(const std::function<Var(Tape&)>& loss, const std::vector<Parameter*>& params,
                                      const GradCheckOptions& opt = {});

double relative_error(double analytic, double numeric);

struct GradCheckReport {
    double max_error = 0.0;  // same value the *_check functions return
    std::size_t coords = 0;
    // coordinates above tolerance, split by whether a 64x finer step agrees
    // with the analytic gradient (a non-differentiable point within +-eps)
    std::size_t nonsmooth = 0;
    std::size_t unexplained = 0;
    double max_abs_diff_over = 0.0;  // largest |analytic - numeric| among those
};

GradCheckReport finite_difference_report(const ScalarFn& f, const Tensor& input, const GradCheckOptions& opt = {},
                                         double tolerance = 1e-4);
GradCheckReport finite_difference_report_params(const std::function<Var(Tape&)>& loss, const std::vector<Parameter*>& params,
                                                const GradCheckOptions& opt = {}, double tolerance = 1e-4);

}  // namespace drfn
