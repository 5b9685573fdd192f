#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "derain/autodiff.hpp"
#include "derain/params.hpp"

namespace derain {

struct GradCheckOptions {
    double step = 1e-5;
    std::uint64_t seed = 0;
    /// Coordinates probed per tensor; larger tensors are subsampled by a seeded shuffle.
    std::size_t max_coords = 64;
    /// Coordinates whose second difference |f(x+h) - 2f(x) + f(x-h)| exceeds this are
    /// treated as straddling a kink of a piecewise-linear function and skipped. <= 0 disables.
    double kink_threshold = 1e-12;
    /// Lower bound of the relative-error denominator. Central differences of an O(1) loss
    /// carry roughly 1e-11 of rounding noise, so tiny gradients are compared absolutely.
    double denominator_floor = 1e-6;
};

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst_param;
    std::int64_t worst_index = -1;
    std::size_t checked = 0;
    std::size_t skipped_kinks = 0;

    [[nodiscard]] bool passed(double tolerance) const { return max_rel_error < tolerance; }
};

/// Builds a scalar loss on a fresh tape; must register every tensor of `inputs` it reads via
/// Tape::param.
using ScalarGraph = std::function<Var<double>(Tape<double>&)>;

/// Compares reverse-mode gradients of `fn` with respect to every tensor in `inputs` against
/// central differences: max |analytic - numeric| / max(|analytic|, |numeric|, denominator_floor).
GradCheckResult gradient_check(const ScalarGraph& fn, ParamStore<double>& inputs,
                               const GradCheckOptions& options = {});

}  // namespace derain
