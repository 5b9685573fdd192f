#pragma once

#include <cstdint>
#include <vector>

#include "derain/params.hpp"

namespace derain {

/// Shared ADAM hyperparameters and step counter; per-parameter moments live in Parameter.
struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::int64_t step = 0;
};

/// One bias-corrected ADAM update of every parameter from its `grad`:
///   m <- b1 m + (1 - b1) g,  v <- b2 v + (1 - b2) g^2,
///   p <- p - lr * m_hat / (sqrt(v_hat) + eps).
/// Throws before touching any parameter if a gradient is non-finite or misshapen.
template <typename T>
void adam_step(ParamStore<T>& params, AdamState& state, double lr);

/// Piecewise-constant step decay: initial * factor^(number of milestones <= epoch).
struct LrSchedule {
    double initial = 5e-4;
    std::vector<std::int64_t> milestones{1200, 1600};
    double factor = 0.1;
    std::int64_t total_epochs = 2000;

    /// Milestones and length multiplied by `ratio` (rounded), keeping relative positions.
    [[nodiscard]] LrSchedule scaled(double ratio) const;
    /// Schedule of `epochs` epochs with milestones at the same fractions as this one.
    [[nodiscard]] LrSchedule with_total(std::int64_t epochs) const;
};

double lr_at(const LrSchedule& schedule, std::int64_t epoch);

}  // namespace derain
