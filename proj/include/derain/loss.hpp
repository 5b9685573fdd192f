#pragma once

#include <optional>

#include "derain/model.hpp"

namespace derain {

/// Weights of L = L_guide + alpha L_rain + beta L_rain-free + gamma L_p.
struct LossWeights {
    double alpha = 0.5;
    double beta = 0.5;
    double gamma = 0.001;

    void validate() const;
};

/// Scalar values of the four terms and the weighted total. Terms whose prediction does not
/// exist in the active topology are 0 and flagged absent.
struct LossBreakdown {
    double guide = 0.0;
    double rain = 0.0;
    double rain_free = 0.0;
    double physical = 0.0;
    double total = 0.0;
    bool has_guide = false;
    bool has_rain = false;
    bool has_rain_free = false;
    bool has_physical = false;
};

/// guide + alpha * rain + beta * rain_free + gamma * physical, summed left to right.
double combine_losses(double guide, double rain, double rain_free, double physical,
                      const LossWeights& weights);

/// Weights actually applied under `mode`: R_2 zeroes gamma.
LossWeights effective_weights(const LossWeights& weights, const AblationMode& mode);

template <typename T>
struct LossTerms {
    std::optional<Var<T>> guide;
    std::optional<Var<T>> rain;
    std::optional<Var<T>> rain_free;
    std::optional<Var<T>> physical;
    Var<T> total;
    LossBreakdown breakdown;
};

/// Differentiable loss terms. `o`, `b`, `r` are the rainy input, clean target and streak
/// target. A term is active iff the quantity it supervises exists in the topology; the
/// physical term needs both R~ and B~.
template <typename T>
LossTerms<T> compute_losses(const ModelOutputs<T>& outputs, Var<T> o, Var<T> b, Var<T> r,
                            const LossWeights& weights, const AblationMode& mode);

/// |B~ + R~ - O| per element, for inspection.
template <typename T>
Tensor<T> physical_residual_map(const Tensor<T>& free_hat, const Tensor<T>& rain_hat,
                                const Tensor<T>& o);

}  // namespace derain
