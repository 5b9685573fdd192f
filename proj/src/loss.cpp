#include "derain/loss.hpp"

#include <cmath>
#include <stdexcept>

namespace derain {

void LossWeights::validate() const {
    if (!(alpha >= 0.0) || !(beta >= 0.0) || !(gamma >= 0.0)) {
        throw std::invalid_argument("LossWeights: weights must be nonnegative");
    }
}

double combine_losses(double guide, double rain, double rain_free, double physical,
                      const LossWeights& weights) {
    return guide + weights.alpha * rain + weights.beta * rain_free + weights.gamma * physical;
}

LossWeights effective_weights(const LossWeights& weights, const AblationMode& mode) {
    LossWeights w = weights;
    if (mode.no_physical_loss) w.gamma = 0.0;
    return w;
}

template <typename T>
LossTerms<T> compute_losses(const ModelOutputs<T>& outputs, Var<T> o, Var<T> b, Var<T> r,
                            const LossWeights& weights, const AblationMode& mode) {
    weights.validate();
    const LossWeights w = effective_weights(weights, mode);
    require_same_shape(o.shape(), b.shape(), "compute_losses");
    require_same_shape(o.shape(), r.shape(), "compute_losses");

    LossTerms<T> terms;
    LossBreakdown& bd = terms.breakdown;
    if (outputs.guide_hat) {
        terms.guide = l1_loss(*outputs.guide_hat, b);
        bd.guide = static_cast<double>(scalar(*terms.guide));
        bd.has_guide = true;
    }
    if (outputs.rain_hat) {
        terms.rain = l1_loss(*outputs.rain_hat, r);
        bd.rain = static_cast<double>(scalar(*terms.rain));
        bd.has_rain = true;
    }
    if (outputs.free_hat) {
        terms.rain_free = l1_loss(*outputs.free_hat, b);
        bd.rain_free = static_cast<double>(scalar(*terms.rain_free));
        bd.has_rain_free = true;
    }
    if (outputs.rain_hat && outputs.free_hat) {
        terms.physical = l1_loss(add(*outputs.free_hat, *outputs.rain_hat), o);
        bd.physical = static_cast<double>(scalar(*terms.physical));
        bd.has_physical = true;
    }
    bd.total = combine_losses(bd.guide, bd.rain, bd.rain_free, bd.physical, w);

    std::optional<Var<T>> total = terms.guide;
    auto accumulate = [&total](const std::optional<Var<T>>& term, double weight) {
        if (!term || weight == 0.0) return;
        Var<T> weighted = weight == 1.0 ? *term : scale(*term, static_cast<T>(weight));
        total = total ? add(*total, weighted) : weighted;
    };
    accumulate(terms.rain, w.alpha);
    accumulate(terms.rain_free, w.beta);
    accumulate(terms.physical, w.gamma);
    if (!total) {
        // Every active term carries zero weight.
        total = o.tape->constant(Tensor<T>({1, 1, 1, 1}));
    }
    terms.total = *total;
    return terms;
}

template <typename T>
Tensor<T> physical_residual_map(const Tensor<T>& free_hat, const Tensor<T>& rain_hat,
                                const Tensor<T>& o) {
    require_same_shape(free_hat.shape(), rain_hat.shape(), "physical_residual_map");
    require_same_shape(free_hat.shape(), o.shape(), "physical_residual_map");
    Tensor<T> out(o.shape());
    for (std::int64_t i = 0; i < o.numel(); ++i) {
        const T sum = free_hat[i] + rain_hat[i];
        out[i] = std::abs(sum - o[i]);
    }
    return out;
}

template LossTerms<float> compute_losses(const ModelOutputs<float>&, Var<float>, Var<float>,
                                         Var<float>, const LossWeights&, const AblationMode&);
template LossTerms<double> compute_losses(const ModelOutputs<double>&, Var<double>, Var<double>,
                                          Var<double>, const LossWeights&, const AblationMode&);
template Tensor<float> physical_residual_map(const Tensor<float>&, const Tensor<float>&,
                                             const Tensor<float>&);
template Tensor<double> physical_residual_map(const Tensor<double>&, const Tensor<double>&,
                                              const Tensor<double>&);

}  // namespace derain
