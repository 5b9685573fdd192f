#include "derain/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "derain/ops.hpp"
#include "derain/rng.hpp"

namespace derain {

namespace {

double evaluate(const ScalarGraph& fn) {
    Tape<double> tape;
    return scalar(fn(tape));
}

}  // namespace

GradCheckResult gradient_check(const ScalarGraph& fn, ParamStore<double>& inputs,
                               const GradCheckOptions& options) {
    double f0 = 0.0;
    {
        Tape<double> tape;
        Var<double> loss = fn(tape);
        f0 = scalar(loss);
        tape.backward(loss);
        inputs.collect_grads(tape);
    }

    GradCheckResult result;
    const double h = options.step;
    const double kink_limit = options.kink_threshold * std::max(1.0, std::abs(f0));
    Rng rng(options.seed);
    for (auto& holder : inputs) {
        Parameter<double>& p = *holder;
        std::vector<std::int64_t> coords(static_cast<std::size_t>(p.value.numel()));
        std::iota(coords.begin(), coords.end(), 0);
        if (coords.size() > options.max_coords) {
            rng.shuffle(coords);
            coords.resize(options.max_coords);
            std::sort(coords.begin(), coords.end());
        }
        for (std::int64_t i : coords) {
            const double saved = p.value[i];
            p.value[i] = saved + h;
            const double fp = evaluate(fn);
            p.value[i] = saved - h;
            const double fm = evaluate(fn);
            p.value[i] = saved;

            if (options.kink_threshold > 0.0 && std::abs(fp - 2.0 * f0 + fm) > kink_limit) {
                ++result.skipped_kinks;
                continue;
            }
            const double numeric = (fp - fm) / (2.0 * h);
            const double analytic = p.grad[i];
            const double denom = std::max({std::abs(analytic), std::abs(numeric), options.denominator_floor});
            const double err = std::abs(analytic - numeric) / denom;
            ++result.checked;
            if (err > result.max_rel_error || result.worst_index < 0) {
                if (err >= result.max_rel_error) {
                    result.max_rel_error = err;
                    result.worst_param = p.name;
                    result.worst_index = i;
                }
            }
        }
    }
    return result;
}

}  // namespace derain
