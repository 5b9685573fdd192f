#include "derain/optim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace derain {

template <typename T>
void adam_step(ParamStore<T>& params, AdamState& state, double lr) {
    for (const auto& p : params) {
        if (p->grad.shape() != p->value.shape() || p->m.shape() != p->value.shape() ||
            p->v.shape() != p->value.shape()) {
            throw std::invalid_argument("adam_step: state shape mismatch for parameter " + p->name);
        }
        for (std::int64_t i = 0; i < p->grad.numel(); ++i) {
            if (!std::isfinite(p->grad[i])) {
                throw std::invalid_argument("adam_step: non-finite gradient in parameter " +
                                            p->name + " at index " + std::to_string(i));
            }
        }
    }
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const T b1 = static_cast<T>(state.beta1);
    const T b2 = static_cast<T>(state.beta2);
    const T c1 = static_cast<T>(1.0 - std::pow(state.beta1, t));
    const T c2 = static_cast<T>(1.0 - std::pow(state.beta2, t));
    const T rate = static_cast<T>(lr);
    const T eps = static_cast<T>(state.eps);
    for (auto& p : params) {
        T* value = p->value.ptr();
        T* m = p->m.ptr();
        T* v = p->v.ptr();
        const T* g = p->grad.ptr();
        for (std::int64_t i = 0; i < p->value.numel(); ++i) {
            m[i] = b1 * m[i] + (T(1) - b1) * g[i];
            v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
            const T m_hat = m[i] / c1;
            const T v_hat = v[i] / c2;
            value[i] -= rate * m_hat / (std::sqrt(v_hat) + eps);
        }
    }
}

LrSchedule LrSchedule::scaled(double ratio) const {
    if (!(ratio > 0.0)) throw std::invalid_argument("LrSchedule::scaled: ratio must be positive");
    LrSchedule out = *this;
    out.total_epochs = std::max<std::int64_t>(1, std::llround(static_cast<double>(total_epochs) * ratio));
    for (auto& m : out.milestones) m = std::llround(static_cast<double>(m) * ratio);
    return out;
}

LrSchedule LrSchedule::with_total(std::int64_t epochs) const {
    if (epochs <= 0) throw std::invalid_argument("LrSchedule::with_total: epochs must be positive");
    return scaled(static_cast<double>(epochs) / static_cast<double>(total_epochs));
}

double lr_at(const LrSchedule& schedule, std::int64_t epoch) {
    if (epoch < 0 || epoch >= schedule.total_epochs) {
        throw std::invalid_argument("lr_at: epoch " + std::to_string(epoch) + " outside [0, " +
                                    std::to_string(schedule.total_epochs) + ")");
    }
    double lr = schedule.initial;
    for (std::int64_t m : schedule.milestones) {
        if (m <= epoch) lr *= schedule.factor;
    }
    return lr;
}

template void adam_step(ParamStore<float>&, AdamState&, double);
template void adam_step(ParamStore<double>&, AdamState&, double);

}  // namespace derain
