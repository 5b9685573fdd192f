#pragma once
// Reference implementations used only by the tests. They are deliberately naive: direct
// loops, long double accumulation, no shared code with the library beyond Tensor access.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "derain/autodiff.hpp"
#include "derain/ops.hpp"
#include "derain/params.hpp"

namespace oracle {

using derain::ParamStore;
using derain::Tape;
using derain::Tensor;
using derain::Var;

struct FdResult {
    double max_rel_error = 0.0;
    std::string worst;
    std::size_t checked = 0;
    std::size_t kinks = 0;
};

/// One ulp of an O(1) loss divided by 2h is about 1e-11, so a gradient that is exactly zero
/// shows up numerically as +-1e-11. Below this floor errors are measured against the floor
/// instead of the (noise-sized) gradient, i.e. |analytic - numeric| < 1e-10 is required.
inline constexpr double kFloor = 1e-6;

/// Central differences f(x +- h) per sampled coordinate against the tape's reverse pass.
/// A coordinate whose second difference is far above rounding level sits across a kink of a
/// piecewise-linear function (leaky ReLU, max pool, |.|); there the one-sided slopes differ
/// and the central difference is not a derivative, so it is skipped and counted.
inline FdResult central_differences(const std::function<Var<double>(Tape<double>&)>& fn,
                                    ParamStore<double>& inputs, std::uint64_t seed,
                                    double h = 1e-5, std::size_t per_tensor = 64) {
    auto eval = [&]() {
        Tape<double> t;
        return fn(t).value()[0];
    };
    std::vector<Tensor<double>> analytic;
    double f0 = 0.0;
    {
        Tape<double> t;
        Var<double> loss = fn(t);
        f0 = loss.value()[0];
        t.backward(loss);
        for (const auto& p : inputs) {
            const std::ptrdiff_t id = t.find_param(*p);
            if (id < 0 || t.grad(static_cast<std::size_t>(id)).empty()) {
                analytic.emplace_back(p->value.shape());
            } else {
                analytic.push_back(t.grad(static_cast<std::size_t>(id)));
            }
        }
    }
    FdResult res;
    std::mt19937_64 gen(seed);
    std::size_t k = 0;
    for (auto& p : inputs) {
        const Tensor<double>& g = analytic[k++];
        std::vector<std::int64_t> idx(static_cast<std::size_t>(p->value.numel()));
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<std::int64_t>(i);
        std::shuffle(idx.begin(), idx.end(), gen);
        if (idx.size() > per_tensor) idx.resize(per_tensor);
        for (std::int64_t i : idx) {
            const double x = p->value[i];
            p->value[i] = x + h;
            const double fp = eval();
            p->value[i] = x - h;
            const double fm = eval();
            p->value[i] = x;
            const double curvature = std::abs(fp - 2.0 * f0 + fm);
            if (curvature > 1e-12 * std::max(1.0, std::abs(f0))) {
                ++res.kinks;
                continue;
            }
            const double num = (fp - fm) / (2.0 * h);
            const double ana = g[i];
            const double err = std::abs(num - ana) / std::max({std::abs(num), std::abs(ana), kFloor});
            ++res.checked;
            if (err >= res.max_rel_error) {
                res.max_rel_error = err;
                res.worst = p->name + "[" + std::to_string(i) + "]";
            }
        }
    }
    return res;
}

/// 10 log10(1 / MSE) over every element, MSE accumulated in long double.
template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b) {
    long double acc = 0;
    for (std::int64_t i = 0; i < a.numel(); ++i) {
        const long double d = static_cast<long double>(a[i]) - static_cast<long double>(b[i]);
        acc += d * d;
    }
    const long double mse = acc / a.numel();
    if (mse == 0) return std::numeric_limits<double>::infinity();
    return static_cast<double>(10.0L * std::log10(1.0L / mse));
}

/// Mean SSIM: for every valid 11x11 window position of every channel, weighted moments under
/// a 2-D Gaussian (sigma 1.5) evaluated directly, constants (0.01)^2 and (0.03)^2.
template <typename T>
double ssim(const Tensor<T>& a, const Tensor<T>& b) {
    const int r = 5;
    long double w[11][11];
    long double wsum = 0;
    for (int y = -r; y <= r; ++y)
        for (int x = -r; x <= r; ++x) {
            w[y + r][x + r] = std::exp(-(x * x + y * y) / (2.0L * 1.5L * 1.5L));
            wsum += w[y + r][x + r];
        }
    const long double c1 = 0.01L * 0.01L, c2 = 0.03L * 0.03L;
    const auto& s = a.shape();
    long double total = 0;
    std::int64_t count = 0;
    for (std::int64_t n = 0; n < s.n; ++n)
        for (std::int64_t c = 0; c < s.c; ++c) {
            long double plane = 0;
            std::int64_t windows = 0;
            for (std::int64_t cy = r; cy < s.h - r; ++cy)
                for (std::int64_t cx = r; cx < s.w - r; ++cx) {
                    long double ma = 0, mb = 0, aa = 0, bb = 0, ab = 0;
                    for (int y = -r; y <= r; ++y)
                        for (int x = -r; x <= r; ++x) {
                            const long double k = w[y + r][x + r] / wsum;
                            const long double va = a.at(n, c, cy + y, cx + x);
                            const long double vb = b.at(n, c, cy + y, cx + x);
                            ma += k * va;
                            mb += k * vb;
                            aa += k * va * va;
                            bb += k * vb * vb;
                            ab += k * va * vb;
                        }
                    const long double va = aa - ma * ma, vb = bb - mb * mb, cov = ab - ma * mb;
                    plane += ((2 * ma * mb + c1) * (2 * cov + c2)) /
                             ((ma * ma + mb * mb + c1) * (va + vb + c2));
                    ++windows;
                }
            total += plane / windows;
            ++count;
        }
    return static_cast<double>(total / count);
}

}  // namespace oracle
