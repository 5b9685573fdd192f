#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "derain/autodiff.hpp"

namespace derain {

/// Geometry of a 2-D convolution (cross-correlation, no kernel flip).
struct ConvSpec {
    std::int64_t in_channels = 1;
    std::int64_t out_channels = 1;
    std::int64_t kh = 1;
    std::int64_t kw = 1;
    std::int64_t stride = 1;
    std::int64_t dilation = 1;
    std::int64_t pad_top = 0;
    std::int64_t pad_bottom = 0;
    std::int64_t pad_left = 0;
    std::int64_t pad_right = 0;

    /// Odd square kernel with padding dilation*(k-1)/2 on every side, so stride 1 keeps the
    /// spatial size.
    static ConvSpec same(std::int64_t in, std::int64_t out, std::int64_t k,
                         std::int64_t dilation = 1, std::int64_t stride = 1);

    [[nodiscard]] Shape weight_shape() const { return {out_channels, in_channels, kh, kw}; }
    [[nodiscard]] Shape bias_shape() const { return {1, out_channels, 1, 1}; }
    [[nodiscard]] std::int64_t fan_in() const { return in_channels * kh * kw; }
    /// Output shape for input `x`; throws std::invalid_argument if empty or mismatched.
    [[nodiscard]] Shape output_shape(const Shape& x) const;
};

enum class PoolKind { Average, Max };

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> weight, Var<T> bias, const ConvSpec& spec);

/// Mean over k x k blocks with stride k. k = 1 returns `x` itself.
template <typename T>
Var<T> avg_pool(Var<T> x, std::int64_t k);

/// Max over k x k blocks with stride k; the gradient goes to the first maximal cell.
template <typename T>
Var<T> max_pool(Var<T> x, std::int64_t k);

template <typename T>
Var<T> pool(Var<T> x, std::int64_t k, PoolKind kind);

/// Replicates each cell into an s x s block. s = 1 returns `x` itself.
template <typename T>
Var<T> upsample_nearest(Var<T> x, std::int64_t s);

template <typename T>
Var<T> concat_channels(std::span<const Var<T>> xs);

template <typename T>
Var<T> leaky_relu(Var<T> x, T slope = T(0.2));

template <typename T>
Var<T> add(Var<T> a, Var<T> b);

template <typename T>
Var<T> sub(Var<T> a, Var<T> b);

template <typename T>
Var<T> scale(Var<T> x, T factor);

/// Mean of all elements as a (1, 1, 1, 1) tensor.
template <typename T>
Var<T> mean(Var<T> x);

/// mean |a - b|; the subgradient at ties is 0.
template <typename T>
Var<T> l1_loss(Var<T> a, Var<T> b);

/// Scalar value of a single-element node.
template <typename T>
T scalar(Var<T> v);

}  // namespace derain
