#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "derain/autodiff.hpp"
#include "derain/ops.hpp"
#include "derain/params.hpp"
#include "derain/rng.hpp"

namespace derain {

inline constexpr double kLeakySlope = 0.2;

/// Adds `<name>.weight` (He-normal, std sqrt(2 / fan_in)) and zero `<name>.bias`.
template <typename T>
void add_conv_params(ParamStore<T>& store, const std::string& name, const ConvSpec& spec,
                     Rng& rng);

/// conv2d with the parameters registered under `name`.
template <typename T>
Var<T> conv_layer(Var<T> x, const ParamStore<T>& store, const std::string& name,
                  const ConvSpec& spec);

/// Multi-scale residual block: z = H(Cat[Up_s(Pool_s(x)) for s in scales]) + x, where H is
/// conv3x3 -> lrelu -> conv3x3 -> lrelu -> conv1x1.
struct MsrbConfig {
    std::int64_t channels = 32;
    std::vector<std::int64_t> scales{1, 2, 4};
    PoolKind pool = PoolKind::Average;

    void validate() const;
    [[nodiscard]] std::int64_t fuse_input_channels() const {
        return channels * static_cast<std::int64_t>(scales.size());
    }
    /// The three convolutions of H, in application order.
    [[nodiscard]] ConvSpec fuse_spec(int index) const;
    [[nodiscard]] std::int64_t max_scale() const;
};

template <typename T>
void init_msrb(ParamStore<T>& store, const std::string& prefix, const MsrbConfig& cfg, Rng& rng);

template <typename T>
Var<T> msrb_forward(Var<T> x, const ParamStore<T>& store, const std::string& prefix,
                    const MsrbConfig& cfg);

/// z = H(x) + x: the block without its multi-scale branch. Uses the same parameter layout as
/// an MSRB whose only scale is 1.
template <typename T>
void init_plain_residual(ParamStore<T>& store, const std::string& prefix, std::int64_t channels,
                         Rng& rng);

template <typename T>
Var<T> plain_residual_forward(Var<T> x, const ParamStore<T>& store, const std::string& prefix,
                              std::int64_t channels);

/// Parallel "same"-padded 3x3 convolutions at several dilations, each followed by leaky ReLU,
/// channel-concatenated and fused by a 1x1 convolution.
struct DilatedStreamsConfig {
    std::int64_t in_channels = 32;
    std::int64_t stream_channels = 32;
    std::int64_t out_channels = 32;
    std::vector<std::int64_t> dilations{1, 2, 4};

    void validate() const;
    [[nodiscard]] ConvSpec stream_spec(std::size_t index) const;
    [[nodiscard]] ConvSpec fusion_spec() const;
};

template <typename T>
void init_dilated_streams(ParamStore<T>& store, const std::string& prefix,
                          const DilatedStreamsConfig& cfg, Rng& rng);

template <typename T>
Var<T> dilated_streams_forward(Var<T> x, const ParamStore<T>& store, const std::string& prefix,
                               const DilatedStreamsConfig& cfg);

}  // namespace derain
