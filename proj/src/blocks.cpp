#include "derain/blocks.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace derain {

template <typename T>
void add_conv_params(ParamStore<T>& store, const std::string& name, const ConvSpec& spec,
                     Rng& rng) {
    Tensor<T> w(spec.weight_shape());
    const double std_dev = std::sqrt(2.0 / static_cast<double>(spec.fan_in()));
    for (std::int64_t i = 0; i < w.numel(); ++i) w[i] = static_cast<T>(std_dev * rng.normal());
    store.add(name + ".weight", std::move(w));
    store.add(name + ".bias", Tensor<T>(spec.bias_shape()));
}

template <typename T>
Var<T> conv_layer(Var<T> x, const ParamStore<T>& store, const std::string& name,
                  const ConvSpec& spec) {
    Tape<T>& tape = *x.tape;
    return conv2d(x, tape.param(store.get(name + ".weight")), tape.param(store.get(name + ".bias")),
                  spec);
}

void MsrbConfig::validate() const {
    if (channels <= 0) throw std::invalid_argument("MsrbConfig: channels must be positive");
    if (scales.empty()) throw std::invalid_argument("MsrbConfig: no scales");
    std::set<std::int64_t> seen;
    for (std::int64_t s : scales) {
        if (s <= 0 || !seen.insert(s).second) {
            throw std::invalid_argument("MsrbConfig: scales must be distinct and positive");
        }
    }
}

ConvSpec MsrbConfig::fuse_spec(int index) const {
    switch (index) {
        case 0: return ConvSpec::same(fuse_input_channels(), channels, 3);
        case 1: return ConvSpec::same(channels, channels, 3);
        case 2: return ConvSpec::same(channels, channels, 1);
        default: throw std::out_of_range("MsrbConfig::fuse_spec: index must be 0, 1 or 2");
    }
}

std::int64_t MsrbConfig::max_scale() const {
    return scales.empty() ? 1 : *std::max_element(scales.begin(), scales.end());
}

namespace {

template <typename T>
Var<T> fuse_body(Var<T> x, const ParamStore<T>& store, const std::string& prefix,
                 const MsrbConfig& cfg) {
    const T slope = static_cast<T>(kLeakySlope);
    Var<T> h = leaky_relu(conv_layer(x, store, prefix + ".h0", cfg.fuse_spec(0)), slope);
    h = leaky_relu(conv_layer(h, store, prefix + ".h1", cfg.fuse_spec(1)), slope);
    return conv_layer(h, store, prefix + ".h2", cfg.fuse_spec(2));
}

}  // namespace

template <typename T>
void init_msrb(ParamStore<T>& store, const std::string& prefix, const MsrbConfig& cfg, Rng& rng) {
    cfg.validate();
    for (int i = 0; i < 3; ++i) {
        add_conv_params(store, prefix + ".h" + std::to_string(i), cfg.fuse_spec(i), rng);
    }
}

template <typename T>
Var<T> msrb_forward(Var<T> x, const ParamStore<T>& store, const std::string& prefix,
                    const MsrbConfig& cfg) {
    cfg.validate();
    const Shape& s = x.shape();
    if (s.c != cfg.channels) {
        throw std::invalid_argument("msrb_forward: input " + s.str() + " does not have " +
                                    std::to_string(cfg.channels) + " channels");
    }
    const std::int64_t m = cfg.max_scale();
    if (s.h % m != 0 || s.w % m != 0) {
        throw std::invalid_argument("msrb_forward: spatial size of " + s.str() +
                                    " is not divisible by scale " + std::to_string(m));
    }
    std::vector<Var<T>> branches;
    branches.reserve(cfg.scales.size());
    for (std::int64_t scale : cfg.scales) {
        branches.push_back(upsample_nearest(pool(x, scale, cfg.pool), scale));
    }
    Var<T> cat = concat_channels<T>(branches);
    return add(fuse_body(cat, store, prefix, cfg), x);
}

template <typename T>
void init_plain_residual(ParamStore<T>& store, const std::string& prefix, std::int64_t channels,
                         Rng& rng) {
    init_msrb(store, prefix, MsrbConfig{channels, {1}, PoolKind::Average}, rng);
}

template <typename T>
Var<T> plain_residual_forward(Var<T> x, const ParamStore<T>& store, const std::string& prefix,
                              std::int64_t channels) {
    if (x.shape().c != channels) {
        throw std::invalid_argument("plain_residual_forward: input " + x.shape().str() +
                                    " does not have " + std::to_string(channels) + " channels");
    }
    const MsrbConfig cfg{channels, {1}, PoolKind::Average};
    return add(fuse_body(x, store, prefix, cfg), x);
}

void DilatedStreamsConfig::validate() const {
    if (in_channels <= 0 || stream_channels <= 0 || out_channels <= 0) {
        throw std::invalid_argument("DilatedStreamsConfig: channel counts must be positive");
    }
    if (dilations.empty()) throw std::invalid_argument("DilatedStreamsConfig: no streams");
    std::set<std::int64_t> seen;
    for (std::int64_t d : dilations) {
        if (d <= 0 || !seen.insert(d).second) {
            throw std::invalid_argument("DilatedStreamsConfig: dilations must be distinct and positive");
        }
    }
}

ConvSpec DilatedStreamsConfig::stream_spec(std::size_t index) const {
    return ConvSpec::same(in_channels, stream_channels, 3, dilations.at(index));
}

ConvSpec DilatedStreamsConfig::fusion_spec() const {
    return ConvSpec::same(stream_channels * static_cast<std::int64_t>(dilations.size()),
                          out_channels, 1);
}

template <typename T>
void init_dilated_streams(ParamStore<T>& store, const std::string& prefix,
                          const DilatedStreamsConfig& cfg, Rng& rng) {
    cfg.validate();
    for (std::size_t i = 0; i < cfg.dilations.size(); ++i) {
        add_conv_params(store, prefix + ".stream" + std::to_string(i), cfg.stream_spec(i), rng);
    }
    add_conv_params(store, prefix + ".fuse", cfg.fusion_spec(), rng);
}

template <typename T>
Var<T> dilated_streams_forward(Var<T> x, const ParamStore<T>& store, const std::string& prefix,
                               const DilatedStreamsConfig& cfg) {
    cfg.validate();
    if (x.shape().c != cfg.in_channels) {
        throw std::invalid_argument("dilated_streams_forward: input " + x.shape().str() +
                                    " does not have " + std::to_string(cfg.in_channels) +
                                    " channels");
    }
    const T slope = static_cast<T>(kLeakySlope);
    std::vector<Var<T>> streams;
    for (std::size_t i = 0; i < cfg.dilations.size(); ++i) {
        streams.push_back(leaky_relu(
            conv_layer(x, store, prefix + ".stream" + std::to_string(i), cfg.stream_spec(i)),
            slope));
    }
    return conv_layer(concat_channels<T>(streams), store, prefix + ".fuse", cfg.fusion_spec());
}

#define DERAIN_INSTANTIATE_BLOCKS(T)                                                         \
    template void add_conv_params(ParamStore<T>&, const std::string&, const ConvSpec&, Rng&); \
    template Var<T> conv_layer(Var<T>, const ParamStore<T>&, const std::string&,              \
                               const ConvSpec&);                                              \
    template void init_msrb(ParamStore<T>&, const std::string&, const MsrbConfig&, Rng&);     \
    template Var<T> msrb_forward(Var<T>, const ParamStore<T>&, const std::string&,            \
                                 const MsrbConfig&);                                          \
    template void init_plain_residual(ParamStore<T>&, const std::string&, std::int64_t, Rng&); \
    template Var<T> plain_residual_forward(Var<T>, const ParamStore<T>&, const std::string&,  \
                                           std::int64_t);                                     \
    template void init_dilated_streams(ParamStore<T>&, const std::string&,                    \
                                       const DilatedStreamsConfig&, Rng&);                    \
    template Var<T> dilated_streams_forward(Var<T>, const ParamStore<T>&, const std::string&, \
                                            const DilatedStreamsConfig&);

DERAIN_INSTANTIATE_BLOCKS(float)
DERAIN_INSTANTIATE_BLOCKS(double)

#undef DERAIN_INSTANTIATE_BLOCKS

}  // namespace derain
