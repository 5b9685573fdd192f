#include "derain/model.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

namespace derain {

std::string topology_name(Topology t) {
    switch (t) {
        case Topology::M1: return "m1";
        case Topology::M2: return "m2";
        case Topology::M3: return "m3";
        case Topology::M4: return "m4";
    }
    return "m4";
}

Topology parse_topology(const std::string& text) {
    std::string s = text;
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (s == "m1") return Topology::M1;
    if (s == "m2") return Topology::M2;
    if (s == "m3") return Topology::M3;
    if (s == "m4") return Topology::M4;
    throw std::invalid_argument("unknown mode '" + text + "' (expected m1, m2, m3 or m4)");
}

void ModelConfig::validate() const {
    if (base_channels <= 0) throw std::invalid_argument("ModelConfig: base_channels must be positive");
    if (encoder_depth < 1) throw std::invalid_argument("ModelConfig: encoder_depth must be >= 1");
    if (msrb_per_level < 0) throw std::invalid_argument("ModelConfig: msrb_per_level must be >= 0");
    msrb_config(base_channels).validate();
    DilatedStreamsConfig{base_channels, base_channels, base_channels, guide_dilations}.validate();
}

std::int64_t ModelConfig::spatial_multiple() const {
    const std::int64_t levels = std::int64_t{1} << (encoder_depth - 1);
    return levels * msrb_config(base_channels).max_scale();
}

MsrbConfig ModelConfig::msrb_config(std::int64_t channels) const {
    if (!use_multiscale) return MsrbConfig{channels, {1}, pool};
    return MsrbConfig{channels, msrb_scales, pool};
}

namespace {

std::string level_name(const std::string& prefix, const char* part, std::int64_t level) {
    return prefix + "." + part + std::to_string(level);
}

ConvSpec down_spec(std::int64_t in, std::int64_t out) { return ConvSpec::same(in, out, 3, 1, 2); }

template <typename T>
void init_residual(ParamStore<T>& store, const std::string& prefix, const ModelConfig& cfg,
                   std::int64_t channels, Rng& rng) {
    if (cfg.use_multiscale) {
        init_msrb(store, prefix, cfg.msrb_config(channels), rng);
    } else {
        init_plain_residual(store, prefix, channels, rng);
    }
}

template <typename T>
Var<T> residual(Var<T> x, const ParamStore<T>& store, const std::string& prefix,
                const ModelConfig& cfg) {
    if (cfg.use_multiscale) return msrb_forward(x, store, prefix, cfg.msrb_config(x.shape().c));
    return plain_residual_forward(x, store, prefix, x.shape().c);
}

DilatedStreamsConfig guide_streams(const ModelConfig& cfg) {
    const std::int64_t c = cfg.base_channels;
    return DilatedStreamsConfig{c, c, c, cfg.guide_dilations};
}

void require_image(const Shape& s, const ModelConfig& cfg, const char* what) {
    if (s.c != 3) {
        throw std::invalid_argument(std::string(what) + ": expected 3 channels, got " + s.str());
    }
    const std::int64_t m = cfg.spatial_multiple();
    if (s.h % m != 0 || s.w % m != 0) {
        throw std::invalid_argument(std::string(what) + ": spatial size of " + s.str() +
                                    " is not a multiple of " + std::to_string(m) +
                                    " (pad with pad_to_valid)");
    }
}

}  // namespace

template <typename T>
void init_subnet(ParamStore<T>& store, const std::string& prefix, const ModelConfig& cfg,
                 Rng& rng) {
    const std::int64_t c = cfg.base_channels;
    add_conv_params(store, prefix + ".in", ConvSpec::same(3, c, 3), rng);
    for (std::int64_t l = 0; l < cfg.encoder_depth; ++l) {
        const std::int64_t ch = c << l;
        for (std::int64_t j = 0; j < cfg.msrb_per_level; ++j) {
            init_residual(store, level_name(prefix, "enc", l) + ".block" + std::to_string(j), cfg,
                          ch, rng);
        }
        if (l + 1 < cfg.encoder_depth) {
            add_conv_params(store, level_name(prefix, "enc", l) + ".down", down_spec(ch, ch * 2), rng);
        }
    }
    for (std::int64_t l = cfg.encoder_depth - 2; l >= 0; --l) {
        const std::int64_t ch = c << l;
        const std::string dec = level_name(prefix, "dec", l);
        add_conv_params(store, dec + ".up", ConvSpec::same(ch * 2, ch, 3), rng);
        add_conv_params(store, dec + ".merge", ConvSpec::same(ch * 2, ch, 1), rng);
        for (std::int64_t j = 0; j < cfg.msrb_per_level; ++j) {
            init_residual(store, dec + ".block" + std::to_string(j), cfg, ch, rng);
        }
    }
    add_conv_params(store, prefix + ".out", ConvSpec::same(c, 3, 1), rng);
}

template <typename T>
Var<T> subnet_forward(Var<T> o, const ParamStore<T>& store, const std::string& prefix,
                      const ModelConfig& cfg) {
    require_image(o.shape(), cfg, "subnet_forward");
    const T slope = static_cast<T>(kLeakySlope);
    const std::int64_t c = cfg.base_channels;
    Var<T> x = leaky_relu(conv_layer(o, store, prefix + ".in", ConvSpec::same(3, c, 3)), slope);
    std::vector<Var<T>> skips;
    for (std::int64_t l = 0; l < cfg.encoder_depth; ++l) {
        const std::int64_t ch = c << l;
        for (std::int64_t j = 0; j < cfg.msrb_per_level; ++j) {
            x = residual(x, store, level_name(prefix, "enc", l) + ".block" + std::to_string(j), cfg);
        }
        if (l + 1 < cfg.encoder_depth) {
            skips.push_back(x);
            x = leaky_relu(
                conv_layer(x, store, level_name(prefix, "enc", l) + ".down", down_spec(ch, ch * 2)),
                slope);
        }
    }
    for (std::int64_t l = cfg.encoder_depth - 2; l >= 0; --l) {
        const std::int64_t ch = c << l;
        const std::string dec = level_name(prefix, "dec", l);
        x = leaky_relu(
            conv_layer(upsample_nearest(x, std::int64_t{2}), store, dec + ".up",
                       ConvSpec::same(ch * 2, ch, 3)),
            slope);
        const Var<T> parts[] = {x, skips[static_cast<std::size_t>(l)]};
        x = leaky_relu(
            conv_layer(concat_channels<T>(parts), store, dec + ".merge", ConvSpec::same(ch * 2, ch, 1)),
            slope);
        for (std::int64_t j = 0; j < cfg.msrb_per_level; ++j) {
            x = residual(x, store, dec + ".block" + std::to_string(j), cfg);
        }
    }
    return conv_layer(x, store, prefix + ".out", ConvSpec::same(c, 3, 1));
}

template <typename T>
void init_guide(ParamStore<T>& store, const std::string& prefix, const ModelConfig& cfg,
                Rng& rng) {
    const std::int64_t c = cfg.base_channels;
    add_conv_params(store, prefix + ".in",
                    ConvSpec::same(cfg.ablation.guide_input_channels(), c, 3), rng);
    if (cfg.ablation.no_dilated_streams) {
        add_conv_params(store, prefix + ".plain0", ConvSpec::same(c, c, 3), rng);
        add_conv_params(store, prefix + ".plain1", ConvSpec::same(c, c, 1), rng);
    } else {
        init_dilated_streams(store, prefix + ".streams", guide_streams(cfg), rng);
    }
    init_residual(store, prefix + ".block", cfg, c, rng);
    add_conv_params(store, prefix + ".out", ConvSpec::same(c, 3, 1), rng);
}

template <typename T>
Var<T> guide_forward(std::optional<Var<T>> rain_hat, Var<T> free_hat, const ParamStore<T>& store,
                     const std::string& prefix, const ModelConfig& cfg) {
    const AblationMode& mode = cfg.ablation;
    if (!mode.has_guide()) {
        throw std::logic_error("guide_forward: mode " + topology_name(mode.topology) +
                               " has no guide-learning network");
    }
    Var<T> input = free_hat;
    if (mode.topology == Topology::M4) {
        if (!rain_hat) throw std::invalid_argument("guide_forward: M4 requires the rain estimate");
        require_same_shape(rain_hat->shape(), free_hat.shape(), "guide_forward");
        const Var<T> parts[] = {*rain_hat, free_hat};
        input = concat_channels<T>(parts);
    }
    const T slope = static_cast<T>(kLeakySlope);
    const std::int64_t c = cfg.base_channels;
    Var<T> x = leaky_relu(
        conv_layer(input, store, prefix + ".in", ConvSpec::same(mode.guide_input_channels(), c, 3)),
        slope);
    if (mode.no_dilated_streams) {
        x = leaky_relu(conv_layer(x, store, prefix + ".plain0", ConvSpec::same(c, c, 3)), slope);
        x = leaky_relu(conv_layer(x, store, prefix + ".plain1", ConvSpec::same(c, c, 1)), slope);
    } else {
        x = leaky_relu(dilated_streams_forward(x, store, prefix + ".streams", guide_streams(cfg)),
                       slope);
    }
    x = residual(x, store, prefix + ".block", cfg);
    return conv_layer(x, store, prefix + ".out", ConvSpec::same(c, 3, 1));
}

template <typename T>
ModelOutputs<T> model_forward(Var<T> o, const ParamStore<T>& store, const ModelConfig& cfg) {
    require_image(o.shape(), cfg, "model_forward");
    const AblationMode& mode = cfg.ablation;
    ModelOutputs<T> out;
    if (mode.has_rain_net()) out.rain_hat = subnet_forward(o, store, "rain", cfg);
    if (mode.has_free_net()) out.free_hat = subnet_forward(o, store, "free", cfg);
    switch (mode.topology) {
        case Topology::M1: out.final = sub(o, *out.rain_hat); break;
        case Topology::M2: out.final = *out.free_hat; break;
        case Topology::M3:
        case Topology::M4:
            out.guide_hat = guide_forward(out.rain_hat, *out.free_hat, store, "guide", cfg);
            out.final = *out.guide_hat;
            break;
    }
    return out;
}

template <typename T>
ParamStore<T> init_model(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ParamStore<T> store;
    if (cfg.ablation.has_rain_net()) {
        Rng rng(derive_seed(seed, 1));
        init_subnet(store, "rain", cfg, rng);
    }
    if (cfg.ablation.has_free_net()) {
        Rng rng(derive_seed(seed, 2));
        init_subnet(store, "free", cfg, rng);
    }
    if (cfg.ablation.has_guide()) {
        Rng rng(derive_seed(seed, 3));
        init_guide(store, "guide", cfg, rng);
    }
    return store;
}

template <typename T>
DerainNet<T>::DerainNet(ModelConfig cfg, std::uint64_t seed)
    : cfg_(std::move(cfg)), params_(init_model<T>(cfg_, seed)) {}

template <typename T>
DerainNet<T>::DerainNet(ModelConfig cfg, ParamStore<T> params)
    : cfg_(std::move(cfg)), params_(std::move(params)) {
    const ParamStore<T> expected = init_model<T>(cfg_, 0);
    if (expected.size() != params_.size()) {
        throw std::invalid_argument("DerainNet: expected " + std::to_string(expected.size()) +
                                    " parameter tensors, got " + std::to_string(params_.size()));
    }
    for (std::size_t i = 0; i < expected.size(); ++i) {
        const Parameter<T>& want = expected[i];
        if (!params_.contains(want.name)) {
            throw std::invalid_argument("DerainNet: missing parameter " + want.name);
        }
        const Shape& got = params_.get(want.name).value.shape();
        if (got != want.value.shape()) {
            throw std::invalid_argument("DerainNet: parameter " + want.name + " has shape " +
                                        got.str() + ", expected " + want.value.shape().str());
        }
    }
}

std::int64_t round_up(std::int64_t size, std::int64_t multiple) {
    if (multiple <= 0) throw std::invalid_argument("round_up: multiple must be positive");
    return (size + multiple - 1) / multiple * multiple;
}

namespace {

// Mirror index without repeating the edge sample (numpy/PyTorch "reflect").
std::int64_t reflect_index(std::int64_t i, std::int64_t n) {
    if (n == 1) return 0;
    const std::int64_t period = 2 * (n - 1);
    i %= period;
    return i < n ? i : period - i;
}

}  // namespace

template <typename T>
Tensor<T> pad_to_valid(const Tensor<T>& o, std::int64_t multiple, CropRecord& record) {
    const Shape& s = o.shape();
    record = {s.h, s.w};
    const std::int64_t h = round_up(s.h, multiple);
    const std::int64_t w = round_up(s.w, multiple);
    if (h == s.h && w == s.w) return o;
    if (s.h == 0 || s.w == 0) throw std::invalid_argument("pad_to_valid: empty image");
    Tensor<T> out({s.n, s.c, h, w});
    for (std::int64_t n = 0; n < s.n; ++n)
        for (std::int64_t c = 0; c < s.c; ++c)
            for (std::int64_t y = 0; y < h; ++y)
                for (std::int64_t x = 0; x < w; ++x)
                    out.at(n, c, y, x) = o.at(n, c, reflect_index(y, s.h), reflect_index(x, s.w));
    return out;
}

template <typename T>
Tensor<T> crop_back(const Tensor<T>& x, const CropRecord& record) {
    if (x.shape().h == record.h && x.shape().w == record.w) return x;
    return x.crop(0, 0, record.h, record.w);
}

#define DERAIN_INSTANTIATE_MODEL(T)                                                          \
    template ParamStore<T> init_model(const ModelConfig&, std::uint64_t);                    \
    template void init_subnet(ParamStore<T>&, const std::string&, const ModelConfig&, Rng&); \
    template void init_guide(ParamStore<T>&, const std::string&, const ModelConfig&, Rng&);  \
    template Var<T> subnet_forward(Var<T>, const ParamStore<T>&, const std::string&,         \
                                   const ModelConfig&);                                      \
    template Var<T> guide_forward(std::optional<Var<T>>, Var<T>, const ParamStore<T>&,       \
                                  const std::string&, const ModelConfig&);                   \
    template ModelOutputs<T> model_forward(Var<T>, const ParamStore<T>&, const ModelConfig&); \
    template class DerainNet<T>;                                                             \
    template Tensor<T> pad_to_valid(const Tensor<T>&, std::int64_t, CropRecord&);            \
    template Tensor<T> crop_back(const Tensor<T>&, const CropRecord&);

DERAIN_INSTANTIATE_MODEL(float)
DERAIN_INSTANTIATE_MODEL(double)

#undef DERAIN_INSTANTIATE_MODEL

}  // namespace derain
