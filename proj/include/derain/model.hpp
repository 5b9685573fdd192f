#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "derain/blocks.hpp"

namespace derain {

/// Network topology of the ablation study.
enum class Topology {
    M1,  // rain-streak network only; final = O - R~
    M2,  // rain-free network only; final = B~
    M3,  // both networks; only the rain-free estimate feeds the guide network
    M4,  // both networks, concatenated into the guide network (default)
};

struct AblationMode {
    Topology topology = Topology::M4;
    bool no_dilated_streams = false;  // R_1
    bool no_physical_loss = false;    // R_2

    [[nodiscard]] bool has_rain_net() const { return topology != Topology::M2; }
    [[nodiscard]] bool has_free_net() const { return topology != Topology::M1; }
    [[nodiscard]] bool has_guide() const {
        return topology == Topology::M3 || topology == Topology::M4;
    }
    [[nodiscard]] std::int64_t guide_input_channels() const {
        return topology == Topology::M4 ? 6 : 3;
    }

    friend bool operator==(const AblationMode&, const AblationMode&) = default;
};

std::string topology_name(Topology t);
/// Accepts m1..m4 (case-insensitive).
Topology parse_topology(const std::string& text);

struct ModelConfig {
    std::int64_t base_channels = 32;
    std::int64_t encoder_depth = 3;
    std::int64_t msrb_per_level = 1;
    bool use_multiscale = true;
    PoolKind pool = PoolKind::Average;
    std::vector<std::int64_t> msrb_scales{1, 2, 4};
    std::vector<std::int64_t> guide_dilations{1, 2, 4};
    AblationMode ablation;

    void validate() const;
    /// Input height and width must be multiples of this.
    [[nodiscard]] std::int64_t spatial_multiple() const;
    [[nodiscard]] MsrbConfig msrb_config(std::int64_t channels) const;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

template <typename T>
struct ModelOutputs {
    std::optional<Var<T>> rain_hat;   // R~
    std::optional<Var<T>> free_hat;   // B~
    std::optional<Var<T>> guide_hat;  // B^
    Var<T> final;
};

/// Parameters of a whole network, deterministic in `seed`. Each sub-network draws from its
/// own seed stream, so a sub-network's initial weights do not depend on the topology.
template <typename T>
ParamStore<T> init_model(const ModelConfig& cfg, std::uint64_t seed);

template <typename T>
void init_subnet(ParamStore<T>& store, const std::string& prefix, const ModelConfig& cfg,
                 Rng& rng);

template <typename T>
void init_guide(ParamStore<T>& store, const std::string& prefix, const ModelConfig& cfg,
                Rng& rng);

/// Encoder-decoder with skip connections; maps (n, 3, h, w) to (n, 3, h, w).
template <typename T>
Var<T> subnet_forward(Var<T> o, const ParamStore<T>& store, const std::string& prefix,
                      const ModelConfig& cfg);

/// Guide-learning network. `rain_hat` is required under M4 and ignored under M3.
template <typename T>
Var<T> guide_forward(std::optional<Var<T>> rain_hat, Var<T> free_hat, const ParamStore<T>& store,
                     const std::string& prefix, const ModelConfig& cfg);

template <typename T>
ModelOutputs<T> model_forward(Var<T> o, const ParamStore<T>& store, const ModelConfig& cfg);

template <typename T>
class DerainNet {
public:
    DerainNet(ModelConfig cfg, std::uint64_t seed);
    /// Adopts existing parameters; throws if names or shapes do not match `cfg`.
    DerainNet(ModelConfig cfg, ParamStore<T> params);

    [[nodiscard]] const ModelConfig& config() const { return cfg_; }
    [[nodiscard]] ParamStore<T>& params() { return params_; }
    [[nodiscard]] const ParamStore<T>& params() const { return params_; }
    [[nodiscard]] std::int64_t parameter_count() const { return params_.element_count(); }

    ModelOutputs<T> forward(Var<T> o) const { return model_forward(o, params_, cfg_); }

private:
    ModelConfig cfg_;
    ParamStore<T> params_;
};

struct CropRecord {
    std::int64_t h = 0;
    std::int64_t w = 0;
};

/// Smallest multiple of `multiple` that is >= `size`.
std::int64_t round_up(std::int64_t size, std::int64_t multiple);

/// Reflect-pads the bottom and right edges up to the next multiple of `multiple`.
template <typename T>
Tensor<T> pad_to_valid(const Tensor<T>& o, std::int64_t multiple, CropRecord& record);

template <typename T>
Tensor<T> crop_back(const Tensor<T>& x, const CropRecord& record);

}  // namespace derain
