#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "derain/checkpoint.hpp"
#include "derain/data.hpp"
#include "derain/loss.hpp"
#include "derain/metrics.hpp"

namespace derain::app {

/// Fully resolved settings of one command. Keys of the echoed config file match the CLI
/// flag names, so a run can be replayed with `--config <out>/resolved_config.ini`.
struct RunConfig {
    std::uint64_t seed = 7;

    // Model
    std::string mode;  // m1..m4; empty means m4 (train) or the checkpoint's mode (derain)
    bool no_multiscale = false;
    bool no_dilated_streams = false;
    bool no_physical_loss = false;
    std::int64_t base_channels = 32;
    std::int64_t encoder_depth = 3;
    std::int64_t msrb_per_level = 1;
    std::string pool = "avg";

    // Loss and optimisation
    double alpha = 0.5;
    double beta = 0.5;
    double gamma = 0.001;
    double lr = 5e-4;
    std::int64_t epochs = 200;
    std::int64_t batch = 8;
    std::int64_t crop = 32;
    std::int64_t checkpoint_every = 50;

    // Data
    std::string dataset;
    bool synthetic = false;
    std::int64_t synthetic_count = 16;
    std::int64_t synthetic_size = 64;
    std::int64_t holdout_count = 4;
    RainParams rain;

    // I/O
    std::string out = "out";
    std::string checkpoint;
    bool dump_intermediates = false;
    std::vector<std::string> inputs;
    std::string derained;
    std::string ground_truth;
    std::string rainy;
};

ModelConfig model_config(const RunConfig& cfg);
LossWeights loss_weights(const RunConfig& cfg);
LrSchedule schedule(const RunConfig& cfg);

/// `key = value` lines for every field, in a fixed order.
std::string to_ini(const RunConfig& cfg);

struct InferenceResult {
    Tensor<float> final;
    std::optional<Tensor<float>> rain_hat;
    std::optional<Tensor<float>> free_hat;
    std::optional<Tensor<float>> guide_hat;
};

/// Owns a network and its optimiser state; one writer.
class Trainer {
public:
    Trainer(ModelConfig cfg, LossWeights weights, std::uint64_t seed);
    Trainer(const Checkpoint& ckpt, LossWeights weights);

    /// forward -> losses -> backward -> ADAM update on one batch.
    LossBreakdown step(const Batch& batch, double lr);
    /// Losses on a batch without updating.
    [[nodiscard]] LossBreakdown losses(const Batch& batch) const;
    /// Pads to a valid size, runs the network and crops back. `o` is (n, 3, h, w).
    [[nodiscard]] InferenceResult infer(const Tensor<float>& o) const;

    [[nodiscard]] const DerainNet<float>& net() const { return net_; }
    [[nodiscard]] DerainNet<float>& net() { return net_; }
    [[nodiscard]] const AdamState& adam() const { return adam_; }
    [[nodiscard]] const LossWeights& weights() const { return weights_; }
    [[nodiscard]] Checkpoint checkpoint(std::int64_t epoch) const;

private:
    DerainNet<float> net_;
    LossWeights weights_;
    AdamState adam_;
};

Batch single_batch(const RainPair& pair);

struct EpochLog {
    std::int64_t epoch = 0;
    double lr = 0.0;
    LossBreakdown loss;
};

/// Header and row writer of the training log (CSV).
void write_log_header(std::ostream& os);
void write_log_row(std::ostream& os, const EpochLog& row);

struct TrainResult {
    std::vector<EpochLog> epochs;
    Checkpoint state;  // after the last epoch
    std::filesystem::path checkpoint;
    std::filesystem::path log;
};

/// Training / held-out data named by the config: `dataset` (rain/ + norain/) or the seeded
/// synthetic set.
std::vector<RainPair> resolve_training_data(const RunConfig& cfg);
std::vector<RainPair> synthetic_holdout(const RunConfig& cfg);

/// The seeded training loop over `data`, writing the log, periodic checkpoints and the final
/// `checkpoint.ckpt` into `out_dir`.
TrainResult train_on(const RunConfig& cfg, const std::vector<RainPair>& data,
                     const std::filesystem::path& out_dir);

TrainResult cmd_train(const RunConfig& cfg);

/// Writes `<stem>.png` per input (plus `<stem>_rain.png` / `<stem>_free.png` when dumping
/// intermediates) into cfg.out. Returns the files written.
std::vector<std::filesystem::path> cmd_derain(const RunConfig& cfg);

/// PSNR / SSIM of cfg.derained against cfg.ground_truth; writes `eval.csv` into cfg.out and,
/// when cfg.rainy and intermediate dumps are present, `physical_residual.csv`.
MetricReport cmd_eval(const RunConfig& cfg, std::ostream& table);

struct AblationEntry {
    std::string label;   // e.g. "M4/W", "R2"
    std::string table;   // "2" or "3"
    std::string column;  // M_1..M_4 or R_1..R_3
    std::string row;     // W, W/O or ""
    ModelConfig model;
    double psnr = 0.0;   // held-out mean
    double ssim = 0.0;   // held-out mean
    double train_l1 = 0.0;  // mean |final - B| over the training set after training
    std::vector<EpochLog> log;
};

struct AblationResult {
    std::vector<AblationEntry> entries;
    std::string tables;  // markdown rendering of both tables
};

AblationResult cmd_ablate(const RunConfig& cfg, std::ostream& table);

}  // namespace derain::app
