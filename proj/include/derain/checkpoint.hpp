#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "derain/model.hpp"
#include "derain/optim.hpp"

namespace derain {

/// Everything needed to resume training or run inference.
struct Checkpoint {
    ModelConfig config;
    ParamStore<float> params;  // values and ADAM moments
    AdamState adam;
    std::int64_t epoch = 0;    // epochs completed
};

/// Layout: a `DERAIN-CHECKPOINT 1` line, a line holding the manifest's byte length, the JSON
/// manifest (config, optimizer state, and per tensor: name, role, shape, dtype, byte offset),
/// then raw little-endian float32 blobs in manifest order. Output is a pure function of the
/// contents, so identical state gives identical bytes.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Manifest text without the blobs, for inspection.
std::string checkpoint_manifest(const Checkpoint& ckpt);

std::string model_config_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& text);

}  // namespace derain
