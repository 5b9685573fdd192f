#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "derain/tensor.hpp"

namespace derain {

/// File-level failure; the message always names the path.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Reads an 8-bit PNG (gray, gray+alpha, RGB, RGBA or palette) as a (1, 3, h, w) tensor with
/// byte v mapped to v / 255. Gray is replicated to three channels; alpha is dropped.
Tensor<float> load_png(const std::filesystem::path& path);

/// Writes channels 0..2 (or channel 0 replicated for single-channel tensors) of batch item 0
/// as 8-bit RGB, after clamping to [0, 1] and rounding v * 255 half away from zero.
void save_png(const Tensor<float>& image, const std::filesystem::path& path);

/// The byte save_png writes for `value`.
std::uint8_t quantize(float value);

}  // namespace derain
