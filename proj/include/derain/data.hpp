#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "derain/tensor.hpp"

namespace derain {

/// Aligned rainy image O, clean background B and streak layer R with O == B + R exactly.
struct RainPair {
    Tensor<float> o;
    Tensor<float> b;
    Tensor<float> r;
};

/// Builds a pair from a rainy and a clean image: R := O - B, then O := B + R so the additive
/// model holds bit-exactly (O moves by at most one ulp).
RainPair make_pair(Tensor<float> o, Tensor<float> b);

/// max |o - b - r| evaluated as |o - (b + r)|; zero for every pair this module emits.
double physical_violation(const RainPair& pair);

struct Range {
    double lo = 0.0;
    double hi = 0.0;
};

/// Streak synthesis parameters. Angles are degrees from vertical; one base angle is drawn per
/// image and each streak deviates from it by up to `angle_jitter`.
struct RainParams {
    Range streak_count{30, 80};
    Range length{6, 20};
    Range angle{-25, 25};
    double angle_jitter = 4.0;
    Range width{0.6, 1.4};
    Range intensity{0.15, 0.5};
    double blur_sigma = 0.6;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Draws blurred anti-aliased line segments into a gray streak map r_raw and returns
/// O = clip(B + r_raw, 0, 1), R = O - B. Deterministic in params.seed.
RainPair synthesize_rain(const Tensor<float>& b, const RainParams& params);

/// Procedural clean image in [0.05, 0.85]: a colour gradient, soft shapes and low-frequency
/// texture.
Tensor<float> synthesize_background(std::int64_t h, std::int64_t w, std::uint64_t seed);

/// `count` synthetic pairs of size `size` x `size`.
std::vector<RainPair> make_synthetic_set(std::size_t count, std::int64_t size,
                                         const RainParams& rain, std::uint64_t seed);

/// Same window on O, B and R; the corner is uniform over valid positions.
RainPair random_crop_pair(const RainPair& pair, std::int64_t size, std::uint64_t seed);

struct PairPaths {
    std::string name;
    std::filesystem::path rainy;
    std::filesystem::path clean;
};

/// Matches `root/rain/*.png` with `root/norain/*.png` by filename, sorted by name.
std::vector<PairPaths> dataset_scan(const std::filesystem::path& root);

std::vector<RainPair> load_pairs(const std::vector<PairPaths>& paths);

struct Batch {
    Tensor<float> o;
    Tensor<float> b;
    Tensor<float> r;
    std::vector<std::size_t> indices;  // positions in the source pair list
};

/// One epoch of batches: a seeded permutation of `pairs`, each cropped to `crop` (0 keeps the
/// full image) and grouped `batch` at a time; the last batch may be smaller.
class BatchStream {
public:
    BatchStream(const std::vector<RainPair>& pairs, std::size_t batch, std::int64_t crop,
                std::uint64_t seed, std::int64_t epoch);

    std::optional<Batch> next();
    [[nodiscard]] std::size_t batch_count() const;
    [[nodiscard]] const std::vector<std::size_t>& order() const { return order_; }

private:
    const std::vector<RainPair>* pairs_;
    std::size_t batch_;
    std::int64_t crop_;
    std::uint64_t crop_seed_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
};

}  // namespace derain
