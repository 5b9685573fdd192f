#include "derain/data.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <set>
#include <stdexcept>

#include "derain/image_io.hpp"
#include "derain/rng.hpp"

namespace derain {

namespace fs = std::filesystem;

RainPair make_pair(Tensor<float> o, Tensor<float> b) {
    require_same_shape(o.shape(), b.shape(), "make_pair");
    Tensor<float> r(o.shape());
    for (std::int64_t i = 0; i < o.numel(); ++i) {
        // Re-deriving o from b + r can move it by an ulp; a few rounds reach a pair where both
        // o - b == r and b + r == o hold exactly.
        for (int round = 0; round < 8; ++round) {
            r[i] = o[i] - b[i];
            o[i] = b[i] + r[i];
            if (o[i] - b[i] == r[i]) break;
        }
    }
    return {std::move(o), std::move(b), std::move(r)};
}

double physical_violation(const RainPair& pair) {
    require_same_shape(pair.o.shape(), pair.b.shape(), "physical_violation");
    require_same_shape(pair.o.shape(), pair.r.shape(), "physical_violation");
    double worst = 0.0;
    for (std::int64_t i = 0; i < pair.o.numel(); ++i) {
        const float sum = pair.b[i] + pair.r[i];
        const float diff = pair.o[i] - pair.b[i] - pair.r[i];
        worst = std::max({worst, static_cast<double>(std::abs(pair.o[i] - sum)),
                          static_cast<double>(std::abs(diff))});
    }
    return worst;
}

void RainParams::validate() const {
    for (const Range* r : {&streak_count, &length, &angle, &width, &intensity}) {
        if (!(r->lo <= r->hi)) throw std::invalid_argument("RainParams: empty range");
    }
    if (streak_count.lo < 0) throw std::invalid_argument("RainParams: negative streak count");
    if (!(intensity.lo > 0.0)) throw std::invalid_argument("RainParams: intensities must be positive");
    if (!(width.lo > 0.0) || !(length.lo >= 0.0)) {
        throw std::invalid_argument("RainParams: widths must be positive and lengths nonnegative");
    }
    if (blur_sigma < 0.0 || angle_jitter < 0.0) {
        throw std::invalid_argument("RainParams: blur sigma and angle jitter must be nonnegative");
    }
}

namespace {

double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
    const double dx = bx - ax, dy = by - ay;
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0.0 ? ((px - ax) * dx + (py - ay) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double qx = ax + t * dx - px, qy = ay + t * dy - py;
    return std::sqrt(qx * qx + qy * qy);
}

// Separable Gaussian blur with edge clamping.
void gaussian_blur(std::vector<double>& img, std::int64_t h, std::int64_t w, double sigma) {
    if (sigma <= 0.0) return;
    const std::int64_t radius = static_cast<std::int64_t>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    double total = 0.0;
    for (std::int64_t i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
        total += kernel[i + radius];
    }
    for (double& k : kernel) k /= total;
    std::vector<double> tmp(img.size());
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x) {
            double acc = 0.0;
            for (std::int64_t i = -radius; i <= radius; ++i) {
                acc += kernel[i + radius] * img[y * w + std::clamp<std::int64_t>(x + i, 0, w - 1)];
            }
            tmp[y * w + x] = acc;
        }
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x) {
            double acc = 0.0;
            for (std::int64_t i = -radius; i <= radius; ++i) {
                acc += kernel[i + radius] * tmp[std::clamp<std::int64_t>(y + i, 0, h - 1) * w + x];
            }
            img[y * w + x] = acc;
        }
}

}  // namespace

RainPair synthesize_rain(const Tensor<float>& b, const RainParams& params) {
    params.validate();
    const Shape& s = b.shape();
    if (s.n != 1 || s.c != 3) {
        throw std::invalid_argument("synthesize_rain: expected a (1, 3, h, w) image, got " + s.str());
    }
    const std::int64_t h = s.h, w = s.w;
    Rng rng(params.seed);
    std::vector<double> streaks(static_cast<std::size_t>(h * w), 0.0);
    const auto count = rng.between(static_cast<std::int64_t>(params.streak_count.lo),
                                   static_cast<std::int64_t>(params.streak_count.hi));
    const double base_angle = rng.uniform(params.angle.lo, params.angle.hi);
    for (std::int64_t k = 0; k < count; ++k) {
        const double length = rng.uniform(params.length.lo, params.length.hi);
        const double cx = rng.uniform(-length / 2, static_cast<double>(w) + length / 2);
        const double cy = rng.uniform(-length / 2, static_cast<double>(h) + length / 2);
        const double theta = (base_angle + rng.uniform(-params.angle_jitter, params.angle_jitter)) *
                             std::numbers::pi / 180.0;
        const double width = rng.uniform(params.width.lo, params.width.hi);
        const double intensity = rng.uniform(params.intensity.lo, params.intensity.hi);
        const double dx = std::sin(theta) * length / 2, dy = std::cos(theta) * length / 2;
        const double ax = cx - dx, ay = cy - dy, bx = cx + dx, by = cy + dy;
        const double reach = width / 2 + 1.0;
        const auto x0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(std::min(ax, bx) - reach)));
        const auto x1 = std::min<std::int64_t>(w - 1, static_cast<std::int64_t>(std::ceil(std::max(ax, bx) + reach)));
        const auto y0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(std::min(ay, by) - reach)));
        const auto y1 = std::min<std::int64_t>(h - 1, static_cast<std::int64_t>(std::ceil(std::max(ay, by) + reach)));
        for (std::int64_t y = y0; y <= y1; ++y)
            for (std::int64_t x = x0; x <= x1; ++x) {
                const double d = segment_distance(x + 0.5, y + 0.5, ax, ay, bx, by);
                const double coverage = std::clamp(width / 2 + 0.5 - d, 0.0, 1.0);
                streaks[y * w + x] += intensity * coverage;
            }
    }
    gaussian_blur(streaks, h, w, params.blur_sigma);

    Tensor<float> o(s);
    for (std::int64_t c = 0; c < 3; ++c)
        for (std::int64_t i = 0; i < h * w; ++i) {
            const double v = static_cast<double>(b[c * h * w + i]) + streaks[i];
            o[c * h * w + i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
    return make_pair(std::move(o), b);
}

Tensor<float> synthesize_background(std::int64_t h, std::int64_t w, std::uint64_t seed) {
    if (h <= 0 || w <= 0) throw std::invalid_argument("synthesize_background: empty size");
    Rng rng(seed);
    double c0[3], c1[3];
    for (int c = 0; c < 3; ++c) {
        c0[c] = rng.uniform(0.1, 0.8);
        c1[c] = rng.uniform(0.1, 0.8);
    }
    const double dir = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double gx = std::cos(dir), gy = std::sin(dir);
    std::vector<double> img(static_cast<std::size_t>(3 * h * w));
    const double scale = std::max(h, w);
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x) {
            const double t = std::clamp(0.5 + ((x - w / 2.0) * gx + (y - h / 2.0) * gy) / scale, 0.0, 1.0);
            for (int c = 0; c < 3; ++c) img[(c * h + y) * w + x] = (1 - t) * c0[c] + t * c1[c];
        }

    const auto shapes = rng.between(3, 7);
    for (std::int64_t k = 0; k < shapes; ++k) {
        const bool disk = rng.uniform() < 0.5;
        const double cx = rng.uniform(0, static_cast<double>(w));
        const double cy = rng.uniform(0, static_cast<double>(h));
        const double rx = rng.uniform(0.08, 0.3) * w, ry = rng.uniform(0.08, 0.3) * h;
        const double alpha = rng.uniform(0.6, 1.0);
        double color[3];
        for (double& c : color) c = rng.uniform(0.05, 0.85);
        for (std::int64_t y = 0; y < h; ++y)
            for (std::int64_t x = 0; x < w; ++x) {
                const double u = (x + 0.5 - cx) / rx, v = (y + 0.5 - cy) / ry;
                const double d = disk ? std::sqrt(u * u + v * v) : std::max(std::abs(u), std::abs(v));
                const double a = alpha * std::clamp((1.0 - d) * 4.0, 0.0, 1.0);
                if (a <= 0.0) continue;
                for (int c = 0; c < 3; ++c) {
                    double& p = img[(c * h + y) * w + x];
                    p = (1 - a) * p + a * color[c];
                }
            }
    }

    const double fx = rng.uniform(1.0, 4.0) * 2 * std::numbers::pi / w;
    const double fy = rng.uniform(1.0, 4.0) * 2 * std::numbers::pi / h;
    const double phase = rng.uniform(0.0, 2 * std::numbers::pi);
    const double amp = rng.uniform(0.02, 0.06);
    Tensor<float> out({1, 3, h, w});
    for (std::int64_t c = 0; c < 3; ++c)
        for (std::int64_t y = 0; y < h; ++y)
            for (std::int64_t x = 0; x < w; ++x) {
                const double tex = amp * std::sin(fx * x + phase) * std::cos(fy * y - phase);
                out.at(0, c, y, x) =
                    static_cast<float>(std::clamp(img[(c * h + y) * w + x] + tex, 0.05, 0.85));
            }
    return out;
}

std::vector<RainPair> make_synthetic_set(std::size_t count, std::int64_t size,
                                         const RainParams& rain, std::uint64_t seed) {
    std::vector<RainPair> pairs;
    pairs.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        RainParams p = rain;
        p.seed = derive_seed(seed, 2 * i + 1);
        pairs.push_back(synthesize_rain(synthesize_background(size, size, derive_seed(seed, 2 * i)), p));
    }
    return pairs;
}

RainPair random_crop_pair(const RainPair& pair, std::int64_t size, std::uint64_t seed) {
    const Shape& s = pair.o.shape();
    if (size <= 0 || size > s.h || size > s.w) {
        throw std::invalid_argument("random_crop_pair: crop " + std::to_string(size) +
                                    " does not fit image " + s.str());
    }
    Rng rng(seed);
    const std::int64_t top = rng.between(0, s.h - size);
    const std::int64_t left = rng.between(0, s.w - size);
    return {pair.o.crop(top, left, size, size), pair.b.crop(top, left, size, size),
            pair.r.crop(top, left, size, size)};
}

std::vector<PairPaths> dataset_scan(const fs::path& root) {
    const fs::path rain_dir = root / "rain";
    const fs::path clean_dir = root / "norain";
    if (!fs::is_directory(rain_dir) || !fs::is_directory(clean_dir)) {
        throw IoError("dataset " + root.string() + " must contain rain/ and norain/ directories");
    }
    auto list = [](const fs::path& dir) {
        std::set<std::string> names;
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (!entry.is_regular_file()) continue;
            std::string ext = entry.path().extension().string();
            std::transform(ext.begin(), ext.end(), ext.begin(),
                           [](unsigned char ch) { return std::tolower(ch); });
            if (ext == ".png") names.insert(entry.path().filename().string());
        }
        return names;
    };
    const std::set<std::string> rainy = list(rain_dir);
    const std::set<std::string> clean = list(clean_dir);
    std::string offenders;
    for (const auto& n : rainy) {
        if (!clean.count(n)) offenders += " rain/" + n + " (no norain/" + n + ")";
    }
    for (const auto& n : clean) {
        if (!rainy.count(n)) offenders += " norain/" + n + " (no rain/" + n + ")";
    }
    if (!offenders.empty()) throw IoError("unmatched files in " + root.string() + ":" + offenders);
    if (rainy.empty()) throw IoError("dataset " + root.string() + " contains no PNG pairs");
    std::vector<PairPaths> out;
    for (const auto& n : rainy) out.push_back({fs::path(n).stem().string(), rain_dir / n, clean_dir / n});
    return out;
}

std::vector<RainPair> load_pairs(const std::vector<PairPaths>& paths) {
    std::vector<RainPair> pairs;
    pairs.reserve(paths.size());
    for (const auto& p : paths) {
        Tensor<float> o = load_png(p.rainy);
        Tensor<float> b = load_png(p.clean);
        if (o.shape() != b.shape()) {
            throw IoError("size mismatch between " + p.rainy.string() + " " + o.shape().str() +
                          " and " + p.clean.string() + " " + b.shape().str());
        }
        pairs.push_back(make_pair(std::move(o), std::move(b)));
    }
    return pairs;
}

BatchStream::BatchStream(const std::vector<RainPair>& pairs, std::size_t batch, std::int64_t crop,
                         std::uint64_t seed, std::int64_t epoch)
    : pairs_(&pairs), batch_(batch), crop_(crop),
      crop_seed_(derive_seed(seed ^ 0x5DEECE66DULL, static_cast<std::uint64_t>(epoch))) {
    if (pairs.empty()) throw std::invalid_argument("BatchStream: empty dataset");
    if (batch == 0) throw std::invalid_argument("BatchStream: batch size must be positive");
    order_.resize(pairs.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order_);
}

std::size_t BatchStream::batch_count() const {
    return (order_.size() + batch_ - 1) / batch_;
}

std::optional<Batch> BatchStream::next() {
    if (cursor_ >= order_.size()) return std::nullopt;
    const std::size_t end = std::min(order_.size(), cursor_ + batch_);
    std::vector<Tensor<float>> os, bs, rs;
    Batch out;
    for (std::size_t k = cursor_; k < end; ++k) {
        const RainPair& src = (*pairs_)[order_[k]];
        RainPair item = crop_ > 0 ? random_crop_pair(src, crop_, derive_seed(crop_seed_, k)) : src;
        os.push_back(std::move(item.o));
        bs.push_back(std::move(item.b));
        rs.push_back(std::move(item.r));
        out.indices.push_back(order_[k]);
    }
    cursor_ = end;
    out.o = stack_batch<float>(os);
    out.b = stack_batch<float>(bs);
    out.r = stack_batch<float>(rs);
    return out;
}

}  // namespace derain
