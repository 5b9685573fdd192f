#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <set>
#include <sstream>

#include "derain/data.hpp"
#include "derain/image_io.hpp"
#include "derain/metrics.hpp"
#include "support/oracles.hpp"

using namespace derain;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("derain_unit_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST(Synthesis, NoStreaksMeansNoRain) {
    const Tensor<float> b = synthesize_background(24, 20, 3);
    RainParams none;
    none.streak_count = {0, 0};
    const RainPair pr = synthesize_rain(b, none);
    EXPECT_EQ(pr.o, b);
    EXPECT_EQ(pr.r, Tensor<float>(b.shape(), 0.0f));
}

TEST(Synthesis, DeterministicBoundedAndExact) {
    const Tensor<float> b = synthesize_background(32, 32, 1);
    for (std::int64_t i = 0; i < b.numel(); ++i) {
        ASSERT_GE(b[i], 0.05f);
        ASSERT_LE(b[i], 0.85f);
    }
    RainParams rp;
    rp.seed = 4;
    const RainPair a = synthesize_rain(b, rp), c = synthesize_rain(b, rp);
    EXPECT_EQ(a.o, c.o);
    EXPECT_EQ(a.r, c.r);
    double rain = 0;
    for (std::int64_t i = 0; i < a.o.numel(); ++i) {
        ASSERT_GE(a.o[i], 0.0f);
        ASSERT_LE(a.o[i], 1.0f);
        ASSERT_GE(a.r[i], 0.0f);
        rain += a.r[i];
    }
    EXPECT_GT(rain, 0.0);
    EXPECT_EQ(physical_violation(a), 0.0);
    rp.seed = 5;
    EXPECT_NE(synthesize_rain(b, rp).o, a.o);
    rp.intensity = {0.0, 0.0};
    EXPECT_THROW(synthesize_rain(b, rp), std::invalid_argument);
}

TEST(Synthesis, SaturationKeepsPairsExact) {
    RainParams heavy;
    heavy.streak_count = {300, 300};
    heavy.intensity = {0.9, 1.0};
    for (const RainPair& pr : make_synthetic_set(3, 32, heavy, 8)) {
        EXPECT_EQ(physical_violation(pr), 0.0);
        std::int64_t saturated = 0;
        for (std::int64_t i = 0; i < pr.o.numel(); ++i) saturated += pr.o[i] == 1.0f;
        EXPECT_GT(saturated, 0);
    }
}

TEST(Crop, WindowIsSharedAcrossTriple) {
    const RainPair pr = make_synthetic_set(1, 40, RainParams{}, 2).front();
    const RainPair c = random_crop_pair(pr, 16, 3);
    EXPECT_EQ(c.o.shape(), (Shape{1, 3, 16, 16}));
    EXPECT_EQ(physical_violation(c), 0.0);
    bool found = false;
    for (std::int64_t y = 0; y <= 24 && !found; ++y)
        for (std::int64_t x = 0; x <= 24 && !found; ++x)
            found = pr.o.crop(y, x, 16, 16) == c.o && pr.b.crop(y, x, 16, 16) == c.b;
    EXPECT_TRUE(found);
    EXPECT_THROW(random_crop_pair(pr, 41, 0), std::invalid_argument);
}

TEST(Batches, EveryEpochIsAPermutation) {
    const auto pairs = make_synthetic_set(7, 16, RainParams{}, 1);
    BatchStream s(pairs, 3, 8, 11, 0);
    EXPECT_EQ(s.batch_count(), 3u);
    std::multiset<std::size_t> seen;
    std::size_t items = 0;
    while (auto batch = s.next()) {
        EXPECT_EQ(batch->o.shape().h, 8);
        items += static_cast<std::size_t>(batch->o.shape().n);
        seen.insert(batch->indices.begin(), batch->indices.end());
    }
    EXPECT_EQ(items, 7u);
    EXPECT_EQ(seen, (std::multiset<std::size_t>{0, 1, 2, 3, 4, 5, 6}));
    EXPECT_EQ(BatchStream(pairs, 3, 8, 11, 0).order(), s.order());
    EXPECT_NE(BatchStream(pairs, 3, 8, 11, 1).order(), s.order());
}

TEST(Png, RoundTripAndQuantisation) {
    const fs::path dir = temp_dir("png");
    Tensor<float> img({1, 3, 5, 4});
    for (std::int64_t i = 0; i < img.numel(); ++i) img[i] = static_cast<float>(i % 256) / 255.0f;
    save_png(img, dir / "a.png");
    EXPECT_EQ(load_png(dir / "a.png"), img);
    EXPECT_EQ(quantize(-0.2f), 0);
    EXPECT_EQ(quantize(1.7f), 255);
    EXPECT_EQ(quantize(0.5f), 128);  // 127.5 rounds away from zero
    EXPECT_THROW(load_png(dir / "missing.png"), IoError);
    fs::remove_all(dir);
}

TEST(Dataset, ScanPairsByNameAndReportsOffenders) {
    const fs::path root = temp_dir("dataset");
    fs::create_directories(root / "rain");
    fs::create_directories(root / "norain");
    const auto pairs = make_synthetic_set(2, 16, RainParams{}, 3);
    save_png(pairs[0].o, root / "rain" / "x.png");
    save_png(pairs[0].b, root / "norain" / "x.png");
    save_png(pairs[1].o, root / "rain" / "y.png");
    try {
        dataset_scan(root);
        FAIL() << "expected an error";
    } catch (const std::exception& e) {
        EXPECT_NE(std::string(e.what()).find("y.png"), std::string::npos);
    }
    save_png(pairs[1].b, root / "norain" / "y.png");
    const auto scanned = dataset_scan(root);
    ASSERT_EQ(scanned.size(), 2u);
    EXPECT_EQ(scanned[1].name, "y");
    for (const RainPair& pr : load_pairs(scanned)) EXPECT_EQ(physical_violation(pr), 0.0);
    fs::remove_all(root);
}

TEST(Metrics, KnownValues) {
    const Tensor<float> a({1, 3, 16, 16}, 0.5f);
    const Tensor<float> b({1, 3, 16, 16}, 0.6f);
    EXPECT_NEAR(psnr(a, b), 20.0, 1e-5);  // MSE 0.01
    EXPECT_TRUE(std::isinf(psnr(a, a)));
    EXPECT_DOUBLE_EQ(ssim(a, a), 1.0);
    // Constant images: SSIM reduces to the luminance term (2 mu_a mu_b + C1) / (mu_a^2 + mu_b^2 + C1).
    const double c1 = 1e-4, l = (2 * 0.5 * 0.6 + c1) / (0.25 + 0.36 + c1);
    EXPECT_NEAR(ssim(a, b), l, 1e-6);
    EXPECT_THROW(ssim(Tensor<float>({1, 3, 8, 8}), Tensor<float>({1, 3, 8, 8})), std::invalid_argument);
}

TEST(Metrics, AgreeWithBruteForceAndAreSymmetric) {
    std::mt19937_64 gen(1);
    std::uniform_real_distribution<float> d(0.0f, 1.0f);
    Tensor<float> a({1, 3, 20, 23}), b({1, 3, 20, 23});
    for (std::int64_t i = 0; i < a.numel(); ++i) {
        a[i] = d(gen);
        b[i] = 0.7f * a[i] + 0.3f * d(gen);
    }
    EXPECT_NEAR(psnr(a, b), oracle::psnr(a, b), 1e-9);
    EXPECT_NEAR(ssim(a, b), oracle::ssim(a, b), 1e-9);
    EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-12);
}

TEST(Metrics, ReportMeansAndCsv) {
    MetricReport rep;
    rep.add("a", 20.0, 0.5);
    rep.add("b", 30.0, 0.7);
    rep.add("c", kInfinitePsnr, 1.0);
    rep.finalize();
    EXPECT_DOUBLE_EQ(rep.mean_psnr, 25.0);
    EXPECT_NEAR(rep.mean_ssim, 2.2 / 3.0, 1e-15);
    EXPECT_EQ(rep.infinite_psnr, 1u);
    std::ostringstream os;
    rep.write_csv(os);
    const std::string csv = os.str();
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);  // header + 3 rows + mean
    EXPECT_NE(csv.find("c,Inf,1\n"), std::string::npos);
    EXPECT_NE(csv.find("\nmean,25,"), std::string::npos);
}
