#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "derain/ops.hpp"
#include "support/oracles.hpp"

using namespace derain;

namespace {

template <typename T>
Tensor<T> random_tensor(Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> d(lo, hi);
    Tensor<T> t(s);
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(d(gen));
    return t;
}

// Direct six-loop convolution with explicit zero padding.
Tensor<double> naive_conv(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b,
                          const ConvSpec& s) {
    const Shape out = s.output_shape(x.shape());
    Tensor<double> y(out);
    for (std::int64_t n = 0; n < out.n; ++n)
        for (std::int64_t o = 0; o < out.c; ++o)
            for (std::int64_t oy = 0; oy < out.h; ++oy)
                for (std::int64_t ox = 0; ox < out.w; ++ox) {
                    double acc = b[o];
                    for (std::int64_t c = 0; c < s.in_channels; ++c)
                        for (std::int64_t ky = 0; ky < s.kh; ++ky)
                            for (std::int64_t kx = 0; kx < s.kw; ++kx) {
                                const std::int64_t iy = oy * s.stride - s.pad_top + ky * s.dilation;
                                const std::int64_t ix = ox * s.stride - s.pad_left + kx * s.dilation;
                                if (iy < 0 || ix < 0 || iy >= x.shape().h || ix >= x.shape().w) continue;
                                acc += w.at(o, c, ky, kx) * x.at(n, c, iy, ix);
                            }
                    y.at(n, o, oy, ox) = acc;
                }
    return y;
}

}  // namespace

TEST(Tensor, RejectsMismatchedValueCount) {
    EXPECT_THROW(Tensor<float>(Shape{1, 2, 2, 2}, std::vector<float>(7)), std::invalid_argument);
    EXPECT_THROW(Tensor<float>(Shape{1, -1, 2, 2}), std::invalid_argument);
}

TEST(Tensor, SliceAndCropAreWindows) {
    const auto t = random_tensor<float>({2, 5, 4, 6}, 1);
    const auto s = t.slice_channels(1, 4);
    EXPECT_EQ(s.shape(), (Shape{2, 3, 4, 6}));
    EXPECT_EQ(s.at(1, 2, 3, 5), t.at(1, 3, 3, 5));
    const auto c = t.crop(1, 2, 2, 3);
    EXPECT_EQ(c.at(0, 4, 1, 2), t.at(0, 4, 2, 4));
    EXPECT_THROW(t.crop(3, 0, 2, 2), std::invalid_argument);
    EXPECT_EQ(t.slice_batch(1, 2).at(0, 0, 0, 0), t.at(1, 0, 0, 0));
}

TEST(Tensor, StorageIsCacheLineAligned) {
    for (std::int64_t n = 1; n < 40; n += 7) {
        Tensor<float> t({1, 1, 1, n});
        EXPECT_EQ(reinterpret_cast<std::uintptr_t>(t.ptr()) % 64, 0u);
    }
}

TEST(ConvSpec, OutputShapeFollowsArithmetic) {
    std::mt19937_64 gen(3);
    for (int trial = 0; trial < 300; ++trial) {
        const std::int64_t k = 1 + 2 * static_cast<std::int64_t>(gen() % 3);
        const std::int64_t d = 1 + static_cast<std::int64_t>(gen() % 4);
        const std::int64_t st = 1 + static_cast<std::int64_t>(gen() % 2);
        const ConvSpec s = ConvSpec::same(2, 3, k, d, st);
        const Shape x{1, 2, 4 + static_cast<std::int64_t>(gen() % 20), 4 + static_cast<std::int64_t>(gen() % 20)};
        const Shape y = s.output_shape(x);
        const std::int64_t eff = d * (k - 1) + 1;
        EXPECT_EQ(y.h, (x.h + s.pad_top + s.pad_bottom - eff) / st + 1);
        EXPECT_EQ(y.w, (x.w + s.pad_left + s.pad_right - eff) / st + 1);
        if (st == 1) {
            EXPECT_EQ(y.h, x.h);  // "same" padding keeps the size
            EXPECT_EQ(y.w, x.w);
        } else {
            EXPECT_EQ(y.h, (x.h + 1) / 2);
        }
    }
    EXPECT_THROW((void)ConvSpec::same(3, 4, 3).output_shape({1, 2, 8, 8}), std::invalid_argument);
}

TEST(Conv2d, MatchesDirectConvolution) {
    const ConvSpec specs[] = {ConvSpec::same(3, 4, 3), ConvSpec::same(3, 2, 3, 2),
                              ConvSpec::same(2, 5, 3, 1, 2), ConvSpec::same(4, 3, 1),
                              ConvSpec::same(2, 2, 5, 3)};
    std::uint64_t seed = 10;
    for (const ConvSpec& s : specs) {
        const auto x = random_tensor<double>({2, s.in_channels, 9, 7}, seed++);
        const auto w = random_tensor<double>(s.weight_shape(), seed++);
        const auto b = random_tensor<double>(s.bias_shape(), seed++);
        Tape<double> t;
        const auto y = conv2d(t.constant(x), t.constant(w), t.constant(b), s).value();
        EXPECT_LT(max_abs_diff(y, naive_conv(x, w, b, s)), 1e-12);
    }
}

TEST(Pooling, AverageMaxAndUpsample) {
    const auto x = random_tensor<float>({1, 2, 4, 4}, 4);
    Tape<float> t;
    const auto v = t.constant(x);
    const auto avg = avg_pool(v, 2).value();
    const auto mx = max_pool(v, 2).value();
    for (std::int64_t c = 0; c < 2; ++c)
        for (std::int64_t y = 0; y < 2; ++y)
            for (std::int64_t xx = 0; xx < 2; ++xx) {
                const float a = x.at(0, c, 2 * y, 2 * xx), b = x.at(0, c, 2 * y, 2 * xx + 1);
                const float cc = x.at(0, c, 2 * y + 1, 2 * xx), d = x.at(0, c, 2 * y + 1, 2 * xx + 1);
                EXPECT_NEAR(avg.at(0, c, y, xx), (a + b + cc + d) / 4, 1e-6);
                EXPECT_EQ(mx.at(0, c, y, xx), std::max({a, b, cc, d}));
            }
    const auto up = upsample_nearest(v, 3).value();
    EXPECT_EQ(up.shape(), (Shape{1, 2, 12, 12}));
    EXPECT_EQ(up.at(0, 1, 7, 11), x.at(0, 1, 2, 3));
    EXPECT_EQ(avg_pool(v, 1).id, v.id);
    EXPECT_THROW(avg_pool(t.constant(Tensor<float>({1, 1, 5, 4})), 2), std::invalid_argument);
}

TEST(Concat, SlicesRecoverInputs) {
    const auto a = random_tensor<float>({2, 2, 3, 3}, 5), b = random_tensor<float>({2, 3, 3, 3}, 6);
    Tape<float> t;
    const Var<float> xs[] = {t.constant(a), t.constant(b)};
    const auto y = concat_channels<float>(xs).value();
    EXPECT_EQ(y.slice_channels(0, 2), a);
    EXPECT_EQ(y.slice_channels(2, 5), b);
}

TEST(Elementwise, LeakyReluAndLosses) {
    Tape<double> t;
    const auto x = t.constant(Tensor<double>({1, 1, 1, 4}, std::vector<double>{-2, -0.5, 0, 3}));
    const auto y = leaky_relu(x, 0.2).value();
    EXPECT_DOUBLE_EQ(y[0], -0.4);
    EXPECT_DOUBLE_EQ(y[1], -0.1);
    EXPECT_DOUBLE_EQ(y[2], 0.0);
    EXPECT_DOUBLE_EQ(y[3], 3.0);
    const auto z = t.constant(Tensor<double>({1, 1, 1, 4}, 1.0));
    EXPECT_DOUBLE_EQ(scalar(l1_loss(x, z)), (3 + 1.5 + 1 + 2) / 4.0);
    EXPECT_DOUBLE_EQ(scalar(mean(x)), 0.5 / 4.0);
    EXPECT_DOUBLE_EQ(sub(x, z).value()[3], 2.0);
    EXPECT_DOUBLE_EQ(scale(x, -2.0).value()[0], 4.0);
    EXPECT_THROW(add(x, t.constant(Tensor<double>({1, 1, 2, 2}))), std::invalid_argument);
}

TEST(Elementwise, ForwardStaysFinite) {
    const auto x = random_tensor<float>({1, 3, 8, 8}, 8, -1e3, 1e3);
    Tape<float> t;
    const auto v = t.constant(x);
    EXPECT_TRUE(all_finite(leaky_relu(v).value()));
    EXPECT_TRUE(all_finite(avg_pool(v, 4).value()));
    EXPECT_TRUE(all_finite(scale(v, 1e-3f).value()));
}
