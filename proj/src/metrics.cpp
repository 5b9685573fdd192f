#include "derain/metrics.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace derain {

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;

std::array<double, kWindow> gaussian_window() {
    std::array<double, kWindow> g{};
    double total = 0.0;
    for (int i = 0; i < kWindow; ++i) {
        const double d = i - kWindow / 2;
        g[i] = std::exp(-(d * d) / (2.0 * kSigma * kSigma));
        total += g[i];
    }
    for (double& v : g) v /= total;
    return g;
}

// "Valid" separable filtering of one plane: (h, w) -> (h - 10, w - 10).
std::vector<double> filter_valid(const std::vector<double>& plane, std::int64_t h, std::int64_t w,
                                 const std::array<double, kWindow>& g) {
    const std::int64_t oh = h - kWindow + 1, ow = w - kWindow + 1;
    std::vector<double> rows(static_cast<std::size_t>(h * ow));
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int k = 0; k < kWindow; ++k) acc += g[k] * plane[y * w + x + k];
            rows[y * ow + x] = acc;
        }
    std::vector<double> out(static_cast<std::size_t>(oh * ow));
    for (std::int64_t y = 0; y < oh; ++y)
        for (std::int64_t x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int k = 0; k < kWindow; ++k) acc += g[k] * rows[(y + k) * ow + x];
            out[y * ow + x] = acc;
        }
    return out;
}

}  // namespace

template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b, double peak) {
    require_same_shape(a.shape(), b.shape(), "psnr");
    if (!(peak > 0.0)) throw std::invalid_argument("psnr: peak must be positive");
    if (a.numel() == 0) throw std::invalid_argument("psnr: empty images");
    double sse = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        sse += d * d;
    }
    const double mse = sse / static_cast<double>(a.numel());
    if (mse == 0.0) return kInfinitePsnr;
    return 10.0 * std::log10(peak * peak / mse);
}

template <typename T>
double ssim(const Tensor<T>& a, const Tensor<T>& b, double peak) {
    require_same_shape(a.shape(), b.shape(), "ssim");
    const Shape& s = a.shape();
    if (s.h < kWindow || s.w < kWindow) {
        throw std::invalid_argument("ssim: image " + s.str() + " is smaller than the 11x11 window");
    }
    if (s.n * s.c == 0) throw std::invalid_argument("ssim: empty images");
    const double c1 = (0.01 * peak) * (0.01 * peak);
    const double c2 = (0.03 * peak) * (0.03 * peak);
    const auto g = gaussian_window();
    const std::int64_t plane = s.plane();
    double total = 0.0;
    std::vector<double> pa(plane), pb(plane), paa(plane), pbb(plane), pab(plane);
    for (std::int64_t nc = 0; nc < s.n * s.c; ++nc) {
        for (std::int64_t i = 0; i < plane; ++i) {
            const double x = a[nc * plane + i], y = b[nc * plane + i];
            pa[i] = x;
            pb[i] = y;
            paa[i] = x * x;
            pbb[i] = y * y;
            pab[i] = x * y;
        }
        const auto mu_a = filter_valid(pa, s.h, s.w, g);
        const auto mu_b = filter_valid(pb, s.h, s.w, g);
        const auto e_aa = filter_valid(paa, s.h, s.w, g);
        const auto e_bb = filter_valid(pbb, s.h, s.w, g);
        const auto e_ab = filter_valid(pab, s.h, s.w, g);
        double acc = 0.0;
        for (std::size_t i = 0; i < mu_a.size(); ++i) {
            const double ma = mu_a[i], mb = mu_b[i];
            const double va = e_aa[i] - ma * ma;
            const double vb = e_bb[i] - mb * mb;
            const double cov = e_ab[i] - ma * mb;
            acc += ((2 * ma * mb + c1) * (2 * cov + c2)) /
                   ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
        total += acc / static_cast<double>(mu_a.size());
    }
    return total / static_cast<double>(s.n * s.c);
}

std::string format_metric(double value) {
    if (std::isinf(value)) return value > 0 ? "Inf" : "-Inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    return buf;
}

void MetricReport::add(std::string image, double psnr_db, double ssim_value) {
    rows.push_back({std::move(image), psnr_db, ssim_value});
}

void MetricReport::finalize() {
    double psnr_sum = 0.0, ssim_sum = 0.0;
    std::size_t finite = 0;
    infinite_psnr = 0;
    for (const auto& r : rows) {
        if (std::isinf(r.psnr)) {
            ++infinite_psnr;
        } else {
            psnr_sum += r.psnr;
            ++finite;
        }
        ssim_sum += r.ssim;
    }
    mean_psnr = finite > 0 ? psnr_sum / static_cast<double>(finite)
                           : (rows.empty() ? 0.0 : kInfinitePsnr);
    mean_ssim = rows.empty() ? 0.0 : ssim_sum / static_cast<double>(rows.size());
}

void MetricReport::write_csv(std::ostream& os) const {
    os << "image,psnr,ssim\n";
    for (const auto& r : rows) {
        os << r.image << ',' << format_metric(r.psnr) << ',' << format_metric(r.ssim) << '\n';
    }
    os << "mean," << format_metric(mean_psnr) << ',' << format_metric(mean_ssim) << '\n';
}

template double psnr(const Tensor<float>&, const Tensor<float>&, double);
template double psnr(const Tensor<double>&, const Tensor<double>&, double);
template double ssim(const Tensor<float>&, const Tensor<float>&, double);
template double ssim(const Tensor<double>&, const Tensor<double>&, double);

}  // namespace derain
