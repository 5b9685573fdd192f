#pragma once

#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "derain/tensor.hpp"

namespace derain {

inline constexpr double kInfinitePsnr = std::numeric_limits<double>::infinity();

/// 10 log10(peak^2 / MSE) with the MSE taken over every element; +inf when MSE is zero.
template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b, double peak = 1.0);

/// Mean SSIM over all valid 11x11 Gaussian (sigma 1.5) windows, computed per channel and
/// per batch item and averaged. C1 = (0.01 peak)^2, C2 = (0.03 peak)^2.
template <typename T>
double ssim(const Tensor<T>& a, const Tensor<T>& b, double peak = 1.0);

/// "Inf" for the infinite sentinel, otherwise the value at full round-trip precision.
std::string format_metric(double value);

struct MetricRow {
    std::string image;
    double psnr = 0.0;
    double ssim = 0.0;
};

/// Per-image rows plus means. Infinite PSNRs are excluded from the PSNR mean and counted.
struct MetricReport {
    std::vector<MetricRow> rows;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
    std::size_t infinite_psnr = 0;

    void add(std::string image, double psnr_db, double ssim_value);
    void finalize();
    /// CSV table `image,psnr,ssim` with a trailing `mean` row.
    void write_csv(std::ostream& os) const;
};

}  // namespace derain
