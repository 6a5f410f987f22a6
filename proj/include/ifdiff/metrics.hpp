#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "ifdiff/errors.hpp"
#include "ifdiff/tensor.hpp"

namespace ifdiff {
namespace metrics {

// All metrics renormalize [-1, 1] data to [0, 1] first, so MAX = 1 and the
// magnitudes are comparable across runs.

namespace detail {
inline double renorm(double v) { return (v + 1.0) * 0.5; }
}  // namespace detail

inline double mse(const Tensor& a, const Tensor& b) {
    ifdiff::detail::require_same_shape(a, b, "mse");
    ifdiff::detail::require_nonempty(a, "mse");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = detail::renorm(a[i]) - detail::renorm(b[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

inline double mae(const Tensor& a, const Tensor& b) {
    ifdiff::detail::require_same_shape(a, b, "mae");
    ifdiff::detail::require_nonempty(a, "mae");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        acc += std::abs(detail::renorm(a[i]) - detail::renorm(b[i]));
    }
    return acc / static_cast<double>(a.size());
}

/// 10 log10(1 / mse) in dB; +infinity for identical inputs.
inline double psnr(const Tensor& a, const Tensor& b) {
    double m = mse(a, b);
    if (m == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / m);
}

namespace detail {

// Single-window SSIM of one plane; biased (1/N) variance estimators,
// C1 = (0.01 L)^2, C2 = (0.03 L)^2 with L = 1.
inline double ssim_plane(const double* a, const double* b, std::size_t n) {
    constexpr double c1 = 0.01 * 0.01;
    constexpr double c2 = 0.03 * 0.03;
    double mu_a = 0.0, mu_b = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mu_a += renorm(a[i]);
        mu_b += renorm(b[i]);
    }
    mu_a /= static_cast<double>(n);
    mu_b /= static_cast<double>(n);
    double var_a = 0.0, var_b = 0.0, cov = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double da = renorm(a[i]) - mu_a;
        double db = renorm(b[i]) - mu_b;
        var_a += da * da;
        var_b += db * db;
        cov += da * db;
    }
    var_a /= static_cast<double>(n);
    var_b /= static_cast<double>(n);
    cov /= static_cast<double>(n);
    return ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) /
           ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
}

}  // namespace detail

/// Global-window SSIM. Rank-3 tensors are treated as [channels, H, W] and
/// the per-channel values averaged; anything else is a single plane. The
/// whole plane is one window: at 8x8 grids sliding windows are ill-defined.
inline double ssim(const Tensor& a, const Tensor& b) {
    ifdiff::detail::require_same_shape(a, b, "ssim");
    ifdiff::detail::require_nonempty(a, "ssim");
    if (a.rank() == 3) {
        std::size_t channels = a.shape()[0];
        std::size_t plane = a.size() / channels;
        double acc = 0.0;
        for (std::size_t k = 0; k < channels; ++k) {
            acc += detail::ssim_plane(a.data() + k * plane, b.data() + k * plane,
                                      plane);
        }
        return acc / static_cast<double>(channels);
    }
    return detail::ssim_plane(a.data(), b.data(), a.size());
}

struct MetricsRow {
    double mse = 0.0;
    double mae = 0.0;
    double psnr = 0.0;
    double ssim = 0.0;
};

inline MetricsRow all(const Tensor& a, const Tensor& b) {
    MetricsRow row;
    row.mse = mse(a, b);
    row.mae = mae(a, b);
    row.psnr = psnr(a, b);
    row.ssim = ssim(a, b);
    return row;
}

}  // namespace metrics
}  // namespace ifdiff
