#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "fpie/ops.hpp"
#include "fpie/tensor.hpp"

namespace fpie {

struct MetricReport {
    float psnr_db = 0.0f;
    float ssim = 0.0f;
    float ms_ssim = 0.0f;
    int64_t n_images = 0;
};

/// Which planes the reference metrics run on. Luma (BT.601, same coefficients
/// as the grayscale op) is the default; RgbMean averages over the channels.
enum class MetricColorMode { Luma, RgbMean };

namespace detail {

// per-image planes in double precision; 3-channel input reduces per mode
inline std::vector<std::vector<double>> metric_planes(const Tensor& x, int64_t n, MetricColorMode mode) {
    const Shape s = x.shape();
    const int64_t plane = s.h * s.w;
    std::vector<std::vector<double>> out;
    if (s.c == 3 && mode == MetricColorMode::Luma) {
        std::vector<double> p(static_cast<size_t>(plane));
        const float* r = x.data() + (n * 3 + 0) * plane;
        const float* g = x.data() + (n * 3 + 1) * plane;
        const float* b = x.data() + (n * 3 + 2) * plane;
        for (int64_t i = 0; i < plane; ++i)
            p[i] = kLumaR * static_cast<double>(r[i]) + kLumaG * g[i] + kLumaB * b[i];
        out.push_back(std::move(p));
        return out;
    }
    for (int64_t c = 0; c < s.c; ++c) {
        std::vector<double> p(static_cast<size_t>(plane));
        const float* xp = x.data() + (n * s.c + c) * plane;
        for (int64_t i = 0; i < plane; ++i) p[i] = xp[i];
        out.push_back(std::move(p));
    }
    return out;
}

// 11x11 Gaussian window, sigma 1.5, normalized to sum 1
inline const std::vector<double>& ssim_window() {
    static const std::vector<double> w = [] {
        std::vector<double> v(121);
        double sum = 0.0;
        for (int i = -5; i <= 5; ++i)
            for (int j = -5; j <= 5; ++j) {
                const double g = std::exp(-(i * i + j * j) / (2.0 * 1.5 * 1.5));
                v[(i + 5) * 11 + (j + 5)] = g;
                sum += g;
            }
        for (double& g : v) g /= sum;
        return v;
    }();
    return w;
}

struct SsimSums {
    double ssim = 0.0; // mean SSIM over valid windows
    double cs = 0.0;   // mean contrast-structure term
};

inline SsimSums ssim_plane(const std::vector<double>& a, const std::vector<double>& b, int64_t h,
                           int64_t w, double max_val) {
    const double c1 = (0.01 * max_val) * (0.01 * max_val);
    const double c2 = (0.03 * max_val) * (0.03 * max_val);
    const auto& win = ssim_window();
    const int64_t oh = h - 10, ow = w - 10;
    if (oh < 1 || ow < 1) throw std::invalid_argument("ssim: image smaller than the 11x11 window");
    double ssim_acc = 0.0, cs_acc = 0.0;
    for (int64_t i = 0; i < oh; ++i) {
        for (int64_t j = 0; j < ow; ++j) {
            double mu1 = 0, mu2 = 0, s11 = 0, s22 = 0, s12 = 0;
            for (int64_t ki = 0; ki < 11; ++ki) {
                const double* ra = a.data() + (i + ki) * w + j;
                const double* rb = b.data() + (i + ki) * w + j;
                const double* rw = win.data() + ki * 11;
                for (int64_t kj = 0; kj < 11; ++kj) {
                    const double va = ra[kj], vb = rb[kj], g = rw[kj];
                    mu1 += g * va;
                    mu2 += g * vb;
                    s11 += g * va * va;
                    s22 += g * vb * vb;
                    s12 += g * va * vb;
                }
            }
            const double var1 = s11 - mu1 * mu1;
            const double var2 = s22 - mu2 * mu2;
            const double cov = s12 - mu1 * mu2;
            const double l = (2 * mu1 * mu2 + c1) / (mu1 * mu1 + mu2 * mu2 + c1);
            const double cs = (2 * cov + c2) / (var1 + var2 + c2);
            ssim_acc += l * cs;
            cs_acc += cs;
        }
    }
    return {ssim_acc / (oh * ow), cs_acc / (oh * ow)};
}

inline std::vector<double> downsample2(const std::vector<double>& a, int64_t h, int64_t w) {
    const int64_t oh = h / 2, ow = w / 2;
    std::vector<double> out(static_cast<size_t>(oh * ow));
    for (int64_t i = 0; i < oh; ++i)
        for (int64_t j = 0; j < ow; ++j)
            out[i * ow + j] = 0.25 * (a[(2 * i) * w + 2 * j] + a[(2 * i) * w + 2 * j + 1] +
                                      a[(2 * i + 1) * w + 2 * j] + a[(2 * i + 1) * w + 2 * j + 1]);
    return out;
}

inline void check_same_shape(const Tensor& x, const Tensor& y, const char* who) {
    if (!(x.shape() == y.shape())) {
        throw std::invalid_argument(std::string(who) + ": shape mismatch " + x.shape().str() + " vs " +
                                    y.shape().str());
    }
}

} // namespace detail

/// 10*log10(max^2/MSE) with the MSE accumulated in f64; +inf for identical
/// inputs.
inline float psnr(const Tensor& x, const Tensor& y, float max_val,
                  MetricColorMode mode = MetricColorMode::Luma) {
    detail::check_same_shape(x, y, "psnr");
    if (max_val <= 0.0f) throw std::invalid_argument("psnr: max_val must be > 0");
    const Shape s = x.shape();
    double se = 0.0;
    int64_t count = 0;
    for (int64_t n = 0; n < s.n; ++n) {
        const auto pa = detail::metric_planes(x, n, mode);
        const auto pb = detail::metric_planes(y, n, mode);
        for (size_t c = 0; c < pa.size(); ++c) {
            for (size_t i = 0; i < pa[c].size(); ++i) {
                const double d = pa[c][i] - pb[c][i];
                se += d * d;
            }
            count += static_cast<int64_t>(pa[c].size());
        }
    }
    const double mse = se / static_cast<double>(count);
    if (mse == 0.0) return std::numeric_limits<float>::infinity();
    return static_cast<float>(10.0 * std::log10(static_cast<double>(max_val) * max_val / mse));
}

/// Single-scale SSIM, 11x11 Gaussian window sigma 1.5, K1=0.01, K2=0.03,
/// valid-window positions, batch mean.
inline float ssim(const Tensor& x, const Tensor& y, float max_val = 1.0f,
                  MetricColorMode mode = MetricColorMode::Luma) {
    detail::check_same_shape(x, y, "ssim");
    const Shape s = x.shape();
    double acc = 0.0;
    int64_t planes = 0;
    for (int64_t n = 0; n < s.n; ++n) {
        const auto pa = detail::metric_planes(x, n, mode);
        const auto pb = detail::metric_planes(y, n, mode);
        for (size_t c = 0; c < pa.size(); ++c) {
            acc += detail::ssim_plane(pa[c], pb[c], s.h, s.w, max_val).ssim;
            ++planes;
        }
    }
    return static_cast<float>(acc / planes);
}

/// Scale weights of the 5-level MS-SSIM; for fewer levels the leading entries
/// are renormalized to sum 1.
inline std::vector<double> ms_ssim_weights(int scales) {
    static const double kW[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
    if (scales < 1 || scales > 5) throw std::invalid_argument("ms_ssim: scales must be in [1,5]");
    std::vector<double> w(kW, kW + scales);
    double sum = 0.0;
    for (double v : w) sum += v;
    for (double& v : w) v /= sum;
    return w;
}

/// Multi-scale SSIM over dyadic scales (2x2 mean-pool between levels):
/// contrast-structure terms at every level, luminance only at the coarsest.
inline float ms_ssim(const Tensor& x, const Tensor& y, int scales = 5, float max_val = 1.0f,
                     MetricColorMode mode = MetricColorMode::Luma) {
    detail::check_same_shape(x, y, "ms_ssim");
    const Shape s = x.shape();
    {
        // every level must leave at least the 11px window
        int64_t h = s.h, w = s.w;
        for (int lvl = 1; lvl < scales; ++lvl) {
            h /= 2;
            w /= 2;
        }
        if (h < 11 || w < 11) {
            throw std::invalid_argument("ms_ssim: image too small for " + std::to_string(scales) +
                                        " scales (needs >= " + std::to_string(11ll << (scales - 1)) +
                                        " px per side)");
        }
    }
    const std::vector<double> weights = ms_ssim_weights(scales);
    double acc = 0.0;
    int64_t planes = 0;
    for (int64_t n = 0; n < s.n; ++n) {
        auto pa = detail::metric_planes(x, n, mode);
        auto pb = detail::metric_planes(y, n, mode);
        for (size_t c = 0; c < pa.size(); ++c) {
            std::vector<double> a = std::move(pa[c]);
            std::vector<double> b = std::move(pb[c]);
            int64_t h = s.h, w = s.w;
            double prod = 1.0;
            for (int lvl = 0; lvl < scales; ++lvl) {
                const detail::SsimSums sums = detail::ssim_plane(a, b, h, w, max_val);
                const bool last = lvl == scales - 1;
                const double term = last ? sums.ssim : sums.cs;
                prod *= std::pow(std::max(term, 0.0), weights[lvl]);
                if (!last) {
                    a = detail::downsample2(a, h, w);
                    b = detail::downsample2(b, h, w);
                    h /= 2;
                    w /= 2;
                }
            }
            acc += prod;
            ++planes;
        }
    }
    return static_cast<float>(acc / planes);
}

/// Largest MS-SSIM scale count (<= 5) the image size supports, or 0 if even
/// single-scale SSIM does not fit.
inline int ms_ssim_max_scales(int64_t h, int64_t w) {
    int scales = 0;
    while (scales < 5 && (h >> scales) >= 11 && (w >> scales) >= 11) ++scales;
    return scales;
}

} // namespace fpie
