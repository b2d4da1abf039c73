#pragma once

#include <algorithm>
#include <cstring>
#include <stdexcept>
#include <vector>

#include "fpie/gemm.hpp"
#include "fpie/parallel.hpp"
#include "fpie/tensor.hpp"

namespace fpie {

inline int64_t conv_out_size(int64_t in, int64_t k, int64_t stride, int64_t pad) {
    return (in + 2 * pad - k) / stride + 1;
}

inline int64_t convt_out_size(int64_t in, int64_t k, int64_t stride, int64_t pad) {
    return (in - 1) * stride - 2 * pad + k;
}

namespace detail {
inline bool& conv_fast_flag() {
    static bool v = true;
    return v;
}
} // namespace detail

/// Routes convolutions through the im2col/GEMM path (default) or the plain
/// loop reference. The two must agree within 1e-5 relative; tests hold the
/// fast path to the reference.
inline void set_conv_fast_path(bool on) { detail::conv_fast_flag() = on; }
inline bool conv_fast_path() { return detail::conv_fast_flag(); }

namespace detail {

inline void check_conv_args(const Tensor& x, const Tensor& w, const Tensor* bias) {
    const Shape& xs = x.shape();
    const Shape& ws = w.shape();
    if (ws.h != ws.w) throw std::invalid_argument("conv2d: kernel must be square, got " + ws.str());
    if (xs.c != ws.c) {
        throw std::invalid_argument("conv2d: input has " + std::to_string(xs.c) + " channels, weight expects " +
                                    std::to_string(ws.c));
    }
    if (bias && (bias->shape().numel() != ws.n)) {
        throw std::invalid_argument("conv2d: bias length must equal out_channels");
    }
}

// col row (ic,kh,kw) over columns (oh,ow) for output rows [oh0, oh1).
inline void fill_col_row(const float* xplane, int64_t H, int64_t W, int64_t kh, int64_t kw,
                         int64_t stride, int64_t pad, int64_t OW, int64_t oh0, int64_t oh1,
                         float* dst) {
    for (int64_t oh = oh0; oh < oh1; ++oh) {
        const int64_t ih = oh * stride - pad + kh;
        float* row = dst + (oh - oh0) * OW;
        if (ih < 0 || ih >= H) {
            std::fill(row, row + OW, 0.0f);
            continue;
        }
        const float* src = xplane + ih * W;
        // ow range with iw = ow*stride - pad + kw inside [0, W)
        int64_t lo = 0;
        if (pad - kw > 0) lo = (pad - kw + stride - 1) / stride;
        int64_t hi = (W - 1 + pad - kw) / stride; // inclusive
        if (hi > OW - 1) hi = OW - 1;
        if (lo > OW) lo = OW;
        std::fill(row, row + std::min(lo, OW), 0.0f);
        if (lo <= hi) {
            if (stride == 1) {
                std::memcpy(row + lo, src + (lo - pad + kw), static_cast<size_t>(hi - lo + 1) * sizeof(float));
            } else {
                for (int64_t ow = lo; ow <= hi; ++ow) row[ow] = src[ow * stride - pad + kw];
            }
        }
        if (hi + 1 < OW) std::fill(row + std::max(hi + 1, int64_t{0}), row + OW, 0.0f);
    }
}

// Strip height such that a K x (rows*OW) f32 buffer stays under ~64 MB.
inline int64_t strip_rows(int64_t K, int64_t OW, int64_t OH) {
    const int64_t budget = 64ll << 20;
    int64_t rows = budget / (K * OW * static_cast<int64_t>(sizeof(float)));
    return std::clamp<int64_t>(rows, 1, OH);
}

} // namespace detail

/// Plain-loop cross-correlation; the oracle the fast path is held to.
inline Tensor conv2d_forward_ref(const Tensor& x, const Tensor& w, const Tensor* bias,
                                 int64_t stride, int64_t pad) {
    detail::check_conv_args(x, w, bias);
    const Shape xs = x.shape(), ws = w.shape();
    const int64_t N = xs.n, IC = xs.c, H = xs.h, W = xs.w, OC = ws.n, K = ws.h;
    const int64_t OH = conv_out_size(H, K, stride, pad), OW = conv_out_size(W, K, stride, pad);
    if (OH < 1 || OW < 1) throw std::invalid_argument("conv2d: output size < 1");
    Tensor out({N, OC, OH, OW});
    parallel_for(0, N * OC, 1, [&](int64_t b0, int64_t b1) {
        for (int64_t b = b0; b < b1; ++b) {
            const int64_t n = b / OC, oc = b % OC;
            const float bv = bias ? bias->data()[oc] : 0.0f;
            for (int64_t oh = 0; oh < OH; ++oh) {
                for (int64_t ow = 0; ow < OW; ++ow) {
                    float acc = bv;
                    for (int64_t ic = 0; ic < IC; ++ic) {
                        const float* xp = x.data() + (n * IC + ic) * H * W;
                        const float* wp = w.data() + ((oc * IC + ic) * K) * K;
                        for (int64_t kh = 0; kh < K; ++kh) {
                            const int64_t ih = oh * stride - pad + kh;
                            if (ih < 0 || ih >= H) continue;
                            for (int64_t kw = 0; kw < K; ++kw) {
                                const int64_t iw = ow * stride - pad + kw;
                                if (iw < 0 || iw >= W) continue;
                                acc += xp[ih * W + iw] * wp[kh * K + kw];
                            }
                        }
                    }
                    out.at(n, oc, oh, ow) = acc;
                }
            }
        }
    });
    return out;
}

/// im2col + GEMM path, strip-blocked so the column buffer stays cache-friendly
/// at HD resolutions. Accumulation order per output element matches the
/// reference loop (ascending ic, kh, kw).
inline Tensor conv2d_forward_fast(const Tensor& x, const Tensor& w, const Tensor* bias,
                                  int64_t stride, int64_t pad) {
    detail::check_conv_args(x, w, bias);
    const Shape xs = x.shape(), ws = w.shape();
    const int64_t N = xs.n, IC = xs.c, H = xs.h, W = xs.w, OC = ws.n, K = ws.h;
    const int64_t OH = conv_out_size(H, K, stride, pad), OW = conv_out_size(W, K, stride, pad);
    if (OH < 1 || OW < 1) throw std::invalid_argument("conv2d: output size < 1");
    const int64_t KK = IC * K * K;
    Tensor out({N, OC, OH, OW});
    const int64_t rows = detail::strip_rows(KK, OW, OH);
    std::vector<float> col(static_cast<size_t>(KK * rows * OW));
    std::vector<float> scratch(static_cast<size_t>(OC * rows * OW));
    for (int64_t n = 0; n < N; ++n) {
        for (int64_t oh0 = 0; oh0 < OH; oh0 += rows) {
            const int64_t oh1 = std::min(OH, oh0 + rows);
            const int64_t cols = (oh1 - oh0) * OW;
            parallel_for(0, KK, 1, [&](int64_t r0, int64_t r1) {
                for (int64_t kk = r0; kk < r1; ++kk) {
                    const int64_t ic = kk / (K * K), kh = (kk / K) % K, kw = kk % K;
                    detail::fill_col_row(x.data() + (n * IC + ic) * H * W, H, W, kh, kw, stride, pad,
                                         OW, oh0, oh1, col.data() + kk * cols);
                }
            });
            sgemm(w.data(), col.data(), scratch.data(), OC, cols, KK);
            parallel_for(0, OC, 1, [&](int64_t c0, int64_t c1) {
                for (int64_t oc = c0; oc < c1; ++oc) {
                    const float bv = bias ? bias->data()[oc] : 0.0f;
                    const float* src = scratch.data() + oc * cols;
                    float* dst = out.data() + ((n * OC + oc) * OH + oh0) * OW;
                    if (bias) {
                        for (int64_t i = 0; i < cols; ++i) dst[i] = src[i] + bv;
                    } else {
                        std::memcpy(dst, src, static_cast<size_t>(cols) * sizeof(float));
                    }
                }
            });
        }
    }
    return out;
}

inline Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor* bias, int64_t stride,
                             int64_t pad) {
    return conv_fast_path() ? conv2d_forward_fast(x, w, bias, stride, pad)
                            : conv2d_forward_ref(x, w, bias, stride, pad);
}

/// Gradient w.r.t. the conv input; also the forward map of the transposed
/// convolution. Gather formulation: each input element sums its contributions
/// in fixed (kh, kw, oc) order, so it parallelizes without races.
inline Tensor conv2d_backward_data_ref(const Tensor& gy, const Tensor& w, int64_t stride,
                                       int64_t pad, Shape x_shape) {
    const Shape gs = gy.shape(), ws = w.shape();
    const int64_t N = gs.n, OC = gs.c, OH = gs.h, OW = gs.w;
    const int64_t IC = ws.c, K = ws.h;
    const int64_t H = x_shape.h, W = x_shape.w;
    Tensor gx(x_shape);
    parallel_for(0, N * IC, 1, [&](int64_t b0, int64_t b1) {
        for (int64_t b = b0; b < b1; ++b) {
            const int64_t n = b / IC, ic = b % IC;
            float* gp = gx.data() + (n * IC + ic) * H * W;
            for (int64_t ih = 0; ih < H; ++ih) {
                for (int64_t iw = 0; iw < W; ++iw) {
                    float acc = 0.0f;
                    for (int64_t kh = 0; kh < K; ++kh) {
                        const int64_t th = ih + pad - kh;
                        if (th < 0 || th % stride != 0) continue;
                        const int64_t oh = th / stride;
                        if (oh >= OH) continue;
                        for (int64_t kw = 0; kw < K; ++kw) {
                            const int64_t tw = iw + pad - kw;
                            if (tw < 0 || tw % stride != 0) continue;
                            const int64_t ow = tw / stride;
                            if (ow >= OW) continue;
                            for (int64_t oc = 0; oc < OC; ++oc) {
                                acc += gy.at(n, oc, oh, ow) * w.at(oc, ic, kh, kw);
                            }
                        }
                    }
                    gp[ih * W + iw] = acc;
                }
            }
        }
    });
    return gx;
}

inline Tensor conv2d_backward_data_fast(const Tensor& gy, const Tensor& w, int64_t stride,
                                        int64_t pad, Shape x_shape) {
    const Shape gs = gy.shape(), ws = w.shape();
    const int64_t N = gs.n, OC = gs.c, OH = gs.h, OW = gs.w;
    const int64_t IC = ws.c, K = ws.h;
    const int64_t H = x_shape.h, W = x_shape.w;
    const int64_t KK = IC * K * K;
    Tensor gx(x_shape);
    // w transposed to (IC*K*K, OC) once
    std::vector<float> wt(static_cast<size_t>(KK * OC));
    for (int64_t oc = 0; oc < OC; ++oc)
        for (int64_t kk = 0; kk < KK; ++kk) wt[kk * OC + oc] = w.data()[oc * KK + kk];

    const int64_t rows = std::clamp<int64_t>((48ll << 20) / std::max<int64_t>(1, (KK + OC) * OW * 4), 1, H);
    std::vector<float> gyband, gcol;
    for (int64_t n = 0; n < N; ++n) {
        for (int64_t ih0 = 0; ih0 < H; ih0 += rows) {
            const int64_t ih1 = std::min(H, ih0 + rows);
            // contributing output rows for this input strip
            int64_t lo = (ih0 + pad - (K - 1) + stride - 1) / stride;
            if (ih0 + pad - (K - 1) < 0) lo = 0;
            lo = std::clamp<int64_t>(lo, 0, OH);
            int64_t hi = std::clamp<int64_t>((ih1 - 1 + pad) / stride, -1, OH - 1);
            if (hi < lo) continue; // strip entirely in padding; gx is zero-initialized
            const int64_t band = hi - lo + 1, cols = band * OW;
            gyband.resize(static_cast<size_t>(OC * cols));
            for (int64_t oc = 0; oc < OC; ++oc) {
                std::memcpy(gyband.data() + oc * cols, gy.data() + ((n * OC + oc) * OH + lo) * OW,
                            static_cast<size_t>(cols) * sizeof(float));
            }
            gcol.resize(static_cast<size_t>(KK * cols));
            sgemm(wt.data(), gyband.data(), gcol.data(), KK, cols, OC);
            parallel_for(0, IC * (ih1 - ih0), 1, [&](int64_t r0, int64_t r1) {
                for (int64_t r = r0; r < r1; ++r) {
                    const int64_t ic = r / (ih1 - ih0), ih = ih0 + r % (ih1 - ih0);
                    float* gp = gx.data() + ((n * IC + ic) * H + ih) * W;
                    for (int64_t iw = 0; iw < W; ++iw) {
                        float acc = 0.0f;
                        for (int64_t kh = 0; kh < K; ++kh) {
                            const int64_t th = ih + pad - kh;
                            if (th < 0 || th % stride != 0) continue;
                            const int64_t oh = th / stride;
                            if (oh < lo || oh > hi) continue;
                            const float* colrow = gcol.data() + ((ic * K + kh) * K) * cols + (oh - lo) * OW;
                            for (int64_t kw = 0; kw < K; ++kw) {
                                const int64_t tw = iw + pad - kw;
                                if (tw < 0 || tw % stride != 0) continue;
                                const int64_t ow = tw / stride;
                                if (ow >= OW) continue;
                                acc += colrow[kw * cols + ow];
                            }
                        }
                        gp[iw] = acc;
                    }
                }
            });
        }
    }
    return gx;
}

inline Tensor conv2d_backward_data(const Tensor& gy, const Tensor& w, int64_t stride, int64_t pad,
                                   Shape x_shape) {
    return conv_fast_path() ? conv2d_backward_data_fast(gy, w, stride, pad, x_shape)
                            : conv2d_backward_data_ref(gy, w, stride, pad, x_shape);
}

/// Gradient w.r.t. the conv weight. Each weight element owns its own sum over
/// (n, oh, ow) in ascending order; runs at training scale only.
inline Tensor conv2d_backward_weight(const Tensor& x, const Tensor& gy, int64_t stride, int64_t pad,
                                     Shape w_shape) {
    const Shape xs = x.shape(), gs = gy.shape();
    const int64_t N = xs.n, IC = xs.c, H = xs.h, W = xs.w;
    const int64_t OC = gs.c, OH = gs.h, OW = gs.w, K = w_shape.h;
    Tensor gw(w_shape);
    parallel_for(0, OC * IC, 1, [&](int64_t b0, int64_t b1) {
        for (int64_t b = b0; b < b1; ++b) {
            const int64_t oc = b / IC, ic = b % IC;
            for (int64_t kh = 0; kh < K; ++kh) {
                for (int64_t kw = 0; kw < K; ++kw) {
                    float acc = 0.0f;
                    for (int64_t n = 0; n < N; ++n) {
                        const float* xp = x.data() + (n * IC + ic) * H * W;
                        const float* gp = gy.data() + (n * OC + oc) * OH * OW;
                        for (int64_t oh = 0; oh < OH; ++oh) {
                            const int64_t ih = oh * stride - pad + kh;
                            if (ih < 0 || ih >= H) continue;
                            for (int64_t ow = 0; ow < OW; ++ow) {
                                const int64_t iw = ow * stride - pad + kw;
                                if (iw < 0 || iw >= W) continue;
                                acc += gp[oh * OW + ow] * xp[ih * W + iw];
                            }
                        }
                    }
                    gw.at(oc, ic, kh, kw) = acc;
                }
            }
        }
    });
    return gw;
}

/// Per-output-channel sum of gy over (n, oh, ow); the bias gradient.
inline Tensor conv2d_backward_bias(const Tensor& gy) {
    const Shape gs = gy.shape();
    Tensor gb({1, gs.c, 1, 1});
    for (int64_t oc = 0; oc < gs.c; ++oc) {
        float acc = 0.0f;
        for (int64_t n = 0; n < gs.n; ++n) {
            const float* gp = gy.data() + (n * gs.c + oc) * gs.h * gs.w;
            for (int64_t i = 0; i < gs.h * gs.w; ++i) acc += gp[i];
        }
        gb.data()[oc] = acc;
    }
    return gb;
}

/// Reflection padding (no edge duplication); pads must be <= size-1.
inline Tensor reflect_pad(const Tensor& x, int64_t top, int64_t bottom, int64_t left, int64_t right) {
    const Shape s = x.shape();
    if (top >= s.h || bottom >= s.h || left >= s.w || right >= s.w || top < 0 || bottom < 0 ||
        left < 0 || right < 0) {
        throw std::invalid_argument("reflect_pad: pad must be in [0, size-1]");
    }
    Tensor out({s.n, s.c, s.h + top + bottom, s.w + left + right});
    auto reflect = [](int64_t i, int64_t sz) {
        if (i < 0) return -i;
        if (i >= sz) return 2 * sz - 2 - i;
        return i;
    };
    for (int64_t n = 0; n < s.n; ++n) {
        for (int64_t c = 0; c < s.c; ++c) {
            for (int64_t h = 0; h < out.shape().h; ++h) {
                const int64_t ih = reflect(h - top, s.h);
                for (int64_t w = 0; w < out.shape().w; ++w) {
                    out.at(n, c, h, w) = x.at(n, c, ih, reflect(w - left, s.w));
                }
            }
        }
    }
    return out;
}

inline Tensor crop(const Tensor& x, int64_t top, int64_t left, int64_t h, int64_t w) {
    const Shape s = x.shape();
    if (top < 0 || left < 0 || top + h > s.h || left + w > s.w) {
        throw std::invalid_argument("crop: region out of range");
    }
    Tensor out({s.n, s.c, h, w});
    for (int64_t n = 0; n < s.n; ++n)
        for (int64_t c = 0; c < s.c; ++c)
            for (int64_t i = 0; i < h; ++i)
                std::memcpy(out.data() + ((n * s.c + c) * h + i) * w,
                            x.data() + ((n * s.c + c) * s.h + top + i) * s.w + left,
                            static_cast<size_t>(w) * sizeof(float));
    return out;
}

namespace detail {
// Reflection index for arbitrary offsets (folds as often as needed), so
// kernels larger than the image still read valid samples.
inline int64_t reflect_index(int64_t i, int64_t sz) {
    if (sz == 1) return 0;
    const int64_t period = 2 * sz - 2;
    i = ((i % period) + period) % period;
    return i < sz ? i : period - i;
}
} // namespace detail

/// Per-channel correlation with one 2D kernel, reflection-padded borders.
/// y(i,j) = sum_{k,l} x(i+k, j+l) * g(k,l), offsets k,l in [-r, r].
inline Tensor correlate_depthwise_reflect(const Tensor& x, const std::vector<float>& g, int64_t radius) {
    const Shape s = x.shape();
    const int64_t D = 2 * radius + 1;
    Tensor out(s);
    auto reflect = detail::reflect_index;
    parallel_for(0, s.n * s.c, 1, [&](int64_t b0, int64_t b1) {
        for (int64_t b = b0; b < b1; ++b) {
            const float* xp = x.data() + b * s.h * s.w;
            float* op = out.data() + b * s.h * s.w;
            for (int64_t i = 0; i < s.h; ++i) {
                for (int64_t j = 0; j < s.w; ++j) {
                    float acc = 0.0f;
                    for (int64_t k = -radius; k <= radius; ++k) {
                        const int64_t ih = reflect(i + k, s.h);
                        const float* grow = g.data() + (k + radius) * D;
                        for (int64_t l = -radius; l <= radius; ++l) {
                            acc += xp[ih * s.w + reflect(j + l, s.w)] * grow[l + radius];
                        }
                    }
                    op[i * s.w + j] = acc;
                }
            }
        }
    });
    return out;
}

/// Adjoint of correlate_depthwise_reflect: scatters gy back through the same
/// index map. Serialized per (n,c) plane so colliding reflected indices
/// accumulate in a fixed order.
inline Tensor correlate_depthwise_reflect_adjoint(const Tensor& gy, const std::vector<float>& g,
                                                  int64_t radius) {
    const Shape s = gy.shape();
    const int64_t D = 2 * radius + 1;
    Tensor gx(s);
    auto reflect = detail::reflect_index;
    parallel_for(0, s.n * s.c, 1, [&](int64_t b0, int64_t b1) {
        for (int64_t b = b0; b < b1; ++b) {
            const float* gp = gy.data() + b * s.h * s.w;
            float* xp = gx.data() + b * s.h * s.w;
            for (int64_t i = 0; i < s.h; ++i) {
                for (int64_t j = 0; j < s.w; ++j) {
                    const float gv = gp[i * s.w + j];
                    if (gv == 0.0f) continue;
                    for (int64_t k = -radius; k <= radius; ++k) {
                        const int64_t ih = reflect(i + k, s.h);
                        const float* grow = g.data() + (k + radius) * D;
                        for (int64_t l = -radius; l <= radius; ++l) {
                            xp[ih * s.w + reflect(j + l, s.w)] += gv * grow[l + radius];
                        }
                    }
                }
            }
        }
    });
    return gx;
}

} // namespace fpie
