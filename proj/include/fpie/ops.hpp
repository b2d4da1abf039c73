#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "fpie/autodiff.hpp"
#include "fpie/kernels.hpp"
#include "fpie/tensor.hpp"

namespace fpie {

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

inline Node* add(Tape& t, Node* a, Node* b) {
    Tensor y = map_binary(a->value, b->value, BinaryOp::Add);
    return t.make(std::move(y), {a, b}, [a, b](Node& self) {
        if (a->requires_grad) a->accumulate(self.grad);
        if (b->requires_grad) b->accumulate(self.grad);
    });
}

inline Node* sub(Tape& t, Node* a, Node* b) {
    Tensor y = map_binary(a->value, b->value, BinaryOp::Sub);
    return t.make(std::move(y), {a, b}, [a, b](Node& self) {
        if (a->requires_grad) a->accumulate(self.grad);
        if (b->requires_grad) {
            Tensor g(self.grad.shape());
            const float* gs = self.grad.data();
            float* gd = g.data();
            for (size_t i = 0; i < g.size(); ++i) gd[i] = -gs[i];
            b->accumulate(g);
        }
    });
}

inline Node* mul(Tape& t, Node* a, Node* b) {
    Tensor y = map_binary(a->value, b->value, BinaryOp::Mul);
    return t.make(std::move(y), {a, b}, [a, b](Node& self) {
        if (a->requires_grad) a->accumulate(map_binary(self.grad, b->value, BinaryOp::Mul));
        if (b->requires_grad) b->accumulate(map_binary(self.grad, a->value, BinaryOp::Mul));
    });
}

/// y = scale * x + shift
inline Node* affine(Tape& t, Node* x, float scale, float shift) {
    Tensor y(x->value.shape());
    const float* xp = x->value.data();
    float* yp = y.data();
    for (size_t i = 0; i < y.size(); ++i) yp[i] = scale * xp[i] + shift;
    return t.make(std::move(y), {x}, [x, scale](Node& self) {
        if (!x->requires_grad) return;
        Tensor g(self.grad.shape());
        const float* gs = self.grad.data();
        float* gd = g.data();
        for (size_t i = 0; i < g.size(); ++i) gd[i] = scale * gs[i];
        x->accumulate(g);
    });
}

inline Node* sigmoid(Tape& t, Node* x) {
    Tensor y(x->value.shape());
    const float* xp = x->value.data();
    float* yp = y.data();
    for (size_t i = 0; i < y.size(); ++i) {
        const float v = std::clamp(xp[i], -88.0f, 88.0f);
        yp[i] = 1.0f / (1.0f + std::exp(-v));
    }
    Tensor yv = y; // captured for the derivative
    return t.make(std::move(y), {x}, [x, yv](Node& self) {
        if (!x->requires_grad) return;
        Tensor g(self.grad.shape());
        const float* gs = self.grad.data();
        const float* s = yv.data();
        float* gd = g.data();
        for (size_t i = 0; i < g.size(); ++i) gd[i] = gs[i] * s[i] * (1.0f - s[i]);
        x->accumulate(g);
    });
}

/// Elementwise natural log; callers clamp inputs away from zero first.
inline Node* log_op(Tape& t, Node* x) {
    Tensor y(x->value.shape());
    const float* xp = x->value.data();
    float* yp = y.data();
    for (size_t i = 0; i < y.size(); ++i) yp[i] = std::log(xp[i]);
    return t.make(std::move(y), {x}, [x](Node& self) {
        if (!x->requires_grad) return;
        Tensor g(self.grad.shape());
        const float* gs = self.grad.data();
        const float* xp2 = x->value.data();
        float* gd = g.data();
        for (size_t i = 0; i < g.size(); ++i) gd[i] = gs[i] / xp2[i];
        x->accumulate(g);
    });
}

inline Node* sqrt_op(Tape& t, Node* x) {
    Tensor y(x->value.shape());
    const float* xp = x->value.data();
    float* yp = y.data();
    for (size_t i = 0; i < y.size(); ++i) yp[i] = std::sqrt(xp[i]);
    Tensor yv = y;
    return t.make(std::move(y), {x}, [x, yv](Node& self) {
        if (!x->requires_grad) return;
        Tensor g(self.grad.shape());
        const float* gs = self.grad.data();
        const float* s = yv.data();
        float* gd = g.data();
        // subgradient 0 convention at the origin
        for (size_t i = 0; i < g.size(); ++i) gd[i] = s[i] > 0.0f ? gs[i] / (2.0f * s[i]) : 0.0f;
        x->accumulate(g);
    });
}

/// Hard clamp; gradient passes through inside [lo, hi].
inline Node* clamp(Tape& t, Node* x, float lo, float hi) {
    Tensor y(x->value.shape());
    const float* xp = x->value.data();
    float* yp = y.data();
    for (size_t i = 0; i < y.size(); ++i) yp[i] = std::clamp(xp[i], lo, hi);
    return t.make(std::move(y), {x}, [x, lo, hi](Node& self) {
        if (!x->requires_grad) return;
        Tensor g(self.grad.shape());
        const float* gs = self.grad.data();
        const float* xp2 = x->value.data();
        float* gd = g.data();
        for (size_t i = 0; i < g.size(); ++i) {
            gd[i] = (xp2[i] >= lo && xp2[i] <= hi) ? gs[i] : 0.0f;
        }
        x->accumulate(g);
    });
}

// ---------------------------------------------------------------------------
// activations
// ---------------------------------------------------------------------------

inline Node* relu(Tape& t, Node* x) {
    Tensor y(x->value.shape());
    const float* xp = x->value.data();
    float* yp = y.data();
    for (size_t i = 0; i < y.size(); ++i) yp[i] = xp[i] > 0.0f ? xp[i] : 0.0f;
    return t.make(std::move(y), {x}, [x](Node& self) {
        if (!x->requires_grad) return;
        Tensor g(self.grad.shape());
        const float* gs = self.grad.data();
        const float* xp2 = x->value.data();
        float* gd = g.data();
        for (size_t i = 0; i < g.size(); ++i) gd[i] = xp2[i] > 0.0f ? gs[i] : 0.0f;
        x->accumulate(g);
    });
}

inline Node* leaky_relu(Tape& t, Node* x, float slope) {
    Tensor y(x->value.shape());
    const float* xp = x->value.data();
    float* yp = y.data();
    for (size_t i = 0; i < y.size(); ++i) yp[i] = xp[i] > 0.0f ? xp[i] : slope * xp[i];
    return t.make(std::move(y), {x}, [x, slope](Node& self) {
        if (!x->requires_grad) return;
        Tensor g(self.grad.shape());
        const float* gs = self.grad.data();
        const float* xp2 = x->value.data();
        float* gd = g.data();
        for (size_t i = 0; i < g.size(); ++i) gd[i] = xp2[i] > 0.0f ? gs[i] : slope * gs[i];
        x->accumulate(g);
    });
}

/// y_i = x_i if x_i > 0 else a_c * x_i, one learned slope per channel.
inline Node* prelu(Tape& t, Node* x, Node* slope) {
    const Shape s = x->value.shape();
    if (slope->value.shape().numel() != s.c) {
        throw std::invalid_argument("prelu: slope vector length must equal channel count");
    }
    Tensor y(s);
    const float* xp = x->value.data();
    const float* ap = slope->value.data();
    float* yp = y.data();
    const int64_t plane = s.h * s.w;
    for (int64_t n = 0; n < s.n; ++n)
        for (int64_t c = 0; c < s.c; ++c) {
            const float a = ap[c];
            const float* xr = xp + (n * s.c + c) * plane;
            float* yr = yp + (n * s.c + c) * plane;
            for (int64_t i = 0; i < plane; ++i) yr[i] = xr[i] > 0.0f ? xr[i] : a * xr[i];
        }
    return t.make(std::move(y), {x, slope}, [x, slope, s, plane](Node& self) {
        const float* gs = self.grad.data();
        const float* xp2 = x->value.data();
        const float* ap2 = slope->value.data();
        if (x->requires_grad) {
            Tensor g(s);
            float* gd = g.data();
            for (int64_t n = 0; n < s.n; ++n)
                for (int64_t c = 0; c < s.c; ++c) {
                    const float a = ap2[c];
                    const int64_t off = (n * s.c + c) * plane;
                    for (int64_t i = 0; i < plane; ++i)
                        gd[off + i] = xp2[off + i] > 0.0f ? gs[off + i] : a * gs[off + i];
                }
            x->accumulate(g);
        }
        if (slope->requires_grad) {
            Tensor ga(slope->value.shape());
            float* gd = ga.data();
            for (int64_t c = 0; c < s.c; ++c) {
                float acc = 0.0f;
                for (int64_t n = 0; n < s.n; ++n) {
                    const int64_t off = (n * s.c + c) * plane;
                    for (int64_t i = 0; i < plane; ++i)
                        if (xp2[off + i] <= 0.0f) acc += gs[off + i] * xp2[off + i];
                }
                gd[c] = acc;
            }
            slope->accumulate(ga);
        }
    });
}

// ---------------------------------------------------------------------------
// reductions and slicing
// ---------------------------------------------------------------------------

inline Node* sum(Tape& t, Node* x) {
    double acc = 0.0;
    const float* xp = x->value.data();
    for (size_t i = 0; i < x->value.size(); ++i) acc += xp[i];
    Tensor y = Tensor::full({1, 1, 1, 1}, static_cast<float>(acc));
    return t.make(std::move(y), {x}, [x](Node& self) {
        if (!x->requires_grad) return;
        x->accumulate(Tensor::full(x->value.shape(), self.grad.data()[0]));
    });
}

inline Node* mean(Tape& t, Node* x) {
    double acc = 0.0;
    const float* xp = x->value.data();
    const size_t m = x->value.size();
    for (size_t i = 0; i < m; ++i) acc += xp[i];
    Tensor y = Tensor::full({1, 1, 1, 1}, static_cast<float>(acc / static_cast<double>(m)));
    return t.make(std::move(y), {x}, [x, m](Node& self) {
        if (!x->requires_grad) return;
        x->accumulate(Tensor::full(x->value.shape(), self.grad.data()[0] / static_cast<float>(m)));
    });
}

/// Per-image sum over (c,h,w): (n,c,h,w) -> (n,1,1,1).
inline Node* sum_per_image(Tape& t, Node* x) {
    const Shape s = x->value.shape();
    Tensor y({s.n, 1, 1, 1});
    const int64_t m = s.c * s.h * s.w;
    for (int64_t n = 0; n < s.n; ++n) {
        double acc = 0.0;
        const float* xp = x->value.data() + n * m;
        for (int64_t i = 0; i < m; ++i) acc += xp[i];
        y.data()[n] = static_cast<float>(acc);
    }
    return t.make(std::move(y), {x}, [x, s, m](Node& self) {
        if (!x->requires_grad) return;
        Tensor g(s);
        for (int64_t n = 0; n < s.n; ++n) {
            const float gv = self.grad.data()[n];
            float* gp = g.data() + n * m;
            for (int64_t i = 0; i < m; ++i) gp[i] = gv;
        }
        x->accumulate(g);
    });
}

/// Mean over the spatial extent: (n,c,h,w) -> (n,c,1,1).
inline Node* spatial_mean(Tape& t, Node* x) {
    const Shape s = x->value.shape();
    Tensor y({s.n, s.c, 1, 1});
    const int64_t plane = s.h * s.w;
    for (int64_t b = 0; b < s.n * s.c; ++b) {
        double acc = 0.0;
        const float* xp = x->value.data() + b * plane;
        for (int64_t i = 0; i < plane; ++i) acc += xp[i];
        y.data()[b] = static_cast<float>(acc / static_cast<double>(plane));
    }
    return t.make(std::move(y), {x}, [x, s, plane](Node& self) {
        if (!x->requires_grad) return;
        Tensor g(s);
        for (int64_t b = 0; b < s.n * s.c; ++b) {
            const float gv = self.grad.data()[b] / static_cast<float>(plane);
            float* gp = g.data() + b * plane;
            for (int64_t i = 0; i < plane; ++i) gp[i] = gv;
        }
        x->accumulate(g);
    });
}

/// Vertical forward differences x[h+1]-x[h]: (n,c,h,w) -> (n,c,h-1,w).
inline Node* diff_y(Tape& t, Node* x) {
    const Shape s = x->value.shape();
    if (s.h < 2) throw std::invalid_argument("diff_y: needs h >= 2");
    Tensor y({s.n, s.c, s.h - 1, s.w});
    for (int64_t b = 0; b < s.n * s.c; ++b) {
        const float* xp = x->value.data() + b * s.h * s.w;
        float* yp = y.data() + b * (s.h - 1) * s.w;
        for (int64_t h = 0; h + 1 < s.h; ++h)
            for (int64_t w = 0; w < s.w; ++w) yp[h * s.w + w] = xp[(h + 1) * s.w + w] - xp[h * s.w + w];
    }
    return t.make(std::move(y), {x}, [x, s](Node& self) {
        if (!x->requires_grad) return;
        Tensor g(s);
        for (int64_t b = 0; b < s.n * s.c; ++b) {
            const float* gs = self.grad.data() + b * (s.h - 1) * s.w;
            float* gp = g.data() + b * s.h * s.w;
            for (int64_t h = 0; h + 1 < s.h; ++h)
                for (int64_t w = 0; w < s.w; ++w) {
                    gp[(h + 1) * s.w + w] += gs[h * s.w + w];
                    gp[h * s.w + w] -= gs[h * s.w + w];
                }
        }
        x->accumulate(g);
    });
}

/// Horizontal forward differences x[w+1]-x[w]: (n,c,h,w) -> (n,c,h,w-1).
inline Node* diff_x(Tape& t, Node* x) {
    const Shape s = x->value.shape();
    if (s.w < 2) throw std::invalid_argument("diff_x: needs w >= 2");
    Tensor y({s.n, s.c, s.h, s.w - 1});
    for (int64_t b = 0; b < s.n * s.c * s.h; ++b) {
        const float* xp = x->value.data() + b * s.w;
        float* yp = y.data() + b * (s.w - 1);
        for (int64_t w = 0; w + 1 < s.w; ++w) yp[w] = xp[w + 1] - xp[w];
    }
    return t.make(std::move(y), {x}, [x, s](Node& self) {
        if (!x->requires_grad) return;
        Tensor g(s);
        for (int64_t b = 0; b < s.n * s.c * s.h; ++b) {
            const float* gs = self.grad.data() + b * (s.w - 1);
            float* gp = g.data() + b * s.w;
            for (int64_t w = 0; w + 1 < s.w; ++w) {
                gp[w + 1] += gs[w];
                gp[w] -= gs[w];
            }
        }
        x->accumulate(g);
    });
}

/// Top-left anchored crop to (h, w); backward zero-pads.
inline Node* crop_to(Tape& t, Node* x, int64_t h, int64_t w) {
    const Shape s = x->value.shape();
    Tensor y = crop(x->value, 0, 0, h, w);
    return t.make(std::move(y), {x}, [x, s, h, w](Node& self) {
        if (!x->requires_grad) return;
        Tensor g(s);
        for (int64_t n = 0; n < s.n; ++n)
            for (int64_t c = 0; c < s.c; ++c)
                for (int64_t i = 0; i < h; ++i)
                    std::memcpy(g.data() + ((n * s.c + c) * s.h + i) * s.w,
                                self.grad.data() + ((n * s.c + c) * h + i) * w,
                                static_cast<size_t>(w) * sizeof(float));
        x->accumulate(g);
    });
}

// ---------------------------------------------------------------------------
// convolutions
// ---------------------------------------------------------------------------

inline Node* conv2d(Tape& t, Node* x, Node* w, Node* b, int64_t stride, int64_t pad) {
    Tensor y = conv2d_forward(x->value, w->value, b ? &b->value : nullptr, stride, pad);
    std::vector<Node*> parents{x, w};
    if (b) parents.push_back(b);
    return t.make(std::move(y), std::move(parents), [x, w, b, stride, pad](Node& self) {
        if (x->requires_grad)
            x->accumulate(conv2d_backward_data(self.grad, w->value, stride, pad, x->value.shape()));
        if (w->requires_grad)
            w->accumulate(conv2d_backward_weight(x->value, self.grad, stride, pad, w->value.shape()));
        if (b && b->requires_grad) b->accumulate(conv2d_backward_bias(self.grad));
    });
}

/// Exact adjoint of conv2d with the same weight tensor (Cin, Cout, k, k).
inline Node* conv2d_transpose(Tape& t, Node* x, Node* w, Node* b, int64_t stride, int64_t pad) {
    const Shape xs = x->value.shape(), ws = w->value.shape();
    if (xs.c != ws.n) {
        throw std::invalid_argument("conv2d_transpose: input has " + std::to_string(xs.c) +
                                    " channels, weight expects " + std::to_string(ws.n));
    }
    const Shape out_shape{xs.n, ws.c, convt_out_size(xs.h, ws.h, stride, pad),
                          convt_out_size(xs.w, ws.w, stride, pad)};
    Tensor y = conv2d_backward_data(x->value, w->value, stride, pad, out_shape);
    if (b) {
        if (b->value.shape().numel() != ws.c)
            throw std::invalid_argument("conv2d_transpose: bias length must equal out_channels");
        const int64_t plane = out_shape.h * out_shape.w;
        for (int64_t n = 0; n < out_shape.n; ++n)
            for (int64_t c = 0; c < out_shape.c; ++c) {
                const float bv = b->value.data()[c];
                float* yp = y.data() + (n * out_shape.c + c) * plane;
                for (int64_t i = 0; i < plane; ++i) yp[i] += bv;
            }
    }
    std::vector<Node*> parents{x, w};
    if (b) parents.push_back(b);
    return t.make(std::move(y), std::move(parents), [x, w, b, stride, pad](Node& self) {
        if (x->requires_grad)
            x->accumulate(conv2d_forward(self.grad, w->value, nullptr, stride, pad));
        if (w->requires_grad)
            w->accumulate(conv2d_backward_weight(self.grad, x->value, stride, pad, w->value.shape()));
        if (b && b->requires_grad) b->accumulate(conv2d_backward_bias(self.grad));
    });
}

// ---------------------------------------------------------------------------
// normalization
// ---------------------------------------------------------------------------

/// Running statistics for eval-mode batch norm, updated with momentum 0.99
/// while training. Saved with the model so eval mode is reproducible.
struct BatchNormState {
    Tensor running_mean; // (1,c,1,1)
    Tensor running_var;  // (1,c,1,1)
    float momentum = 0.99f;

    explicit BatchNormState(int64_t channels = 0) {
        if (channels > 0) {
            running_mean = Tensor::zeros({1, channels, 1, 1});
            running_var = Tensor::full({1, channels, 1, 1}, 1.0f);
        }
    }
};

enum class BatchNormMode { Train, Eval };

/// Per-channel normalization over (n,h,w), eps 1e-5. Train mode uses batch
/// statistics (biased variance) and updates the running averages in place.
inline Node* batch_norm(Tape& t, Node* x, Node* gamma, Node* beta, BatchNormState& state,
                        BatchNormMode mode) {
    const Shape s = x->value.shape();
    constexpr float eps = 1e-5f;
    if (gamma->value.shape().numel() != s.c || beta->value.shape().numel() != s.c) {
        throw std::invalid_argument("batch_norm: gamma/beta length must equal channel count");
    }
    const int64_t plane = s.h * s.w;
    const int64_t m = s.n * plane;
    Tensor mean_c({1, s.c, 1, 1});
    Tensor var_c({1, s.c, 1, 1});
    if (mode == BatchNormMode::Train) {
        for (int64_t c = 0; c < s.c; ++c) {
            double acc = 0.0;
            for (int64_t n = 0; n < s.n; ++n) {
                const float* xp = x->value.data() + (n * s.c + c) * plane;
                for (int64_t i = 0; i < plane; ++i) acc += xp[i];
            }
            const double mu = acc / m;
            double vacc = 0.0;
            for (int64_t n = 0; n < s.n; ++n) {
                const float* xp = x->value.data() + (n * s.c + c) * plane;
                for (int64_t i = 0; i < plane; ++i) {
                    const double d = xp[i] - mu;
                    vacc += d * d;
                }
            }
            mean_c.data()[c] = static_cast<float>(mu);
            var_c.data()[c] = static_cast<float>(vacc / m);
        }
        const float mom = state.momentum;
        for (int64_t c = 0; c < s.c; ++c) {
            state.running_mean.data()[c] = mom * state.running_mean.data()[c] + (1.0f - mom) * mean_c.data()[c];
            state.running_var.data()[c] = mom * state.running_var.data()[c] + (1.0f - mom) * var_c.data()[c];
        }
    } else {
        mean_c = state.running_mean.clone();
        var_c = state.running_var.clone();
    }

    Tensor xhat(s);
    Tensor y(s);
    for (int64_t n = 0; n < s.n; ++n)
        for (int64_t c = 0; c < s.c; ++c) {
            const float mu = mean_c.data()[c];
            const float inv = 1.0f / std::sqrt(var_c.data()[c] + eps);
            const float g = gamma->value.data()[c];
            const float bt = beta->value.data()[c];
            const float* xp = x->value.data() + (n * s.c + c) * plane;
            float* hp = xhat.data() + (n * s.c + c) * plane;
            float* yp = y.data() + (n * s.c + c) * plane;
            for (int64_t i = 0; i < plane; ++i) {
                hp[i] = (xp[i] - mu) * inv;
                yp[i] = g * hp[i] + bt;
            }
        }

    const bool train = mode == BatchNormMode::Train;
    return t.make(std::move(y), {x, gamma, beta},
                  [x, gamma, beta, xhat, var_c, s, plane, m, train](Node& self) {
                      const float* gs = self.grad.data();
                      const float* hp = xhat.data();
                      if (gamma->requires_grad || beta->requires_grad) {
                          Tensor gg({1, s.c, 1, 1});
                          Tensor gb({1, s.c, 1, 1});
                          for (int64_t c = 0; c < s.c; ++c) {
                              double sg = 0.0, sgh = 0.0;
                              for (int64_t n = 0; n < s.n; ++n) {
                                  const int64_t off = (n * s.c + c) * plane;
                                  for (int64_t i = 0; i < plane; ++i) {
                                      sg += gs[off + i];
                                      sgh += gs[off + i] * hp[off + i];
                                  }
                              }
                              gb.data()[c] = static_cast<float>(sg);
                              gg.data()[c] = static_cast<float>(sgh);
                          }
                          if (gamma->requires_grad) gamma->accumulate(gg);
                          if (beta->requires_grad) beta->accumulate(gb);
                      }
                      if (!x->requires_grad) return;
                      Tensor gx(s);
                      constexpr float eps2 = 1e-5f;
                      for (int64_t c = 0; c < s.c; ++c) {
                          const float inv = 1.0f / std::sqrt(var_c.data()[c] + eps2);
                          const float gm = gamma->value.data()[c];
                          if (train) {
                              double sg = 0.0, sgh = 0.0;
                              for (int64_t n = 0; n < s.n; ++n) {
                                  const int64_t off = (n * s.c + c) * plane;
                                  for (int64_t i = 0; i < plane; ++i) {
                                      sg += gs[off + i];
                                      sgh += gs[off + i] * hp[off + i];
                                  }
                              }
                              const float mg = static_cast<float>(sg / m);
                              const float mgh = static_cast<float>(sgh / m);
                              for (int64_t n = 0; n < s.n; ++n) {
                                  const int64_t off = (n * s.c + c) * plane;
                                  for (int64_t i = 0; i < plane; ++i) {
                                      gx.data()[off + i] =
                                          gm * inv * (gs[off + i] - mg - hp[off + i] * mgh);
                                  }
                              }
                          } else {
                              for (int64_t n = 0; n < s.n; ++n) {
                                  const int64_t off = (n * s.c + c) * plane;
                                  for (int64_t i = 0; i < plane; ++i) {
                                      gx.data()[off + i] = gm * inv * gs[off + i];
                                  }
                              }
                          }
                      }
                      x->accumulate(gx);
                  });
}

// ---------------------------------------------------------------------------
// image ops
// ---------------------------------------------------------------------------

/// Discrete 2D blur kernel from a separable Gaussian profile. The denominator
/// is 2*sigma exactly as the defining expression prints it; set
/// sigma_squared=true for the conventional 2*sigma^2 reading.
struct GaussianKernel {
    int64_t radius = 0;
    std::vector<float> weights; // (2r+1)^2, row-major over (k+r, l+r)

    float at(int64_t k, int64_t l) const {
        const int64_t d = 2 * radius + 1;
        return weights[(k + radius) * d + (l + radius)];
    }

    float sum() const {
        double acc = 0.0;
        for (float v : weights) acc += v;
        return static_cast<float>(acc);
    }
};

inline GaussianKernel build_gaussian_kernel(float amplitude, float mu, float sigma, int64_t radius,
                                            bool sigma_squared = false) {
    if (sigma <= 0.0f) throw std::invalid_argument("build_gaussian_kernel: sigma must be > 0");
    if (radius < 1) throw std::invalid_argument("build_gaussian_kernel: radius must be >= 1");
    GaussianKernel k;
    k.radius = radius;
    const int64_t d = 2 * radius + 1;
    k.weights.resize(static_cast<size_t>(d * d));
    const double denom = sigma_squared ? 2.0 * sigma * sigma : 2.0 * sigma;
    for (int64_t i = -radius; i <= radius; ++i) {
        for (int64_t j = -radius; j <= radius; ++j) {
            const double dk = static_cast<double>(i) - mu;
            const double dl = static_cast<double>(j) - mu;
            k.weights[(i + radius) * d + (j + radius)] =
                static_cast<float>(amplitude * std::exp(-dk * dk / denom - dl * dl / denom));
        }
    }
    return k;
}

inline Node* gaussian_blur(Tape& t, Node* x, const GaussianKernel& k) {
    Tensor y = correlate_depthwise_reflect(x->value, k.weights, k.radius);
    return t.make(std::move(y), {x}, [x, k](Node& self) {
        if (!x->requires_grad) return;
        x->accumulate(correlate_depthwise_reflect_adjoint(self.grad, k.weights, k.radius));
    });
}

inline constexpr float kLumaR = 0.299f;
inline constexpr float kLumaG = 0.587f;
inline constexpr float kLumaB = 0.114f;

/// BT.601 luma: (n,3,h,w) -> (n,1,h,w).
inline Node* grayscale(Tape& t, Node* x) {
    const Shape s = x->value.shape();
    if (s.c != 3) throw std::invalid_argument("grayscale: input must have 3 channels");
    Tensor y({s.n, 1, s.h, s.w});
    const int64_t plane = s.h * s.w;
    for (int64_t n = 0; n < s.n; ++n) {
        const float* r = x->value.data() + (n * 3 + 0) * plane;
        const float* g = x->value.data() + (n * 3 + 1) * plane;
        const float* b = x->value.data() + (n * 3 + 2) * plane;
        float* yp = y.data() + n * plane;
        for (int64_t i = 0; i < plane; ++i) yp[i] = kLumaR * r[i] + kLumaG * g[i] + kLumaB * b[i];
    }
    return t.make(std::move(y), {x}, [x, s, plane](Node& self) {
        if (!x->requires_grad) return;
        Tensor g(s);
        for (int64_t n = 0; n < s.n; ++n) {
            const float* gs = self.grad.data() + n * plane;
            float* gr = g.data() + (n * 3 + 0) * plane;
            float* gg = g.data() + (n * 3 + 1) * plane;
            float* gb = g.data() + (n * 3 + 2) * plane;
            for (int64_t i = 0; i < plane; ++i) {
                gr[i] = kLumaR * gs[i];
                gg[i] = kLumaG * gs[i];
                gb[i] = kLumaB * gs[i];
            }
        }
        x->accumulate(g);
    });
}

/// 2x2 max pooling, stride 2; odd trailing row/column dropped.
inline Node* max_pool2(Tape& t, Node* x) {
    const Shape s = x->value.shape();
    const int64_t oh = s.h / 2, ow = s.w / 2;
    if (oh < 1 || ow < 1) throw std::invalid_argument("max_pool2: input too small");
    Tensor y({s.n, s.c, oh, ow});
    auto argmax = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(s.n * s.c * oh * ow));
    for (int64_t b = 0; b < s.n * s.c; ++b) {
        const float* xp = x->value.data() + b * s.h * s.w;
        float* yp = y.data() + b * oh * ow;
        int64_t* am = argmax->data() + b * oh * ow;
        for (int64_t i = 0; i < oh; ++i)
            for (int64_t j = 0; j < ow; ++j) {
                int64_t best = (2 * i) * s.w + 2 * j;
                float bv = xp[best];
                const int64_t cand[3] = {(2 * i) * s.w + 2 * j + 1, (2 * i + 1) * s.w + 2 * j,
                                         (2 * i + 1) * s.w + 2 * j + 1};
                for (int64_t idx : cand)
                    if (xp[idx] > bv) {
                        bv = xp[idx];
                        best = idx;
                    }
                yp[i * ow + j] = bv;
                am[i * ow + j] = best;
            }
    }
    return t.make(std::move(y), {x}, [x, s, oh, ow, argmax](Node& self) {
        if (!x->requires_grad) return;
        Tensor g(s);
        for (int64_t b = 0; b < s.n * s.c; ++b) {
            const float* gs = self.grad.data() + b * oh * ow;
            const int64_t* am = argmax->data() + b * oh * ow;
            float* gp = g.data() + b * s.h * s.w;
            for (int64_t i = 0; i < oh * ow; ++i) gp[am[i]] += gs[i];
        }
        x->accumulate(g);
    });
}

} // namespace fpie
