#pragma once

#include <deque>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fpie/autodiff.hpp"
#include "fpie/ops.hpp"

namespace fpie {

// ---------------------------------------------------------------------------
// configs
// ---------------------------------------------------------------------------

enum class GeneratorVariant { Baseline, Strided };

struct GeneratorConfig {
    GeneratorVariant variant = GeneratorVariant::Strided;
    int64_t kernel = 3;         // all ordinary convolutions
    int64_t strided_kernel = 4; // stride-2 and transposed layers (strided variant)
    int64_t base_channels = 16;
    int64_t max_channels = 64; // strided: 4 * base_channels after two halvings
    int64_t blocks = 2;        // residual blocks (at 1/4 resolution for strided)
    bool use_prelu = false;
    bool block_batch_norm = true; // conv-BN-act-conv-BN inside residual blocks
    bool skip_pre_activation = true;

    void validate() const {
        if (kernel < 1 || strided_kernel < 1 || base_channels < 1 || blocks < 1) {
            throw std::invalid_argument("GeneratorConfig: kernel/channels/blocks must be >= 1");
        }
        if (kernel % 2 == 0) {
            throw std::invalid_argument("GeneratorConfig: ordinary kernel must be odd to preserve shape");
        }
        if (variant == GeneratorVariant::Strided && max_channels != 4 * base_channels) {
            throw std::invalid_argument("GeneratorConfig: strided variant needs max_channels == 4*base_channels");
        }
    }

    std::string label() const {
        if (variant == GeneratorVariant::Baseline) {
            return std::to_string(kernel) + ", " + std::to_string(base_channels) + ", " +
                   std::to_string(blocks);
        }
        const std::string k = kernel == strided_kernel
                                  ? std::to_string(kernel)
                                  : std::to_string(kernel) + "-" + std::to_string(strided_kernel);
        return k + ", " + std::to_string(base_channels) + "-" + std::to_string(max_channels);
    }

    static GeneratorConfig baseline(int64_t kernel, int64_t channels, int64_t blocks) {
        GeneratorConfig c;
        c.variant = GeneratorVariant::Baseline;
        c.kernel = kernel;
        c.base_channels = channels;
        c.max_channels = channels;
        c.blocks = blocks;
        return c;
    }

    static GeneratorConfig strided(int64_t kernel, int64_t strided_kernel, int64_t base_channels) {
        GeneratorConfig c;
        c.variant = GeneratorVariant::Strided;
        c.kernel = kernel;
        c.strided_kernel = strided_kernel;
        c.base_channels = base_channels;
        c.max_channels = 4 * base_channels;
        c.blocks = 2;
        return c;
    }
};

struct DiscriminatorConfig {
    std::vector<int64_t> channels = {48, 96, 128, 192};
    std::vector<int64_t> strides = {2, 2, 2, 2};
    int64_t kernel = 4;
    float leaky_slope = 0.2f;

    void validate() const {
        if (channels.empty() || channels.size() != strides.size()) {
            throw std::invalid_argument("DiscriminatorConfig: channels/strides must be same nonzero length");
        }
    }
};

// ---------------------------------------------------------------------------
// model graph
// ---------------------------------------------------------------------------

enum class StepKind {
    Input,
    Conv,
    ConvT,
    BatchNorm,
    ReLU,
    PReLU,
    LeakyReLU,
    Sigmoid,
    Clamp01,
    Add,
    SpatialMean,
};

/// One node of the (small, static) layer graph. Parameters are referenced by
/// index into the owning model.
struct Step {
    StepKind kind = StepKind::Input;
    int64_t input = -1;
    int64_t skip = -1; // second operand of Add
    int64_t stride = 1;
    int64_t pad = 0;
    int weight = -1;
    int bias = -1;
    int slope = -1; // PReLU
    int gamma = -1, beta = -1, run_mean = -1, run_var = -1;
    float leaky = 0.0f;
    bool match_skip_hw = false; // ConvT: take output H,W from the skip step
};

/// A built network: step graph plus owned parameters. Weights are shareable
/// read-only for inference; training mutates them and needs exclusive access.
class Model {
public:
    std::string name;
    int64_t in_channels = 3;
    std::vector<Step> steps;
    std::deque<Parameter> params; // stable addresses

    Model() = default;
    Model(Model&&) = default;
    Model& operator=(Model&&) = default;
    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;

    Model clone() const {
        Model m;
        m.name = name;
        m.in_channels = in_channels;
        m.steps = steps;
        for (const Parameter& p : params) {
            m.params.emplace_back(p.name, p.value.clone(), p.trainable);
        }
        return m;
    }

    int add_param(const std::string& pname, Tensor v, bool trainable = true) {
        params.emplace_back(name + "/" + pname, std::move(v), trainable);
        return static_cast<int>(params.size()) - 1;
    }

    int64_t add_step(Step s) {
        steps.push_back(s);
        return static_cast<int64_t>(steps.size()) - 1;
    }

    std::vector<Parameter*> parameters() {
        std::vector<Parameter*> out;
        for (Parameter& p : params) out.push_back(&p);
        return out;
    }

    std::vector<Parameter*> trainable_parameters() {
        std::vector<Parameter*> out;
        for (Parameter& p : params)
            if (p.trainable) out.push_back(&p);
        return out;
    }

    int64_t param_count() const {
        int64_t total = 0;
        for (const Parameter& p : params) total += p.value.shape().numel();
        return total;
    }

    /// Differentiable forward on a tape. Frozen parameters enter as plain
    /// leaves, so gradients flow through them but never into them.
    Node* forward(Tape& t, Node* input, BatchNormMode bn_mode) {
        std::vector<Node*> vals(steps.size(), nullptr);
        std::vector<Node*> pnodes(params.size(), nullptr);
        auto pnode = [&](int idx) -> Node* {
            if (pnodes[idx] == nullptr) {
                Parameter& p = params[idx];
                pnodes[idx] = p.trainable ? t.param(p) : t.leaf(p.value, false);
            }
            return pnodes[idx];
        };
        for (size_t i = 0; i < steps.size(); ++i) {
            const Step& s = steps[i];
            Node* in = s.input >= 0 ? vals[s.input] : nullptr;
            switch (s.kind) {
                case StepKind::Input:
                    vals[i] = input;
                    break;
                case StepKind::Conv:
                    vals[i] = conv2d(t, in, pnode(s.weight), s.bias >= 0 ? pnode(s.bias) : nullptr,
                                     s.stride, s.pad);
                    break;
                case StepKind::ConvT: {
                    Node* out = conv2d_transpose_sized(t, in, pnode(s.weight),
                                                       s.bias >= 0 ? pnode(s.bias) : nullptr, s.stride,
                                                       s.pad,
                                                       s.match_skip_hw ? &vals[s.skip]->value.shape()
                                                                       : nullptr);
                    vals[i] = out;
                    break;
                }
                case StepKind::BatchNorm: {
                    BatchNormState view;
                    view.running_mean = params[s.run_mean].value;
                    view.running_var = params[s.run_var].value;
                    vals[i] = batch_norm(t, in, pnode(s.gamma), pnode(s.beta), view, bn_mode);
                    break;
                }
                case StepKind::ReLU:
                    vals[i] = relu(t, in);
                    break;
                case StepKind::PReLU:
                    vals[i] = prelu(t, in, pnode(s.slope));
                    break;
                case StepKind::LeakyReLU:
                    vals[i] = leaky_relu(t, in, s.leaky);
                    break;
                case StepKind::Sigmoid:
                    vals[i] = sigmoid(t, in);
                    break;
                case StepKind::Clamp01:
                    vals[i] = clamp(t, in, 0.0f, 1.0f);
                    break;
                case StepKind::Add:
                    vals[i] = add(t, in, vals[s.skip]);
                    break;
                case StepKind::SpatialMean:
                    vals[i] = spatial_mean(t, in);
                    break;
            }
        }
        return vals.back();
    }

    /// Inference without a tape: batch norm in eval mode, intermediate buffers
    /// released at their last use. This is what the benchmark times.
    Tensor infer(const Tensor& input) const {
        check_input(input);
        std::vector<int64_t> last = last_use();
        std::vector<Tensor> vals(steps.size());
        for (size_t i = 0; i < steps.size(); ++i) {
            vals[i] = eval_step(steps[i], i, input, vals);
            for (size_t j = 0; j <= i; ++j) {
                if (last[j] == static_cast<int64_t>(i) && j != steps.size() - 1) vals[j] = Tensor();
            }
        }
        return vals.back();
    }

    /// Shape of every step's output for the given input shape.
    std::vector<Shape> infer_shapes(Shape in) const {
        std::vector<Shape> shapes(steps.size());
        for (size_t i = 0; i < steps.size(); ++i) {
            const Step& s = steps[i];
            const Shape si = s.input >= 0 ? shapes[s.input] : Shape{};
            switch (s.kind) {
                case StepKind::Input:
                    shapes[i] = in;
                    break;
                case StepKind::Conv: {
                    const Shape ws = params[s.weight].value.shape();
                    shapes[i] = {si.n, ws.n, conv_out_size(si.h, ws.h, s.stride, s.pad),
                                 conv_out_size(si.w, ws.w, s.stride, s.pad)};
                    break;
                }
                case StepKind::ConvT: {
                    const Shape ws = params[s.weight].value.shape();
                    if (s.match_skip_hw) {
                        shapes[i] = {si.n, ws.c, shapes[s.skip].h, shapes[s.skip].w};
                    } else {
                        shapes[i] = {si.n, ws.c, convt_out_size(si.h, ws.h, s.stride, s.pad),
                                     convt_out_size(si.w, ws.w, s.stride, s.pad)};
                    }
                    break;
                }
                case StepKind::SpatialMean:
                    shapes[i] = {si.n, si.c, 1, 1};
                    break;
                default:
                    shapes[i] = si;
                    break;
            }
        }
        return shapes;
    }

    /// Index of the last step that reads each step's output.
    std::vector<int64_t> last_use() const {
        std::vector<int64_t> last(steps.size());
        for (size_t i = 0; i < steps.size(); ++i) last[i] = static_cast<int64_t>(i);
        for (size_t i = 0; i < steps.size(); ++i) {
            if (steps[i].input >= 0) last[steps[i].input] = static_cast<int64_t>(i);
            if (steps[i].skip >= 0) last[steps[i].skip] = static_cast<int64_t>(i);
        }
        return last;
    }

private:
    void check_input(const Tensor& x) const {
        if (x.shape().c != in_channels) {
            throw std::invalid_argument(name + ": expected " + std::to_string(in_channels) +
                                        " input channels, got " + std::to_string(x.shape().c));
        }
    }

    static Node* conv2d_transpose_sized(Tape& t, Node* x, Node* w, Node* b, int64_t stride,
                                        int64_t pad, const Shape* target) {
        if (!target) return conv2d_transpose(t, x, w, b, stride, pad);
        // Same op, output size pinned to the skip branch (resolves the floor
        // ambiguity of strided shapes for odd kernels).
        const Shape xs = x->value.shape(), ws = w->value.shape();
        const Shape out_shape{xs.n, ws.c, target->h, target->w};
        Tensor y = conv2d_backward_data(x->value, w->value, stride, pad, out_shape);
        if (b) {
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

    Tensor eval_step(const Step& s, size_t /*idx*/, const Tensor& input, std::vector<Tensor>& vals) const {
        const Tensor& in = s.input >= 0 ? vals[s.input] : input;
        switch (s.kind) {
            case StepKind::Input:
                return input;
            case StepKind::Conv:
                return conv2d_forward(in, params[s.weight].value,
                                      s.bias >= 0 ? &params[s.bias].value : nullptr, s.stride, s.pad);
            case StepKind::ConvT: {
                const Shape ws = params[s.weight].value.shape();
                Shape out{in.shape().n, ws.c, 0, 0};
                if (s.match_skip_hw) {
                    out.h = vals[s.skip].shape().h;
                    out.w = vals[s.skip].shape().w;
                } else {
                    out.h = convt_out_size(in.shape().h, ws.h, s.stride, s.pad);
                    out.w = convt_out_size(in.shape().w, ws.w, s.stride, s.pad);
                }
                Tensor y = conv2d_backward_data(in, params[s.weight].value, s.stride, s.pad, out);
                if (s.bias >= 0) {
                    const float* bv = params[s.bias].value.data();
                    const int64_t plane = out.h * out.w;
                    for (int64_t n = 0; n < out.n; ++n)
                        for (int64_t c = 0; c < out.c; ++c) {
                            float* yp = y.data() + (n * out.c + c) * plane;
                            for (int64_t i = 0; i < plane; ++i) yp[i] += bv[c];
                        }
                }
                return y;
            }
            case StepKind::BatchNorm: {
                const Shape sh = in.shape();
                Tensor y(sh);
                const int64_t plane = sh.h * sh.w;
                for (int64_t c = 0; c < sh.c; ++c) {
                    const float mu = params[s.run_mean].value.data()[c];
                    const float inv = 1.0f / std::sqrt(params[s.run_var].value.data()[c] + 1e-5f);
                    const float g = params[s.gamma].value.data()[c];
                    const float bt = params[s.beta].value.data()[c];
                    for (int64_t n = 0; n < sh.n; ++n) {
                        const float* xp = in.data() + (n * sh.c + c) * plane;
                        float* yp = y.data() + (n * sh.c + c) * plane;
                        for (int64_t i = 0; i < plane; ++i) yp[i] = g * (xp[i] - mu) * inv + bt;
                    }
                }
                return y;
            }
            case StepKind::ReLU: {
                Tensor y(in.shape());
                for (size_t i = 0; i < in.size(); ++i)
                    y.data()[i] = in.data()[i] > 0.0f ? in.data()[i] : 0.0f;
                return y;
            }
            case StepKind::PReLU: {
                const Shape sh = in.shape();
                Tensor y(sh);
                const float* a = params[s.slope].value.data();
                const int64_t plane = sh.h * sh.w;
                for (int64_t n = 0; n < sh.n; ++n)
                    for (int64_t c = 0; c < sh.c; ++c) {
                        const float* xp = in.data() + (n * sh.c + c) * plane;
                        float* yp = y.data() + (n * sh.c + c) * plane;
                        for (int64_t i = 0; i < plane; ++i)
                            yp[i] = xp[i] > 0.0f ? xp[i] : a[c] * xp[i];
                    }
                return y;
            }
            case StepKind::LeakyReLU: {
                Tensor y(in.shape());
                for (size_t i = 0; i < in.size(); ++i) {
                    const float v = in.data()[i];
                    y.data()[i] = v > 0.0f ? v : s.leaky * v;
                }
                return y;
            }
            case StepKind::Sigmoid: {
                Tensor y(in.shape());
                for (size_t i = 0; i < in.size(); ++i) {
                    const float v = std::clamp(in.data()[i], -88.0f, 88.0f);
                    y.data()[i] = 1.0f / (1.0f + std::exp(-v));
                }
                return y;
            }
            case StepKind::Clamp01: {
                Tensor y(in.shape());
                for (size_t i = 0; i < in.size(); ++i) y.data()[i] = std::clamp(in.data()[i], 0.0f, 1.0f);
                return y;
            }
            case StepKind::Add:
                return map_binary(in, vals[s.skip], BinaryOp::Add);
            case StepKind::SpatialMean: {
                const Shape sh = in.shape();
                Tensor y({sh.n, sh.c, 1, 1});
                const int64_t plane = sh.h * sh.w;
                for (int64_t b = 0; b < sh.n * sh.c; ++b) {
                    double acc = 0.0;
                    const float* xp = in.data() + b * plane;
                    for (int64_t i = 0; i < plane; ++i) acc += xp[i];
                    y.data()[b] = static_cast<float>(acc / static_cast<double>(plane));
                }
                return y;
            }
        }
        throw std::logic_error("eval_step: unhandled step kind");
    }
};

// ---------------------------------------------------------------------------
// builders
// ---------------------------------------------------------------------------

namespace detail {

inline Tensor conv_init(Shape ws, Rng& rng) {
    const float fan_in = static_cast<float>(ws.c * ws.h * ws.w);
    return random_normal(ws, 0.0f, 0.02f * std::sqrt(2.0f / fan_in), rng);
}

// convT weight (Cin, Cout, k, k): fan_in is the incoming channel count
inline Tensor convt_init(Shape ws, Rng& rng) {
    const float fan_in = static_cast<float>(ws.n * ws.h * ws.w);
    return random_normal(ws, 0.0f, 0.02f * std::sqrt(2.0f / fan_in), rng);
}

struct NetBuilder {
    Model& m;
    Rng& rng;
    bool use_prelu = false;

    int64_t conv(const std::string& nm, int64_t from, int64_t in_c, int64_t out_c, int64_t k,
                 int64_t stride, int64_t pad) {
        Step s;
        s.kind = StepKind::Conv;
        s.input = from;
        s.stride = stride;
        s.pad = pad;
        s.weight = m.add_param(nm + "/weight", conv_init({out_c, in_c, k, k}, rng));
        s.bias = m.add_param(nm + "/bias", Tensor::zeros({1, out_c, 1, 1}));
        return m.add_step(s);
    }

    int64_t convt(const std::string& nm, int64_t from, int64_t in_c, int64_t out_c, int64_t k,
                  int64_t stride, int64_t pad, int64_t match_skip = -1) {
        Step s;
        s.kind = StepKind::ConvT;
        s.input = from;
        s.stride = stride;
        s.pad = pad;
        s.weight = m.add_param(nm + "/weight", convt_init({in_c, out_c, k, k}, rng));
        s.bias = m.add_param(nm + "/bias", Tensor::zeros({1, out_c, 1, 1}));
        if (match_skip >= 0) {
            s.skip = match_skip;
            s.match_skip_hw = true;
        }
        return m.add_step(s);
    }

    int64_t bn(const std::string& nm, int64_t from, int64_t channels) {
        Step s;
        s.kind = StepKind::BatchNorm;
        s.input = from;
        s.gamma = m.add_param(nm + "/gamma", Tensor::full({1, channels, 1, 1}, 1.0f));
        s.beta = m.add_param(nm + "/beta", Tensor::zeros({1, channels, 1, 1}));
        s.run_mean = m.add_param(nm + "/running_mean", Tensor::zeros({1, channels, 1, 1}), false);
        s.run_var = m.add_param(nm + "/running_var", Tensor::full({1, channels, 1, 1}, 1.0f), false);
        return m.add_step(s);
    }

    int64_t act(const std::string& nm, int64_t from, int64_t channels) {
        Step s;
        s.input = from;
        if (use_prelu) {
            s.kind = StepKind::PReLU;
            s.slope = m.add_param(nm + "/prelu", Tensor::full({1, channels, 1, 1}, 0.25f));
        } else {
            s.kind = StepKind::ReLU;
        }
        return m.add_step(s);
    }

    int64_t leaky(int64_t from, float slope) {
        Step s;
        s.kind = StepKind::LeakyReLU;
        s.input = from;
        s.leaky = slope;
        return m.add_step(s);
    }

    int64_t add(int64_t a, int64_t b) {
        Step s;
        s.kind = StepKind::Add;
        s.input = a;
        s.skip = b;
        return m.add_step(s);
    }

    int64_t simple(StepKind kind, int64_t from) {
        Step s;
        s.kind = kind;
        s.input = from;
        return m.add_step(s);
    }

    // conv-BN-act-conv-BN with identity skip (the DPED block convention)
    int64_t residual_block(const std::string& nm, int64_t from, int64_t channels, int64_t k,
                           bool batch_norm_inside) {
        const int64_t pad = (k - 1) / 2;
        int64_t cur = conv(nm + "/conv1", from, channels, channels, k, 1, pad);
        if (batch_norm_inside) cur = bn(nm + "/bn1", cur, channels);
        cur = act(nm + "/act1", cur, channels);
        cur = conv(nm + "/conv2", cur, channels, channels, k, 1, pad);
        if (batch_norm_inside) cur = bn(nm + "/bn2", cur, channels);
        return add(cur, from);
    }
};

} // namespace detail

/// Residual generator (full-resolution baseline) or the strided
/// encoder-decoder. Both end in a global input skip followed by a hard clamp
/// to [0,1], so zeroed weights reproduce the input exactly.
inline Model build_generator(const GeneratorConfig& cfg, Rng& rng) {
    cfg.validate();
    Model m;
    m.name = "gen";
    m.in_channels = 3;
    detail::NetBuilder b{m, rng, cfg.use_prelu};
    const int64_t input = m.add_step(Step{});
    const int64_t k = cfg.kernel, pad = (k - 1) / 2;
    const int64_t c0 = cfg.base_channels;

    if (cfg.variant == GeneratorVariant::Baseline) {
        int64_t cur = b.conv("head", input, 3, c0, k, 1, pad);
        cur = b.act("head/act", cur, c0);
        for (int64_t i = 0; i < cfg.blocks; ++i) {
            cur = b.residual_block("block" + std::to_string(i), cur, c0, k, cfg.block_batch_norm);
        }
        cur = b.conv("tail1", cur, c0, c0, k, 1, pad);
        cur = b.act("tail1/act", cur, c0);
        cur = b.conv("tail2", cur, c0, 3, k, 1, pad);
        cur = b.add(cur, input);
        b.simple(StepKind::Clamp01, cur);
        return m;
    }

    const int64_t sk = cfg.strided_kernel;
    const int64_t spad = (sk - 1) / 2; // halves even H,W for both odd and even kernels
    int64_t head = b.conv("head", input, 3, c0, k, 1, pad);
    head = b.act("head/act", head, c0);
    int64_t down1 = b.conv("down1", head, c0, 2 * c0, sk, 2, spad);
    down1 = b.act("down1/act", down1, 2 * c0);
    int64_t down2 = b.conv("down2", down1, 2 * c0, 4 * c0, sk, 2, spad);
    down2 = b.act("down2/act", down2, 4 * c0);
    int64_t cur = down2;
    for (int64_t i = 0; i < cfg.blocks; ++i) {
        cur = b.residual_block("block" + std::to_string(i), cur, 4 * c0, k, cfg.block_batch_norm);
    }
    int64_t up1 = b.convt("up1", cur, 4 * c0, 2 * c0, sk, 2, spad, down1);
    up1 = b.add(up1, down1); // same-resolution skip, added before the activation
    up1 = b.act("up1/act", up1, 2 * c0);
    int64_t up2 = b.convt("up2", up1, 2 * c0, c0, sk, 2, spad, head);
    up2 = b.add(up2, head);
    up2 = b.act("up2/act", up2, c0);
    int64_t tail = b.conv("tail", up2, c0, 3, k, 1, pad);
    tail = b.add(tail, input);
    b.simple(StepKind::Clamp01, tail);
    return m;
}

/// Grayscale-patch discriminator: strided conv stack, batch norm after the
/// first layer, global average pooling and a logistic head in (0,1).
inline Model build_discriminator(const DiscriminatorConfig& cfg, Rng& rng) {
    cfg.validate();
    Model m;
    m.name = "disc";
    m.in_channels = 1;
    detail::NetBuilder b{m, rng, false};
    const int64_t input = m.add_step(Step{});
    const int64_t k = cfg.kernel, pad = (k - 1) / 2;
    int64_t cur = input;
    int64_t in_c = 1;
    for (size_t i = 0; i < cfg.channels.size(); ++i) {
        const std::string nm = "layer" + std::to_string(i);
        cur = b.conv(nm, cur, in_c, cfg.channels[i], k, cfg.strides[i], pad);
        if (i > 0) cur = b.bn(nm + "/bn", cur, cfg.channels[i]);
        cur = b.leaky(cur, cfg.leaky_slope);
        in_c = cfg.channels[i];
    }
    cur = b.simple(StepKind::SpatialMean, cur);
    cur = b.conv("head", cur, in_c, 1, 1, 1, 0);
    b.simple(StepKind::Sigmoid, cur);
    return m;
}

// ---------------------------------------------------------------------------
// feature extractor (content loss)
// ---------------------------------------------------------------------------

enum class FeatureExtractorKind { TinyFixed, Vgg19Loaded };

/// Frozen CNN whose activations define the content distance. The default is a
/// small fixed-seed network, identical on every install; a VGG-19 prefix can
/// be loaded from a weight file instead.
struct FeatureExtractor {
    FeatureExtractorKind kind = FeatureExtractorKind::TinyFixed;
    std::string layer_tag;
    Model model;
};

inline constexpr uint64_t kTinyFixedSeed = 2018;

/// 3 stages of conv3x3(stride 2) + ReLU, channels 32/64/128, frozen weights
/// drawn from seed 2018. Filters carry full He scale (not the trainable-net
/// 0.02 factor) so the random features keep useful magnitude as a metric.
inline FeatureExtractor make_tiny_fixed_extractor() {
    FeatureExtractor fe;
    fe.kind = FeatureExtractorKind::TinyFixed;
    fe.layer_tag = "stage3";
    Rng rng(kTinyFixedSeed);
    Model& m = fe.model;
    m.name = "fe";
    m.in_channels = 3;
    detail::NetBuilder b{m, rng, false};
    const int64_t input = m.add_step(Step{});
    int64_t cur = b.conv("stage1", input, 3, 32, 3, 2, 1);
    cur = b.simple(StepKind::ReLU, cur);
    cur = b.conv("stage2", cur, 32, 64, 3, 2, 1);
    cur = b.simple(StepKind::ReLU, cur);
    cur = b.conv("stage3", cur, 64, 128, 3, 2, 1);
    b.simple(StepKind::ReLU, cur);
    for (Parameter& p : m.params) {
        p.trainable = false;
        if (p.name.ends_with("/weight")) {
            float* w = p.value.data();
            for (size_t i = 0; i < p.value.size(); ++i) w[i] *= 50.0f; // 1 / 0.02
        }
    }
    return fe;
}

/// Differentiable w.r.t. x only; the extractor weights are permanently frozen.
inline Node* extract_features(Tape& t, FeatureExtractor& fe, Node* x) {
    if (x->value.shape().c != 3) {
        throw std::invalid_argument("extract_features: input must have 3 channels");
    }
    return fe.model.forward(t, x, BatchNormMode::Eval);
}

// ---------------------------------------------------------------------------
// padding helper for arbitrary input sizes
// ---------------------------------------------------------------------------

struct CropSpec {
    int64_t h = 0;
    int64_t w = 0; // original size; padding was bottom/right only
};

/// Reflection-pads H and W up to the next multiple of m (bottom/right); the
/// returned CropSpec inverts it exactly.
inline std::pair<Tensor, CropSpec> pad_to_multiple(const Tensor& x, int64_t m) {
    if (m < 1) throw std::invalid_argument("pad_to_multiple: m must be >= 1");
    const Shape s = x.shape();
    const int64_t nh = (s.h + m - 1) / m * m;
    const int64_t nw = (s.w + m - 1) / m * m;
    CropSpec spec{s.h, s.w};
    if (nh == s.h && nw == s.w) return {x, spec};
    Tensor out({s.n, s.c, nh, nw});
    for (int64_t n = 0; n < s.n; ++n)
        for (int64_t c = 0; c < s.c; ++c)
            for (int64_t h = 0; h < nh; ++h) {
                const int64_t ih = detail::reflect_index(h, s.h);
                for (int64_t w = 0; w < nw; ++w) {
                    out.at(n, c, h, w) = x.at(n, c, ih, detail::reflect_index(w, s.w));
                }
            }
    return {out, spec};
}

inline Tensor crop_to_spec(const Tensor& x, const CropSpec& spec) {
    if (x.shape().h == spec.h && x.shape().w == spec.w) return x;
    return crop(x, 0, 0, spec.h, spec.w);
}

} // namespace fpie
