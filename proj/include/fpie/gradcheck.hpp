#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "fpie/losses.hpp"
#include "fpie/models.hpp"
#include "fpie/ops.hpp"

namespace fpie {

/// Central-difference gradient verification for every differentiable op and
/// loss. The oracle side is plain re-evaluation of the forward pass at
/// x +- eps; it never touches the backward implementations it judges.

struct GradCheckInput {
    Shape shape;
    float mean = 0.0f;
    float stddev = 1.0f;
    float min_value = -1e30f;          // clamp after generation (positive-only inputs)
    std::vector<float> kinks;          // values the op is non-smooth at; inputs are nudged away
};

struct GradCheckCase {
    std::string name;
    std::vector<GradCheckInput> inputs;
    std::function<Node*(Tape&, const std::vector<Node*>&)> build; // scalar loss from leaves
    std::function<void(std::vector<Tensor>&)> prepare;            // optional input fix-up
};

struct GradCheckOptions {
    uint64_t seed = 2018;
    double epsilon = 1e-3;
    double tolerance = 1e-3;
    std::string corrupt; // test fixture: perturb this case's autodiff gradient
};

struct GradCheckResult {
    std::string name;
    double max_rel_err = 0.0;
    bool pass = false;
    size_t checked = 0;
    size_t skipped = 0; // entries whose central difference is not in its linear regime
};

namespace detail {

inline uint64_t fnv_hash(const std::string& s) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::vector<Tensor> gradcheck_inputs(const GradCheckCase& c, Rng& rng, double eps) {
    std::vector<Tensor> out;
    const float margin = static_cast<float>(3.0 * eps);
    for (const GradCheckInput& spec : c.inputs) {
        Tensor t = random_normal(spec.shape, spec.mean, spec.stddev, rng);
        float* p = t.data();
        for (size_t i = 0; i < t.size(); ++i) {
            if (p[i] < spec.min_value) p[i] = 2.0f * spec.min_value - p[i];
            for (float kink : spec.kinks) {
                if (std::fabs(p[i] - kink) < margin) {
                    p[i] = kink + (p[i] >= kink ? margin : -margin);
                }
            }
        }
        out.push_back(std::move(t));
    }
    if (c.prepare) {
        c.prepare(out);
    }
    return out;
}

inline double gradcheck_eval(const GradCheckCase& c, const std::vector<Tensor>& inputs) {
    Tape t(false);
    std::vector<Node*> leaves;
    leaves.reserve(inputs.size());
    for (const Tensor& in : inputs) leaves.push_back(t.leaf(in, false));
    Node* loss = c.build(t, leaves);
    if (loss->value.shape().numel() != 1) {
        throw std::logic_error("gradcheck: case '" + c.name + "' did not produce a scalar");
    }
    return static_cast<double>(loss->value.data()[0]);
}

} // namespace detail

inline GradCheckResult run_gradcheck_case(const GradCheckCase& c, const GradCheckOptions& opts,
                                          uint64_t seed_offset = 0) {
    Rng rng = Rng(opts.seed).fork(detail::fnv_hash(c.name) + seed_offset);
    std::vector<Tensor> inputs = detail::gradcheck_inputs(c, rng, opts.epsilon);

    // autodiff gradients at the base point
    std::vector<Tensor> ad;
    {
        Tape t(true);
        std::vector<Node*> leaves;
        for (const Tensor& in : inputs) leaves.push_back(t.leaf(in, true));
        Node* loss = c.build(t, leaves);
        t.backward(loss);
        for (Node* leaf : leaves) {
            ad.push_back(leaf->grad.empty() ? Tensor::zeros(leaf->value.shape()) : leaf->grad.clone());
        }
    }
    if (opts.corrupt == c.name && !ad.empty() && ad[0].size() > 0) {
        ad[0].data()[0] += 0.5f * std::max(1.0f, std::fabs(ad[0].data()[0]));
    }

    GradCheckResult res{c.name, 0.0, false};
    const double eps = opts.epsilon;
    // central difference at the element's actually-applied f32 perturbation
    auto central = [&](size_t ti, size_t i, double e) {
        const float orig = inputs[ti].data()[i];
        const float xp = orig + static_cast<float>(e);
        const float xm = orig - static_cast<float>(e);
        inputs[ti].data()[i] = xp;
        const double fp = detail::gradcheck_eval(c, inputs);
        inputs[ti].data()[i] = xm;
        const double fm = detail::gradcheck_eval(c, inputs);
        inputs[ti].data()[i] = orig;
        return (fp - fm) / (static_cast<double>(xp) - static_cast<double>(xm));
    };
    for (size_t ti = 0; ti < inputs.size(); ++ti) {
        const size_t numel = inputs[ti].size();
        std::vector<double> fd1(numel), fd2(numel);
        double scale = 0.0;
        for (size_t i = 0; i < numel; ++i) {
            fd1[i] = central(ti, i, eps);
            fd2[i] = central(ti, i, eps / 2.0);
            scale = std::max({scale, std::fabs(fd1[i]),
                              std::fabs(static_cast<double>(ad[ti].data()[i]))});
        }
        const double denom = std::max(scale, 1e-8);
        for (size_t i = 0; i < numel; ++i) {
            // where the two step sizes disagree, a non-smooth branch flipped
            // inside the stencil; such entries carry no usable FD signal
            if (std::fabs(fd1[i] - fd2[i]) / denom > 0.5 * opts.tolerance) {
                ++res.skipped;
                continue;
            }
            ++res.checked;
            const double rel = std::fabs(fd1[i] - static_cast<double>(ad[ti].data()[i])) / denom;
            res.max_rel_err = std::max(res.max_rel_err, rel);
        }
    }
    res.pass = res.max_rel_err < opts.tolerance && res.checked > 0;
    return res;
}

/// Every differentiable op plus every loss, on small random tensors. One
/// entry per public surface; composites at the end.
inline std::vector<GradCheckCase> default_gradcheck_suite() {
    std::vector<GradCheckCase> cases;
    auto simple = [&](std::string name, std::vector<GradCheckInput> ins,
                      std::function<Node*(Tape&, const std::vector<Node*>&)> build) {
        cases.push_back({std::move(name), std::move(ins), std::move(build), nullptr});
    };
    const Shape img{1, 3, 8, 8};
    const Shape small{1, 4, 8, 8};

    // elementwise sign-probe losses: mean(y * signs) with frozen +-1 signs
    auto sign_loss = [](Tape& t, Node* y, uint64_t salt) {
        Rng r(0xABCD0000ull + salt);
        Tensor s(y->value.shape());
        for (size_t i = 0; i < s.size(); ++i) s.data()[i] = r.uniform() < 0.5 ? -1.0f : 1.0f;
        return mean(t, mul(t, y, t.leaf(s, false)));
    };

    simple("add", {{small, 0.0f, 0.5f}, {small, 0.0f, 0.5f}},
           [=](Tape& t, const std::vector<Node*>& in) {
               return sign_loss(t, add(t, in[0], in[1]), 1);
           });
    simple("sub", {{small, 0.0f, 0.5f}, {small, 0.0f, 0.5f}},
           [=](Tape& t, const std::vector<Node*>& in) {
               return sign_loss(t, sub(t, in[0], in[1]), 2);
           });
    simple("mul", {{small, 0.0f, 0.5f}, {small, 0.0f, 0.5f}},
           [=](Tape& t, const std::vector<Node*>& in) {
               return sign_loss(t, mul(t, in[0], in[1]), 3);
           });
    simple("affine", {{small, 0.0f, 0.5f}}, [=](Tape& t, const std::vector<Node*>& in) {
        return sign_loss(t, affine(t, in[0], 1.7f, -0.3f), 4);
    });
    simple("sigmoid", {{small}}, [=](Tape& t, const std::vector<Node*>& in) {
        return sign_loss(t, sigmoid(t, in[0]), 5);
    });
    simple("log", {{small, 1.0f, 0.3f, 0.2f}}, [=](Tape& t, const std::vector<Node*>& in) {
        return sign_loss(t, log_op(t, in[0]), 6);
    });
    simple("sqrt", {{small, 1.0f, 0.3f, 0.2f}}, [=](Tape& t, const std::vector<Node*>& in) {
        return sign_loss(t, sqrt_op(t, in[0]), 7);
    });
    simple("clamp", {{small, 0.5f, 0.6f, -1e30f, {0.0f, 1.0f}}},
           [=](Tape& t, const std::vector<Node*>& in) {
               return sign_loss(t, clamp(t, in[0], 0.0f, 1.0f), 8);
           });
    simple("relu", {{small, 0.0f, 1.0f, -1e30f, {0.0f}}}, [=](Tape& t, const std::vector<Node*>& in) {
        return sign_loss(t, relu(t, in[0]), 9);
    });
    simple("leaky_relu", {{small, 0.0f, 1.0f, -1e30f, {0.0f}}},
           [=](Tape& t, const std::vector<Node*>& in) {
               return sign_loss(t, leaky_relu(t, in[0], 0.2f), 10);
           });
    simple("prelu", {{small, 0.0f, 1.0f, -1e30f, {0.0f}}, {{1, 4, 1, 1}, 0.25f, 0.1f}},
           [=](Tape& t, const std::vector<Node*>& in) {
               return sign_loss(t, prelu(t, in[0], in[1]), 11);
           });

    // convolutions: input, weight, bias all checked
    simple("conv2d_s1", {{{1, 2, 6, 6}}, {{3, 2, 3, 3}, 0.0f, 0.5f}, {{1, 3, 1, 1}, 0.0f, 0.5f}},
           [=](Tape& t, const std::vector<Node*>& in) {
               return sign_loss(t, conv2d(t, in[0], in[1], in[2], 1, 1), 12);
           });
    simple("conv2d_s2", {{{1, 2, 6, 6}}, {{3, 2, 4, 4}, 0.0f, 0.5f}, {{1, 3, 1, 1}, 0.0f, 0.5f}},
           [=](Tape& t, const std::vector<Node*>& in) {
               return sign_loss(t, conv2d(t, in[0], in[1], in[2], 2, 1), 13);
           });
    simple("conv2d_transpose_k4",
           {{{1, 3, 5, 5}}, {{3, 2, 4, 4}, 0.0f, 0.5f}, {{1, 2, 1, 1}, 0.0f, 0.5f}},
           [=](Tape& t, const std::vector<Node*>& in) {
               return sign_loss(t, conv2d_transpose(t, in[0], in[1], in[2], 2, 1), 14);
           });
    simple("conv2d_transpose_k3",
           {{{1, 3, 5, 5}}, {{3, 2, 3, 3}, 0.0f, 0.5f}, {{1, 2, 1, 1}, 0.0f, 0.5f}},
           [=](Tape& t, const std::vector<Node*>& in) {
               return sign_loss(t, conv2d_transpose(t, in[0], in[1], in[2], 2, 1), 15);
           });

    // batch norm, both modes
    for (int train = 0; train <= 1; ++train) {
        auto state = std::make_shared<BatchNormState>(4);
        if (!train) {
            Rng r(99);
            state->running_mean = random_normal({1, 4, 1, 1}, 0.0f, 0.3f, r);
            state->running_var = random_normal({1, 4, 1, 1}, 1.0f, 0.1f, r);
        }
        simple(train ? "batch_norm_train" : "batch_norm_eval",
               {{small}, {{1, 4, 1, 1}, 1.0f, 0.2f}, {{1, 4, 1, 1}, 0.0f, 0.2f}},
               [=](Tape& t, const std::vector<Node*>& in) {
                   return sign_loss(t,
                                    batch_norm(t, in[0], in[1], in[2], *state,
                                               train ? BatchNormMode::Train : BatchNormMode::Eval),
                                    16 + train);
               });
    }

    {
        const GaussianKernel k = build_gaussian_kernel(0.053f, 0.0f, 3.0f, 10);
        simple("gaussian_blur", {{img, 0.5f, 0.3f}}, [=](Tape& t, const std::vector<Node*>& in) {
            return sign_loss(t, gaussian_blur(t, in[0], k), 18);
        });
    }
    simple("grayscale", {{img, 0.5f, 0.3f}}, [=](Tape& t, const std::vector<Node*>& in) {
        return sign_loss(t, grayscale(t, in[0]), 19);
    });
    simple("spatial_mean", {{small}}, [=](Tape& t, const std::vector<Node*>& in) {
        return sign_loss(t, spatial_mean(t, in[0]), 20);
    });
    simple("sum", {{small}}, [](Tape& t, const std::vector<Node*>& in) {
        return affine(t, sum(t, in[0]), 0.05f, 0.0f);
    });
    simple("mean", {{small}}, [](Tape& t, const std::vector<Node*>& in) { return mean(t, in[0]); });
    simple("sum_per_image", {{{2, 3, 6, 6}}}, [=](Tape& t, const std::vector<Node*>& in) {
        return sign_loss(t, sum_per_image(t, affine(t, in[0], 0.05f, 0.0f)), 21);
    });
    simple("diff_x", {{small}}, [=](Tape& t, const std::vector<Node*>& in) {
        return sign_loss(t, diff_x(t, in[0]), 22);
    });
    simple("diff_y", {{small}}, [=](Tape& t, const std::vector<Node*>& in) {
        return sign_loss(t, diff_y(t, in[0]), 23);
    });
    simple("crop_to", {{small}}, [=](Tape& t, const std::vector<Node*>& in) {
        return sign_loss(t, crop_to(t, in[0], 6, 5), 24);
    });

    // max pool needs a safety gap between the top two of every 2x2 window
    {
        GradCheckCase c;
        c.name = "max_pool2";
        c.inputs = {{small}};
        c.prepare = [](std::vector<Tensor>& ins) {
            Tensor& t = ins[0];
            const Shape s = t.shape();
            for (int64_t b = 0; b < s.n * s.c; ++b) {
                float* p = t.data() + b * s.h * s.w;
                for (int64_t i = 0; i + 1 < s.h; i += 2)
                    for (int64_t j = 0; j + 1 < s.w; j += 2) {
                        int64_t idx[4] = {i * s.w + j, i * s.w + j + 1, (i + 1) * s.w + j,
                                          (i + 1) * s.w + j + 1};
                        int64_t best = idx[0];
                        for (int64_t k : idx)
                            if (p[k] > p[best]) best = k;
                        float second = -1e30f;
                        for (int64_t k : idx)
                            if (k != best) second = std::max(second, p[k]);
                        if (p[best] - second < 0.02f) p[best] += 0.03f;
                    }
            }
        };
        auto sl = [](Tape& t, Node* y) {
            Rng r(0xABCD0019ull);
            Tensor s(y->value.shape());
            for (size_t i = 0; i < s.size(); ++i) s.data()[i] = r.uniform() < 0.5 ? -1.0f : 1.0f;
            return mean(t, mul(t, y, t.leaf(s, false)));
        };
        c.build = [sl](Tape& t, const std::vector<Node*>& in) { return sl(t, max_pool2(t, in[0])); };
        cases.push_back(std::move(c));
    }

    // losses
    {
        const GaussianKernel k = build_gaussian_kernel(0.053f, 0.0f, 3.0f, 10);
        simple("color_loss", {{img, 0.5f, 0.25f}, {img, 0.4f, 0.25f}},
               [=](Tape& t, const std::vector<Node*>& in) { return color_loss(t, in[0], in[1], k); });
    }
    {
        auto fe = std::make_shared<FeatureExtractor>(make_tiny_fixed_extractor());
        simple("content_loss", {{img, 0.5f, 0.25f}, {img, 0.4f, 0.25f}},
               [=](Tape& t, const std::vector<Node*>& in) {
                   return content_loss(t, *fe, in[0], in[1], false);
               });
        simple("content_loss_squared", {{img, 0.5f, 0.25f}, {img, 0.4f, 0.25f}},
               [=](Tape& t, const std::vector<Node*>& in) {
                   return content_loss(t, *fe, in[0], in[1], true);
               });
    }
    // fixture discriminator with full-scale weights, so the loss actually
    // responds to the inputs at finite-difference resolution
    auto make_fixture_disc = [](uint64_t seed) {
        DiscriminatorConfig dc;
        dc.channels = {8, 16};
        dc.strides = {2, 2};
        dc.kernel = 3;
        Rng r(seed);
        auto disc = std::make_shared<Model>(build_discriminator(dc, r));
        for (Parameter& p : disc->params) {
            if (p.name.ends_with("/weight")) {
                float* w = p.value.data();
                for (size_t i = 0; i < p.value.size(); ++i) w[i] *= 50.0f;
            }
        }
        return disc;
    };
    {
        auto disc = make_fixture_disc(5);
        simple("texture_loss_generator", {{img, 0.5f, 0.25f}},
               [=](Tape& t, const std::vector<Node*>& in) {
                   return texture_loss_generator(t, *disc, in[0]);
               });
        simple("texture_loss_discriminator", {{img, 0.5f, 0.25f}, {img, 0.4f, 0.25f}},
               [=](Tape& t, const std::vector<Node*>& in) {
                   return texture_loss_discriminator(t, *disc, in[0], in[1]);
               });
    }
    simple("tv_loss", {{img, 0.5f, 0.25f}}, [](Tape& t, const std::vector<Node*>& in) {
        return tv_loss(t, in[0], false);
    });
    simple("tv_loss_literal", {{img, 0.5f, 0.25f}}, [](Tape& t, const std::vector<Node*>& in) {
        return tv_loss(t, in[0], true);
    });
    {
        const GaussianKernel k = build_gaussian_kernel(0.053f, 0.0f, 3.0f, 10);
        auto fe = std::make_shared<FeatureExtractor>(make_tiny_fixed_extractor());
        auto disc = make_fixture_disc(6);
        simple("total_loss_pipeline", {{img, 0.5f, 0.25f}, {img, 0.4f, 0.25f}},
               [=](Tape& t, const std::vector<Node*>& in) {
                   Node* content = content_loss(t, *fe, in[0], in[1]);
                   Node* texture = texture_loss_generator(t, *disc, in[0]);
                   Node* color = color_loss(t, in[0], in[1], k);
                   Node* tv = tv_loss(t, in[0]);
                   return total_loss(t, content, texture, color, tv, LossWeights{}).first;
               });
    }

    // a composite of several ops, the autodiff module's own contract
    simple("autodiff_composite", {{{1, 2, 6, 6}}, {{2, 2, 3, 3}, 0.0f, 0.5f}},
           [=](Tape& t, const std::vector<Node*>& in) {
               Node* c = conv2d(t, in[0], in[1], nullptr, 1, 1);
               Node* a = sigmoid(t, c);
               Node* b = mul(t, a, c);
               return mean(t, add(t, b, relu(t, in[0])));
           });

    return cases;
}

/// Runs the whole suite; with n_seeds > 1 every case is repeated on shifted
/// seeds and the worst error is reported.
inline std::vector<GradCheckResult> run_gradcheck(const std::vector<GradCheckCase>& cases,
                                                  const GradCheckOptions& opts, int n_seeds = 1) {
    std::vector<GradCheckResult> out;
    for (const GradCheckCase& c : cases) {
        GradCheckResult worst{c.name, 0.0, true};
        for (int s = 0; s < n_seeds; ++s) {
            GradCheckResult r = run_gradcheck_case(c, opts, static_cast<uint64_t>(s) * 7919);
            if (r.max_rel_err > worst.max_rel_err) worst.max_rel_err = r.max_rel_err;
            worst.pass = worst.pass && r.pass;
        }
        out.push_back(worst);
    }
    return out;
}

} // namespace fpie
