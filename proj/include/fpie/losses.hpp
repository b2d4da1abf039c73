#pragma once

#include <sstream>
#include <string>

#include "fpie/autodiff.hpp"
#include "fpie/models.hpp"
#include "fpie/ops.hpp"

namespace fpie {

/// Coefficients of the weighted total loss. The defaults are the published
/// ones: content + 0.4*texture + 0.1*color + 400*tv.
struct LossWeights {
    float content = 1.0f;
    float texture = 0.4f;
    float color = 0.1f;
    float tv = 400.0f;
};

struct LossBreakdown {
    float content_raw = 0, texture_raw = 0, color_raw = 0, tv_raw = 0;
    float content_w = 0, texture_w = 0, color_w = 0, tv_w = 0;
    float total = 0;
};

/// One training-log line: tab-separated
/// iter, raw components, weighted components, total, wall_ms.
inline std::string to_log_line(int64_t iter, const LossBreakdown& b, float wall_ms) {
    std::ostringstream os;
    os << iter << '\t' << b.content_raw << '\t' << b.texture_raw << '\t' << b.color_raw << '\t'
       << b.tv_raw << '\t' << b.content_w << '\t' << b.texture_w << '\t' << b.color_w << '\t'
       << b.tv_w << '\t' << b.total << '\t' << wall_ms;
    return os.str();
}

inline constexpr const char* kLogHeader =
    "iter\tcontent\ttexture\tcolor\ttv\tw_content\tw_texture\tw_color\tw_tv\ttotal\twall_ms";

namespace detail {
inline void check_image_pair(const Node* x, const Node* y, const char* who) {
    if (!(x->value.shape() == y->value.shape())) {
        throw std::invalid_argument(std::string(who) + ": shape mismatch " + x->value.shape().str() +
                                    " vs " + y->value.shape().str());
    }
    if (x->value.shape().c != 3) {
        throw std::invalid_argument(std::string(who) + ": inputs must have 3 channels");
    }
}
} // namespace detail

/// Squared L2 distance between Gaussian-blurred images, summed per image and
/// averaged over the batch.
inline Node* color_loss(Tape& t, Node* x, Node* y, const GaussianKernel& k) {
    detail::check_image_pair(x, y, "color_loss");
    Node* d = sub(t, gaussian_blur(t, x, k), gaussian_blur(t, y, k));
    Node* ss = sum(t, mul(t, d, d));
    return affine(t, ss, 1.0f / static_cast<float>(x->value.shape().n), 0.0f);
}

/// Size-normalized distance between two feature maps, || a - b || / (C*H*W)
/// per image, averaged over the batch. Unsquared norm by default; squared
/// variant behind the flag.
inline Node* feature_distance(Tape& t, Node* a, Node* b, bool squared = false) {
    if (!(a->value.shape() == b->value.shape())) {
        throw std::invalid_argument("feature_distance: shape mismatch");
    }
    const Shape s = a->value.shape();
    const float norm = 1.0f / static_cast<float>(s.c * s.h * s.w);
    Node* d = sub(t, a, b);
    Node* ss = sum_per_image(t, mul(t, d, d));
    Node* per_image = squared ? ss : sqrt_op(t, ss);
    return affine(t, mean(t, per_image), norm, 0.0f);
}

inline Node* content_loss(Tape& t, FeatureExtractor& fe, Node* enhanced, Node* target,
                          bool squared = false) {
    detail::check_image_pair(enhanced, target, "content_loss");
    Node* fa = extract_features(t, fe, enhanced);
    Node* fb = extract_features(t, fe, target);
    return feature_distance(t, fa, fb, squared);
}

inline constexpr float kProbEps = 1e-7f;

/// -mean log D(gray(enhanced)); D outputs are clamped to [eps, 1-eps].
inline Node* texture_loss_generator(Tape& t, Model& discriminator, Node* enhanced,
                                    BatchNormMode bn_mode = BatchNormMode::Train) {
    if (enhanced->value.shape().c != 3) {
        throw std::invalid_argument("texture_loss_generator: input must have 3 channels");
    }
    Node* p = discriminator.forward(t, grayscale(t, enhanced), bn_mode);
    Node* pc = clamp(t, p, kProbEps, 1.0f - kProbEps);
    return affine(t, mean(t, log_op(t, pc)), -1.0f, 0.0f);
}

/// Binary cross-entropy for the discriminator: real -> 1, fake -> 0.
inline Node* texture_loss_discriminator(Tape& t, Model& discriminator, Node* real, Node* fake,
                                        BatchNormMode bn_mode = BatchNormMode::Train) {
    detail::check_image_pair(real, fake, "texture_loss_discriminator");
    Node* pr = clamp(t, discriminator.forward(t, grayscale(t, real), bn_mode), kProbEps, 1.0f - kProbEps);
    Node* pf = clamp(t, discriminator.forward(t, grayscale(t, fake), bn_mode), kProbEps, 1.0f - kProbEps);
    Node* real_term = affine(t, mean(t, log_op(t, pr)), -1.0f, 0.0f);
    Node* fake_term = affine(t, mean(t, log_op(t, affine(t, pf, -1.0f, 1.0f))), -1.0f, 0.0f);
    return add(t, real_term, fake_term);
}

/// Total-variation penalty: squared L2 of the horizontal plus vertical
/// forward-difference fields, normalized by C*H*W, batch mean. The literal
/// flag instead takes the plain L2 norm of the elementwise sum of the two
/// fields on their common support (that reading lets opposing gradients
/// cancel, hence the default).
inline Node* tv_loss(Tape& t, Node* x, bool literal = false) {
    const Shape s = x->value.shape();
    const float norm = 1.0f / static_cast<float>(s.c * s.h * s.w);
    Node* dx = diff_x(t, x);
    Node* dy = diff_y(t, x);
    if (literal) {
        Node* cx = crop_to(t, dx, s.h - 1, s.w - 1);
        Node* cy = crop_to(t, dy, s.h - 1, s.w - 1);
        Node* g = add(t, cx, cy);
        Node* n2 = sqrt_op(t, sum_per_image(t, mul(t, g, g)));
        return affine(t, mean(t, n2), norm, 0.0f);
    }
    Node* sx = sum_per_image(t, mul(t, dx, dx));
    Node* sy = sum_per_image(t, mul(t, dy, dy));
    return affine(t, mean(t, add(t, sx, sy)), norm, 0.0f);
}

/// Weighted sum of the four scalar parts; also reports the raw/weighted
/// breakdown for the training log.
inline std::pair<Node*, LossBreakdown> total_loss(Tape& t, Node* content, Node* texture, Node* color,
                                                  Node* tv, const LossWeights& w) {
    for (Node* part : {content, texture, color, tv}) {
        if (part->value.shape().numel() != 1) {
            throw std::invalid_argument("total_loss: parts must be scalars");
        }
    }
    Node* total = affine(t, content, w.content, 0.0f);
    total = add(t, total, affine(t, texture, w.texture, 0.0f));
    total = add(t, total, affine(t, color, w.color, 0.0f));
    total = add(t, total, affine(t, tv, w.tv, 0.0f));
    LossBreakdown b;
    b.content_raw = content->value.data()[0];
    b.texture_raw = texture->value.data()[0];
    b.color_raw = color->value.data()[0];
    b.tv_raw = tv->value.data()[0];
    b.content_w = w.content * b.content_raw;
    b.texture_w = w.texture * b.texture_raw;
    b.color_w = w.color * b.color_raw;
    b.tv_w = w.tv * b.tv_raw;
    b.total = total->value.data()[0];
    return {total, b};
}

} // namespace fpie
