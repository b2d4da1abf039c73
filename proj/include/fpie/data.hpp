#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "fpie/image_io.hpp"
#include "fpie/kernels.hpp"
#include "fpie/ops.hpp"
#include "fpie/tensor.hpp"

namespace fpie {

/// An aligned phone/DSLR training pair, both (1,3,H,W) in [0,1].
struct PatchPair {
    Tensor phone;
    Tensor dslr;
    std::string id;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Loads matched PNG pairs from <root>/<split>/phone and <root>/<split>/dslr.
/// Enumeration is lexicographic by basename; an unmatched or inconsistent
/// pair is an error naming the offending id.
inline std::vector<PatchPair> load_pairs(const std::string& root, const std::string& split) {
    namespace fs = std::filesystem;
    const fs::path phone_dir = fs::path(root) / split / "phone";
    const fs::path dslr_dir = fs::path(root) / split / "dslr";
    for (const fs::path& d : {phone_dir, dslr_dir}) {
        if (!fs::is_directory(d)) throw DataError("dataset: missing directory " + d.string());
    }
    auto list_ids = [](const fs::path& dir) {
        std::vector<std::string> ids;
        for (const auto& e : fs::directory_iterator(dir)) {
            if (e.is_regular_file() && e.path().extension() == ".png") {
                ids.push_back(e.path().stem().string());
            }
        }
        std::sort(ids.begin(), ids.end());
        return ids;
    };
    const std::vector<std::string> phone_ids = list_ids(phone_dir);
    const std::vector<std::string> dslr_ids = list_ids(dslr_dir);
    for (const std::string& id : phone_ids) {
        if (!std::binary_search(dslr_ids.begin(), dslr_ids.end(), id)) {
            throw DataError("dataset: phone patch '" + id + "' has no dslr counterpart");
        }
    }
    for (const std::string& id : dslr_ids) {
        if (!std::binary_search(phone_ids.begin(), phone_ids.end(), id)) {
            throw DataError("dataset: dslr patch '" + id + "' has no phone counterpart");
        }
    }
    std::vector<PatchPair> pairs;
    pairs.reserve(phone_ids.size());
    for (const std::string& id : phone_ids) {
        PatchPair p;
        p.id = id;
        p.phone = read_png((phone_dir / (id + ".png")).string());
        p.dslr = read_png((dslr_dir / (id + ".png")).string());
        if (!(p.phone.shape() == p.dslr.shape())) {
            throw DataError("dataset: pair '" + id + "' sides have different sizes: " +
                            p.phone.shape().str() + " vs " + p.dslr.shape().str());
        }
        pairs.push_back(std::move(p));
    }
    return pairs;
}

/// Synthetic phone-side degradation: Gaussian blur, desaturation toward luma,
/// additive Gaussian noise, clamped to [0,1]. Deterministic per seed.
struct DegradeSpec {
    float blur_sigma = 1.0f;
    float saturation_scale = 0.7f; // in (0,1]
    float noise_sigma = 0.02f;
    uint64_t seed = 0;
};

namespace detail {
inline std::vector<float> gaussian_profile_2d(float sigma, int64_t radius) {
    const int64_t d = 2 * radius + 1;
    std::vector<float> k(static_cast<size_t>(d * d));
    double sum = 0.0;
    for (int64_t i = -radius; i <= radius; ++i)
        for (int64_t j = -radius; j <= radius; ++j) {
            const double g = std::exp(-(i * i + j * j) / (2.0 * sigma * sigma));
            k[(i + radius) * d + (j + radius)] = static_cast<float>(g);
            sum += g;
        }
    for (float& v : k) v = static_cast<float>(v / sum);
    return k;
}
} // namespace detail

inline PatchPair degrade(const Tensor& img, const DegradeSpec& spec) {
    const Shape s = img.shape();
    if (s.c != 3) throw DataError("degrade: input must have 3 channels");
    Tensor phone = img;
    if (spec.blur_sigma > 0.0f) {
        const int64_t radius = std::max<int64_t>(1, static_cast<int64_t>(std::ceil(3.0f * spec.blur_sigma)));
        phone = correlate_depthwise_reflect(phone, detail::gaussian_profile_2d(spec.blur_sigma, radius), radius);
    }
    if (spec.saturation_scale < 1.0f) {
        Tensor out(s);
        const int64_t plane = s.h * s.w;
        for (int64_t n = 0; n < s.n; ++n) {
            const float* r = phone.data() + (n * 3 + 0) * plane;
            const float* g = phone.data() + (n * 3 + 1) * plane;
            const float* b = phone.data() + (n * 3 + 2) * plane;
            for (int64_t i = 0; i < plane; ++i) {
                const float luma = kLumaR * r[i] + kLumaG * g[i] + kLumaB * b[i];
                out.data()[(n * 3 + 0) * plane + i] = luma + spec.saturation_scale * (r[i] - luma);
                out.data()[(n * 3 + 1) * plane + i] = luma + spec.saturation_scale * (g[i] - luma);
                out.data()[(n * 3 + 2) * plane + i] = luma + spec.saturation_scale * (b[i] - luma);
            }
        }
        phone = out;
    }
    Tensor result = phone.clone();
    if (spec.noise_sigma > 0.0f) {
        Rng rng(spec.seed);
        float* p = result.data();
        for (size_t i = 0; i < result.size(); ++i) {
            p[i] += spec.noise_sigma * static_cast<float>(rng.normal());
        }
    }
    float* p = result.data();
    for (size_t i = 0; i < result.size(); ++i) p[i] = std::clamp(p[i], 0.0f, 1.0f);
    return {result, img, ""};
}

/// Uniform sampling with replacement; the batch sequence is a pure function
/// of the rng seed.
class BatchSampler {
public:
    BatchSampler(const std::vector<PatchPair>& pairs, int64_t batch_size, Rng rng)
        : pairs_(&pairs), batch_size_(batch_size), rng_(rng) {
        if (pairs.empty()) throw DataError("batch: empty dataset");
        if (batch_size < 1) throw DataError("batch: size must be >= 1");
        for (const PatchPair& p : pairs) {
            if (!(p.phone.shape() == pairs.front().phone.shape())) {
                throw DataError("batch: all pairs must share one patch size");
            }
        }
    }

    struct Batch {
        Tensor phone;
        Tensor dslr;
        std::vector<std::string> ids;
    };

    Batch next() {
        const Shape one = (*pairs_)[0].phone.shape();
        const Shape bs{batch_size_, one.c, one.h, one.w};
        Batch b{Tensor(bs), Tensor(bs), {}};
        const int64_t stride = one.c * one.h * one.w;
        for (int64_t i = 0; i < batch_size_; ++i) {
            const auto idx = static_cast<size_t>(rng_.uniform_below(pairs_->size()));
            const PatchPair& p = (*pairs_)[idx];
            std::copy(p.phone.data(), p.phone.data() + stride, b.phone.data() + i * stride);
            std::copy(p.dslr.data(), p.dslr.data() + stride, b.dslr.data() + i * stride);
            b.ids.push_back(p.id.empty() ? std::to_string(idx) : p.id);
        }
        return b;
    }

private:
    const std::vector<PatchPair>* pairs_;
    int64_t batch_size_;
    Rng rng_;
};

/// Smooth random test content: colored gradient base plus a few soft blobs.
/// Values in [0,1]; deterministic per rng stream.
inline Tensor synth_clean_image(int64_t h, int64_t w, Rng& rng) {
    Tensor img({1, 3, h, w});
    for (int64_t c = 0; c < 3; ++c) {
        const float bias = 0.25f + 0.5f * static_cast<float>(rng.uniform());
        const float gx = 0.4f * static_cast<float>(rng.uniform() - 0.5);
        const float gy = 0.4f * static_cast<float>(rng.uniform() - 0.5);
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x)
                img.at(0, c, y, x) = bias + gx * (static_cast<float>(x) / w - 0.5f) +
                                     gy * (static_cast<float>(y) / h - 0.5f);
    }
    const int blobs = 4 + static_cast<int>(rng.uniform_below(4));
    for (int bidx = 0; bidx < blobs; ++bidx) {
        const float cx = static_cast<float>(rng.uniform()) * w;
        const float cy = static_cast<float>(rng.uniform()) * h;
        const float rad = (0.08f + 0.17f * static_cast<float>(rng.uniform())) * std::min(h, w);
        float amp[3];
        for (float& a : amp) a = 0.9f * static_cast<float>(rng.uniform() - 0.5);
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x) {
                const float dx = (x - cx) / rad, dy = (y - cy) / rad;
                const float fall = std::exp(-(dx * dx + dy * dy));
                for (int64_t c = 0; c < 3; ++c) img.at(0, c, y, x) += amp[c] * fall;
            }
    }
    float* p = img.data();
    for (size_t i = 0; i < img.size(); ++i) p[i] = std::clamp(p[i], 0.0f, 1.0f);
    return img;
}

/// count degraded pairs of size hw x hw; pair ids are zero-padded indices.
inline std::vector<PatchPair> make_synthetic_pairs(int64_t count, int64_t hw, const DegradeSpec& spec,
                                                   uint64_t seed) {
    std::vector<PatchPair> pairs;
    pairs.reserve(count);
    Rng root(seed);
    for (int64_t i = 0; i < count; ++i) {
        Rng img_rng = root.fork(static_cast<uint64_t>(i) + 1);
        Tensor clean = synth_clean_image(hw, hw, img_rng);
        DegradeSpec per = spec;
        per.seed = detail::splitmix64(seed ^ (0x5151ull + static_cast<uint64_t>(i)));
        PatchPair p = degrade(clean, per);
        char buf[16];
        std::snprintf(buf, sizeof(buf), "%05lld", static_cast<long long>(i));
        p.id = buf;
        pairs.push_back(std::move(p));
    }
    return pairs;
}

} // namespace fpie
