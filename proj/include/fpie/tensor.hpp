#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace fpie {

/// Shape of a dense 4-D tensor in (batch, channel, height, width) order.
struct Shape {
    int64_t n = 0;
    int64_t c = 0;
    int64_t h = 0;
    int64_t w = 0;

    bool operator==(const Shape&) const = default;

    bool valid() const { return n >= 1 && c >= 1 && h >= 1 && w >= 1; }

    /// Element count. Throws on zero/negative dims or product overflow.
    int64_t numel() const {
        if (!valid()) {
            throw std::invalid_argument("Shape: all dimensions must be >= 1, got " + str());
        }
        __int128 p = static_cast<__int128>(n) * c * h * w;
        if (p > std::numeric_limits<int64_t>::max() / static_cast<int64_t>(sizeof(float))) {
            throw std::invalid_argument("Shape: dimension product overflows: " + str());
        }
        return static_cast<int64_t>(p);
    }

    std::string str() const {
        return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
               std::to_string(h) + "," + std::to_string(w) + ")";
    }
};

/// Dense 4-D f32 tensor, row-major (n,c,h,w).
///
/// The element buffer is shared between copies and treated as immutable once a
/// tensor has been handed out; mutation through data() is reserved for the
/// single owner that is still filling it (construction, gradient buffers).
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape s) : shape_(s), data_(std::make_shared<std::vector<float>>(s.numel(), 0.0f)) {}

    Tensor(Shape s, std::vector<float> v) : shape_(s), data_(std::make_shared<std::vector<float>>(std::move(v))) {
        if (static_cast<int64_t>(data_->size()) != shape_.numel()) {
            throw std::invalid_argument("Tensor: data length " + std::to_string(data_->size()) +
                                        " does not match shape " + shape_.str());
        }
    }

    static Tensor zeros(Shape s) { return Tensor(s); }

    static Tensor full(Shape s, float v) {
        Tensor t(s);
        std::fill(t.data(), t.data() + t.size(), v);
        return t;
    }

    const Shape& shape() const { return shape_; }
    bool empty() const { return !data_; }
    size_t size() const { return data_ ? data_->size() : 0; }

    float* data() { return data_->data(); }
    const float* data() const { return data_->data(); }

    float& at(int64_t n, int64_t c, int64_t h, int64_t w) { return (*data_)[flat(n, c, h, w)]; }
    float at(int64_t n, int64_t c, int64_t h, int64_t w) const { return (*data_)[flat(n, c, h, w)]; }

    int64_t flat(int64_t n, int64_t c, int64_t h, int64_t w) const {
        return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
    }

    /// Deep copy with a fresh buffer.
    Tensor clone() const {
        Tensor t(shape_);
        std::copy(data(), data() + size(), t.data());
        return t;
    }

    void fill(float v) { std::fill(data(), data() + size(), v); }

private:
    Shape shape_{};
    std::shared_ptr<std::vector<float>> data_;
};

enum class BinaryOp { Add, Sub, Mul };

/// Elementwise add/sub/mul of two same-shape tensors.
inline Tensor map_binary(const Tensor& a, const Tensor& b, BinaryOp op) {
    if (!(a.shape() == b.shape())) {
        throw std::invalid_argument("map_binary: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
    }
    Tensor out(a.shape());
    const float* pa = a.data();
    const float* pb = b.data();
    float* po = out.data();
    const size_t m = a.size();
    switch (op) {
        case BinaryOp::Add:
            for (size_t i = 0; i < m; ++i) po[i] = pa[i] + pb[i];
            break;
        case BinaryOp::Sub:
            for (size_t i = 0; i < m; ++i) po[i] = pa[i] - pb[i];
            break;
        case BinaryOp::Mul:
            for (size_t i = 0; i < m; ++i) po[i] = pa[i] * pb[i];
            break;
    }
    return out;
}

inline Tensor add(const Tensor& a, const Tensor& b) { return map_binary(a, b, BinaryOp::Add); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return map_binary(a, b, BinaryOp::Sub); }
inline Tensor mul(const Tensor& a, const Tensor& b) { return map_binary(a, b, BinaryOp::Mul); }

namespace detail {

/// ln(x) evaluated with an explicit fma chain so the result is bit-identical
/// on every IEEE-754 platform with round-to-nearest, independent of the host
/// libm. Accuracy is a few ulps, which is all the RNG below needs.
inline double portable_log(double x) {
    int e = 0;
    double m = std::frexp(x, &e); // m in [0.5, 1)
    if (m < 0.70710678118654752440) {
        m *= 2.0;
        e -= 1;
    }
    const double r = (m - 1.0) / (m + 1.0); // |r| <= 0.1716
    const double r2 = r * r;
    double p = 1.0 / 19.0;
    p = std::fma(p, r2, 1.0 / 17.0);
    p = std::fma(p, r2, 1.0 / 15.0);
    p = std::fma(p, r2, 1.0 / 13.0);
    p = std::fma(p, r2, 1.0 / 11.0);
    p = std::fma(p, r2, 1.0 / 9.0);
    p = std::fma(p, r2, 1.0 / 7.0);
    p = std::fma(p, r2, 1.0 / 5.0);
    p = std::fma(p, r2, 1.0 / 3.0);
    p = std::fma(p, r2, 1.0);
    const double ln_m = 2.0 * r * p;
    return std::fma(static_cast<double>(e), 0.69314718055994530942, ln_m);
}

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

} // namespace detail

/// Deterministic, portable PRNG.
///
/// Stream definition (stable contract, frozen by tests):
///  - integer source: std::mt19937_64 seeded with the given seed (the engine's
///    output sequence is fixed by the C++ standard);
///  - uniform doubles in [0,1): (next_u64() >> 11) * 2^-53;
///  - normals: Marsaglia polar method, one spare value cached, using
///    IEEE-exact sqrt and the fma-chained log above (no libm dependence);
///  - bounded ints: Lemire multiply-shift with rejection (unbiased).
class Rng {
public:
    explicit Rng(uint64_t seed) : seed_(seed), gen_(seed) {}

    uint64_t seed() const { return seed_; }

    /// Independent child stream identified by tag.
    Rng fork(uint64_t tag) const { return Rng(detail::splitmix64(seed_ ^ (tag * 0x9E3779B97F4A7C15ull))); }

    uint64_t next_u64() { return gen_(); }

    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u = 0.0, v = 0.0, s = 0.0;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * detail::portable_log(s) / s);
        spare_ = v * f;
        have_spare_ = true;
        return u * f;
    }

    uint64_t uniform_below(uint64_t bound) {
        unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * bound;
        auto lo = static_cast<uint64_t>(m);
        if (lo < bound) {
            const uint64_t t = (0 - bound) % bound;
            while (lo < t) {
                m = static_cast<unsigned __int128>(next_u64()) * bound;
                lo = static_cast<uint64_t>(m);
            }
        }
        return static_cast<uint64_t>(m >> 64);
    }

private:
    uint64_t seed_;
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

/// Tensor of i.i.d. normal(mean, std) draws, filled in flat index order.
inline Tensor random_normal(Shape s, float mean, float std, Rng& rng) {
    if (std < 0.0f) {
        throw std::invalid_argument("random_normal: std must be >= 0");
    }
    Tensor t(s);
    float* p = t.data();
    const size_t m = t.size();
    for (size_t i = 0; i < m; ++i) {
        p[i] = mean + std * static_cast<float>(rng.normal());
    }
    return t;
}

} // namespace fpie
