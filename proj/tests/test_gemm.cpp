#include <catch2/catch_amalgamated.hpp>

#include "fpie/gemm.hpp"
#include "fpie/tensor.hpp"

using namespace fpie;

namespace {
// oracle: textbook triple loop in double precision
std::vector<double> matmul_ref(const std::vector<float>& a, const std::vector<float>& b, int64_t m,
                               int64_t n, int64_t k) {
    std::vector<double> c(static_cast<size_t>(m * n), 0.0);
    for (int64_t i = 0; i < m; ++i)
        for (int64_t p = 0; p < k; ++p)
            for (int64_t j = 0; j < n; ++j) c[i * n + j] += static_cast<double>(a[i * k + p]) * b[p * n + j];
    return c;
}
} // namespace

TEST_CASE("sgemm matches the reference on odd sizes", "[gemm]") {
    Rng rng(17);
    for (auto [m, n, k] : {std::tuple<int64_t, int64_t, int64_t>{1, 1, 1},
                           {3, 17, 5},
                           {4, 16, 32},
                           {7, 33, 19},
                           {64, 257, 9}}) {
        std::vector<float> a(static_cast<size_t>(m * k)), b(static_cast<size_t>(k * n)),
            c(static_cast<size_t>(m * n));
        for (float& v : a) v = static_cast<float>(rng.normal());
        for (float& v : b) v = static_cast<float>(rng.normal());
        sgemm(a.data(), b.data(), c.data(), m, n, k);
        const std::vector<double> ref = matmul_ref(a, b, m, n, k);
        for (int64_t i = 0; i < m * n; ++i) {
            REQUIRE_THAT(c[i], Catch::Matchers::WithinRel(ref[i], 1e-4) ||
                                   Catch::Matchers::WithinAbs(ref[i], 1e-5));
        }
    }
}

TEST_CASE("sgemm accumulate adds into C", "[gemm]") {
    Rng rng(18);
    const int64_t m = 5, n = 24, k = 7;
    std::vector<float> a(m * k), b(k * n), c(m * n, 1.0f);
    for (float& v : a) v = static_cast<float>(rng.normal());
    for (float& v : b) v = static_cast<float>(rng.normal());
    sgemm(a.data(), b.data(), c.data(), m, n, k, true);
    const std::vector<double> ref = matmul_ref(a, b, m, n, k);
    for (int64_t i = 0; i < m * n; ++i) {
        REQUIRE_THAT(c[i], Catch::Matchers::WithinAbs(ref[i] + 1.0, 1e-4));
    }
}

TEST_CASE("sgemm result independent of thread count", "[gemm]") {
    Rng rng(19);
    const int64_t m = 13, n = 1030, k = 40;
    std::vector<float> a(m * k), b(k * n);
    for (float& v : a) v = static_cast<float>(rng.normal());
    for (float& v : b) v = static_cast<float>(rng.normal());
    std::vector<float> c1(m * n), c4(m * n);
    set_num_threads(1);
    sgemm(a.data(), b.data(), c1.data(), m, n, k);
    set_num_threads(4);
    sgemm(a.data(), b.data(), c4.data(), m, n, k);
    set_num_threads(1);
    for (int64_t i = 0; i < m * n; ++i) REQUIRE(c1[i] == c4[i]);
}
