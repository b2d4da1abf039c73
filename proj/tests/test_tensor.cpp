#include <catch2/catch_amalgamated.hpp>

#include "fpie/tensor.hpp"

using namespace fpie;

TEST_CASE("zeros builds exact zero tensors", "[tensor]") {
    Tensor t = Tensor::zeros({1, 1, 2, 2});
    REQUIRE(t.size() == 4);
    for (size_t i = 0; i < t.size(); ++i) CHECK(t.data()[i] == 0.0f);

    Tensor big = Tensor::zeros({2, 3, 4, 4});
    REQUIRE(big.size() == 96);
    for (size_t i = 0; i < big.size(); ++i) REQUIRE(big.data()[i] == 0.0f);
}

TEST_CASE("invalid shapes are rejected", "[tensor]") {
    CHECK_THROWS_AS(Tensor::zeros({1, 0, 1, 1}), std::invalid_argument);
    CHECK_THROWS_AS(Tensor::zeros({-1, 1, 1, 1}), std::invalid_argument);
    // dimension product overflow
    CHECK_THROWS_AS(Tensor::zeros({1ll << 31, 1ll << 31, 2, 2}), std::invalid_argument);
}

TEST_CASE("map_binary add/sub/mul", "[tensor]") {
    Tensor a({1, 1, 1, 2}, {1.0f, 2.0f});
    Tensor b({1, 1, 1, 2}, {3.0f, 4.0f});
    Tensor sum = add(a, b);
    CHECK(sum.data()[0] == 4.0f);
    CHECK(sum.data()[1] == 6.0f);

    Tensor diff = sub(a, a);
    CHECK(diff.data()[0] == 0.0f);
    CHECK(diff.data()[1] == 0.0f);

    Tensor c({1, 1, 1, 2}, {2.0f, 3.0f});
    Tensor d({1, 1, 1, 2}, {0.5f, 2.0f});
    Tensor prod = mul(c, d);
    CHECK(prod.data()[0] == 1.0f);
    CHECK(prod.data()[1] == 6.0f);

    Tensor wrong({1, 1, 2, 1}, {0.0f, 0.0f});
    CHECK_THROWS_AS(add(a, wrong), std::invalid_argument);
}

TEST_CASE("row-major flat index round-trips", "[tensor]") {
    const Shape s{2, 3, 5, 7};
    Tensor t(s);
    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const auto n = static_cast<int64_t>(rng.uniform_below(s.n));
        const auto c = static_cast<int64_t>(rng.uniform_below(s.c));
        const auto h = static_cast<int64_t>(rng.uniform_below(s.h));
        const auto w = static_cast<int64_t>(rng.uniform_below(s.w));
        const int64_t flat = t.flat(n, c, h, w);
        // invert the row-major layout by hand
        const int64_t w2 = flat % s.w;
        const int64_t h2 = (flat / s.w) % s.h;
        const int64_t c2 = (flat / (s.w * s.h)) % s.c;
        const int64_t n2 = flat / (s.w * s.h * s.c);
        REQUIRE(n2 == n);
        REQUIRE(c2 == c);
        REQUIRE(h2 == h);
        REQUIRE(w2 == w);
    }
}

TEST_CASE("add is commutative elementwise in f32", "[tensor]") {
    Rng rng(3);
    Tensor a = random_normal({2, 3, 8, 8}, 0.0f, 1.0f, rng);
    Tensor b = random_normal({2, 3, 8, 8}, 0.0f, 1.0f, rng);
    Tensor ab = add(a, b);
    Tensor ba = add(b, a);
    for (size_t i = 0; i < ab.size(); ++i) REQUIRE(ab.data()[i] == ba.data()[i]);
}

TEST_CASE("random_normal contracts", "[tensor]") {
    SECTION("std 0 gives the mean everywhere") {
        Rng rng(1);
        Tensor t = random_normal({1, 2, 3, 3}, 0.75f, 0.0f, rng);
        for (size_t i = 0; i < t.size(); ++i) REQUIRE(t.data()[i] == 0.75f);
    }
    SECTION("negative std throws") {
        Rng rng(1);
        CHECK_THROWS_AS(random_normal({1, 1, 2, 2}, 0.0f, -1.0f, rng), std::invalid_argument);
    }
    SECTION("same seed gives identical tensors") {
        Rng r1(42), r2(42);
        Tensor a = random_normal({1, 3, 16, 16}, 0.0f, 1.0f, r1);
        Tensor b = random_normal({1, 3, 16, 16}, 0.0f, 1.0f, r2);
        for (size_t i = 0; i < a.size(); ++i) REQUIRE(a.data()[i] == b.data()[i]);
    }
    SECTION("sample mean within 5 sigma / sqrt(N)") {
        // N = 10000, bound 5/sqrt(N) = 0.05
        Rng rng(2024);
        Tensor t = random_normal({1, 1, 100, 100}, 0.0f, 1.0f, rng);
        double acc = 0.0;
        for (size_t i = 0; i < t.size(); ++i) acc += t.data()[i];
        const double mean = acc / static_cast<double>(t.size());
        CHECK(std::fabs(mean) <= 0.05);
    }
}

TEST_CASE("rng streams are reproducible and forkable", "[tensor]") {
    Rng a(7), b(7);
    for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());

    Rng c(7);
    Rng f1 = c.fork(1), f2 = c.fork(2);
    CHECK(f1.next_u64() != f2.next_u64());

    // bounded draws stay in range and are deterministic
    Rng d1(9), d2(9);
    for (int i = 0; i < 100; ++i) {
        const uint64_t v = d1.uniform_below(13);
        REQUIRE(v < 13);
        REQUIRE(v == d2.uniform_below(13));
    }
}

TEST_CASE("portable log matches libm closely", "[tensor]") {
    Rng rng(5);
    for (int i = 0; i < 1000; ++i) {
        const double x = rng.uniform() * 100.0 + 1e-12;
        const double a = fpie::detail::portable_log(x);
        const double b = std::log(x);
        REQUIRE(std::fabs(a - b) <= 1e-12 * std::max(1.0, std::fabs(b)));
    }
}
