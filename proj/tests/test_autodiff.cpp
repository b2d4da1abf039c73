#include <catch2/catch_amalgamated.hpp>

#include "fpie/autodiff.hpp"
#include "fpie/gradcheck.hpp"
#include "fpie/ops.hpp"

using namespace fpie;

TEST_CASE("d(x*x)/dx = 2x through the tape", "[autodiff]") {
    Tape t;
    Node* x = t.leaf(Tensor({1, 1, 1, 1}, {3.0f}), true);
    Node* y = sum(t, mul(t, x, x));
    t.backward(y);
    REQUIRE(x->grad.data()[0] == 6.0f);
}

TEST_CASE("sum(x + y) gives unit gradients for both", "[autodiff]") {
    Tape t;
    Rng rng(1);
    Node* x = t.leaf(random_normal({1, 2, 3, 3}, 0.0f, 1.0f, rng), true);
    Node* y = t.leaf(random_normal({1, 2, 3, 3}, 0.0f, 1.0f, rng), true);
    Node* s = sum(t, add(t, x, y));
    t.backward(s);
    for (size_t i = 0; i < x->grad.size(); ++i) {
        REQUIRE(x->grad.data()[i] == 1.0f);
        REQUIRE(y->grad.data()[i] == 1.0f);
    }
}

TEST_CASE("backward requires a scalar root", "[autodiff]") {
    Tape t;
    Node* x = t.leaf(Tensor::zeros({1, 1, 2, 2}), true);
    Node* y = relu(t, x);
    CHECK_THROWS_AS(t.backward(y), std::invalid_argument);
}

TEST_CASE("composite graph matches finite differences", "[autodiff]") {
    GradCheckOptions opts;
    for (const GradCheckCase& c : default_gradcheck_suite()) {
        if (c.name != "autodiff_composite") continue;
        const GradCheckResult r = run_gradcheck_case(c, opts);
        INFO(c.name << " max rel err " << r.max_rel_err);
        CHECK(r.pass);
    }
}

TEST_CASE("gradients accumulate; zero_grads resets", "[autodiff]") {
    Parameter p("p", Tensor({1, 1, 1, 2}, {1.0f, -2.0f}));
    std::vector<Parameter*> params{&p};

    Tape t;
    Node* x = t.param(p);
    Node* loss = sum(t, mul(t, x, x));
    t.backward(loss);
    const float g0 = p.grad.data()[0];
    const float g1 = p.grad.data()[1];
    REQUIRE(g0 == 2.0f);
    REQUIRE(g1 == -4.0f);

    // second sweep doubles every grad exactly
    t.backward(loss);
    REQUIRE(p.grad.data()[0] == 2.0f * g0);
    REQUIRE(p.grad.data()[1] == 2.0f * g1);

    zero_grads(params);
    REQUIRE(p.grad.data()[0] == 0.0f);
    REQUIRE(p.grad.data()[1] == 0.0f);
    // idempotent
    zero_grads(params);
    REQUIRE(p.grad.data()[0] == 0.0f);

    // fresh parameter never backwarded stays zero
    Parameter q("q", Tensor({1, 1, 1, 1}, {5.0f}));
    REQUIRE(q.grad.data()[0] == 0.0f);
}

TEST_CASE("unreachable parameters keep zero gradients", "[autodiff]") {
    Parameter used("used", Tensor({1, 1, 1, 1}, {2.0f}));
    Parameter unused("unused", Tensor({1, 1, 1, 1}, {3.0f}));
    Tape t;
    Node* x = t.param(used);
    t.param(unused); // on the tape but not connected to the root
    Node* loss = sum(t, mul(t, x, x));
    t.backward(loss);
    REQUIRE(used.grad.data()[0] == 4.0f);
    REQUIRE(unused.grad.data()[0] == 0.0f);
}

TEST_CASE("gradient of weighted sum is the weighted sum of gradients", "[autodiff]") {
    Rng rng(7);
    const Tensor x0 = random_normal({1, 2, 4, 4}, 0.0f, 1.0f, rng);
    const float a = 0.7f, b = -1.3f;

    auto grad_of = [&](auto make_loss) {
        Tape t;
        Node* x = t.leaf(x0, true);
        t.backward(make_loss(t, x));
        return x->grad.clone();
    };
    Tensor g1 = grad_of([](Tape& t, Node* x) { return sum(t, mul(t, x, x)); });
    Tensor g2 = grad_of([](Tape& t, Node* x) { return mean(t, relu(t, x)); });
    Tensor gc = grad_of([&](Tape& t, Node* x) {
        Node* l1 = sum(t, mul(t, x, x));
        Node* l2 = mean(t, relu(t, x));
        return add(t, affine(t, l1, a, 0.0f), affine(t, l2, b, 0.0f));
    });
    for (size_t i = 0; i < gc.size(); ++i) {
        const float expect = a * g1.data()[i] + b * g2.data()[i];
        REQUIRE_THAT(gc.data()[i], Catch::Matchers::WithinRel(expect, 1e-6f) ||
                                       Catch::Matchers::WithinAbs(expect, 1e-7f));
    }
}
