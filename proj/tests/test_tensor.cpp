#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "mcm/adam.hpp"
#include "mcm/rng.hpp"
#include "mcm/tensor.hpp"
#include "support/gradient_check.hpp"

using namespace mcm;
using mcm::testing::DTape;
using mcm::testing::DTensor;
using mcm::testing::gradient_check;
using mcm::testing::random_leaf;

// Independent triple-loop product for the matmul oracle.
static std::vector<double> naive_matmul(const std::vector<double>& a,
                                        const std::vector<double>& b, std::size_t m,
                                        std::size_t k, std::size_t n) {
    std::vector<double> c(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t l = 0; l < k; ++l) c[i * n + j] += a[i * k + l] * b[l * n + j];
    return c;
}

TEST_CASE("matmul identity") {
    Tape tape;
    auto a = Tensor::leaf({2, 2}, {1, 2, 3, 4});
    auto eye = Tensor::leaf({2, 2}, {1, 0, 0, 1});
    auto c = matmul(tape, a, eye);
    CHECK(c.data() == std::vector<float>{1, 2, 3, 4});
}

TEST_CASE("matmul against triple-loop oracle") {
    Tape tape;
    auto a = Tensor::leaf({2, 2}, {1, 2, 3, 4});
    auto b = Tensor::leaf({2, 1}, {5, 6});
    auto c = matmul(tape, a, b);
    CHECK(c.shape() == Shape{2, 1});
    CHECK(c.data()[0] == Catch::Approx(17));
    CHECK(c.data()[1] == Catch::Approx(39));

    Rng rng(7, Stream::misc);
    for (int rep = 0; rep < 20; ++rep) {
        const std::size_t m = 1 + rng.next_below(5), k = 1 + rng.next_below(5),
                          n = 1 + rng.next_below(5);
        std::vector<double> ad(m * k), bd(k * n);
        for (auto& v : ad) v = rng.next_double() * 2 - 1;
        for (auto& v : bd) v = rng.next_double() * 2 - 1;
        DTape dt;
        auto at = DTensor::leaf({m, k}, ad);
        auto bt = DTensor::leaf({k, n}, bd);
        auto ct = matmul(dt, at, bt);
        const auto expect = naive_matmul(ad, bd, m, k, n);
        for (std::size_t i = 0; i < expect.size(); ++i)
            CHECK(ct.data()[i] == Catch::Approx(expect[i]).margin(1e-12));
    }
}

TEST_CASE("matmul shape mismatch names both shapes") {
    Tape tape;
    auto a = Tensor::zeros({2, 3});
    auto b = Tensor::zeros({2, 2});
    CHECK_THROWS_WITH(matmul(tape, a, b),
                      Catch::Matchers::ContainsSubstring("(2x3)") &&
                          Catch::Matchers::ContainsSubstring("(2x2)"));
}

TEST_CASE("relu forward and subgradient") {
    Tape tape;
    auto x = Tensor::leaf({3}, {-1, 0, 2}, true);
    auto y = relu(tape, x);
    CHECK(y.data() == std::vector<float>{0, 0, 2});

    auto s = sum(tape, y);
    tape.backward(s);
    CHECK(x.grad() == std::vector<float>{0, 0, 1});
}

TEST_CASE("relu keeps nonnegative input unchanged") {
    Tape tape;
    auto x = Tensor::leaf({4}, {0, 1, 2.5, 100});
    CHECK(relu(tape, x).data() == x.data());
}

TEST_CASE("softmax rows") {
    SECTION("uniform on zeros") {
        Tape tape;
        auto y = softmax(tape, Tensor::leaf({3}, {0, 0, 0}));
        for (float v : y.data()) CHECK(v == Catch::Approx(1.0 / 3).epsilon(1e-6));
    }
    SECTION("no overflow on large logits") {
        Tape tape;
        auto y = softmax(tape, Tensor::leaf({2}, {1000, 1000}));
        CHECK(y.data()[0] == Catch::Approx(0.5));
        CHECK(y.data()[1] == Catch::Approx(0.5));
    }
    SECTION("reference values") {
        Tape tape;
        auto y = softmax(tape, Tensor::leaf({3}, {1, 2, 3}));
        CHECK(y.data()[0] == Catch::Approx(0.09003057).epsilon(1e-5));
        CHECK(y.data()[1] == Catch::Approx(0.24472847).epsilon(1e-5));
        CHECK(y.data()[2] == Catch::Approx(0.66524096).epsilon(1e-5));
    }
}

TEST_CASE("softmax invariants on random rows") {
    Rng rng(3, Stream::misc);
    for (int rep = 0; rep < 50; ++rep) {
        const std::size_t c = 2 + rng.next_below(6);
        std::vector<float> logits(c);
        for (auto& v : logits) v = static_cast<float>(rng.next_double() * 10 - 5);
        Tape t1;
        auto y1 = softmax(t1, Tensor::leaf({c}, logits));
        float s = 0;
        for (float v : y1.data()) {
            CHECK(v > 0.0f);
            CHECK(v < 1.0f);
            s += v;
        }
        CHECK(s == Catch::Approx(1.0).margin(1e-6));
        // shift invariance
        auto shifted = logits;
        for (auto& v : shifted) v += 3.25f;
        Tape t2;
        auto y2 = softmax(t2, Tensor::leaf({c}, shifted));
        for (std::size_t i = 0; i < c; ++i)
            CHECK(y2.data()[i] == Catch::Approx(y1.data()[i]).margin(1e-6));
    }
}

TEST_CASE("cross entropy") {
    SECTION("perfect predictions") {
        Tape tape;
        auto p = Tensor::leaf({2, 3}, {1, 0, 0, 0, 1, 0});
        auto l = cross_entropy(tape, p, {0, 1});
        CHECK(l.item() == Catch::Approx(0.0).margin(1e-6));
    }
    SECTION("uniform is ln 3") {
        Tape tape;
        const float u = 1.0f / 3;
        auto p = Tensor::leaf({1, 3}, {u, u, u});
        auto l = cross_entropy(tape, p, {2});
        CHECK(l.item() == Catch::Approx(std::log(3.0)).epsilon(1e-5));
    }
    SECTION("-ln 0.7") {
        Tape tape;
        auto p = Tensor::leaf({1, 3}, {0.7f, 0.2f, 0.1f});
        auto l = cross_entropy(tape, p, {0});
        CHECK(l.item() == Catch::Approx(0.356675).epsilon(1e-4));
    }
    SECTION("label out of range") {
        Tape tape;
        auto p = Tensor::leaf({1, 3}, {0.5f, 0.3f, 0.2f});
        CHECK_THROWS_AS(cross_entropy(tape, p, {3}), shape_error);
    }
}

TEST_CASE("backward on sum of squares") {
    Tape tape;
    auto x = Tensor::leaf({3}, {1, 2, 3}, true);
    auto y = sum(tape, square(tape, x));
    tape.backward(y);
    CHECK(x.grad() == std::vector<float>{2, 4, 6});
}

TEST_CASE("backward rejects non-scalar loss") {
    Tape tape;
    auto x = Tensor::leaf({2}, {1, 2}, true);
    auto y = square(tape, x);
    CHECK_THROWS_AS(tape.backward(y), shape_error);
}

TEST_CASE("backward rejects a consumed tape") {
    Tape tape;
    auto x = Tensor::leaf({1}, {2}, true);
    auto y = square(tape, x);
    tape.backward(y);
    CHECK_THROWS_AS(tape.backward(y), error);
}

TEST_CASE("fan-out accumulates both path gradients") {
    // y = x*x + 3x via two consumers of x
    DTape tape;
    auto x = DTensor::leaf({1}, {1.5}, true);
    auto a = square(tape, x);
    auto b = scale(tape, x, 3.0);
    auto y = sum(tape, add(tape, a, b));
    tape.backward(y);
    CHECK(x.grad()[0] == Catch::Approx(2 * 1.5 + 3.0).epsilon(1e-10));

    Rng rng(11, Stream::misc);
    auto leaf = random_leaf({4}, rng);
    auto res = gradient_check({leaf}, [&](DTape& t) {
        auto u = square(t, leaf);
        auto v = scale(t, leaf, -0.7);
        return sum(t, add(t, u, v));
    });
    CHECK(res.max_rel_error < 1e-6);
}

TEST_CASE("primitive ops match finite differences on random shapes") {
    Rng rng(99, Stream::misc);
    double worst = 0.0;
    std::size_t instances = 0;
    for (int rep = 0; rep < 25; ++rep) {
        const std::size_t m = 1 + rng.next_below(4), k = 1 + rng.next_below(4),
                          n = 1 + rng.next_below(4);
        auto a = random_leaf({m, k}, rng);
        auto b = random_leaf({k, n}, rng);
        worst = std::max(worst, gradient_check({a, b}, [&](DTape& t) {
                                    return sum(t, square(t, matmul(t, a, b)));
                                }).max_rel_error);
        ++instances;

        auto x = random_leaf({m, n}, rng);
        worst = std::max(worst, gradient_check({x}, [&](DTape& t) {
                                    return sum(t, relu(t, x));
                                }).max_rel_error);
        ++instances;

        const std::size_t c = 2 + rng.next_below(4);
        auto logits = random_leaf({m, c}, rng, -2, 2);
        std::vector<std::size_t> labels(m);
        for (auto& l : labels) l = rng.next_below(c);
        worst = std::max(worst, gradient_check({logits}, [&](DTape& t) {
                                    return cross_entropy(t, softmax(t, logits), labels);
                                }).max_rel_error);
        ++instances;

        auto th = random_leaf({m, n}, rng, -2, 2);
        worst = std::max(worst, gradient_check({th}, [&](DTape& t) {
                                    return sum(t, square(t, tanh_op(t, th)));
                                }).max_rel_error);
        ++instances;
    }
    INFO("instances: " << instances);
    CHECK(worst < 1e-4);
}

TEST_CASE("non-finite values are rejected") {
    Tape tape;
    auto x = Tensor::leaf({2}, {1.0f, std::numeric_limits<float>::infinity()});
    CHECK_THROWS_AS(relu(tape, x), numeric_error);
}

TEST_CASE("adam") {
    SECTION("zero gradients leave parameters unchanged") {
        auto p = Tensor::leaf({2}, {1.0f, -2.0f}, true);
        Adam opt(0.002f);
        opt.add_param(p);
        opt.zero_grad();
        opt.step();
        CHECK(p.data() == std::vector<float>{1.0f, -2.0f});
    }
    SECTION("first step moves by about -lr * sign(g)") {
        auto p = Tensor::leaf({1}, {0.5f}, true);
        Adam opt(0.002f);
        opt.add_param(p);
        p.node()->ensure_grad();
        p.grad()[0] = 0.1f;
        opt.step();
        CHECK(p.data()[0] == Catch::Approx(0.5 - 0.002).epsilon(1e-3));
        // gradients zeroed afterward
        CHECK(p.grad()[0] == 0.0f);
    }
    SECTION("missing gradient is an error") {
        auto p = Tensor::leaf({2}, {0, 0}, true);
        Adam opt;
        opt.add_param(p);
        CHECK_THROWS_AS(opt.step(), error);
    }
}

TEST_CASE("rng determinism and stream separation") {
    Rng a(123, Stream::init);
    Rng b(123, Stream::init);
    for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());

    Rng c(123, Stream::dropout);
    Rng d(123, Stream::shuffle);
    int diff = 0;
    for (int i = 0; i < 16; ++i)
        if (c.next_u64() != d.next_u64()) ++diff;
    CHECK(diff == 16);
}

TEST_CASE("rng uniform bounds") {
    Rng rng(5, Stream::misc);
    for (int i = 0; i < 1000; ++i) {
        const float v = rng.uniform(-0.05f, 0.05f);
        CHECK(v >= -0.05f);
        CHECK(v <= 0.05f);
    }
}
