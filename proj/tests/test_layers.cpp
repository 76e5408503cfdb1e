#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>

#include "mcm/layers.hpp"
#include "mcm/rng.hpp"
#include "support/gradient_check.hpp"

using namespace mcm;
using mcm::testing::DTape;
using mcm::testing::DTensor;
using mcm::testing::gradient_check;
using mcm::testing::random_leaf;

TEST_CASE("embedding lookup gathers rows") {
    Tape tape;
    auto table = Tensor::leaf({4, 2}, {0, 0, 1, 2, 3, 4, 5, 6}, true);
    auto out = embedding_lookup(tape, {2, 1, 0, 3}, 2, 2, table);
    CHECK(out.shape() == Shape{2, 2, 2});
    CHECK(out.data() == std::vector<float>{3, 4, 1, 2, 0, 0, 5, 6});
}

TEST_CASE("embedding lookup never updates the padding row") {
    Tape tape;
    auto table = Tensor::leaf({3, 2}, {9, 9, 1, 2, 3, 4}, true);
    auto out = embedding_lookup(tape, {0, 1, 1, 2}, 2, 2, table);
    auto loss = sum(tape, out);
    tape.backward(loss);
    CHECK(table.grad() == std::vector<float>{0, 0, 2, 2, 1, 1});
}

TEST_CASE("embedding lookup rejects out-of-range indices") {
    Tape tape;
    auto table = Tensor::zeros({3, 2});
    CHECK_THROWS_AS(embedding_lookup(tape, {3}, 1, 1, table), shape_error);
}

TEST_CASE("embedding lookup matches finite differences") {
    Rng rng(21, Stream::misc);
    auto table = random_leaf({5, 3}, rng);
    std::vector<std::size_t> idx = {1, 4, 2, 2, 3, 1};
    auto res = gradient_check({table}, [&](DTape& t) {
        return sum(t, square(t, embedding_lookup(t, idx, 2, 3, table)));
    });
    CHECK(res.max_rel_error < 1e-6);
    // the PAD row must read as zero gradient even when indexed
    std::vector<std::size_t> with_pad = {0, 1};
    DTape t2;
    auto out = embedding_lookup(t2, with_pad, 1, 2, table);
    t2.backward(sum(t2, out));
    for (std::size_t j = 0; j < 3; ++j) CHECK(table.grad()[j] == 0.0);
}

TEST_CASE("dense layer") {
    Rng rng(1, Stream::init);
    DenseT<float> d;
    d.init(3, 2, rng);
    CHECK(d.w.shape() == Shape{3, 2});
    for (float v : d.b.data()) CHECK(v == 0.0f);

    DenseT<float> z;
    z.init_zero(3, 2);
    Tape tape;
    auto x = Tensor::leaf({1, 3}, {1, 2, 3});
    CHECK(z.forward(tape, x).data() == std::vector<float>{0, 0});
}

TEST_CASE("glorot limits scale with fan sizes") {
    Rng rng(2, Stream::init);
    auto w = Tensor::zeros({50, 50});
    init::glorot_uniform(w, 50, 50, rng);
    const float limit = std::sqrt(6.0f / 100.0f);
    float lo = 0, hi = 0;
    for (float v : w.data()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    CHECK(lo >= -limit);
    CHECK(hi <= limit);
    CHECK(hi > limit * 0.8f);
    CHECK(lo < -limit * 0.8f);
}

TEST_CASE("conv1d identity kernel reproduces the input") {
    Conv1DT<float> conv;
    Rng rng(3, Stream::init);
    conv.init(1, 2, 2, rng);
    std::fill(conv.w.data().begin(), conv.w.data().end(), 0.0f);
    conv.w.data()[0] = 1;  // channel 0 -> filter 0
    conv.w.data()[3] = 1;  // channel 1 -> filter 1
    Tape tape;
    auto x = Tensor::leaf({1, 3, 2}, {1, 2, 3, 4, 5, 6});
    CHECK(conv.forward(tape, x).data() == x.data());
}

TEST_CASE("conv1d known sums and zero padding") {
    // k=2, 1 channel, 1 filter, both taps 1: output[l] = x[l] + x[l+1],
    // with a zero pad on the right.
    Conv1DT<float> conv;
    Rng rng(3, Stream::init);
    conv.init(2, 1, 1, rng);
    conv.w.data() = {1, 1};
    std::fill(conv.b.data().begin(), conv.b.data().end(), 0.0f);
    Tape tape;
    auto x = Tensor::leaf({1, 4, 1}, {1, 2, 3, 4});
    auto y = conv.forward(tape, x);
    CHECK(y.data() == std::vector<float>{3, 5, 7, 4});
}

TEST_CASE("conv1d k=3 pads both sides") {
    Conv1DT<float> conv;
    Rng rng(3, Stream::init);
    conv.init(3, 1, 1, rng);
    conv.w.data() = {1, 1, 1};
    std::fill(conv.b.data().begin(), conv.b.data().end(), 0.0f);
    Tape tape;
    auto x = Tensor::leaf({1, 3, 1}, {1, 2, 3});
    auto y = conv.forward(tape, x);
    CHECK(y.data() == std::vector<float>{3, 6, 5});
}

TEST_CASE("conv1d matches finite differences") {
    Rng rng(17, Stream::misc);
    for (std::size_t k : {std::size_t(1), std::size_t(2), std::size_t(3)}) {
        Conv1DT<double> conv;
        Rng init_rng(5, Stream::init);
        conv.init(k, 3, 2, init_rng);
        auto x = random_leaf({2, 4, 3}, rng);
        auto res = gradient_check({x, conv.w, conv.b}, [&](DTape& t) {
            return sum(t, square(t, conv.forward(t, x)));
        });
        INFO("kernel " << k);
        CHECK(res.max_rel_error < 1e-4);
    }
}

TEST_CASE("lstm init puts +1 on the forget gate bias") {
    LSTMT<float> lstm;
    Rng rng(4, Stream::init);
    lstm.init(3, 5, rng);
    for (std::size_t j = 0; j < 20; ++j) {
        const bool forget = j >= 5 && j < 10;
        CHECK(lstm.b.data()[j] == (forget ? 1.0f : 0.0f));
    }
}

TEST_CASE("lstm last-state output honors the mask") {
    LSTMT<float> lstm;
    Rng rng(4, Stream::init);
    lstm.init(2, 3, rng);
    Rng data_rng(8, Stream::data);
    std::vector<float> xd(2 * 4 * 2);
    for (auto& v : xd) v = data_rng.uniform(-1, 1);
    // example 1 has length 2: its last state must equal that of the same
    // prefix run alone.
    Tape t1;
    auto x = Tensor::leaf({2, 4, 2}, xd);
    auto h = lstm.forward(t1, x, SequenceMask{{4, 2}}, false);
    CHECK(h.shape() == Shape{2, 3});

    std::vector<float> prefix(xd.begin() + 8, xd.begin() + 12);
    Tape t2;
    auto xp = Tensor::leaf({1, 2, 2}, prefix);
    auto hp = lstm.forward(t2, xp, SequenceMask{{2}}, false);
    for (std::size_t j = 0; j < 3; ++j)
        CHECK(h.data()[3 + j] == Catch::Approx(hp.data()[j]).margin(1e-6));
}

TEST_CASE("lstm sequence output shape") {
    LSTMT<float> lstm;
    Rng rng(4, Stream::init);
    lstm.init(2, 3, rng);
    Tape tape;
    auto x = Tensor::zeros({2, 5, 2});
    auto h = lstm.forward(tape, x, SequenceMask{{5, 3}}, true);
    CHECK(h.shape() == Shape{2, 5, 3});
}

TEST_CASE("lstm matches finite differences") {
    Rng rng(31, Stream::misc);
    for (bool seq : {true, false}) {
        LSTMT<double> lstm;
        Rng init_rng(6, Stream::init);
        lstm.init(3, 4, init_rng);
        auto x = random_leaf({2, 3, 3}, rng);
        SequenceMask mask{{3, 2}};
        auto res = gradient_check({x, lstm.wx, lstm.wh, lstm.b}, [&](DTape& t) {
            return sum(t, square(t, lstm.forward(t, x, mask, seq)));
        });
        INFO("return_sequence " << seq);
        CHECK(res.max_rel_error < 1e-4);
    }
}

TEST_CASE("max pool ignores padding and routes ties to the first position") {
    Tape tape;
    auto x = Tensor::leaf({1, 3, 2}, {5, 1, 5, 2, 9, 9}, true);
    auto y = global_max_pool(tape, x, SequenceMask{{2}});
    CHECK(y.data() == std::vector<float>{5, 2});
    tape.backward(sum(tape, y));
    // channel 0 ties at positions 0 and 1; position 0 takes the gradient
    CHECK(x.grad() == std::vector<float>{1, 0, 0, 1, 0, 0});
}

TEST_CASE("avg pool divides by true length") {
    Tape tape;
    auto x = Tensor::leaf({1, 3, 1}, {2, 4, 100});
    auto y = global_avg_pool(tape, x, SequenceMask{{2}});
    CHECK(y.data()[0] == Catch::Approx(3.0));
}

TEST_CASE("pooling matches finite differences") {
    Rng rng(41, Stream::misc);
    auto x = random_leaf({2, 4, 3}, rng);
    SequenceMask mask{{4, 2}};
    auto r1 = gradient_check({x}, [&](DTape& t) {
        return sum(t, square(t, global_max_pool(t, x, mask)));
    });
    CHECK(r1.max_rel_error < 1e-5);
    auto r2 = gradient_check({x}, [&](DTape& t) {
        return sum(t, square(t, global_avg_pool(t, x, mask)));
    });
    CHECK(r2.max_rel_error < 1e-5);
}

TEST_CASE("mask validation") {
    SequenceMask m{{3, 0}};
    CHECK_THROWS_AS(m.validate(2, 3), shape_error);
    SequenceMask m2{{4}};
    CHECK_THROWS_AS(m2.validate(1, 3), shape_error);
    SequenceMask m3{{1, 2}};
    CHECK_THROWS_AS(m3.validate(3, 4), shape_error);
}

TEST_CASE("dropout") {
    Rng rng(9, Stream::dropout);
    SECTION("inference is the identity") {
        Tape tape;
        auto x = Tensor::leaf({4}, {1, 2, 3, 4});
        CHECK(dropout(tape, x, 0.5, Mode::Infer, rng).data() == x.data());
    }
    SECTION("rate 0 keeps everything") {
        Tape tape;
        auto x = Tensor::leaf({4}, {1, 2, 3, 4});
        CHECK(dropout(tape, x, 0.0, Mode::Train, rng).data() == x.data());
    }
    SECTION("invalid rate") {
        Tape tape;
        auto x = Tensor::zeros({2});
        CHECK_THROWS_AS(dropout(tape, x, 1.0, Mode::Train, rng), shape_error);
        CHECK_THROWS_AS(dropout(tape, x, -0.1, Mode::Train, rng), shape_error);
    }
    SECTION("kept entries are rescaled and the mean is preserved") {
        const std::size_t n = 20000;
        Tape tape;
        auto x = Tensor::leaf(Shape{n}, std::vector<float>(n, 1.0f));
        auto y = dropout(tape, x, 0.5, Mode::Train, rng);
        std::size_t kept = 0;
        double total = 0;
        for (float v : y.data()) {
            CHECK((v == 0.0f || v == Catch::Approx(2.0f)));
            if (v != 0.0f) ++kept;
            total += v;
        }
        const double keep_rate = static_cast<double>(kept) / n;
        CHECK(keep_rate == Catch::Approx(0.5).margin(0.02));
        CHECK(total / n == Catch::Approx(1.0).margin(0.05));
    }
}

TEST_CASE("batchnorm normalizes in training mode") {
    BatchNormT<float> bn;
    bn.init(2);
    Tape tape;
    auto x = Tensor::leaf({4, 2}, {1, 10, 2, 20, 3, 30, 4, 40});
    auto y = bn.forward(tape, x, Mode::Train);
    for (std::size_t c = 0; c < 2; ++c) {
        double mean = 0, var = 0;
        for (std::size_t bi = 0; bi < 4; ++bi) mean += y.data()[bi * 2 + c];
        mean /= 4;
        for (std::size_t bi = 0; bi < 4; ++bi) {
            const double d = y.data()[bi * 2 + c] - mean;
            var += d * d;
        }
        var /= 4;
        CHECK(mean == Catch::Approx(0.0).margin(1e-5));
        CHECK(var == Catch::Approx(1.0).margin(1e-3));
    }
}

TEST_CASE("batchnorm running stats drive inference") {
    BatchNormT<float> bn;
    bn.init(1);
    // one training pass over mean 2.5, biased var 1.25
    Tape t1;
    auto x = Tensor::leaf({4, 1}, {1, 2, 3, 4});
    bn.forward(t1, x, Mode::Train);
    CHECK(bn.running_mean[0] == Catch::Approx(0.9 * 0 + 0.1 * 2.5));
    CHECK(bn.running_var[0] == Catch::Approx(0.9 * 1 + 0.1 * 1.25));

    Tape t2;
    auto q = Tensor::leaf({1, 1}, {2.0f});
    auto y = bn.forward(t2, q, Mode::Infer);
    const float expect = (2.0f - bn.running_mean[0]) /
                         std::sqrt(bn.running_var[0] + 1e-5f);
    CHECK(y.data()[0] == Catch::Approx(expect).margin(1e-5));
}

TEST_CASE("batchnorm rejects training batches below two") {
    BatchNormT<float> bn;
    bn.init(2);
    Tape tape;
    auto x = Tensor::zeros({1, 2});
    CHECK_THROWS_AS(bn.forward(tape, x, Mode::Train), shape_error);
    CHECK_NOTHROW(bn.forward(tape, x, Mode::Infer));
}

TEST_CASE("batchnorm matches finite differences") {
    Rng rng(51, Stream::misc);
    for (auto mode : {Mode::Train, Mode::Infer}) {
        BatchNormT<double> bn;
        bn.init(3);
        // non-trivial affine parameters and running stats
        bn.gamma.data() = {1.5, 0.5, 2.0};
        bn.beta.data() = {0.1, -0.2, 0.3};
        bn.running_mean = {0.2, -0.1, 0.4};
        bn.running_var = {1.2, 0.8, 1.5};
        auto x = random_leaf({4, 3}, rng);
        auto res = gradient_check({x, bn.gamma, bn.beta}, [&](DTape& t) {
            return sum(t, square(t, bn.forward(t, x, mode)));
        });
        INFO("train mode " << (mode == Mode::Train));
        CHECK(res.max_rel_error < 1e-4);
    }
}
