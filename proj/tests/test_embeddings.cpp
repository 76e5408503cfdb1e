#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "mcm/embedding.hpp"
#include "mcm/skipgram.hpp"

using namespace mcm;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name) : path("/tmp/mcm_test_" + name) {}
    ~TempFile() { std::remove(path.c_str()); }
};

Vocabulary small_vocab() {
    std::unordered_map<std::string, std::size_t> counts{
        {"cat", 5}, {"dog", 4}, {"bird", 3}, {"fish", 2}, {"rare", 1}};
    return Vocabulary::build(counts, 2);
}

}  // namespace

TEST_CASE("vocabulary reserves pad and unk") {
    Vocabulary v;
    CHECK(v.size() == 2);
    CHECK(v.token(0) == "<pad>");
    CHECK(v.token(1) == "<unk>");
    CHECK(v.lookup("anything") == Vocabulary::kUnk);
}

TEST_CASE("vocabulary build applies the frequency floor") {
    auto v = small_vocab();
    CHECK(v.size() == 6);  // pad, unk, cat, dog, bird, fish
    CHECK_FALSE(v.contains("rare"));
    CHECK(v.lookup("rare") == Vocabulary::kUnk);
    // deterministic: frequency desc
    CHECK(v.token(2) == "cat");
    CHECK(v.token(3) == "dog");
    CHECK(v.token(4) == "bird");
    CHECK(v.token(5) == "fish");
}

TEST_CASE("vocabulary order breaks frequency ties lexicographically") {
    std::unordered_map<std::string, std::size_t> counts{
        {"zebra", 3}, {"apple", 3}, {"mango", 3}};
    auto v = Vocabulary::build(counts, 1);
    CHECK(v.token(2) == "apple");
    CHECK(v.token(3) == "mango");
    CHECK(v.token(4) == "zebra");
}

TEST_CASE("encode maps unknowns to unk") {
    auto v = small_vocab();
    auto ids = encode({"cat", "rare", "fish"}, v);
    CHECK(ids == std::vector<std::size_t>{2, Vocabulary::kUnk, 5});
}

TEST_CASE("random embeddings stay in range with a zero pad row") {
    auto v = small_vocab();
    Rng rng(42, Stream::init);
    auto m = init_random(v, 8, rng);
    CHECK(m.table.shape() == Shape{6, 8});
    for (std::size_t c = 0; c < 8; ++c) CHECK(m.table.data()[c] == 0.0f);
    for (std::size_t i = 8; i < m.table.data().size(); ++i) {
        CHECK(m.table.data()[i] >= -0.05f);
        CHECK(m.table.data()[i] <= 0.05f);
    }
    // reproducible from the same seed
    Rng rng2(42, Stream::init);
    auto m2 = init_random(v, 8, rng2);
    CHECK(m.table.data() == m2.table.data());
}

TEST_CASE("char hash vectors are deterministic unit vectors") {
    auto a = char_hash_embed("hello", 32, 7);
    auto b = char_hash_embed("hello", 32, 7);
    CHECK(a == b);
    double norm = 0;
    for (float x : a) norm += static_cast<double>(x) * x;
    CHECK(std::sqrt(norm) == Catch::Approx(1.0).epsilon(1e-5));

    auto c = char_hash_embed("hello", 32, 8);
    CHECK(a != c);
    CHECK_THROWS_AS(char_hash_embed("", 32, 7), error);
}

TEST_CASE("char hash keeps related spellings closer than unrelated tokens") {
    const std::size_t d = 64;
    auto base = char_hash_embed("bohat", d, 1);
    auto variant = char_hash_embed("bohut", d, 1);
    auto other = char_hash_embed("xyzzy", d, 1);
    const double near = cosine(base.data(), variant.data(), d);
    const double far = cosine(base.data(), other.data(), d);
    CHECK(near > far);
    CHECK(near > 0.3);
}

TEST_CASE("pretrained loading covers hits and falls back on misses") {
    auto v = small_vocab();
    TempFile f("emb.txt");
    {
        std::ofstream out(f.path);
        out << "3 4\n";
        out << "cat 1 0 0 0\n";
        out << "dog 0 1 0 0\n";
        out << "elephant 9 9 9 9\n";  // not in vocab, ignored
    }
    auto m = load_pretrained(f.path, v, false, 3);
    CHECK(m.dim == 4);
    CHECK_FALSE(m.trainable);
    CHECK(m.coverage == Catch::Approx(2.0 / 4.0));
    CHECK(m.table.data()[2 * 4 + 0] == 1.0f);
    CHECK(m.table.data()[3 * 4 + 1] == 1.0f);
    // bird missed the file: char-hash fallback, unit norm
    double norm = 0;
    for (std::size_t c = 0; c < 4; ++c) {
        const float x = m.table.data()[4 * 4 + c];
        norm += static_cast<double>(x) * x;
    }
    CHECK(std::sqrt(norm) == Catch::Approx(1.0).epsilon(1e-4));
    // pad row stays zero
    for (std::size_t c = 0; c < 4; ++c) CHECK(m.table.data()[c] == 0.0f);
}

TEST_CASE("pretrained loading validates dimensions with a line number") {
    auto v = small_vocab();
    TempFile f("emb_bad.txt");
    {
        std::ofstream out(f.path);
        out << "2 4\n";
        out << "cat 1 0 0 0\n";
        out << "dog 0 1\n";
    }
    CHECK_THROWS_WITH(load_pretrained(f.path, v),
                      Catch::Matchers::ContainsSubstring("line 3"));
}

TEST_CASE("pretrained loading rejects a missing or malformed file") {
    auto v = small_vocab();
    CHECK_THROWS_AS(load_pretrained("/tmp/mcm_does_not_exist.txt", v), error);
    TempFile f("emb_hdr.txt");
    {
        std::ofstream out(f.path);
        out << "not a header\n";
    }
    CHECK_THROWS_AS(load_pretrained(f.path, v), error);
}

TEST_CASE("embeddings round-trip through save and load") {
    auto v = small_vocab();
    Rng rng(11, Stream::init);
    auto m = init_random(v, 6, rng);
    TempFile f("emb_rt.txt");
    save_embeddings(f.path, v, m);
    auto back = load_pretrained(f.path, v);
    CHECK(back.coverage == Catch::Approx(1.0));
    for (std::size_t r = 2; r < v.size(); ++r)
        for (std::size_t c = 0; c < 6; ++c)
            CHECK(back.table.data()[r * 6 + c] ==
                  Catch::Approx(m.table.data()[r * 6 + c]).margin(1e-6));
}

TEST_CASE("negative sampler favors frequent tokens") {
    NegativeSampler s({0, 0, 1000, 10, 10}, 0.75);
    Rng rng(1, Stream::negative_sampling);
    std::vector<std::size_t> hits(5, 0);
    for (int i = 0; i < 20000; ++i) ++hits[s.draw(rng)];
    CHECK(hits[0] == 0);
    CHECK(hits[1] == 0);
    CHECK(hits[2] > hits[3]);
    CHECK(hits[2] > hits[4]);
    // alpha 0.75 flattens: 1000^0.75 / 10^0.75 = 100^0.75 ~ 31.6
    const double ratio = static_cast<double>(hits[2]) / std::max<std::size_t>(hits[3], 1);
    CHECK(ratio > 10.0);
    CHECK(ratio < 100.0);
}

TEST_CASE("skipgram training pulls co-occurring tokens together") {
    // two disjoint topics; within-topic similarity should beat cross-topic
    std::vector<std::vector<std::string>> corpus;
    for (int i = 0; i < 50; ++i) {
        corpus.push_back({"red", "green", "blue", "red", "green"});
        corpus.push_back({"one", "two", "three", "one", "two"});
    }
    std::unordered_map<std::string, std::size_t> counts;
    for (const auto& s : corpus)
        for (const auto& t : s) ++counts[t];
    auto vocab = Vocabulary::build(counts, 2);

    SkipGramConfig cfg;
    cfg.dim = 16;
    cfg.window = 2;
    cfg.negatives = 3;
    cfg.iterations = 40000;
    auto res = train_skipgram(corpus, vocab, cfg, Rng(42, Stream::misc));
    CHECK(res.embeddings.table.shape() == Shape{vocab.size(), 16});
    REQUIRE(res.window_losses.size() == 40);

    const float* tbl = res.embeddings.table.data().data();
    const std::size_t d = 16;
    auto vec = [&](const std::string& t) { return tbl + vocab.lookup(t) * d; };
    const double within = cosine(vec("red"), vec("green"), d);
    const double across = cosine(vec("red"), vec("two"), d);
    CHECK(within > across);

    // loss trends down: late windows below early windows
    const double early = (res.window_losses[0] + res.window_losses[1]) / 2;
    const double late = (res.window_losses[38] + res.window_losses[39]) / 2;
    CHECK(late < early);
}

TEST_CASE("skipgram is deterministic in the seed") {
    std::vector<std::vector<std::string>> corpus(20, {"aa", "bb", "cc"});
    std::unordered_map<std::string, std::size_t> counts{{"aa", 20}, {"bb", 20}, {"cc", 20}};
    auto vocab = Vocabulary::build(counts, 2);
    SkipGramConfig cfg;
    cfg.dim = 8;
    cfg.iterations = 2000;
    auto a = train_skipgram(corpus, vocab, cfg, Rng(7, Stream::misc));
    auto b = train_skipgram(corpus, vocab, cfg, Rng(7, Stream::misc));
    CHECK(a.embeddings.table.data() == b.embeddings.table.data());
    auto c = train_skipgram(corpus, vocab, cfg, Rng(8, Stream::misc));
    CHECK(a.embeddings.table.data() != c.embeddings.table.data());
}

TEST_CASE("skipgram with zero iterations returns the initialization") {
    std::vector<std::vector<std::string>> corpus(5, {"aa", "bb"});
    std::unordered_map<std::string, std::size_t> counts{{"aa", 5}, {"bb", 5}};
    auto vocab = Vocabulary::build(counts, 2);
    SkipGramConfig cfg;
    cfg.dim = 4;
    cfg.iterations = 0;
    auto res = train_skipgram(corpus, vocab, cfg, Rng(1, Stream::misc));
    CHECK(res.window_losses.empty());
    bool nonzero = false;
    for (std::size_t c = 4; c < res.embeddings.table.data().size(); ++c)
        if (res.embeddings.table.data()[c] != 0.0f) nonzero = true;
    CHECK(nonzero);
}

TEST_CASE("skipgram rejects a corpus without usable pairs") {
    std::unordered_map<std::string, std::size_t> counts{{"aa", 5}};
    auto vocab = Vocabulary::build(counts, 2);
    std::vector<std::vector<std::string>> corpus{{"aa"}, {"zz", "yy"}};
    SkipGramConfig cfg;
    cfg.dim = 4;
    CHECK_THROWS_AS(train_skipgram(corpus, vocab, cfg, Rng(1, Stream::misc)), error);
    CHECK_THROWS_AS(train_skipgram({}, vocab, cfg, Rng(1, Stream::misc)), error);
}
