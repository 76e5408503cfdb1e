#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "mcm/rng.hpp"
#include "mcm/tensor.hpp"

namespace mcm {

// Token <-> dense index map. Index 0 is PAD, index 1 is UNK; corpus tokens
// start at 2.
class Vocabulary {
public:
    static constexpr std::size_t kPad = 0;
    static constexpr std::size_t kUnk = 1;

    Vocabulary() : tokens_{"<pad>", "<unk>"} {
        index_["<pad>"] = kPad;
        index_["<unk>"] = kUnk;
    }

    // Counts must come from the training split only.
    static Vocabulary build(const std::unordered_map<std::string, std::size_t>& counts,
                            std::size_t min_freq) {
        Vocabulary v;
        v.min_freq_ = min_freq;
        // deterministic order: frequency desc, then lexicographic
        std::vector<std::pair<std::string, std::size_t>> items(counts.begin(),
                                                               counts.end());
        std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        for (const auto& [tok, n] : items)
            if (n >= min_freq) v.add(tok);
        return v;
    }

    std::size_t add(const std::string& token) {
        auto it = index_.find(token);
        if (it != index_.end()) return it->second;
        const std::size_t idx = tokens_.size();
        tokens_.push_back(token);
        index_[token] = idx;
        return idx;
    }

    std::size_t lookup(const std::string& token) const {
        auto it = index_.find(token);
        return it == index_.end() ? kUnk : it->second;
    }

    bool contains(const std::string& token) const { return index_.count(token) > 0; }
    const std::string& token(std::size_t idx) const { return tokens_.at(idx); }
    std::size_t size() const { return tokens_.size(); }
    std::size_t min_freq() const { return min_freq_; }
    const std::vector<std::string>& tokens() const { return tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::size_t> index_;
    std::size_t min_freq_ = 1;
};

inline std::vector<std::size_t> encode(const std::vector<std::string>& tokens,
                                       const Vocabulary& vocab) {
    std::vector<std::size_t> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(vocab.lookup(t));
    return out;
}

enum class EmbeddingKind { Random, Pretrained, Multilingual, CharHash };

inline const char* embedding_kind_name(EmbeddingKind k) {
    switch (k) {
        case EmbeddingKind::Random: return "random";
        case EmbeddingKind::Pretrained: return "pretrained";
        case EmbeddingKind::Multilingual: return "multilingual";
        case EmbeddingKind::CharHash: return "char-hash";
    }
    return "?";
}

// V x d vector table. Row 0 (PAD) is all-zero and never updated.
struct EmbeddingMatrix {
    Tensor table;  // {V, d}
    std::size_t dim = 0;
    bool trainable = true;
    EmbeddingKind kind = EmbeddingKind::Random;
    double coverage = 1.0;  // fraction of vocab rows found when loading a file

    std::size_t vocab_size() const { return table.shape()[0]; }
};

// Deterministic unit-norm vector from a token's character 3-grams. Tokens
// sharing 3-grams get correlated vectors, which is the whole point of the
// fallback: misspellings land near their neighbors.
inline std::vector<float> char_hash_embed(const std::string& token, std::size_t d,
                                          std::uint64_t seed) {
    if (token.empty()) throw error("char_hash_embed: empty token");
    const std::string padded = "^" + token + "$";
    std::vector<float> v(d, 0.0f);
    const std::size_t n = padded.size();
    for (std::size_t i = 0; i + 3 <= n; ++i) {
        // FNV-1a over the 3-gram
        std::uint64_t h = 1469598103934665603ULL ^ seed;
        for (std::size_t j = i; j < i + 3; ++j) {
            h ^= static_cast<unsigned char>(padded[j]);
            h *= 1099511628211ULL;
        }
        Rng basis(h, Stream::init);
        for (std::size_t k = 0; k < d; ++k)
            v[k] += basis.uniform(-1.0f, 1.0f);
    }
    double norm = 0.0;
    for (float x : v) norm += static_cast<double>(x) * x;
    norm = std::sqrt(norm);
    if (norm > 0.0)
        for (float& x : v) x = static_cast<float>(x / norm);
    return v;
}

// Rows i.i.d. uniform in [-0.05, 0.05]; PAD row zeroed.
inline EmbeddingMatrix init_random(const Vocabulary& vocab, std::size_t d, Rng& rng,
                                   bool trainable = true) {
    if (vocab.size() < 2) throw error("init_random: vocabulary too small");
    EmbeddingMatrix m;
    m.dim = d;
    m.kind = EmbeddingKind::Random;
    m.trainable = trainable;
    m.table = Tensor::zeros({vocab.size(), d}, trainable);
    for (std::size_t r = 1; r < vocab.size(); ++r)
        for (std::size_t c = 0; c < d; ++c)
            m.table.data()[r * d + c] = rng.uniform(-0.05f, 0.05f);
    return m;
}

// Every row from the character hash; stands in for file-based contextual
// vectors when none are supplied.
inline EmbeddingMatrix init_char_hash(const Vocabulary& vocab, std::size_t d,
                                      std::uint64_t seed, bool trainable) {
    EmbeddingMatrix m;
    m.dim = d;
    m.kind = EmbeddingKind::CharHash;
    m.trainable = trainable;
    m.table = Tensor::zeros({vocab.size(), d}, trainable);
    for (std::size_t r = 1; r < vocab.size(); ++r) {
        const auto v = char_hash_embed(vocab.token(r), d, seed);
        std::copy(v.begin(), v.end(), m.table.data().begin() + r * d);
    }
    return m;
}

// Text format: header "V d", then one "token v1 ... vd" line each.
inline EmbeddingMatrix load_pretrained(const std::string& path, const Vocabulary& vocab,
                                       bool trainable = false,
                                       std::uint64_t fallback_seed = 0) {
    std::ifstream in(path);
    if (!in) throw error("load_pretrained: cannot open " + path);
    std::string header;
    if (!std::getline(in, header))
        throw error("load_pretrained: empty file " + path);
    std::istringstream hs(header);
    std::size_t file_v = 0, d = 0;
    if (!(hs >> file_v >> d) || d == 0)
        throw error("load_pretrained: bad header line in " + path);

    EmbeddingMatrix m;
    m.dim = d;
    m.kind = EmbeddingKind::Pretrained;
    m.trainable = trainable;
    m.table = Tensor::zeros({vocab.size(), d}, trainable);

    std::vector<char> found(vocab.size(), 0);
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string tok;
        ls >> tok;
        std::vector<float> vals;
        vals.reserve(d);
        float x;
        while (ls >> x) vals.push_back(x);
        if (vals.size() != d)
            throw error("load_pretrained: line " + std::to_string(line_no) + " has " +
                        std::to_string(vals.size()) + " values, expected " +
                        std::to_string(d));
        if (!vocab.contains(tok)) continue;
        const std::size_t idx = vocab.lookup(tok);
        if (idx == Vocabulary::kPad) continue;
        std::copy(vals.begin(), vals.end(), m.table.data().begin() + idx * d);
        found[idx] = 1;
    }
    std::size_t hit = 0;
    const std::size_t candidates = vocab.size() - 2;  // excluding PAD/UNK
    for (std::size_t r = 2; r < vocab.size(); ++r) {
        if (found[r]) {
            ++hit;
            continue;
        }
        const auto v = char_hash_embed(vocab.token(r), d, fallback_seed);
        std::copy(v.begin(), v.end(), m.table.data().begin() + r * d);
    }
    if (!found[Vocabulary::kUnk]) {
        const auto v = char_hash_embed("<unk>", d, fallback_seed);
        std::copy(v.begin(), v.end(), m.table.data().begin() + d);
    }
    m.coverage = candidates == 0 ? 0.0
                                 : static_cast<double>(hit) / static_cast<double>(candidates);
    return m;
}

inline void save_embeddings(const std::string& path, const Vocabulary& vocab,
                            const EmbeddingMatrix& m) {
    std::ofstream out(path);
    if (!out) throw error("save_embeddings: cannot open " + path + " for writing");
    // skip PAD/UNK rows; they are artifacts of the vocabulary, not tokens
    out << vocab.size() - 2 << ' ' << m.dim << '\n';
    out.precision(9);
    for (std::size_t r = 2; r < vocab.size(); ++r) {
        out << vocab.token(r);
        for (std::size_t c = 0; c < m.dim; ++c)
            out << ' ' << m.table.data()[r * m.dim + c];
        out << '\n';
    }
    if (!out) throw error("save_embeddings: write failure on " + path);
}

}  // namespace mcm
