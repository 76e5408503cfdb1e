#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mcm/embedding.hpp"
#include "mcm/rng.hpp"

namespace mcm {

struct SkipGramConfig {
    std::size_t dim = 300;
    std::size_t window = 5;
    std::size_t negatives = 5;
    std::size_t iterations = 500000;  // one center-context pair per iteration
    double lr_start = 0.025;          // decays linearly to lr_start/100
    double unigram_exponent = 0.75;
    std::size_t min_freq = 2;

    void validate() const {
        if (window < 1) throw error("skipgram: window must be >= 1");
        if (negatives < 1) throw error("skipgram: negatives must be >= 1");
        if (dim == 0) throw error("skipgram: dimension must be positive");
    }
};

// Cumulative unigram^alpha table for negative-sample draws.
class NegativeSampler {
public:
    NegativeSampler(const std::vector<std::size_t>& counts, double alpha) {
        cum_.reserve(counts.size());
        double acc = 0.0;
        for (std::size_t c : counts) {
            acc += std::pow(static_cast<double>(c), alpha);
            cum_.push_back(acc);
        }
        total_ = acc;
    }

    std::size_t draw(Rng& rng) const {
        const double u = rng.next_double() * total_;
        const auto it = std::lower_bound(cum_.begin(), cum_.end(), u);
        return static_cast<std::size_t>(it - cum_.begin());
    }

private:
    std::vector<double> cum_;
    double total_ = 0.0;
};

struct SkipGramResult {
    EmbeddingMatrix embeddings;
    std::vector<double> window_losses;  // mean loss per 1000-iteration window
};

// Skip-gram with negative sampling over tokenized sentences. One iteration
// is one positive (center, context) update plus cfg.negatives negatives.
// Returns the input-side vectors.
inline SkipGramResult train_skipgram(const std::vector<std::vector<std::string>>& sentences,
                                     const Vocabulary& vocab, const SkipGramConfig& cfg,
                                     Rng rng) {
    cfg.validate();
    if (sentences.empty()) throw error("skipgram: empty corpus");
    const std::size_t v = vocab.size();
    const std::size_t d = cfg.dim;

    // encoded sentences, dropping tokens outside the vocabulary
    std::vector<std::vector<std::size_t>> enc;
    std::vector<std::size_t> counts(v, 0);
    for (const auto& s : sentences) {
        std::vector<std::size_t> row;
        for (const auto& t : s) {
            if (!vocab.contains(t)) continue;
            const std::size_t idx = vocab.lookup(t);
            if (idx < 2) continue;
            row.push_back(idx);
            ++counts[idx];
        }
        if (row.size() >= 2) enc.push_back(std::move(row));
    }
    if (enc.empty())
        throw error("skipgram: no sentence yields a (center, context) pair "
                    "within the window");

    NegativeSampler sampler(counts, cfg.unigram_exponent);

    Rng init_rng = rng.fork(static_cast<std::uint64_t>(Stream::init));
    Rng pick_rng = rng.fork(static_cast<std::uint64_t>(Stream::shuffle));
    Rng neg_rng = rng.fork(static_cast<std::uint64_t>(Stream::negative_sampling));

    EmbeddingMatrix m;
    m.dim = d;
    m.kind = EmbeddingKind::Multilingual;
    m.trainable = true;
    m.table = Tensor::zeros({v, d}, false);
    for (std::size_t r = 1; r < v; ++r)
        for (std::size_t c = 0; c < d; ++c)
            m.table.data()[r * d + c] =
                init_rng.uniform(-0.5f, 0.5f) / static_cast<float>(d);
    std::vector<float> out_vecs(v * d, 0.0f);
    float* in = m.table.data().data();

    SkipGramResult result;
    double window_loss = 0.0;
    std::size_t window_n = 0;
    std::vector<float> acc(d);

    for (std::size_t it = 0; it < cfg.iterations; ++it) {
        const double lr = std::max(
            cfg.lr_start * (1.0 - static_cast<double>(it) /
                                      static_cast<double>(cfg.iterations)),
            cfg.lr_start / 100.0);

        const auto& sent = enc[pick_rng.next_below(enc.size())];
        const std::size_t ci = pick_rng.next_below(sent.size());
        const std::size_t center = sent[ci];
        const std::size_t radius = 1 + pick_rng.next_below(cfg.window);
        const std::size_t lo = ci >= radius ? ci - radius : 0;
        const std::size_t hi = std::min(sent.size() - 1, ci + radius);
        // pick one context position within the sampled radius
        std::vector<std::size_t> ctx;
        for (std::size_t p = lo; p <= hi; ++p)
            if (p != ci) ctx.push_back(sent[p]);
        if (ctx.empty()) continue;
        const std::size_t context = ctx[pick_rng.next_below(ctx.size())];

        std::fill(acc.begin(), acc.end(), 0.0f);
        float* vin = in + center * d;
        double loss = 0.0;
        for (std::size_t k = 0; k <= cfg.negatives; ++k) {
            std::size_t target;
            float label;
            if (k == 0) {
                target = context;
                label = 1.0f;
            } else {
                target = sampler.draw(neg_rng);
                if (target == context) continue;
                label = 0.0f;
            }
            float* vout = out_vecs.data() + target * d;
            double dot = 0.0;
            for (std::size_t c = 0; c < d; ++c) dot += vin[c] * vout[c];
            const double sig = 1.0 / (1.0 + std::exp(-dot));
            loss -= label > 0.5f ? std::log(std::max(sig, 1e-12))
                                 : std::log(std::max(1.0 - sig, 1e-12));
            const float g = static_cast<float>((label - sig) * lr);
            for (std::size_t c = 0; c < d; ++c) {
                acc[c] += g * vout[c];
                vout[c] += g * vin[c];
            }
        }
        for (std::size_t c = 0; c < d; ++c) vin[c] += acc[c];

        window_loss += loss;
        ++window_n;
        if (window_n == 1000) {
            result.window_losses.push_back(window_loss / 1000.0);
            window_loss = 0.0;
            window_n = 0;
        }
    }
    if (window_n > 0)
        result.window_losses.push_back(window_loss / static_cast<double>(window_n));
    result.embeddings = std::move(m);
    return result;
}

inline double cosine(const float* a, const float* b, std::size_t d) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace mcm
