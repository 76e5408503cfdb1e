#pragma once

#include <set>
#include <string>
#include <vector>

#include "mcm/data.hpp"
#include "mcm/rng.hpp"

namespace mcm {

// Deterministic synthetic corpus shaped like the MultiSenti release: 20,735
// short informal tweets, class balance 48.27/35.10/16.63% and language mix
// 46.34/2.52/51.14%. A configurable fraction of examples carry
// class-specific signal tokens; the rest are noise, so the achievable
// accuracy has a known ceiling of signal + (1-signal) * majority share.
struct SyntheticConfig {
    std::size_t total = 20735;
    // counts chosen so the class and language percentages land on the target mix at
    // two decimals
    std::size_t negative = 10008, positive = 7278, neutral = 3449;
    std::size_t roman_urdu = 9608, english = 523, mixed = 10604;
    double signal_fraction = 0.40;
    std::size_t noise_vocab = 600;
    std::size_t signal_vocab_per_class = 40;
    std::size_t min_tokens = 2, max_tokens = 12;
};

namespace detail_datagen {

inline std::vector<std::string> make_word_list(std::size_t n, Rng& rng,
                                               std::set<std::string>& used) {
    static const char* syllables[] = {"ka", "ra", "ta", "na", "mi", "zo", "lu",
                                      "sha", "be", "do", "gi", "ho", "ja", "ki",
                                      "ma", "ne", "pa", "qi", "sa", "tu"};
    constexpr std::size_t ns = sizeof(syllables) / sizeof(syllables[0]);
    std::vector<std::string> out;
    while (out.size() < n) {
        std::string w;
        const std::size_t parts = 2 + rng.next_below(3);
        for (std::size_t i = 0; i < parts; ++i) w += syllables[rng.next_below(ns)];
        if (used.insert(w).second) out.push_back(std::move(w));
    }
    return out;
}

}  // namespace detail_datagen

inline std::vector<Example> make_synthetic_multisenti(std::uint64_t seed,
                                                      SyntheticConfig cfg = {}) {
    Rng rng(seed, Stream::data);
    std::set<std::string> used;
    const auto noise = detail_datagen::make_word_list(cfg.noise_vocab, rng, used);
    std::vector<std::vector<std::string>> signal(kNumClasses);
    for (auto& s : signal)
        s = detail_datagen::make_word_list(cfg.signal_vocab_per_class, rng, used);

    std::vector<Label> labels;
    labels.insert(labels.end(), cfg.negative, Label::Negative);
    labels.insert(labels.end(), cfg.positive, Label::Positive);
    labels.insert(labels.end(), cfg.neutral, Label::Neutral);
    std::vector<LangTag> langs;
    langs.insert(langs.end(), cfg.roman_urdu, LangTag::RomanUrdu);
    langs.insert(langs.end(), cfg.english, LangTag::English);
    langs.insert(langs.end(), cfg.mixed, LangTag::Mixed);
    rng.shuffle(labels.begin(), labels.end());
    rng.shuffle(langs.begin(), langs.end());

    std::vector<Example> out;
    out.reserve(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const std::size_t len =
            cfg.min_tokens + rng.next_below(cfg.max_tokens - cfg.min_tokens + 1);
        const bool informative = rng.bernoulli(cfg.signal_fraction);
        const auto& sig = signal[static_cast<std::size_t>(labels[i])];
        const std::size_t n_signal = informative ? (len + 2) / 3 : 0;
        std::vector<std::string> toks;
        for (std::size_t t = 0; t < len; ++t) {
            if (t < n_signal)
                toks.push_back(sig[rng.next_below(sig.size())]);
            else
                toks.push_back(noise[rng.next_below(noise.size())]);
        }
        rng.shuffle(toks.begin(), toks.end());
        std::string text;
        for (std::size_t t = 0; t < toks.size(); ++t) {
            if (t) text += ' ';
            text += toks[t];
        }
        out.push_back({std::move(text), labels[i], langs[i % langs.size()]});
    }
    return out;
}

}  // namespace mcm
