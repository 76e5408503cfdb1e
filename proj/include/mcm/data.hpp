#pragma once

#include <algorithm>
#include <array>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "mcm/embedding.hpp"
#include "mcm/layers.hpp"
#include "mcm/rng.hpp"
#include "mcm/tensor.hpp"

namespace mcm {

enum class Label { Negative = 0, Positive = 1, Neutral = 2 };
inline constexpr std::size_t kNumClasses = 3;

inline const char* label_name(Label l) {
    switch (l) {
        case Label::Negative: return "negative";
        case Label::Positive: return "positive";
        case Label::Neutral: return "neutral";
    }
    return "?";
}

inline std::optional<Label> parse_label(const std::string& s) {
    if (s == "negative") return Label::Negative;
    if (s == "positive") return Label::Positive;
    if (s == "neutral") return Label::Neutral;
    return std::nullopt;
}

enum class LangTag { RomanUrdu, English, Mixed };

inline const char* lang_name(LangTag t) {
    switch (t) {
        case LangTag::RomanUrdu: return "roman-urdu";
        case LangTag::English: return "english";
        case LangTag::Mixed: return "mixed";
    }
    return "?";
}

inline std::optional<LangTag> parse_lang(const std::string& s) {
    if (s == "roman-urdu") return LangTag::RomanUrdu;
    if (s == "english") return LangTag::English;
    if (s == "mixed") return LangTag::Mixed;
    return std::nullopt;
}

struct Example {
    std::string text;
    Label label = Label::Neutral;
    std::optional<LangTag> language;
};

enum class SplitRole { Train, Test, Validation };

struct DatasetSplit {
    std::vector<Example> examples;
    SplitRole role = SplitRole::Train;

    std::array<std::size_t, kNumClasses> class_counts() const {
        std::array<std::size_t, kNumClasses> c{};
        for (const auto& e : examples) ++c[static_cast<std::size_t>(e.label)];
        return c;
    }
    std::size_t size() const { return examples.size(); }
};

struct EncodedBatch {
    std::size_t batch = 0, len = 0;
    std::vector<std::size_t> indices;  // batch x len, PAD-filled
    SequenceMask mask;
    std::vector<std::size_t> labels;
};

inline std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream is(text);
    std::string tok;
    while (is >> tok) out.push_back(tok);
    return out;
}

// TSV: label<TAB>text[<TAB>language], no header.
inline std::vector<Example> load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw error("load_dataset: cannot open " + path);
    std::vector<Example> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto tab1 = line.find('\t');
        if (tab1 == std::string::npos)
            throw error("load_dataset: line " + std::to_string(line_no) +
                        ": expected label<TAB>text");
        const std::string label_str = line.substr(0, tab1);
        const auto label = parse_label(label_str);
        if (!label)
            throw error("load_dataset: line " + std::to_string(line_no) +
                        ": unknown label \"" + label_str + "\"");
        Example e;
        e.label = *label;
        const auto tab2 = line.find('\t', tab1 + 1);
        if (tab2 == std::string::npos) {
            e.text = line.substr(tab1 + 1);
        } else {
            e.text = line.substr(tab1 + 1, tab2 - tab1 - 1);
            const std::string lang_str = line.substr(tab2 + 1);
            const auto lang = parse_lang(lang_str);
            if (!lang)
                throw error("load_dataset: line " + std::to_string(line_no) +
                            ": unknown language \"" + lang_str + "\"");
            e.language = lang;
        }
        out.push_back(std::move(e));
    }
    if (out.empty()) throw error("load_dataset: " + path + " holds no records");
    return out;
}

inline void save_dataset(const std::string& path, const std::vector<Example>& examples) {
    std::ofstream out(path);
    if (!out) throw error("save_dataset: cannot open " + path + " for writing");
    for (const auto& e : examples) {
        out << label_name(e.label) << '\t' << e.text;
        if (e.language) out << '\t' << lang_name(*e.language);
        out << '\n';
    }
}

struct PreprocessStats {
    std::size_t kept = 0;
    std::size_t dropped_single_token = 0;
};

// Lowercase, collapse whitespace, drop single-token records.
inline std::vector<Example> preprocess(const std::vector<Example>& examples,
                                       PreprocessStats* stats = nullptr) {
    std::vector<Example> out;
    out.reserve(examples.size());
    PreprocessStats st;
    for (const auto& e : examples) {
        std::string lowered = e.text;
        for (char& c : lowered)
            if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
        const auto toks = tokenize(lowered);
        if (toks.size() <= 1) {
            ++st.dropped_single_token;
            continue;
        }
        std::string joined;
        for (std::size_t i = 0; i < toks.size(); ++i) {
            if (i) joined += ' ';
            joined += toks[i];
        }
        out.push_back({std::move(joined), e.label, e.language});
        ++st.kept;
    }
    if (stats) *stats = st;
    return out;
}

// Per-class test counts by largest-remainder rounding; within-class picks
// are seeded-random.
inline std::pair<DatasetSplit, DatasetSplit> stratified_split(
    const std::vector<Example>& examples, double test_fraction, Rng& rng) {
    if (test_fraction < 0.0 || test_fraction >= 1.0)
        throw error("stratified_split: test_fraction must lie in [0,1)");
    std::array<std::vector<std::size_t>, kNumClasses> by_class;
    for (std::size_t i = 0; i < examples.size(); ++i)
        by_class[static_cast<std::size_t>(examples[i].label)].push_back(i);
    for (std::size_t c = 0; c < kNumClasses; ++c)
        if (!by_class[c].empty() && by_class[c].size() < 2)
            throw error(std::string("stratified_split: class \"") +
                        label_name(static_cast<Label>(c)) +
                        "\" has fewer than 2 examples");

    const std::size_t total_test = static_cast<std::size_t>(
        examples.size() * test_fraction + 0.5);
    // largest remainder over the exact per-class quotas
    std::array<std::size_t, kNumClasses> take{};
    std::array<double, kNumClasses> rem{};
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        const double quota = static_cast<double>(by_class[c].size()) * test_fraction;
        take[c] = static_cast<std::size_t>(quota);
        rem[c] = quota - static_cast<double>(take[c]);
        assigned += take[c];
    }
    std::vector<std::size_t> order{0, 1, 2};
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (rem[a] != rem[b]) return rem[a] > rem[b];
        return a < b;
    });
    for (std::size_t k = 0; assigned < total_test && k < order.size(); ++k) {
        ++take[order[k]];
        ++assigned;
    }

    DatasetSplit train, test;
    train.role = SplitRole::Train;
    test.role = SplitRole::Test;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        auto idx = by_class[c];
        rng.shuffle(idx.begin(), idx.end());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            if (i < take[c])
                test.examples.push_back(examples[idx[i]]);
            else
                train.examples.push_back(examples[idx[i]]);
        }
    }
    // stable presentation order regardless of shuffle internals
    auto key = [&](const Example& e) { return e.text + "\x1f" + label_name(e.label); };
    std::sort(train.examples.begin(), train.examples.end(),
              [&](const Example& a, const Example& b) { return key(a) < key(b); });
    std::sort(test.examples.begin(), test.examples.end(),
              [&](const Example& a, const Example& b) { return key(a) < key(b); });
    return {std::move(train), std::move(test)};
}

// Vocabulary from the training split only.
inline Vocabulary build_vocab(const DatasetSplit& train, std::size_t min_freq) {
    if (train.examples.empty()) throw error("build_vocab: empty training split");
    std::unordered_map<std::string, std::size_t> counts;
    for (const auto& e : train.examples)
        for (const auto& t : tokenize(e.text)) ++counts[t];
    return Vocabulary::build(counts, min_freq);
}

inline std::vector<EncodedBatch> make_batches(const DatasetSplit& split,
                                              const Vocabulary& vocab,
                                              std::size_t batch_size, std::size_t l_max,
                                              bool shuffle, Rng& rng) {
    if (batch_size < 1) throw error("make_batches: batch_size must be >= 1");
    if (l_max < 2) throw error("make_batches: L_max must be >= 2");
    std::vector<std::size_t> order(split.examples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    if (shuffle) rng.shuffle(order.begin(), order.end());

    std::vector<EncodedBatch> batches;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        const std::size_t end = std::min(order.size(), start + batch_size);
        std::vector<std::vector<std::size_t>> rows;
        EncodedBatch b;
        std::size_t maxlen = 1;
        for (std::size_t i = start; i < end; ++i) {
            const auto& e = split.examples[order[i]];
            auto idx = encode(tokenize(e.text), vocab);
            if (idx.size() > l_max) idx.resize(l_max);
            if (idx.empty())
                throw error("make_batches: empty example after encoding: \"" +
                            e.text + "\"");
            maxlen = std::max(maxlen, idx.size());
            b.mask.lengths.push_back(idx.size());
            b.labels.push_back(static_cast<std::size_t>(e.label));
            rows.push_back(std::move(idx));
        }
        b.batch = rows.size();
        b.len = maxlen;
        b.indices.assign(b.batch * maxlen, Vocabulary::kPad);
        for (std::size_t r = 0; r < rows.size(); ++r)
            std::copy(rows[r].begin(), rows[r].end(),
                      b.indices.begin() + r * maxlen);
        batches.push_back(std::move(b));
    }
    return batches;
}

struct ClassStats {
    std::map<std::string, double> class_pct;
    std::map<std::string, double> language_pct;  // empty when tags absent
};

inline ClassStats class_stats(const DatasetSplit& split) {
    if (split.examples.empty()) throw error("class_stats: empty split");
    ClassStats st;
    const double n = static_cast<double>(split.examples.size());
    const auto counts = split.class_counts();
    for (std::size_t c = 0; c < kNumClasses; ++c)
        st.class_pct[label_name(static_cast<Label>(c))] =
            100.0 * static_cast<double>(counts[c]) / n;
    std::map<std::string, std::size_t> lang_counts;
    std::size_t tagged = 0;
    for (const auto& e : split.examples)
        if (e.language) {
            ++lang_counts[lang_name(*e.language)];
            ++tagged;
        }
    if (tagged == split.examples.size()) {
        for (const auto& [k, v] : lang_counts)
            st.language_pct[k] = 100.0 * static_cast<double>(v) / n;
    }
    return st;
}

}  // namespace mcm
