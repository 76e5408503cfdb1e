#pragma once

#include <memory>
#include <string>
#include <vector>

#include "mcm/data.hpp"
#include "mcm/embedding.hpp"
#include "mcm/layers.hpp"
#include "mcm/rng.hpp"
#include "mcm/tensor.hpp"

namespace mcm {

struct McMConfig {
    std::size_t filters = 300;
    std::size_t kernel1 = 1, kernel2 = 2;
    std::size_t lstm_units = 300;
    std::size_t dense1 = 128, dense2 = 64;       // learner head widths
    std::size_t disc_dense1 = 128, disc_dense2 = 64;
    double dropout = 0.5;
    double aux_weight = 1.0;  // lambda on the intermediate-supervision losses
    std::size_t classes = 3;

    void validate() const {
        if (filters == 0 || lstm_units == 0 || dense1 == 0 || dense2 == 0 ||
            disc_dense1 == 0 || disc_dense2 == 0)
            throw error("mcm config: all widths must be positive");
        if (dropout < 0.0 || dropout >= 1.0)
            throw error("mcm config: dropout must lie in [0,1)");
        if (aux_weight < 0.0) throw error("mcm config: aux weight must be >= 0");
        if (classes < 2) throw error("mcm config: need at least 2 classes");
    }
};

template <class T>
struct ModelOutputT {
    TensorT<T> final_probs;
    std::vector<TensorT<T>> aux_probs;  // one per cascade; empty for baselines
};

// Common surface for McM and the baselines, so train/eval code is shared.
template <class T>
class SequenceModelT {
public:
    virtual ~SequenceModelT() = default;
    virtual ModelOutputT<T> forward(TapeT<T>& tape, const EncodedBatch& batch,
                                    Mode mode, Rng& dropout_rng) = 0;
    virtual TensorT<T> loss(TapeT<T>& tape, const ModelOutputT<T>& out,
                            const std::vector<std::size_t>& labels) = 0;
    virtual NamedParams<T> named_parameters() const = 0;
    // mutable non-trainable state (batch-norm running statistics)
    virtual std::vector<std::pair<std::string, std::vector<T>*>> named_buffers() = 0;
    virtual std::string kind() const = 0;
};

inline std::vector<std::size_t> predict_classes_from(const std::vector<float>& probs,
                                                     std::size_t classes) {
    std::vector<std::size_t> out(probs.size() / classes);
    for (std::size_t r = 0; r < out.size(); ++r) {
        std::size_t best = 0;
        float bv = probs[r * classes];
        for (std::size_t c = 1; c < classes; ++c)
            if (probs[r * classes + c] > bv) {  // ties keep the lowest index
                bv = probs[r * classes + c];
                best = c;
            }
        out[r] = best;
    }
    return out;
}

template <class T>
std::vector<std::size_t> predict(const ModelOutputT<T>& out) {
    const std::size_t classes = out.final_probs.shape().back();
    std::vector<float> p(out.final_probs.data().begin(), out.final_probs.data().end());
    return predict_classes_from(p, classes);
}

// dense(d1)+ReLU -> dropout -> batchnorm -> dense(d2)+ReLU -> features,
// with a zero-initialized softmax classifier on top. Shared by all three
// cascades and the discriminator.
template <class T>
struct FeedForwardHeadT {
    DenseT<T> fc1, fc2, clf;
    BatchNormT<T> bn;
    double dropout_rate = 0.5;

    void init(std::size_t in, std::size_t d1, std::size_t d2, std::size_t classes,
              double rate, Rng& rng) {
        fc1.init(in, d1, rng);
        fc2.init(d1, d2, rng);
        clf.init_zero(d2, classes);
        bn.init(d1);
        dropout_rate = rate;
    }

    struct Out {
        TensorT<T> features, probs;
    };

    Out forward(TapeT<T>& tape, const TensorT<T>& x, Mode mode, Rng& rng) {
        auto h = relu(tape, fc1.forward(tape, x));
        h = dropout(tape, h, dropout_rate, mode, rng);
        h = bn.forward(tape, h, mode);
        auto features = relu(tape, fc2.forward(tape, h));
        auto probs = softmax(tape, clf.forward(tape, features));
        return {features, probs};
    }

    void collect(const std::string& prefix, NamedParams<T>& out) const {
        fc1.collect(prefix + ".fc1", out);
        fc2.collect(prefix + ".fc2", out);
        clf.collect(prefix + ".clf", out);
        bn.collect(prefix + ".bn", out);
    }
    void buffers(const std::string& prefix,
                 std::vector<std::pair<std::string, std::vector<T>*>>& out) {
        out.emplace_back(prefix + ".bn.running_mean", &bn.running_mean);
        out.emplace_back(prefix + ".bn.running_var", &bn.running_var);
    }
};

// The multi-cascaded model: stacked-CNN, stacked-LSTM, and LSTM cascades
// with intermediate supervision, aggregated by a discriminator network.
template <class T>
class McMModelT : public SequenceModelT<T> {
public:
    McMModelT(const McMConfig& cfg, TensorT<T> embedding_table, bool embedding_trainable,
              Rng init_rng)
        : cfg_(cfg), emb_(std::move(embedding_table)), emb_trainable_(embedding_trainable) {
        cfg.validate();
        const std::size_t d = emb_.shape()[1];
        emb_.node()->requires_grad = embedding_trainable;
        conv1_.init(cfg.kernel1, d, cfg.filters, init_rng);
        conv2_.init(cfg.kernel2, cfg.filters, cfg.filters, init_rng);
        slstm1_.init(d, cfg.lstm_units, init_rng);
        slstm2_.init(cfg.lstm_units, cfg.lstm_units, init_rng);
        lstm_.init(d, cfg.lstm_units, init_rng);
        head_cnn_.init(2 * cfg.filters, cfg.dense1, cfg.dense2, cfg.classes,
                       cfg.dropout, init_rng);
        head_slstm_.init(2 * cfg.lstm_units, cfg.dense1, cfg.dense2, cfg.classes,
                         cfg.dropout, init_rng);
        head_lstm_.init(cfg.lstm_units, cfg.dense1, cfg.dense2, cfg.classes,
                        cfg.dropout, init_rng);
        disc_.init(3 * cfg.dense2, cfg.disc_dense1, cfg.disc_dense2, cfg.classes,
                   cfg.dropout, init_rng);
    }

    ModelOutputT<T> forward(TapeT<T>& tape, const EncodedBatch& batch, Mode mode,
                            Rng& rng) override {
        auto embedded = embedding_lookup(tape, batch.indices, batch.batch, batch.len, emb_);
        auto c1 = stacked_cnn_learner(tape, embedded, batch.mask, mode, rng);
        auto c2 = stacked_lstm_learner(tape, embedded, batch.mask, mode, rng);
        auto c3 = lstm_learner(tape, embedded, batch.mask, mode, rng);
        auto final_probs = discriminator(tape, c1.features, c2.features, c3.features,
                                         mode, rng);
        ModelOutputT<T> out;
        out.final_probs = final_probs;
        out.aux_probs = {c1.probs, c2.probs, c3.probs};
        return out;
    }

    // conv(k1) -> ReLU -> conv(k2) -> ReLU -> [max-pool || avg-pool] -> head
    typename FeedForwardHeadT<T>::Out stacked_cnn_learner(TapeT<T>& tape,
                                                          const TensorT<T>& embedded,
                                                          const SequenceMask& mask,
                                                          Mode mode, Rng& rng) {
        auto h = relu(tape, conv1_.forward(tape, embedded));
        h = relu(tape, conv2_.forward(tape, h));
        auto pooled = concat_cols<T>(
            tape, {global_max_pool(tape, h, mask), global_avg_pool(tape, h, mask)});
        return head_cnn_.forward(tape, pooled, mode, rng);
    }

    typename FeedForwardHeadT<T>::Out stacked_lstm_learner(TapeT<T>& tape,
                                                           const TensorT<T>& embedded,
                                                           const SequenceMask& mask,
                                                           Mode mode, Rng& rng) {
        auto h = slstm1_.forward(tape, embedded, mask, true);
        h = slstm2_.forward(tape, h, mask, true);
        auto pooled = concat_cols<T>(
            tape, {global_max_pool(tape, h, mask), global_avg_pool(tape, h, mask)});
        return head_slstm_.forward(tape, pooled, mode, rng);
    }

    // Last-true-token encoding; no pooling over time.
    typename FeedForwardHeadT<T>::Out lstm_learner(TapeT<T>& tape,
                                                   const TensorT<T>& embedded,
                                                   const SequenceMask& mask, Mode mode,
                                                   Rng& rng) {
        auto h = lstm_.forward(tape, embedded, mask, false);
        return head_lstm_.forward(tape, h, mode, rng);
    }

    TensorT<T> discriminator(TapeT<T>& tape, const TensorT<T>& f1, const TensorT<T>& f2,
                             const TensorT<T>& f3, Mode mode, Rng& rng) {
        auto x = concat_cols<T>(tape, {f1, f2, f3});
        return disc_.forward(tape, x, mode, rng).probs;
    }

    // CE(final) + lambda * sum of cascade CEs.
    TensorT<T> loss(TapeT<T>& tape, const ModelOutputT<T>& out,
                    const std::vector<std::size_t>& labels) override {
        auto total = cross_entropy(tape, out.final_probs, labels);
        if (cfg_.aux_weight > 0.0) {
            for (const auto& aux : out.aux_probs) {
                auto l = cross_entropy(tape, aux, labels);
                total = add(tape, total, scale(tape, l, static_cast<T>(cfg_.aux_weight)));
            }
        }
        return total;
    }

    NamedParams<T> named_parameters() const override {
        NamedParams<T> p;
        if (emb_trainable_) p.emplace_back("embedding.table", emb_);
        conv1_.collect("cnn.conv1", p);
        conv2_.collect("cnn.conv2", p);
        slstm1_.collect("slstm.l1", p);
        slstm2_.collect("slstm.l2", p);
        lstm_.collect("lstm.l1", p);
        head_cnn_.collect("cnn.head", p);
        head_slstm_.collect("slstm.head", p);
        head_lstm_.collect("lstm.head", p);
        disc_.collect("disc", p);
        return p;
    }

    std::vector<std::pair<std::string, std::vector<T>*>> named_buffers() override {
        std::vector<std::pair<std::string, std::vector<T>*>> b;
        if (!emb_trainable_) b.emplace_back("embedding.frozen", &emb_.data());
        head_cnn_.buffers("cnn.head", b);
        head_slstm_.buffers("slstm.head", b);
        head_lstm_.buffers("lstm.head", b);
        disc_.buffers("disc", b);
        return b;
    }

    std::string kind() const override { return "mcm"; }
    const McMConfig& config() const { return cfg_; }
    const TensorT<T>& embedding_table() const { return emb_; }

private:
    McMConfig cfg_;
    TensorT<T> emb_;
    bool emb_trainable_;
    Conv1DT<T> conv1_, conv2_;
    LSTMT<T> slstm1_, slstm2_, lstm_;
    FeedForwardHeadT<T> head_cnn_, head_slstm_, head_lstm_;
    FeedForwardHeadT<T> disc_;
};

// ---- baselines ----

// Two parallel convolution widths with global max-pooling and a dense layer.
template <class T>
class ConvNetBaselineT : public SequenceModelT<T> {
public:
    ConvNetBaselineT(TensorT<T> embedding_table, bool trainable, std::size_t classes,
                     Rng init_rng, std::size_t filters = 100, std::size_t hidden = 128)
        : emb_(std::move(embedding_table)) {
        emb_.node()->requires_grad = trainable;
        emb_trainable_ = trainable;
        const std::size_t d = emb_.shape()[1];
        conv3_.init(3, d, filters, init_rng);
        conv4_.init(4, d, filters, init_rng);
        fc_.init(2 * filters, hidden, init_rng);
        clf_.init_zero(hidden, classes);
    }

    ModelOutputT<T> forward(TapeT<T>& tape, const EncodedBatch& batch, Mode mode,
                            Rng& rng) override {
        (void)mode;
        (void)rng;
        auto x = embedding_lookup(tape, batch.indices, batch.batch, batch.len, emb_);
        auto a = global_max_pool(tape, relu(tape, conv3_.forward(tape, x)), batch.mask);
        auto b = global_max_pool(tape, relu(tape, conv4_.forward(tape, x)), batch.mask);
        auto h = relu(tape, fc_.forward(tape, concat_cols<T>(tape, {a, b})));
        ModelOutputT<T> out;
        out.final_probs = softmax(tape, clf_.forward(tape, h));
        return out;
    }

    TensorT<T> loss(TapeT<T>& tape, const ModelOutputT<T>& out,
                    const std::vector<std::size_t>& labels) override {
        return cross_entropy(tape, out.final_probs, labels);
    }

    NamedParams<T> named_parameters() const override {
        NamedParams<T> p;
        if (emb_trainable_) p.emplace_back("embedding.table", emb_);
        conv3_.collect("conv3", p);
        conv4_.collect("conv4", p);
        fc_.collect("fc", p);
        clf_.collect("clf", p);
        return p;
    }
    std::vector<std::pair<std::string, std::vector<T>*>> named_buffers() override {
        std::vector<std::pair<std::string, std::vector<T>*>> b;
        if (!emb_trainable_) b.emplace_back("embedding.frozen", &emb_.data());
        return b;
    }
    std::string kind() const override { return "convnet"; }

private:
    TensorT<T> emb_;
    bool emb_trainable_;
    Conv1DT<T> conv3_, conv4_;
    DenseT<T> fc_, clf_;
};

// Single LSTM with masked additive attention over the hidden states.
template <class T>
class AttentionLstmBaselineT : public SequenceModelT<T> {
public:
    AttentionLstmBaselineT(TensorT<T> embedding_table, bool trainable,
                           std::size_t classes, Rng init_rng, std::size_t units = 300,
                           std::size_t attn = 64)
        : emb_(std::move(embedding_table)), units_(units) {
        emb_.node()->requires_grad = trainable;
        emb_trainable_ = trainable;
        const std::size_t d = emb_.shape()[1];
        lstm_.init(d, units, init_rng);
        score1_.init(units, attn, init_rng);
        score2_.init(attn, 1, init_rng);
        clf_.init_zero(units, classes);
    }

    ModelOutputT<T> forward(TapeT<T>& tape, const EncodedBatch& batch, Mode mode,
                            Rng& rng) override {
        (void)mode;
        (void)rng;
        auto x = embedding_lookup(tape, batch.indices, batch.batch, batch.len, emb_);
        auto h = lstm_.forward(tape, x, batch.mask, true);  // B x L x U
        // additive attention scores per position
        auto h2d = reshape_rows(tape, h);  // (B*L) x U view
        auto s = score2_.forward(tape, tanh_op(tape, score1_.forward(tape, h2d)));
        auto ctx = attention_pool(tape, h, s, batch.mask);
        ModelOutputT<T> out;
        out.final_probs = softmax(tape, clf_.forward(tape, ctx));
        return out;
    }

    TensorT<T> loss(TapeT<T>& tape, const ModelOutputT<T>& out,
                    const std::vector<std::size_t>& labels) override {
        return cross_entropy(tape, out.final_probs, labels);
    }

    NamedParams<T> named_parameters() const override {
        NamedParams<T> p;
        if (emb_trainable_) p.emplace_back("embedding.table", emb_);
        lstm_.collect("lstm", p);
        score1_.collect("attn.score1", p);
        score2_.collect("attn.score2", p);
        clf_.collect("clf", p);
        return p;
    }
    std::vector<std::pair<std::string, std::vector<T>*>> named_buffers() override {
        std::vector<std::pair<std::string, std::vector<T>*>> b;
        if (!emb_trainable_) b.emplace_back("embedding.frozen", &emb_.data());
        return b;
    }
    std::string kind() const override { return "attention_lstm"; }

    // attention weights of the most recent forward, one row per example
    const std::vector<std::vector<T>>& last_attention() const { return last_attn_; }

private:
    // {B,L,U} -> {B*L,U} without copying semantics beyond the node wrapper
    static TensorT<T> reshape_rows(TapeT<T>& tape, const TensorT<T>& x) {
        const std::size_t b = x.shape()[0], l = x.shape()[1], u = x.shape()[2];
        auto node = detail::make_node<T>({b * l, u}, x.data(), "reshape", {x.ptr()});
        if (node->requires_grad) {
            node->backward_fn = [](NodeT<T>& self) {
                auto& p = *self.parents[0];
                p.ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i)
                    p.grad[i] += self.grad[i];
            };
        }
        return tape.record(std::move(node));
    }

    // weights = softmax of scores over unmasked steps; context = sum w_t h_t
    TensorT<T> attention_pool(TapeT<T>& tape, const TensorT<T>& h, const TensorT<T>& s,
                              const SequenceMask& mask) {
        const std::size_t b = h.shape()[0], l = h.shape()[1], u = h.shape()[2];
        auto weights = std::make_shared<std::vector<T>>(b * l, T(0));
        last_attn_.assign(b, {});
        for (std::size_t bi = 0; bi < b; ++bi) {
            const std::size_t n = mask.lengths[bi];
            T mx = s.data()[bi * l];
            for (std::size_t t = 1; t < n; ++t)
                mx = std::max(mx, s.data()[bi * l + t]);
            T sumw = T(0);
            for (std::size_t t = 0; t < n; ++t) {
                const T w = std::exp(s.data()[bi * l + t] - mx);
                (*weights)[bi * l + t] = w;
                sumw += w;
            }
            for (std::size_t t = 0; t < n; ++t) (*weights)[bi * l + t] /= sumw;
            last_attn_[bi].assign(weights->begin() + bi * l,
                                  weights->begin() + bi * l + n);
        }
        std::vector<T> out(b * u, T(0));
        for (std::size_t bi = 0; bi < b; ++bi)
            for (std::size_t t = 0; t < mask.lengths[bi]; ++t)
                for (std::size_t c = 0; c < u; ++c)
                    out[bi * u + c] += (*weights)[bi * l + t] *
                                       h.data()[(bi * l + t) * u + c];
        auto lengths = mask.lengths;
        auto node = detail::make_node<T>({b, u}, std::move(out), "attention",
                                         {h.ptr(), s.ptr()});
        if (node->requires_grad) {
            node->backward_fn = [b, l, u, weights, lengths](NodeT<T>& self) {
                auto& ph = *self.parents[0];
                auto& ps = *self.parents[1];
                ph.ensure_grad();
                ps.ensure_grad();
                for (std::size_t bi = 0; bi < b; ++bi) {
                    const std::size_t n = lengths[bi];
                    std::vector<T> dw(n, T(0));
                    for (std::size_t t = 0; t < n; ++t) {
                        const T w = (*weights)[bi * l + t];
                        for (std::size_t c = 0; c < u; ++c) {
                            const T g = self.grad[bi * u + c];
                            ph.grad[(bi * l + t) * u + c] += w * g;
                            dw[t] += g * ph.data[(bi * l + t) * u + c];
                        }
                    }
                    T dot = T(0);
                    for (std::size_t t = 0; t < n; ++t)
                        dot += dw[t] * (*weights)[bi * l + t];
                    for (std::size_t t = 0; t < n; ++t)
                        ps.grad[bi * l + t] +=
                            (*weights)[bi * l + t] * (dw[t] - dot);
                }
            };
        }
        return tape.record(std::move(node));
    }

    TensorT<T> emb_;
    bool emb_trainable_ = true;
    std::size_t units_;
    LSTMT<T> lstm_;
    DenseT<T> score1_, score2_, clf_;
    std::vector<std::vector<T>> last_attn_;
};

// One convolution with global max-pooling straight into the classifier.
template <class T>
class SimpleConvBaselineT : public SequenceModelT<T> {
public:
    SimpleConvBaselineT(TensorT<T> embedding_table, bool trainable, std::size_t classes,
                        Rng init_rng, std::size_t filters = 100)
        : emb_(std::move(embedding_table)) {
        emb_.node()->requires_grad = trainable;
        emb_trainable_ = trainable;
        conv_.init(3, emb_.shape()[1], filters, init_rng);
        clf_.init_zero(filters, classes);
    }

    ModelOutputT<T> forward(TapeT<T>& tape, const EncodedBatch& batch, Mode mode,
                            Rng& rng) override {
        (void)mode;
        (void)rng;
        auto x = embedding_lookup(tape, batch.indices, batch.batch, batch.len, emb_);
        auto h = global_max_pool(tape, relu(tape, conv_.forward(tape, x)), batch.mask);
        ModelOutputT<T> out;
        out.final_probs = softmax(tape, clf_.forward(tape, h));
        return out;
    }

    TensorT<T> loss(TapeT<T>& tape, const ModelOutputT<T>& out,
                    const std::vector<std::size_t>& labels) override {
        return cross_entropy(tape, out.final_probs, labels);
    }

    NamedParams<T> named_parameters() const override {
        NamedParams<T> p;
        if (emb_trainable_) p.emplace_back("embedding.table", emb_);
        conv_.collect("conv", p);
        clf_.collect("clf", p);
        return p;
    }
    std::vector<std::pair<std::string, std::vector<T>*>> named_buffers() override {
        std::vector<std::pair<std::string, std::vector<T>*>> b;
        if (!emb_trainable_) b.emplace_back("embedding.frozen", &emb_.data());
        return b;
    }
    std::string kind() const override { return "simpleconv"; }

private:
    TensorT<T> emb_;
    bool emb_trainable_;
    Conv1DT<T> conv_;
    DenseT<T> clf_;
};

// Softmax over mean-pooled token vectors; the out-of-the-box probe of a
// pretrained embedding. The table itself stays frozen.
template <class T>
class EmbeddingProbeT : public SequenceModelT<T> {
public:
    EmbeddingProbeT(TensorT<T> embedding_table, std::size_t classes)
        : emb_(std::move(embedding_table)) {
        emb_.node()->requires_grad = false;
        clf_.init_zero(emb_.shape()[1], classes);
    }

    ModelOutputT<T> forward(TapeT<T>& tape, const EncodedBatch& batch, Mode mode,
                            Rng& rng) override {
        (void)mode;
        (void)rng;
        auto x = embedding_lookup(tape, batch.indices, batch.batch, batch.len, emb_);
        auto pooled = global_avg_pool(tape, x, batch.mask);
        ModelOutputT<T> out;
        out.final_probs = softmax(tape, clf_.forward(tape, pooled));
        return out;
    }

    TensorT<T> loss(TapeT<T>& tape, const ModelOutputT<T>& out,
                    const std::vector<std::size_t>& labels) override {
        return cross_entropy(tape, out.final_probs, labels);
    }

    NamedParams<T> named_parameters() const override {
        NamedParams<T> p;
        clf_.collect("clf", p);
        return p;
    }
    std::vector<std::pair<std::string, std::vector<T>*>> named_buffers() override {
        std::vector<std::pair<std::string, std::vector<T>*>> b;
        b.emplace_back("embedding.frozen", &emb_.data());
        return b;
    }
    std::string kind() const override { return "embedding_probe"; }

    std::size_t parameter_count() const {
        return clf_.w.size() + clf_.b.size();
    }

private:
    TensorT<T> emb_;
    DenseT<T> clf_;
};

using McMModel = McMModelT<float>;
using SequenceModel = SequenceModelT<float>;
using ModelOutput = ModelOutputT<float>;

inline std::vector<std::string> model_kinds() {
    return {"mcm", "convnet", "attention_lstm", "simpleconv", "embedding_probe"};
}

inline std::unique_ptr<SequenceModel> build_model(const std::string& kind,
                                                  const McMConfig& cfg,
                                                  const EmbeddingMatrix& emb,
                                                  Rng init_rng) {
    if (kind == "mcm")
        return std::make_unique<McMModel>(cfg, emb.table, emb.trainable, init_rng);
    if (kind == "convnet")
        return std::make_unique<ConvNetBaselineT<float>>(emb.table, emb.trainable,
                                                         cfg.classes, init_rng);
    if (kind == "attention_lstm")
        return std::make_unique<AttentionLstmBaselineT<float>>(
            emb.table, emb.trainable, cfg.classes, init_rng, cfg.lstm_units);
    if (kind == "simpleconv")
        return std::make_unique<SimpleConvBaselineT<float>>(emb.table, emb.trainable,
                                                            cfg.classes, init_rng);
    if (kind == "embedding_probe")
        return std::make_unique<EmbeddingProbeT<float>>(emb.table, cfg.classes);
    std::string valid;
    for (const auto& k : model_kinds()) valid += (valid.empty() ? "" : ", ") + k;
    throw error("unknown model kind \"" + kind + "\"; valid kinds: " + valid);
}

}  // namespace mcm
