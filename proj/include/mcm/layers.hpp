#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "mcm/rng.hpp"
#include "mcm/tensor.hpp"

namespace mcm {

enum class Mode { Train, Infer };

// Per-example true token counts of a padded batch. Positions at or beyond
// the length are padding and are excluded from pooling and last-state reads.
struct SequenceMask {
    std::vector<std::size_t> lengths;

    void validate(std::size_t batch, std::size_t padded_len) const {
        if (lengths.size() != batch)
            throw shape_error("mask: " + std::to_string(lengths.size()) +
                              " lengths for batch of " + std::to_string(batch));
        for (std::size_t i = 0; i < lengths.size(); ++i)
            if (lengths[i] == 0 || lengths[i] > padded_len)
                throw shape_error("mask: length " + std::to_string(lengths[i]) +
                                  " at example " + std::to_string(i) +
                                  " outside [1," + std::to_string(padded_len) + "]");
    }
};

template <class T>
using NamedParams = std::vector<std::pair<std::string, TensorT<T>>>;

namespace init {

template <class T>
void glorot_uniform(TensorT<T>& w, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const float limit = std::sqrt(6.0f / static_cast<float>(fan_in + fan_out));
    for (auto& v : w.data()) v = static_cast<T>(rng.uniform(-limit, limit));
}

}  // namespace init

// ---- embedding lookup ----

// indices: B x L token ids; table: V x d. Output B x L x d. Row 0 (PAD)
// never receives gradient.
template <class T>
TensorT<T> embedding_lookup(TapeT<T>& tape, const std::vector<std::size_t>& indices,
                            std::size_t batch, std::size_t len,
                            const TensorT<T>& table) {
    if (indices.size() != batch * len)
        throw shape_error("embedding_lookup: index count mismatch");
    const std::size_t v = table.shape()[0];
    const std::size_t d = table.shape()[1];
    for (std::size_t i = 0; i < indices.size(); ++i)
        if (indices[i] >= v)
            throw shape_error("embedding_lookup: token index " +
                              std::to_string(indices[i]) + " out of range [0," +
                              std::to_string(v) + ")");
    std::vector<T> out(batch * len * d);
    for (std::size_t i = 0; i < indices.size(); ++i)
        std::copy(table.data().begin() + indices[i] * d,
                  table.data().begin() + (indices[i] + 1) * d, out.begin() + i * d);
    auto node = detail::make_node<T>({batch, len, d}, std::move(out), "embedding",
                                     {table.ptr()});
    if (node->requires_grad) {
        node->backward_fn = [indices, d](NodeT<T>& self) {
            auto& p = *self.parents[0];
            p.ensure_grad();
            for (std::size_t i = 0; i < indices.size(); ++i) {
                if (indices[i] == 0) continue;  // PAD row stays frozen
                for (std::size_t j = 0; j < d; ++j)
                    p.grad[indices[i] * d + j] += self.grad[i * d + j];
            }
        };
    }
    return tape.record(std::move(node));
}

// ---- dense ----

template <class T>
struct DenseT {
    TensorT<T> w, b;

    void init(std::size_t in, std::size_t out, Rng& rng, bool trainable = true) {
        w = TensorT<T>::zeros({in, out}, trainable);
        b = TensorT<T>::zeros({out}, trainable);
        init::glorot_uniform(w, in, out, rng);
    }

    // Zero weights keep initial logits at zero; used for classifier heads.
    void init_zero(std::size_t in, std::size_t out) {
        w = TensorT<T>::zeros({in, out}, true);
        b = TensorT<T>::zeros({out}, true);
    }

    TensorT<T> forward(TapeT<T>& tape, const TensorT<T>& x) const {
        return add_bias(tape, matmul(tape, x, w), b);
    }

    void collect(const std::string& prefix, NamedParams<T>& out) const {
        out.emplace_back(prefix + ".w", w);
        out.emplace_back(prefix + ".b", b);
    }
};

// ---- 1-D convolution, stride 1, same padding ----

// Same padding: window at position l covers x[l - (k-1)/2 ... ], so even k
// pads on the right only.
template <class T>
struct Conv1DT {
    std::size_t kernel = 1, in_channels = 0, filters = 0;
    TensorT<T> w;  // {k, in_channels, filters}
    TensorT<T> b;  // {filters}

    void init(std::size_t k, std::size_t in, std::size_t f, Rng& rng) {
        if (f == 0 || k == 0) throw shape_error("conv1d: k and filters must be positive");
        kernel = k;
        in_channels = in;
        filters = f;
        w = TensorT<T>::zeros({k, in, f}, true);
        b = TensorT<T>::zeros({f}, true);
        init::glorot_uniform(w, k * in, f, rng);
    }

    TensorT<T> forward(TapeT<T>& tape, const TensorT<T>& x) const {
        if (x.shape().size() != 3 || x.shape()[2] != in_channels)
            throw shape_error("conv1d: input " + shape_str(x.shape()) +
                              " does not match in_channels " +
                              std::to_string(in_channels));
        const std::size_t batch = x.shape()[0];
        const std::size_t len = x.shape()[1];
        const std::size_t d = in_channels, f = filters, k = kernel;
        const std::size_t pad_left = (k - 1) / 2;

        std::vector<T> out(batch * len * f);
        for (std::size_t bi = 0; bi < batch; ++bi)
            for (std::size_t l = 0; l < len; ++l)
                std::copy(b.data().begin(), b.data().end(),
                          out.begin() + (bi * len + l) * f);
        // One gemm per (batch element, kernel offset) over the valid rows.
        for (std::size_t bi = 0; bi < batch; ++bi) {
            for (std::size_t j = 0; j < k; ++j) {
                // output rows l where 0 <= l + j - pad_left < len
                const std::ptrdiff_t shift =
                    static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(pad_left);
                const std::size_t l0 = shift < 0 ? static_cast<std::size_t>(-shift) : 0;
                const std::size_t l1 = shift > 0 ? len - static_cast<std::size_t>(shift) : len;
                if (l0 >= l1) continue;
                const std::size_t rows = l1 - l0;
                const T* a = x.data().data() +
                             (bi * len + l0 + static_cast<std::size_t>(shift)) * d;
                const T* wj = w.data().data() + j * d * f;
                T* c = out.data() + (bi * len + l0) * f;
                detail::gemm(false, false, static_cast<int>(rows),
                             static_cast<int>(f), static_cast<int>(d), T(1), a,
                             static_cast<int>(d), wj, static_cast<int>(f), T(1), c,
                             static_cast<int>(f));
            }
        }
        auto node = detail::make_node<T>({batch, len, f}, std::move(out), "conv1d",
                                         {x.ptr(), w.ptr(), b.ptr()});
        if (node->requires_grad) {
            node->backward_fn = [batch, len, d, f, k, pad_left](NodeT<T>& self) {
                auto& px = *self.parents[0];
                auto& pw = *self.parents[1];
                auto& pb = *self.parents[2];
                if (px.requires_grad) px.ensure_grad();
                if (pw.requires_grad) pw.ensure_grad();
                if (pb.requires_grad) {
                    pb.ensure_grad();
                    for (std::size_t i = 0; i < batch * len; ++i)
                        for (std::size_t c = 0; c < f; ++c)
                            pb.grad[c] += self.grad[i * f + c];
                }
                for (std::size_t bi = 0; bi < batch; ++bi) {
                    for (std::size_t j = 0; j < k; ++j) {
                        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) -
                                                     static_cast<std::ptrdiff_t>(pad_left);
                        const std::size_t l0 =
                            shift < 0 ? static_cast<std::size_t>(-shift) : 0;
                        const std::size_t l1 =
                            shift > 0 ? len - static_cast<std::size_t>(shift) : len;
                        if (l0 >= l1) continue;
                        const std::size_t rows = l1 - l0;
                        const std::size_t xoff =
                            (bi * len + l0 + static_cast<std::size_t>(shift)) * d;
                        const T* g = self.grad.data() + (bi * len + l0) * f;
                        if (pw.requires_grad) {
                            detail::gemm(true, false, static_cast<int>(d),
                                         static_cast<int>(f), static_cast<int>(rows),
                                         T(1), px.data.data() + xoff,
                                         static_cast<int>(d), g, static_cast<int>(f),
                                         T(1), pw.grad.data() + j * d * f,
                                         static_cast<int>(f));
                        }
                        if (px.requires_grad) {
                            detail::gemm(false, true, static_cast<int>(rows),
                                         static_cast<int>(d), static_cast<int>(f),
                                         T(1), g, static_cast<int>(f),
                                         pw.data.data() + j * d * f,
                                         static_cast<int>(f), T(1),
                                         px.grad.data() + xoff, static_cast<int>(d));
                        }
                    }
                }
            };
        }
        return tape.record(std::move(node));
    }

    void collect(const std::string& prefix, NamedParams<T>& out) const {
        out.emplace_back(prefix + ".w", w);
        out.emplace_back(prefix + ".b", b);
    }
};

// ---- LSTM ----

// Standard formulation: sigmoid input/forget/output gates, tanh candidate
// and output squash. Gate order in the fused weight matrices: i, f, g, o.
template <class T>
struct LSTMT {
    std::size_t input_size = 0, units = 0;
    TensorT<T> wx;  // {D, 4U}
    TensorT<T> wh;  // {U, 4U}
    TensorT<T> b;   // {4U}

    void init(std::size_t in, std::size_t u, Rng& rng) {
        input_size = in;
        units = u;
        wx = TensorT<T>::zeros({in, 4 * u}, true);
        wh = TensorT<T>::zeros({u, 4 * u}, true);
        b = TensorT<T>::zeros({4 * u}, true);
        init::glorot_uniform(wx, in, 4 * u, rng);
        init::glorot_uniform(wh, u, 4 * u, rng);
        // forget-gate bias offset +1
        for (std::size_t j = u; j < 2 * u; ++j) b.data()[j] = T(1);
    }

    // return_sequence=true: B x L x U hidden states. Otherwise B x U, the
    // hidden state at each example's last true token.
    TensorT<T> forward(TapeT<T>& tape, const TensorT<T>& x, const SequenceMask& mask,
                       bool return_sequence) const {
        if (x.shape().size() != 3 || x.shape()[2] != input_size)
            throw shape_error("lstm: input " + shape_str(x.shape()) +
                              " does not match input size " +
                              std::to_string(input_size));
        const std::size_t batch = x.shape()[0];
        const std::size_t len = x.shape()[1];
        const std::size_t u = units;
        mask.validate(batch, len);

        const std::size_t bl = batch * len;
        // Fused input projection for all steps at once.
        std::vector<T> pre(bl * 4 * u);
        for (std::size_t i = 0; i < bl; ++i)
            std::copy(b.data().begin(), b.data().end(), pre.begin() + i * 4 * u);
        detail::gemm(false, false, static_cast<int>(bl), static_cast<int>(4 * u),
                     static_cast<int>(input_size), T(1), x.data().data(),
                     static_cast<int>(input_size), wx.data().data(),
                     static_cast<int>(4 * u), T(1), pre.data(),
                     static_cast<int>(4 * u));

        // Saved activations for backward, one B x U slab per step.
        auto saved = std::make_shared<Saved>();
        saved->gates.assign(len, std::vector<T>(batch * 4 * u));
        saved->cell.assign(len, std::vector<T>(batch * u));
        saved->tanhc.assign(len, std::vector<T>(batch * u));
        saved->hidden.assign(len, std::vector<T>(batch * u));
        saved->pre = std::move(pre);

        std::vector<T> h(batch * u, T(0)), c(batch * u, T(0));
        std::vector<T> a(batch * 4 * u);
        for (std::size_t t = 0; t < len; ++t) {
            // a = pre_t + h_{t-1} Wh
            for (std::size_t bi = 0; bi < batch; ++bi)
                std::copy(saved->pre.begin() + (bi * len + t) * 4 * u,
                          saved->pre.begin() + (bi * len + t + 1) * 4 * u,
                          a.begin() + bi * 4 * u);
            if (t > 0)
                detail::gemm(false, false, static_cast<int>(batch),
                             static_cast<int>(4 * u), static_cast<int>(u), T(1),
                             h.data(), static_cast<int>(u), wh.data().data(),
                             static_cast<int>(4 * u), T(1), a.data(),
                             static_cast<int>(4 * u));
            auto& g = saved->gates[t];
            auto& ct = saved->cell[t];
            auto& tc = saved->tanhc[t];
            for (std::size_t bi = 0; bi < batch; ++bi) {
                const T* ai = a.data() + bi * 4 * u;
                T* gi = g.data() + bi * 4 * u;
                for (std::size_t j = 0; j < u; ++j) {
                    const T ig = sigmoid(ai[j]);
                    const T fg = sigmoid(ai[u + j]);
                    const T cg = std::tanh(ai[2 * u + j]);
                    const T og = sigmoid(ai[3 * u + j]);
                    gi[j] = ig;
                    gi[u + j] = fg;
                    gi[2 * u + j] = cg;
                    gi[3 * u + j] = og;
                    const T cprev = c[bi * u + j];
                    const T cnew = fg * cprev + ig * cg;
                    c[bi * u + j] = cnew;
                    ct[bi * u + j] = cnew;
                    const T th = std::tanh(cnew);
                    tc[bi * u + j] = th;
                    h[bi * u + j] = og * th;
                }
            }
            std::copy(h.begin(), h.end(), saved->hidden[t].begin());
        }

        Shape out_shape;
        std::vector<T> out;
        if (return_sequence) {
            out_shape = {batch, len, u};
            out.resize(batch * len * u);
            for (std::size_t t = 0; t < len; ++t)
                for (std::size_t bi = 0; bi < batch; ++bi)
                    std::copy(saved->hidden[t].begin() + bi * u,
                              saved->hidden[t].begin() + (bi + 1) * u,
                              out.begin() + (bi * len + t) * u);
        } else {
            out_shape = {batch, u};
            out.resize(batch * u);
            for (std::size_t bi = 0; bi < batch; ++bi) {
                const std::size_t last = mask.lengths[bi] - 1;
                std::copy(saved->hidden[last].begin() + bi * u,
                          saved->hidden[last].begin() + (bi + 1) * u,
                          out.begin() + bi * u);
            }
        }

        auto node = detail::make_node<T>(out_shape, std::move(out), "lstm",
                                         {x.ptr(), wx.ptr(), wh.ptr(), b.ptr()});
        if (node->requires_grad) {
            const std::size_t in_size = input_size;
            const auto lengths = mask.lengths;
            node->backward_fn = [batch, len, u, in_size, saved, lengths,
                                 return_sequence](NodeT<T>& self) {
                auto& px = *self.parents[0];
                auto& pwx = *self.parents[1];
                auto& pwh = *self.parents[2];
                auto& pb = *self.parents[3];
                px.ensure_grad();
                pwx.ensure_grad();
                pwh.ensure_grad();
                pb.ensure_grad();

                std::vector<T> dh(batch * u, T(0)), dc(batch * u, T(0));
                std::vector<T> da(batch * 4 * u);
                std::vector<T> dpre(batch * len * 4 * u, T(0));
                for (std::size_t ti = len; ti-- > 0;) {
                    const std::size_t t = ti;
                    // output gradient into dh
                    if (return_sequence) {
                        for (std::size_t bi = 0; bi < batch; ++bi)
                            for (std::size_t j = 0; j < u; ++j)
                                dh[bi * u + j] += self.grad[(bi * len + t) * u + j];
                    } else {
                        for (std::size_t bi = 0; bi < batch; ++bi)
                            if (lengths[bi] - 1 == t)
                                for (std::size_t j = 0; j < u; ++j)
                                    dh[bi * u + j] += self.grad[bi * u + j];
                    }
                    const auto& g = saved->gates[t];
                    const auto& tc = saved->tanhc[t];
                    const std::vector<T>* cprev = t > 0 ? &saved->cell[t - 1] : nullptr;
                    for (std::size_t bi = 0; bi < batch; ++bi) {
                        for (std::size_t j = 0; j < u; ++j) {
                            const std::size_t idx = bi * u + j;
                            const T ig = g[bi * 4 * u + j];
                            const T fg = g[bi * 4 * u + u + j];
                            const T cg = g[bi * 4 * u + 2 * u + j];
                            const T og = g[bi * 4 * u + 3 * u + j];
                            const T th = tc[idx];
                            const T dht = dh[idx];
                            const T dct = dc[idx] + dht * og * (T(1) - th * th);
                            const T cp = cprev ? (*cprev)[idx] : T(0);
                            da[bi * 4 * u + j] = dct * cg * ig * (T(1) - ig);
                            da[bi * 4 * u + u + j] = dct * cp * fg * (T(1) - fg);
                            da[bi * 4 * u + 2 * u + j] = dct * ig * (T(1) - cg * cg);
                            da[bi * 4 * u + 3 * u + j] = dht * th * og * (T(1) - og);
                            dc[idx] = dct * fg;
                        }
                    }
                    for (std::size_t bi = 0; bi < batch; ++bi)
                        std::copy(da.begin() + bi * 4 * u, da.begin() + (bi + 1) * 4 * u,
                                  dpre.begin() + (bi * len + t) * 4 * u);
                    if (t > 0) {
                        // dWh += h_{t-1}^T da ; dh_{t-1} = da Wh^T
                        detail::gemm(true, false, static_cast<int>(u),
                                     static_cast<int>(4 * u), static_cast<int>(batch),
                                     T(1), saved->hidden[t - 1].data(),
                                     static_cast<int>(u), da.data(),
                                     static_cast<int>(4 * u), T(1), pwh.grad.data(),
                                     static_cast<int>(4 * u));
                        std::fill(dh.begin(), dh.end(), T(0));
                        detail::gemm(false, true, static_cast<int>(batch),
                                     static_cast<int>(u), static_cast<int>(4 * u),
                                     T(1), da.data(), static_cast<int>(4 * u),
                                     pwh.data.data(), static_cast<int>(4 * u), T(0),
                                     dh.data(), static_cast<int>(u));
                    }
                }
                const std::size_t bl = batch * len;
                for (std::size_t i = 0; i < bl; ++i)
                    for (std::size_t j = 0; j < 4 * u; ++j)
                        pb.grad[j] += dpre[i * 4 * u + j];
                if (pwx.requires_grad)
                    detail::gemm(true, false, static_cast<int>(in_size),
                                 static_cast<int>(4 * u), static_cast<int>(bl), T(1),
                                 px.data.data(), static_cast<int>(in_size),
                                 dpre.data(), static_cast<int>(4 * u), T(1),
                                 pwx.grad.data(), static_cast<int>(4 * u));
                if (px.requires_grad)
                    detail::gemm(false, true, static_cast<int>(bl),
                                 static_cast<int>(in_size), static_cast<int>(4 * u),
                                 T(1), dpre.data(), static_cast<int>(4 * u),
                                 pwx.data.data(), static_cast<int>(4 * u), T(1),
                                 px.grad.data(), static_cast<int>(in_size));
            };
        }
        return tape.record(std::move(node));
    }

    void collect(const std::string& prefix, NamedParams<T>& out) const {
        out.emplace_back(prefix + ".wx", wx);
        out.emplace_back(prefix + ".wh", wh);
        out.emplace_back(prefix + ".b", b);
    }

private:
    struct Saved {
        std::vector<std::vector<T>> gates, cell, tanhc, hidden;
        std::vector<T> pre;
    };
    static T sigmoid(T v) { return T(1) / (T(1) + std::exp(-v)); }
};

// ---- pooling ----

// Per-feature max over unmasked positions; gradient goes to the first
// argmax on ties.
template <class T>
TensorT<T> global_max_pool(TapeT<T>& tape, const TensorT<T>& x,
                           const SequenceMask& mask) {
    if (x.shape().size() != 3)
        throw shape_error("global_max_pool: expected B x L x F input");
    const std::size_t batch = x.shape()[0], len = x.shape()[1], f = x.shape()[2];
    mask.validate(batch, len);
    std::vector<T> out(batch * f);
    auto argmax = std::make_shared<std::vector<std::size_t>>(batch * f);
    for (std::size_t bi = 0; bi < batch; ++bi) {
        for (std::size_t c = 0; c < f; ++c) {
            std::size_t best = 0;
            T bv = x.data()[(bi * len) * f + c];
            for (std::size_t t = 1; t < mask.lengths[bi]; ++t) {
                const T v = x.data()[(bi * len + t) * f + c];
                if (v > bv) {
                    bv = v;
                    best = t;
                }
            }
            out[bi * f + c] = bv;
            (*argmax)[bi * f + c] = best;
        }
    }
    auto node = detail::make_node<T>({batch, f}, std::move(out), "max_pool", {x.ptr()});
    if (node->requires_grad) {
        node->backward_fn = [batch, len, f, argmax](NodeT<T>& self) {
            auto& p = *self.parents[0];
            p.ensure_grad();
            for (std::size_t bi = 0; bi < batch; ++bi)
                for (std::size_t c = 0; c < f; ++c)
                    p.grad[(bi * len + (*argmax)[bi * f + c]) * f + c] +=
                        self.grad[bi * f + c];
        };
    }
    return tape.record(std::move(node));
}

template <class T>
TensorT<T> global_avg_pool(TapeT<T>& tape, const TensorT<T>& x,
                           const SequenceMask& mask) {
    if (x.shape().size() != 3)
        throw shape_error("global_avg_pool: expected B x L x F input");
    const std::size_t batch = x.shape()[0], len = x.shape()[1], f = x.shape()[2];
    mask.validate(batch, len);
    std::vector<T> out(batch * f, T(0));
    for (std::size_t bi = 0; bi < batch; ++bi) {
        for (std::size_t t = 0; t < mask.lengths[bi]; ++t)
            for (std::size_t c = 0; c < f; ++c)
                out[bi * f + c] += x.data()[(bi * len + t) * f + c];
        const T inv = T(1) / static_cast<T>(mask.lengths[bi]);
        for (std::size_t c = 0; c < f; ++c) out[bi * f + c] *= inv;
    }
    auto lengths = mask.lengths;
    auto node = detail::make_node<T>({batch, f}, std::move(out), "avg_pool", {x.ptr()});
    if (node->requires_grad) {
        node->backward_fn = [batch, len, f, lengths](NodeT<T>& self) {
            auto& p = *self.parents[0];
            p.ensure_grad();
            for (std::size_t bi = 0; bi < batch; ++bi) {
                const T inv = T(1) / static_cast<T>(lengths[bi]);
                for (std::size_t t = 0; t < lengths[bi]; ++t)
                    for (std::size_t c = 0; c < f; ++c)
                        p.grad[(bi * len + t) * f + c] += inv * self.grad[bi * f + c];
            }
        };
    }
    return tape.record(std::move(node));
}

// ---- dropout ----

// Inverted dropout: identity at inference, zero-with-rescale in training.
template <class T>
TensorT<T> dropout(TapeT<T>& tape, const TensorT<T>& x, double rate, Mode mode,
                   Rng& rng) {
    if (rate < 0.0 || rate >= 1.0)
        throw shape_error("dropout: rate must lie in [0,1), got " +
                          std::to_string(rate));
    if (mode == Mode::Infer || rate == 0.0) {
        std::vector<T> out = x.data();
        auto node = detail::make_node<T>(x.shape(), std::move(out), "dropout", {x.ptr()});
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
    const T scale = T(1) / static_cast<T>(1.0 - rate);
    auto keep = std::make_shared<std::vector<char>>(x.size());
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const bool k = !rng.bernoulli(rate);
        (*keep)[i] = k;
        out[i] = k ? x.data()[i] * scale : T(0);
    }
    auto node = detail::make_node<T>(x.shape(), std::move(out), "dropout", {x.ptr()});
    if (node->requires_grad) {
        node->backward_fn = [keep, scale](NodeT<T>& self) {
            auto& p = *self.parents[0];
            p.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                if ((*keep)[i]) p.grad[i] += scale * self.grad[i];
        };
    }
    return tape.record(std::move(node));
}

// ---- batch normalization ----

template <class T>
struct BatchNormT {
    std::size_t features = 0;
    TensorT<T> gamma, beta;
    std::vector<T> running_mean, running_var;
    T momentum = T(0.9);
    T eps = T(1e-5);

    void init(std::size_t f) {
        features = f;
        gamma = TensorT<T>::zeros({f}, true);
        beta = TensorT<T>::zeros({f}, true);
        std::fill(gamma.data().begin(), gamma.data().end(), T(1));
        running_mean.assign(f, T(0));
        running_var.assign(f, T(1));
    }

    TensorT<T> forward(TapeT<T>& tape, const TensorT<T>& x, Mode mode) {
        if (x.shape().size() != 2 || x.shape()[1] != features)
            throw shape_error("batchnorm: input " + shape_str(x.shape()) +
                              " does not match feature size " +
                              std::to_string(features));
        const std::size_t batch = x.shape()[0], f = features;
        if (mode == Mode::Train && batch < 2)
            throw shape_error("batchnorm: training requires batch >= 2, got " +
                              std::to_string(batch));

        auto mean = std::make_shared<std::vector<T>>(f, T(0));
        auto var = std::make_shared<std::vector<T>>(f, T(0));
        if (mode == Mode::Train) {
            for (std::size_t bi = 0; bi < batch; ++bi)
                for (std::size_t c = 0; c < f; ++c)
                    (*mean)[c] += x.data()[bi * f + c];
            for (auto& m : *mean) m /= static_cast<T>(batch);
            for (std::size_t bi = 0; bi < batch; ++bi)
                for (std::size_t c = 0; c < f; ++c) {
                    const T d = x.data()[bi * f + c] - (*mean)[c];
                    (*var)[c] += d * d;
                }
            for (auto& v : *var) v /= static_cast<T>(batch);
            for (std::size_t c = 0; c < f; ++c) {
                running_mean[c] = momentum * running_mean[c] + (T(1) - momentum) * (*mean)[c];
                running_var[c] = momentum * running_var[c] + (T(1) - momentum) * (*var)[c];
            }
        } else {
            *mean = running_mean;
            *var = running_var;
        }

        auto xhat = std::make_shared<std::vector<T>>(batch * f);
        std::vector<T> out(batch * f);
        for (std::size_t bi = 0; bi < batch; ++bi)
            for (std::size_t c = 0; c < f; ++c) {
                const T xh = (x.data()[bi * f + c] - (*mean)[c]) /
                             std::sqrt((*var)[c] + eps);
                (*xhat)[bi * f + c] = xh;
                out[bi * f + c] = gamma.data()[c] * xh + beta.data()[c];
            }
        auto node = detail::make_node<T>({batch, f}, std::move(out), "batchnorm",
                                         {x.ptr(), gamma.ptr(), beta.ptr()});
        if (node->requires_grad) {
            const T e = eps;
            const bool train = (mode == Mode::Train);
            node->backward_fn = [batch, f, mean, var, xhat, e, train](NodeT<T>& self) {
                auto& px = *self.parents[0];
                auto& pg = *self.parents[1];
                auto& pbeta = *self.parents[2];
                if (pg.requires_grad) pg.ensure_grad();
                if (pbeta.requires_grad) pbeta.ensure_grad();
                for (std::size_t bi = 0; bi < batch; ++bi)
                    for (std::size_t c = 0; c < f; ++c) {
                        const T g = self.grad[bi * f + c];
                        if (pg.requires_grad) pg.grad[c] += g * (*xhat)[bi * f + c];
                        if (pbeta.requires_grad) pbeta.grad[c] += g;
                    }
                if (!px.requires_grad) return;
                px.ensure_grad();
                if (!train) {
                    for (std::size_t bi = 0; bi < batch; ++bi)
                        for (std::size_t c = 0; c < f; ++c)
                            px.grad[bi * f + c] += self.grad[bi * f + c] *
                                                   pg.data[c] /
                                                   std::sqrt((*var)[c] + e);
                    return;
                }
                const T invb = T(1) / static_cast<T>(batch);
                for (std::size_t c = 0; c < f; ++c) {
                    const T istd = T(1) / std::sqrt((*var)[c] + e);
                    T sum_dxhat = T(0), sum_dxhat_xhat = T(0);
                    for (std::size_t bi = 0; bi < batch; ++bi) {
                        const T dxh = self.grad[bi * f + c] * pg.data[c];
                        sum_dxhat += dxh;
                        sum_dxhat_xhat += dxh * (*xhat)[bi * f + c];
                    }
                    for (std::size_t bi = 0; bi < batch; ++bi) {
                        const T dxh = self.grad[bi * f + c] * pg.data[c];
                        px.grad[bi * f + c] +=
                            istd * (dxh - invb * sum_dxhat -
                                    invb * (*xhat)[bi * f + c] * sum_dxhat_xhat);
                    }
                }
            };
        }
        return tape.record(std::move(node));
    }

    void collect(const std::string& prefix, NamedParams<T>& out) const {
        out.emplace_back(prefix + ".gamma", gamma);
        out.emplace_back(prefix + ".beta", beta);
    }
};

// Free-function dense, matching the rest of the op surface.
template <class T>
TensorT<T> dense_forward(TapeT<T>& tape, const TensorT<T>& x, const TensorT<T>& w,
                         const TensorT<T>& b) {
    return add_bias(tape, matmul(tape, x, w), b);
}

}  // namespace mcm
