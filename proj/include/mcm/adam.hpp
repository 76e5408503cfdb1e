#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mcm/tensor.hpp"

namespace mcm {

// Adam with bias correction. Moment buffers persist per registered
// parameter; step() consumes and zeroes the gradients.
template <class T>
class AdamT {
public:
    explicit AdamT(T lr = T(0.002), T beta1 = T(0.9), T beta2 = T(0.999),
                   T eps = T(1e-8))
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void add_param(const TensorT<T>& p) {
        slots_.push_back({p, std::vector<T>(p.size(), T(0)),
                          std::vector<T>(p.size(), T(0))});
    }

    std::size_t param_count() const { return slots_.size(); }
    long step_count() const { return t_; }
    T learning_rate() const { return lr_; }
    void set_learning_rate(T lr) { lr_ = lr; }

    void step() {
        ++t_;
        const T bc1 = T(1) - std::pow(beta1_, static_cast<T>(t_));
        const T bc2 = T(1) - std::pow(beta2_, static_cast<T>(t_));
        for (auto& s : slots_) {
            auto* n = s.param.node();
            if (n->grad.size() != n->data.size())
                throw error("adam: missing gradient on registered parameter");
            for (std::size_t i = 0; i < n->data.size(); ++i) {
                const T g = n->grad[i];
                s.m[i] = beta1_ * s.m[i] + (T(1) - beta1_) * g;
                s.v[i] = beta2_ * s.v[i] + (T(1) - beta2_) * g * g;
                const T mhat = s.m[i] / bc1;
                const T vhat = s.v[i] / bc2;
                n->data[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
            }
            n->zero_grad();
        }
    }

    void zero_grad() {
        for (auto& s : slots_) s.param.node()->ensure_grad();
        for (auto& s : slots_) s.param.node()->zero_grad();
    }

    // Moment buffers, exposed for checkpointing.
    struct Slot {
        TensorT<T> param;
        std::vector<T> m, v;
    };
    std::vector<Slot>& slots() { return slots_; }
    void set_step_count(long t) { t_ = t; }

private:
    T lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<Slot> slots_;
};

using Adam = AdamT<float>;

}  // namespace mcm
