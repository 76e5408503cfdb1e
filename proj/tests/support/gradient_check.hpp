#pragma once

// Central finite-difference oracle for the autodiff path. Runs in 64-bit;
// independent of every backward rule it checks.

#include <cmath>
#include <functional>
#include <vector>

#include "mcm/rng.hpp"
#include "mcm/tensor.hpp"

namespace mcm::testing {

using DTensor = TensorT<double>;
using DTape = TapeT<double>;

// Builds the loss from the current leaf values; called repeatedly with
// perturbed entries.
using LossFn = std::function<DTensor(DTape&)>;

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
};

inline GradCheckResult gradient_check(const std::vector<DTensor>& leaves,
                                      const LossFn& loss_fn, double h = 1e-5) {
    // analytic gradients
    std::vector<std::vector<double>> analytic;
    {
        for (const auto& l : leaves) l.node()->zero_grad();
        DTape tape;
        auto loss = loss_fn(tape);
        tape.backward(loss);
        for (const auto& l : leaves) {
            l.node()->ensure_grad();
            analytic.push_back(l.grad());
        }
    }
    auto eval = [&]() {
        DTape tape;
        return loss_fn(tape).item();
    };
    GradCheckResult r;
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        auto& data = leaves[li].data();
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double orig = data[i];
            data[i] = orig + h;
            const double fp = eval();
            data[i] = orig - h;
            const double fm = eval();
            data[i] = orig;
            const double numeric = (fp - fm) / (2.0 * h);
            const double a = analytic[li][i];
            const double denom = std::max({1.0, std::fabs(a), std::fabs(numeric)});
            r.max_rel_error = std::max(r.max_rel_error, std::fabs(a - numeric) / denom);
            ++r.checked;
        }
    }
    return r;
}

inline DTensor random_leaf(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::vector<double> data(numel(shape));
    for (auto& v : data) v = lo + rng.next_double() * (hi - lo);
    return DTensor::leaf(std::move(shape), std::move(data), true);
}

}  // namespace mcm::testing
