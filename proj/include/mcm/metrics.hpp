#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mcm/tensor.hpp"

namespace mcm {

struct Metrics {
    double accuracy = 0.0;
    std::vector<double> precision, recall, f1;  // per class
    double macro_precision = 0.0, macro_recall = 0.0, macro_f1 = 0.0;
    std::vector<std::size_t> confusion;  // C x C, rows = true, cols = predicted
    std::size_t classes = 0;
    std::size_t total = 0;

    std::size_t confusion_at(std::size_t t, std::size_t p) const {
        return confusion[t * classes + p];
    }
};

// Undefined precision/recall (empty denominator) counts as 0; macro values
// average over all C classes, absent ones included.
inline Metrics compute_metrics(const std::vector<std::size_t>& y_true,
                               const std::vector<std::size_t>& y_pred,
                               std::size_t classes) {
    if (y_true.size() != y_pred.size())
        throw error("compute_metrics: " + std::to_string(y_true.size()) +
                    " labels vs " + std::to_string(y_pred.size()) + " predictions");
    if (y_true.empty()) throw error("compute_metrics: empty input");
    Metrics m;
    m.classes = classes;
    m.total = y_true.size();
    m.confusion.assign(classes * classes, 0);
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        if (y_true[i] >= classes || y_pred[i] >= classes)
            throw error("compute_metrics: class out of range at index " +
                        std::to_string(i));
        ++m.confusion[y_true[i] * classes + y_pred[i]];
    }
    std::size_t correct = 0;
    for (std::size_t c = 0; c < classes; ++c) correct += m.confusion[c * classes + c];
    m.accuracy = static_cast<double>(correct) / static_cast<double>(m.total);

    m.precision.resize(classes);
    m.recall.resize(classes);
    m.f1.resize(classes);
    for (std::size_t c = 0; c < classes; ++c) {
        std::size_t tp = m.confusion[c * classes + c];
        std::size_t fp = 0, fn = 0;
        for (std::size_t k = 0; k < classes; ++k) {
            if (k == c) continue;
            fp += m.confusion[k * classes + c];
            fn += m.confusion[c * classes + k];
        }
        m.precision[c] = (tp + fp) ? static_cast<double>(tp) / (tp + fp) : 0.0;
        m.recall[c] = (tp + fn) ? static_cast<double>(tp) / (tp + fn) : 0.0;
        m.f1[c] = (m.precision[c] + m.recall[c] > 0.0)
                      ? 2.0 * m.precision[c] * m.recall[c] /
                            (m.precision[c] + m.recall[c])
                      : 0.0;
        m.macro_precision += m.precision[c];
        m.macro_recall += m.recall[c];
        m.macro_f1 += m.f1[c];
    }
    m.macro_precision /= static_cast<double>(classes);
    m.macro_recall /= static_cast<double>(classes);
    m.macro_f1 /= static_cast<double>(classes);
    return m;
}

}  // namespace mcm
