#include "labconv/metrics.hpp"

#include "labconv/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace labconv::harness {

std::optional<double> try_auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) {
        throw DimensionError("auc: " + std::to_string(scores.size()) + " scores vs " +
                             std::to_string(labels.size()) + " labels");
    }
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    double rank_sum_pos = 0.0;
    std::size_t n_pos = 0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i + 1;
        while (j < n && scores[order[j]] == scores[order[i]]) {
            ++j;
        }
        // Ranks i+1..j share their average.
        const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t k = i; k < j; ++k) {
            if (labels[order[k]] == 1) {
                rank_sum_pos += midrank;
                ++n_pos;
            }
        }
        i = j;
    }
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) {
        return std::nullopt;
    }
    const double np = static_cast<double>(n_pos);
    return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

double auc(std::span<const double> scores, std::span<const int> labels) {
    auto v = try_auc(scores, labels);
    if (!v) {
        throw EvaluationError("auc: undefined for single-class labels");
    }
    return *v;
}

double rmse(std::span<const double> pred, std::span<const double> target,
            std::span<const double> mask) {
    if (pred.size() != target.size() || pred.size() != mask.size()) {
        throw DimensionError("rmse: length mismatch");
    }
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (mask[i] != 0.0) {
            const double d = pred[i] - target[i];
            sum += d * d;
            ++n;
        }
    }
    if (n == 0) {
        throw EvaluationError("rmse: empty mask");
    }
    return std::sqrt(sum / static_cast<double>(n));
}

}  // namespace labconv::harness
