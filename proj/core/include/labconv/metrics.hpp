#pragma once

#include <optional>
#include <span>
#include <vector>

namespace labconv::harness {

/// Area under the ROC curve by the Mann-Whitney statistic with midranks for
/// tied scores. Throws EvaluationError unless both classes are present.
double auc(std::span<const double> scores, std::span<const int> labels);

/// As auc(), but returns nullopt for single-class input.
std::optional<double> try_auc(std::span<const double> scores, std::span<const int> labels);

/// Root mean squared error over elements whose mask entry is nonzero.
double rmse(std::span<const double> pred, std::span<const double> target,
            std::span<const double> mask);

}  // namespace labconv::harness
