#pragma once

#include <vector>

#include "mixclus/dataset.hpp"

namespace mixclus {

/// Pairwise Gower dissimilarity: equal-weight average over features of the
/// range-normalized absolute difference (continuous, ordinal, count) or the
/// 0/1 mismatch (binary, categorical). Zero-range numeric features are
/// skipped with a warning. Symmetric, zero diagonal, entries in [0, 1].
MatrixXd gower_matrix(const MixedDataset& ds, WarningLog* warnings = nullptr);

/// Mean-over-clusters of the per-cluster mean silhouette width. Points in
/// singleton clusters score 0. Returns NaN when fewer than 2 clusters are
/// present.
double silhouette(const std::vector<int>& labels, const MatrixXd& dist);

/// Maximum-score one-to-one assignment of rows to columns (Hungarian
/// algorithm); returns per-row column index, -1 for unassigned rows.
std::vector<int> hungarian_max(const MatrixXd& score);

struct PrecisionScores {
    double micro = 0.0;
    double macro = 0.0;
};

/// Precision after optimally aligning predicted clusters to truth classes.
/// micro: fraction of points whose aligned label matches the truth. macro:
/// unweighted mean over predicted clusters of the within-cluster precision.
PrecisionScores precision_scores(const std::vector<int>& pred, const std::vector<int>& truth);

}  // namespace mixclus
