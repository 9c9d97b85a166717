#pragma once

#include <cstdint>
#include <vector>

#include "mixclus/dataset.hpp"
#include "mixclus/mcem.hpp"
#include "mixclus/model.hpp"
#include "mixclus/nsep.hpp"

namespace mixclus {

struct FitConfig {
    Architecture arch;
    std::uint64_t seed = 0;
    int max_iter = 30;
    int patience = 1;
    std::vector<int> selection_iters = {3};  // 1-based iteration indices
    bool autoclus = false;
    bool multi_clustering = false;
    int clustering_layer = 0;  // tail transform index
    int max_pool = 512;
    int threads = 1;

    void validate() const;
};

struct TraceRow {
    int iteration = 0;
    double loglik = 0.0;
    double silhouette = 0.0;  // NaN when fewer than 2 clusters are occupied
    int m_schedule = 0;
    double wall_seconds = 0.0;
};

struct FitResult {
    ModelParams params;
    Architecture architecture_final;
    std::vector<TraceRow> trace;
    std::vector<int> labels;
    std::vector<MatrixXd> embeddings;  // per tail transform, from the selected iteration
    int selected_iteration = 0;        // 1-based, argmax of the silhouette column
    InitReport init;
};

/// Per-iteration Monte-Carlo draw count, floor((40 / ln n) * t * sqrt(r))
/// floored at 1.
int mc_schedule(int n, int t, int r);

/// Hard assignment at one tail transform: argmax of the component posterior,
/// ties resolved to the lowest index.
std::vector<int> assign_clusters(const MatrixXd& comp_post);

/// Full MCEM training loop: initialization, draw / E / M / rescale
/// iterations with patience stopping, optional architecture-selection passes
/// (refitting when the architecture changes), final loading diagonalization,
/// and retention of the best-silhouette iteration.
FitResult fit(const MixedDataset& ds, const FitConfig& config, WarningLog* warnings = nullptr);

}  // namespace mixclus
