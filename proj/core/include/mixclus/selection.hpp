#pragma once

#include <vector>

#include "mixclus/mcem.hpp"
#include "mixclus/model.hpp"

namespace mixclus {

/// Outcome of one architecture-selection pass. Component sets are per
/// transform; dimension sets are per latent variable: `embedding_dims` are the
/// kept coordinates of the first discrete-head latent, `tail_dims[v]` the kept
/// coordinates of the v-th tail variable (v = 0 is the junction, the last
/// entry is the terminal variable).
struct SelectionDecision {
    std::vector<std::vector<int>> comps_c;
    std::vector<std::vector<int>> comps_d;
    std::vector<std::vector<int>> comps_tail;
    std::vector<int> embedding_dims;
    std::vector<std::vector<int>> tail_dims;
    bool restart_required = false;
};

/// Components with mixture weight below 1/(4 k) are dropped; the
/// largest-weight component is always kept. A frozen layer keeps everything.
std::vector<int> prune_components(const MixtureLayer& layer, bool frozen);

/// Kept coordinates of the embedding latent. Each observed head variable is
/// regressed on the per-path posterior-mean embedding scores; a coordinate is
/// dropped when its coefficient fails a 10% Wald test in at least a quarter
/// of the pooled (variable, path) fits. At least one coordinate is kept.
std::vector<int> select_embedding_dims(const GllvmObs& obs, const std::vector<VarKind>& kinds,
                                       const ChainEState& es, int level);

/// Kept coordinates of the latent sampled at `level`: those whose mean
/// absolute loading on the first principal component of the weighted draws,
/// averaged over paths, reaches 0.2. At least one coordinate is kept.
std::vector<int> select_dgmm_dims(const ChainEState& es, int level);

/// Applies a decision: slices kept components (mixture weights renormalized)
/// and kept dimensions out of the parameters, rebuilds the architecture, and
/// applies the layer-deletion rules (tail truncated after a mid-tail width-1
/// variable; head layers following a width-2 latent deleted, which forces a
/// restart). When restart_required is set the returned parameters are stale
/// and the model must be refit on the returned architecture.
std::pair<Architecture, ModelParams> apply_architecture_update(const Architecture& arch,
                                                               const ModelParams& params,
                                                               SelectionDecision& decision);

}  // namespace mixclus
