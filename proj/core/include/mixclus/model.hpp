#pragma once

#include <vector>

#include "mixclus/architecture.hpp"
#include "mixclus/common.hpp"
#include "mixclus/links.hpp"

namespace mixclus {

/// One mixture component of a factor layer: x = eta + lambda * z + u,
/// u ~ N(0, psi), z the next-deeper latent.
struct FactorComponent {
    VectorXd eta;
    MatrixXd lambda;
    MatrixXd psi;
    double pi = 1.0;
};

/// Mixture-of-factor-analyzers transform from a latent of width in_dim to a
/// variable of width out_dim.
struct MixtureLayer {
    int out_dim = 0;
    int in_dim = 0;
    std::vector<FactorComponent> comps;

    [[nodiscard]] int K() const { return static_cast<int>(comps.size()); }
    void validate() const;
};

/// Full parameter set. Transforms are ordered observation side first; the
/// deepest latent is N(0, I_terminal_dim). layers_c maps the continuous block
/// onto its head latents, layers_d maps the embedding latent z1 (covered by
/// the gllvm links) down towards the junction, layers_tail is shared.
struct ModelParams {
    Mode mode = Mode::Ddgmm;
    std::vector<LinkParams> gllvm;
    std::vector<MixtureLayer> layers_c;
    std::vector<MixtureLayer> layers_d;
    std::vector<MixtureLayer> layers_tail;
    int terminal_dim = 1;

    [[nodiscard]] int embedding_dim() const {
        return layers_d.empty() ? 0 : layers_d.front().out_dim;
    }
    [[nodiscard]] Architecture architecture(int p_c) const;
    void validate() const;
};

/// View of one head chained with the tail, observation side first. Layers
/// point into a ModelParams that must outlive the chain.
struct Chain {
    std::vector<const MixtureLayer*> layers;
    int head_len = 0;  // leading layers owned by the head
    int terminal_dim = 1;

    [[nodiscard]] int size() const { return static_cast<int>(layers.size()); }
    [[nodiscard]] const MixtureLayer& layer(int t) const { return *layers[t]; }
    /// Width of the latent feeding layer t (terminal width for the last layer).
    [[nodiscard]] int in_dim(int t) const { return layers[t]->in_dim; }
};

enum class Head { C, D };

Chain build_chain(const ModelParams& params, Head head);

/// Number of full paths through a chain (product of component counts).
long n_paths(const Chain& chain);

}  // namespace mixclus
