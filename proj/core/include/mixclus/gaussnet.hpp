#pragma once

#include <vector>

#include "mixclus/model.hpp"

namespace mixclus {

/// Enumeration of the full component paths of a chain, lexicographic in the
/// per-layer component indices (layer 0 most significant), together with the
/// prior path probabilities and cached per-layer marginal moments.
struct PathTable {
    std::vector<std::vector<int>> paths;  // [path][layer] component index
    VectorXd prior;                       // product of component weights
    // moments of the output of layer t along each path (mu[s][t], sigma[s][t])
    std::vector<std::vector<VectorXd>> mu;
    std::vector<std::vector<MatrixXd>> sigma;

    [[nodiscard]] int size() const { return static_cast<int>(paths.size()); }
};

PathTable enumerate_paths(const Chain& chain);

/// Populate mu/sigma caches of a path table for every layer and path.
void fill_path_moments(const Chain& chain, PathTable& table);

/// Marginal moments of the output of layer t given the path components of
/// layers t..end, by the backward recursion from the terminal N(0, I).
std::pair<VectorXd, MatrixXd> path_moments(const Chain& chain, const std::vector<int>& path, int t);

/// Gaussian conditioning across layer t: posterior of the input latent of
/// layer t given its output equals z, with the path-marginal prior on the
/// input. Returns (rho, xi) = posterior mean and covariance.
std::pair<VectorXd, MatrixXd> condition_next_layer(const Chain& chain, const std::vector<int>& path,
                                                   int t, const VectorXd& z);

/// Affine law of the chain output given the input latent of layer t along a
/// path: output | z ~ N(offset + gain * z, cov).
struct AffineLaw {
    VectorXd offset;
    MatrixXd gain;
    MatrixXd cov;
};
AffineLaw compose_to_output(const Chain& chain, const std::vector<int>& path, int t);

/// Mixture moments of the output of one layer assuming a standardized input.
std::pair<VectorXd, MatrixXd> layer_moments(const MixtureLayer& layer);

/// Identifiability pass: standardize every latent (zero mean, identity
/// covariance across the mixture) and push the compensating affine maps into
/// the layers and links that consume the latent. Model distribution over the
/// observables is unchanged.
void rescale_layers(ModelParams& params);

/// Rotate each loading matrix so that Lambda' Psi^-1 Lambda is diagonal with
/// decreasing entries; sign fixed by making the largest-magnitude entry of
/// each column positive.
void diagonalize_loadings(ModelParams& params);

/// Zero the above-diagonal entries of the embedding loading rows that belong
/// to binary and count links (upper-triangular identifiability constraint).
void mask_embedding_loadings(ModelParams& params, const std::vector<VarKind>& kinds);

double log_mvn_density(const VectorXd& x, const VectorXd& mu, const MatrixXd& sigma);

}  // namespace mixclus
