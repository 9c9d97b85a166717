#pragma once

#include <cstdint>
#include <vector>

#include "mixclus/dataset.hpp"
#include "mixclus/gaussnet.hpp"
#include "mixclus/model.hpp"

namespace mixclus {

/// Observed data seen by a GLLVM head: coded discrete columns first, then
/// (m1 mode) raw standardized continuous columns, matching the order of
/// ModelParams::gllvm.
struct GllvmObs {
    Eigen::MatrixXi codes;
    MatrixXd values;
    std::vector<int> trials;

    [[nodiscard]] int n() const { return static_cast<int>(codes.rows() ? codes.rows() : values.rows()); }
    [[nodiscard]] int n_links() const { return static_cast<int>(codes.cols() + values.cols()); }
};

/// log f(y_i | z) summed over the head's links.
double gllvm_log_density(const std::vector<LinkParams>& links, const GllvmObs& obs, int i,
                         const ConstVecRef& z);

/// Monte-Carlo state of one head chain. A chain with T layers carries
/// E = T (+1 for a GLLVM head) sampled latent levels per observation and
/// path; level e+1 draws are children of level e draws in blocks of
/// pool[e+1]/pool[e].
struct ChainEState {
    int n = 0;
    bool gllvm_head = false;
    std::vector<int> pool;                       // draws per level (after capping)
    std::vector<std::vector<MatrixXd>> draws;    // [i * S + s][e], dim_e x pool[e]
    std::vector<std::vector<VectorXd>> weights;  // normalized over each level
    MatrixXd log_fy;                             // [n x S] log f(y^h | s) estimate
    MatrixXd path_post;                          // [n x S] f(s | y)

    [[nodiscard]] int n_levels() const { return static_cast<int>(pool.size()); }
    [[nodiscard]] int n_paths() const { return static_cast<int>(log_fy.cols()); }
    [[nodiscard]] int children(int level) const { return pool[level] / pool[level - 1]; }
    [[nodiscard]] const MatrixXd& d(int i, int s, int e) const {
        return draws[static_cast<std::size_t>(i) * n_paths() + s][e];
    }
    [[nodiscard]] const VectorXd& w(int i, int s, int e) const {
        return weights[static_cast<std::size_t>(i) * n_paths() + s][e];
    }
};

/// Sample every latent level for every observation and path: level 0 from the
/// per-path marginal prior, deeper levels from the exact per-layer Gaussian
/// conditional at each parent draw. Weights are left unfilled. `schedule`
/// gives the per-level draw counts; cumulative pools are capped at max_pool.
ChainEState draw_layer_latents(std::uint64_t seed, std::uint64_t iter, const Chain& chain,
                               const PathTable& table, const std::vector<int>& schedule, int n,
                               bool gllvm_head, int max_pool, int threads = 1);

/// Importance weights of the draws: level 0 weighted by the observation
/// likelihood f(y | z) (self-normalized), children share their parent's
/// weight. Also fills log_fy with the Monte-Carlo estimate of log f(y | s);
/// for a continuous head the exact Gaussian path marginal is used instead.
/// Exactly one of y_c / (links, obs) is consulted depending on the head.
void latent_posterior_weights(ChainEState& es, const Chain& chain, const PathTable& table,
                              const MatrixXd* y_c, const std::vector<LinkParams>* links,
                              const GllvmObs* obs, int threads = 1);

/// Posterior path probabilities f(s | y) from log_fy and the path priors.
void head_path_posteriors(ChainEState& es, const PathTable& table);

/// m2 fusion products: joint posterior over (continuous head path, full
/// discrete-side path), reweighted tail weights pushed into the discrete
/// chain state, and per-tail-layer component posteriors.
struct TailEState {
    std::vector<MatrixXd> comp_post;  // per tail layer: [n x K]
    VectorXd log_joint_norm;          // per observation: log f-hat(y^C, y^D)
};

/// Single-head modes: component posteriors are plain marginals of path_post
/// over the tail layers of the one chain. m2 mode: fuses the continuous head
/// onto the discrete chain's junction draws; es_d path_post and tail-level
/// weights are replaced by their fused versions, es_c path_post is
/// marginalized onto full continuous paths.
TailEState tail_posteriors(const ModelParams& params, const MatrixXd* y_c, ChainEState* es_c,
                           const PathTable* table_c, ChainEState* es_d, const PathTable* table_d,
                           int threads = 1);

/// Closed-form weighted M step of one chain layer: per-component weighted
/// least squares of the layer output draws on the layer input draws, noise as
/// the weighted residual second moment (symmetrized, eigenvalue-floored).
/// y_out supplies the observed output rows for layer 0 of a continuous head.
MixtureLayer update_dgmm_layer(const ChainEState& es, const Chain& chain, const PathTable& table,
                               int t, const MatrixXd* y_out, WarningLog* warnings = nullptr);

/// Posterior mixture weights of one chain layer: mean over observations of
/// the per-layer component posterior.
VectorXd update_path_probs(const ChainEState& es, const PathTable& table, int t);

/// Numerical M step of the GLLVM links: per-variable quasi-Newton ascent of
/// the weighted expected log-likelihood over the level-0 draws. Never returns
/// parameters scoring below the input; the upper-triangular mask of the
/// given variable kinds is re-applied.
std::vector<LinkParams> optimize_gllvm(const GllvmObs& obs, const ChainEState& es,
                                       const std::vector<LinkParams>& current, int max_inner,
                                       WarningLog* warnings = nullptr, int threads = 1);

/// Monte-Carlo estimate of the observed log-likelihood, log sum_s pi_s f(y|s)
/// summed over observations (joint estimate for m2).
double observed_loglik_estimate(const ChainEState& es, const PathTable& table);
double observed_loglik_joint(const TailEState& tail);

/// Per-layer component posterior f(component at layer t = k | y) for one
/// observation, marginalized over paths.
VectorXd layer_component_posterior(const ChainEState& es, const PathTable& table, int t, int i);

}  // namespace mixclus
