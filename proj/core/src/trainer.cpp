#include "mixclus/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "mixclus/gaussnet.hpp"
#include "mixclus/metrics.hpp"
#include "mixclus/selection.hpp"

namespace mixclus {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::vector<int> level_widths(const Chain& chain, bool gllvm_head) {
    const int off = gllvm_head ? 0 : 1;
    const int count = chain.size() + (gllvm_head ? 1 : 0);
    std::vector<int> widths(count);
    for (int e = 0; e < count; ++e)
        widths[e] = e == count - 1 ? chain.terminal_dim : chain.layer(e + off).out_dim;
    return widths;
}

std::vector<int> draw_schedule(const Chain& chain, bool gllvm_head, int n, int iter) {
    std::vector<int> sched;
    for (int w : level_widths(chain, gllvm_head)) sched.push_back(mc_schedule(n, iter, w));
    return sched;
}

void set_mixture_probs(MixtureLayer& layer, const VectorXd& pi) {
    for (int k = 0; k < layer.K(); ++k) layer.comps[k].pi = std::max(pi[k], 0.0);
    double total = 0.0;
    for (const auto& c : layer.comps) total += c.pi;
    if (total > 0)
        for (auto& c : layer.comps) c.pi /= total;
}

/// Posterior-mean latent at one estate level, marginalized over paths.
MatrixXd level_embedding(const ChainEState& es, int level) {
    const int dim = static_cast<int>(es.d(0, 0, level).rows());
    MatrixXd emb = MatrixXd::Zero(es.n, dim);
    for (int i = 0; i < es.n; ++i)
        for (int s = 0; s < es.n_paths(); ++s) {
            const double pp = es.path_post(i, s);
            if (pp <= 0) continue;
            emb.row(i) += pp * (es.d(i, s, level) * es.w(i, s, level)).transpose();
        }
    return emb;
}

}  // namespace

int mc_schedule(int n, int t, int r) {
    if (n < 2) throw ConfigError("mc_schedule: need at least 2 observations");
    const int m = static_cast<int>(std::floor(40.0 / std::log(static_cast<double>(n)) * t *
                                              std::sqrt(static_cast<double>(r))));
    return std::max(1, m);
}

std::vector<int> assign_clusters(const MatrixXd& comp_post) {
    std::vector<int> labels(comp_post.rows());
    for (Eigen::Index i = 0; i < comp_post.rows(); ++i) {
        int arg = 0;
        comp_post.row(i).maxCoeff(&arg);
        labels[static_cast<std::size_t>(i)] = arg;
    }
    return labels;
}

void FitConfig::validate() const {
    if (max_iter < 1) throw ConfigError("fit: max_iter must be at least 1");
    if (patience < 0) throw ConfigError("fit: patience must be non-negative");
    if (threads < 1) throw ConfigError("fit: threads must be at least 1");
    if (max_pool < 1) throw ConfigError("fit: max_pool must be at least 1");
    const int cluster_layers = std::max(1, static_cast<int>(arch.tail.size()) - 1);
    if (clustering_layer < 0 || clustering_layer >= cluster_layers)
        throw ConfigError("fit: clustering_layer outside the tail");
    for (int it : selection_iters)
        if (it < 1 || it >= max_iter)
            throw ConfigError("fit: selection iterations must lie inside [1, max_iter)");
}

FitResult fit(const MixedDataset& ds, const FitConfig& config, WarningLog* warnings) {
    config.validate();
    config.arch.validate(ds.p_c(), ds.p_d());
    Architecture arch = config.arch;

    FitResult result;
    auto [params, init] = nsep_init(ds, arch, config.seed, warnings);
    result.init = init;

    const MatrixXd gower = gower_matrix(ds, warnings);

    GllvmObs obs;
    obs.codes = ds.y_d;
    obs.trials = ds.trials;
    if (arch.mode == Mode::M1) obs.values = ds.y_c;
    std::vector<VarKind> kinds;
    for (const auto& link : params.gllvm) kinds.push_back(link.kind);

    double best_sil = kNegInf;
    double best_snap_ll = kNegInf;
    double best_ll = kNegInf;
    int stall = 0;
    bool have_snapshot = false;

    for (int iter = 1; iter <= config.max_iter; ++iter) {
        const auto t_start = std::chrono::steady_clock::now();
        try {
            const bool gllvm = arch.mode != Mode::Dgmm;
            const bool c_head = arch.mode == Mode::Dgmm || arch.mode == Mode::M2;

            ChainEState es_c, es_d;
            PathTable table_c, table_d;
            Chain chain_c, chain_d;
            if (c_head) {
                chain_c = build_chain(params, Head::C);
                table_c = enumerate_paths(chain_c);
                fill_path_moments(chain_c, table_c);
                es_c = draw_layer_latents(config.seed ^ 0x9e3779b97f4a7c15ULL, iter, chain_c,
                                          table_c, draw_schedule(chain_c, false, ds.n, iter), ds.n,
                                          false, config.max_pool, config.threads);
                latent_posterior_weights(es_c, chain_c, table_c, &ds.y_c, nullptr, nullptr,
                                         config.threads);
                head_path_posteriors(es_c, table_c);
            }
            if (gllvm) {
                chain_d = build_chain(params, Head::D);
                table_d = enumerate_paths(chain_d);
                fill_path_moments(chain_d, table_d);
                es_d = draw_layer_latents(config.seed, iter, chain_d, table_d,
                                          draw_schedule(chain_d, true, ds.n, iter), ds.n, true,
                                          config.max_pool, config.threads);
                latent_posterior_weights(es_d, chain_d, table_d, nullptr, &params.gllvm, &obs,
                                         config.threads);
                head_path_posteriors(es_d, table_d);
            }

            const TailEState tail = tail_posteriors(
                params, c_head ? &ds.y_c : nullptr, c_head ? &es_c : nullptr,
                c_head ? &table_c : nullptr, gllvm ? &es_d : nullptr, gllvm ? &table_d : nullptr,
                config.threads);

            const double loglik = arch.mode == Mode::M2
                                      ? observed_loglik_joint(tail)
                                      : observed_loglik_estimate(gllvm ? es_d : es_c,
                                                                 gllvm ? table_d : table_c);

            // iteration summary comes from the E step; labels and embeddings
            // of the estate that produced this log-likelihood
            const ChainEState& es_tail = gllvm ? es_d : es_c;
            const PathTable& table_tail = gllvm ? table_d : table_c;
            const Chain& chain_tail = gllvm ? chain_d : chain_c;
            const int off_tail = gllvm ? 0 : 1;
            MatrixXd cluster_post;
            if (!tail.comp_post.empty()) {
                cluster_post = tail.comp_post[config.clustering_layer];
            } else {
                // no tail transform: cluster at the deepest head transform
                const int t = chain_tail.size() - 1;
                cluster_post.resize(ds.n, chain_tail.layer(t).K());
                for (int i = 0; i < ds.n; ++i)
                    cluster_post.row(i) =
                        layer_component_posterior(es_tail, table_tail, t, i).transpose();
            }
            const std::vector<int> labels = assign_clusters(cluster_post);
            const double sil = silhouette(labels, gower);
            std::vector<MatrixXd> embeddings;
            for (std::size_t j = 0; j < params.layers_tail.size(); ++j)
                embeddings.push_back(
                    level_embedding(es_tail, chain_tail.head_len + static_cast<int>(j) - off_tail));
            if (embeddings.empty())
                embeddings.push_back(level_embedding(es_tail, es_tail.n_levels() - 1));

            // M step
            if (gllvm) params.gllvm = optimize_gllvm(obs, es_d, params.gllvm, 30, warnings,
                                                     config.threads);
            std::vector<MixtureLayer> new_c, new_d, new_tail;
            std::vector<VectorXd> pi_c, pi_d, pi_tail;
            if (c_head)
                for (int t = 0; t < chain_c.head_len; ++t) {
                    new_c.push_back(update_dgmm_layer(es_c, chain_c, table_c, t,
                                                      t == 0 ? &ds.y_c : nullptr, warnings));
                    pi_c.push_back(update_path_probs(es_c, table_c, t));
                }
            if (gllvm)
                for (int t = 0; t < chain_d.head_len; ++t) {
                    new_d.push_back(update_dgmm_layer(es_d, chain_d, table_d, t, nullptr, warnings));
                    pi_d.push_back(update_path_probs(es_d, table_d, t));
                }
            {
                const ChainEState& es = gllvm ? es_d : es_c;
                const PathTable& table = gllvm ? table_d : table_c;
                const Chain& chain = gllvm ? chain_d : chain_c;
                for (std::size_t j = 0; j < params.layers_tail.size(); ++j) {
                    const int t = chain.head_len + static_cast<int>(j);
                    new_tail.push_back(update_dgmm_layer(es, chain, table, t, nullptr, warnings));
                    pi_tail.push_back(update_path_probs(es, table, t));
                }
            }
            for (std::size_t t = 0; t < new_c.size(); ++t) {
                params.layers_c[t] = std::move(new_c[t]);
                set_mixture_probs(params.layers_c[t], pi_c[t]);
            }
            for (std::size_t t = 0; t < new_d.size(); ++t) {
                params.layers_d[t] = std::move(new_d[t]);
                set_mixture_probs(params.layers_d[t], pi_d[t]);
            }
            for (std::size_t t = 0; t < new_tail.size(); ++t) {
                params.layers_tail[t] = std::move(new_tail[t]);
                set_mixture_probs(params.layers_tail[t], pi_tail[t]);
            }
            rescale_layers(params);

            TraceRow row;
            row.iteration = iter;
            row.loglik = loglik;
            row.silhouette = sil;
            row.m_schedule = mc_schedule(ds.n, iter, arch.tail.front().r);
            row.wall_seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
            result.trace.push_back(row);

            // rank by silhouette; when it is undefined throughout (single
            // occupied cluster) fall back to the likelihood so the retained
            // snapshot is the most converged one
            const double sil_rank = std::isnan(sil) ? kNegInf : sil;
            const bool better = !have_snapshot || sil_rank > best_sil ||
                                (sil_rank == kNegInf && best_sil == kNegInf &&
                                 loglik > best_snap_ll);
            if (better) {
                best_sil = sil_rank;
                best_snap_ll = loglik;
                have_snapshot = true;
                result.params = params;
                result.architecture_final = arch;
                result.labels = labels;
                result.embeddings = std::move(embeddings);
                result.selected_iteration = iter;
            }

            // architecture-selection pass
            if (std::find(config.selection_iters.begin(), config.selection_iters.end(), iter) !=
                config.selection_iters.end()) {
                SelectionDecision decision;
                for (std::size_t t = 0; t < params.layers_c.size(); ++t)
                    decision.comps_c.push_back(prune_components(params.layers_c[t], false));
                for (std::size_t t = 0; t < params.layers_d.size(); ++t)
                    decision.comps_d.push_back(prune_components(params.layers_d[t], false));
                for (std::size_t j = 0; j < params.layers_tail.size(); ++j) {
                    const bool frozen =
                        config.multi_clustering ||
                        (static_cast<int>(j) == config.clustering_layer && !config.autoclus);
                    decision.comps_tail.push_back(prune_components(params.layers_tail[j], frozen));
                }
                if (gllvm)
                    decision.embedding_dims = select_embedding_dims(obs, kinds, es_d, 0);
                const int n_tail_vars = static_cast<int>(arch.tail.size());
                for (int v = 0; v < n_tail_vars; ++v) {
                    const ChainEState& es = gllvm ? es_d : es_c;
                    const Chain& chain = gllvm ? chain_d : chain_c;
                    std::vector<int> kept =
                        select_dgmm_dims(es, chain.head_len + v - (gllvm ? 0 : 1));
                    if (v == 0 && arch.mode == Mode::M2) {
                        // junction: union of the two heads' kept sets
                        const std::vector<int> kept_c =
                            select_dgmm_dims(es_c, chain_c.head_len + v - 1);
                        std::vector<int> merged = kept;
                        for (int d : kept_c)
                            if (std::find(merged.begin(), merged.end(), d) == merged.end())
                                merged.push_back(d);
                        std::sort(merged.begin(), merged.end());
                        kept = std::move(merged);
                    }
                    decision.tail_dims.push_back(std::move(kept));
                }

                auto [new_arch, new_params] = apply_architecture_update(arch, params, decision);
                if (new_arch.describe() != arch.describe()) {
                    arch = std::move(new_arch);
                    auto refit = nsep_init(ds, arch, config.seed, warnings);
                    params = std::move(refit.first);
                    kinds.clear();
                    for (const auto& link : params.gllvm) kinds.push_back(link.kind);
                    best_ll = kNegInf;
                    stall = 0;
                    continue;
                }
                params = std::move(new_params);
            }

            if (loglik > best_ll) {
                best_ll = loglik;
                stall = 0;
            } else {
                ++stall;
                if (stall >= std::max(config.patience, 1)) break;
            }
        } catch (const NumericalError& e) {
            throw NumericalError("fit iteration " + std::to_string(iter) + ": " + e.what());
        }
    }

    if (!have_snapshot) throw NumericalError("fit: no iteration completed");
    diagonalize_loadings(result.params);
    return result;
}

}  // namespace mixclus
