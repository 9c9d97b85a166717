#include "mixclus/mcem.hpp"

#include <cmath>
#include <limits>

#include "mixclus/optim.hpp"
#include "mixclus/parallel.hpp"
#include "mixclus/rng.hpp"

namespace mixclus {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kWeightSkip = 1e-15;

double logsumexp(const VectorXd& v) {
    const double m = v.maxCoeff();
    if (!std::isfinite(m)) return m;
    return m + std::log((v.array() - m).exp().sum());
}

/// Latent-level layout of a chain: a GLLVM head samples the output of layer 0
/// as its first level, a continuous head starts at the input of layer 0.
struct Levels {
    int count = 0;
    int off = 0;  // x_e is the output of chain layer e + off (terminal at the last level)
    std::vector<int> dim;
};

Levels level_layout(const Chain& chain, bool gllvm_head) {
    Levels lv;
    lv.off = gllvm_head ? 0 : 1;
    lv.count = chain.size() + (gllvm_head ? 1 : 0);
    lv.dim.resize(lv.count);
    for (int e = 0; e < lv.count; ++e)
        lv.dim[e] = e == lv.count - 1 ? chain.terminal_dim : chain.layer(e + lv.off).out_dim;
    return lv;
}

std::pair<const VectorXd*, const MatrixXd*> level_marginal(const PathTable& table, const Levels& lv,
                                                           int s, int e, const VectorXd& zero,
                                                           const MatrixXd& eye) {
    if (e == lv.count - 1) return {&zero, &eye};
    return {&table.mu[s][e + lv.off], &table.sigma[s][e + lv.off]};
}

MatrixXd chol_lower(const MatrixXd& m, const char* what) {
    Eigen::LLT<MatrixXd> llt(m);
    if (llt.info() != Eigen::Success) {
        MatrixXd jittered = m + kRidge * MatrixXd::Identity(m.rows(), m.cols());
        llt.compute(jittered);
        if (llt.info() != Eigen::Success) throw NumericalError(std::string(what) + ": covariance not SPD");
    }
    return llt.matrixL();
}

/// Affine conditional x_{e+1} | x_e = z along one path: mean = a z + b,
/// covariance with Cholesky factor chol_xi.
struct CondMap {
    MatrixXd a;
    VectorXd b;
    MatrixXd chol_xi;
};

CondMap make_cond_map(const Chain& chain, const PathTable& table, const Levels& lv, int s, int e,
                      const VectorXd& zero_term, const MatrixXd& eye_term) {
    const int layer = e + lv.off;
    const FactorComponent& c = chain.layer(layer).comps[table.paths[s][layer]];
    auto [mu_p, sigma_p] = level_marginal(table, lv, s, e + 1, zero_term, eye_term);

    Eigen::LLT<MatrixXd> psi_llt(c.psi);
    if (psi_llt.info() != Eigen::Success) throw NumericalError("draw: singular noise covariance");
    Eigen::LLT<MatrixXd> sig_llt(*sigma_p);
    if (sig_llt.info() != Eigen::Success) throw NumericalError("draw: singular prior covariance");

    const MatrixXd psi_inv_lambda = psi_llt.solve(c.lambda);
    const Eigen::Index r = mu_p->size();
    MatrixXd prec = sig_llt.solve(MatrixXd::Identity(r, r)) + c.lambda.transpose() * psi_inv_lambda;
    prec = 0.5 * (prec + prec.transpose());
    Eigen::LLT<MatrixXd> prec_llt(prec);
    if (prec_llt.info() != Eigen::Success) throw NumericalError("draw: degenerate posterior precision");
    MatrixXd xi = prec_llt.solve(MatrixXd::Identity(r, r));
    xi = 0.5 * (xi + xi.transpose());

    CondMap map;
    map.a = xi * psi_inv_lambda.transpose();
    map.b = xi * sig_llt.solve(*mu_p) - map.a * c.eta;
    map.chol_xi = chol_lower(xi, "draw");
    return map;
}

}  // namespace

double gllvm_log_density(const std::vector<LinkParams>& links, const GllvmObs& obs, int i,
                         const ConstVecRef& z) {
    double ll = 0.0;
    const int nd = static_cast<int>(obs.codes.cols());
    for (std::size_t j = 0; j < links.size(); ++j) {
        if (static_cast<int>(j) < nd)
            ll += log_density(links[j], obs.codes(i, j), z, obs.trials[j]);
        else
            ll += log_density_continuous(links[j], obs.values(i, static_cast<int>(j) - nd), z);
    }
    return ll;
}

ChainEState draw_layer_latents(std::uint64_t seed, std::uint64_t iter, const Chain& chain,
                               const PathTable& table, const std::vector<int>& schedule, int n,
                               bool gllvm_head, int max_pool, int threads) {
    const Levels lv = level_layout(chain, gllvm_head);
    const int S = table.size();
    if (static_cast<int>(schedule.size()) < lv.count)
        throw ConfigError("draw_layer_latents: schedule shorter than the latent depth");
    if (table.mu.empty()) throw ConfigError("draw_layer_latents: path moments not filled");

    ChainEState es;
    es.n = n;
    es.gllvm_head = gllvm_head;
    es.pool.resize(lv.count);
    es.pool[0] = std::max(1, std::min(schedule[0], max_pool));
    for (int e = 1; e < lv.count; ++e) {
        const int room = std::max(1, max_pool / es.pool[e - 1]);
        es.pool[e] = es.pool[e - 1] * std::max(1, std::min(schedule[e], room));
    }
    es.log_fy = MatrixXd::Zero(n, S);
    es.path_post = MatrixXd::Zero(n, S);
    es.draws.resize(static_cast<std::size_t>(n) * S);
    es.weights.resize(static_cast<std::size_t>(n) * S);

    const VectorXd zero_term = VectorXd::Zero(chain.terminal_dim);
    const MatrixXd eye_term = MatrixXd::Identity(chain.terminal_dim, chain.terminal_dim);

    // per-path caches shared by all observations
    std::vector<MatrixXd> chol0(S);
    std::vector<std::vector<CondMap>> cond(S);
    for (int s = 0; s < S; ++s) {
        auto [mu0, sigma0] = level_marginal(table, lv, s, 0, zero_term, eye_term);
        (void)mu0;
        chol0[s] = chol_lower(*sigma0, "draw");
        cond[s].reserve(lv.count - 1);
        for (int e = 0; e + 1 < lv.count; ++e)
            cond[s].push_back(make_cond_map(chain, table, lv, s, e, zero_term, eye_term));
    }

    parallel_for(n, threads, [&](int i) {
        Rng rng = Rng::substream(seed, static_cast<std::uint64_t>(i), iter);
        for (int s = 0; s < S; ++s) {
            auto& d = es.draws[static_cast<std::size_t>(i) * S + s];
            d.resize(lv.count);
            auto [mu0, sigma0] = level_marginal(table, lv, s, 0, zero_term, eye_term);
            (void)sigma0;
            d[0].resize(lv.dim[0], es.pool[0]);
            for (int m = 0; m < es.pool[0]; ++m) d[0].col(m) = rng.mvn(*mu0, chol0[s]);
            for (int e = 0; e + 1 < lv.count; ++e) {
                const int kids = es.pool[e + 1] / es.pool[e];
                d[e + 1].resize(lv.dim[e + 1], es.pool[e + 1]);
                const CondMap& map = cond[s][e];
                for (int m = 0; m < es.pool[e]; ++m) {
                    const VectorXd rho = map.a * d[e].col(m) + map.b;
                    for (int c = 0; c < kids; ++c)
                        d[e + 1].col(m * kids + c) = rng.mvn(rho, map.chol_xi);
                }
            }
        }
    });
    return es;
}

void latent_posterior_weights(ChainEState& es, const Chain& chain, const PathTable& table,
                              const MatrixXd* y_c, const std::vector<LinkParams>* links,
                              const GllvmObs* obs, int threads) {
    const int S = table.size();
    const int E = es.n_levels();
    if (es.gllvm_head && (!links || !obs))
        throw ConfigError("latent_posterior_weights: GLLVM head needs links and observations");
    if (!es.gllvm_head && !y_c)
        throw ConfigError("latent_posterior_weights: continuous head needs the observed block");

    // continuous head: per-path exact marginal of y and layer-0 noise factor
    std::vector<Eigen::LLT<MatrixXd>> psi_llt;
    std::vector<double> psi_logdet(S, 0.0);
    std::vector<Eigen::LLT<MatrixXd>> marg_llt;
    std::vector<double> marg_logdet(S, 0.0);
    if (!es.gllvm_head) {
        psi_llt.resize(S);
        marg_llt.resize(S);
        for (int s = 0; s < S; ++s) {
            const FactorComponent& c0 = chain.layer(0).comps[table.paths[s][0]];
            psi_llt[s].compute(c0.psi);
            if (psi_llt[s].info() != Eigen::Success)
                throw NumericalError("latent_posterior_weights: singular layer-0 noise");
            marg_llt[s].compute(table.sigma[s][0]);
            if (marg_llt[s].info() != Eigen::Success)
                throw NumericalError("latent_posterior_weights: singular path marginal");
            for (Eigen::Index r = 0; r < c0.psi.rows(); ++r) {
                psi_logdet[s] += std::log(psi_llt[s].matrixL()(r, r));
                marg_logdet[s] += std::log(marg_llt[s].matrixL()(r, r));
            }
        }
    }
    const double half_log_2pi = 0.5 * std::log(2.0 * M_PI);

    parallel_for(es.n, threads, [&](int i) {
        for (int s = 0; s < S; ++s) {
            const std::size_t slot = static_cast<std::size_t>(i) * S + s;
            auto& w = es.weights[slot];
            w.resize(E);
            const MatrixXd& z0 = es.draws[slot][0];
            VectorXd logw(es.pool[0]);
            if (es.gllvm_head) {
                for (int m = 0; m < es.pool[0]; ++m)
                    logw[m] = gllvm_log_density(*links, *obs, i, z0.col(m));
                es.log_fy(i, s) = logsumexp(logw) - std::log(static_cast<double>(es.pool[0]));
            } else {
                const FactorComponent& c0 = chain.layer(0).comps[table.paths[s][0]];
                const int p = static_cast<int>(c0.eta.size());
                for (int m = 0; m < es.pool[0]; ++m) {
                    const VectorXd d = y_c->row(i).transpose() - c0.eta - c0.lambda * z0.col(m);
                    logw[m] = -p * half_log_2pi - psi_logdet[s] -
                              0.5 * psi_llt[s].matrixL().solve(d).squaredNorm();
                }
                const VectorXd dm = y_c->row(i).transpose() - table.mu[s][0];
                es.log_fy(i, s) = -p * half_log_2pi - marg_logdet[s] -
                                  0.5 * marg_llt[s].matrixL().solve(dm).squaredNorm();
            }
            const double lse = logsumexp(logw);
            w[0] = std::isfinite(lse) ? VectorXd((logw.array() - lse).exp())
                                      : VectorXd::Constant(es.pool[0], 1.0 / es.pool[0]);
            for (int e = 1; e < E; ++e) {
                const int kids = es.children(e);
                w[e].resize(es.pool[e]);
                for (int m = 0; m < es.pool[e - 1]; ++m)
                    w[e].segment(static_cast<Eigen::Index>(m) * kids, kids)
                        .setConstant(w[e - 1][m] / kids);
            }
        }
    });
}

void head_path_posteriors(ChainEState& es, const PathTable& table) {
    const int S = table.size();
    VectorXd log_prior(S);
    for (int s = 0; s < S; ++s)
        log_prior[s] = table.prior[s] > 0 ? std::log(table.prior[s]) : kNegInf;
    for (int i = 0; i < es.n; ++i) {
        VectorXd lp = log_prior + es.log_fy.row(i).transpose();
        const double lse = logsumexp(lp);
        if (!std::isfinite(lse))
            throw NumericalError("head_path_posteriors: zero likelihood for every path");
        es.path_post.row(i) = (lp.array() - lse).exp();
    }
}

VectorXd layer_component_posterior(const ChainEState& es, const PathTable& table, int t, int i) {
    int k_count = 0;
    for (const auto& path : table.paths) k_count = std::max(k_count, path[t] + 1);
    VectorXd post = VectorXd::Zero(k_count);
    for (int s = 0; s < table.size(); ++s) post[table.paths[s][t]] += es.path_post(i, s);
    return post;
}

TailEState tail_posteriors(const ModelParams& params, const MatrixXd* y_c, ChainEState* es_c,
                           const PathTable* table_c, ChainEState* es_d, const PathTable* table_d,
                           int threads) {
    TailEState tail;
    const int n_tail_layers = static_cast<int>(params.layers_tail.size());

    if (params.mode != Mode::M2) {
        ChainEState* es = es_d ? es_d : es_c;
        const PathTable* table = es_d ? table_d : table_c;
        const Chain chain = build_chain(params, es_d ? Head::D : Head::C);
        tail.log_joint_norm.resize(es->n);
        VectorXd log_prior(table->size());
        for (int s = 0; s < table->size(); ++s)
            log_prior[s] = table->prior[s] > 0 ? std::log(table->prior[s]) : kNegInf;
        for (int i = 0; i < es->n; ++i)
            tail.log_joint_norm[i] = logsumexp(log_prior + es->log_fy.row(i).transpose());
        for (int j = 0; j < n_tail_layers; ++j) {
            const int t = chain.head_len + j;
            MatrixXd post(es->n, chain.layer(t).K());
            for (int i = 0; i < es->n; ++i)
                post.row(i) = layer_component_posterior(*es, *table, t, i).transpose();
            tail.comp_post.push_back(std::move(post));
        }
        return tail;
    }

    if (!es_c || !es_d || !y_c) throw ConfigError("tail_posteriors: m2 needs both head states");
    const Chain chain_c = build_chain(params, Head::C);
    const Chain chain_d = build_chain(params, Head::D);
    const int n = es_d->n;
    const int s_d = table_d->size();
    const int s_c = table_c->size();

    long s_tail = 1;
    for (const auto& l : params.layers_tail) s_tail *= l.K();
    const int c_count = static_cast<int>(s_c / s_tail);  // continuous head partial paths

    // per partial head path: prior and affine law of y^C given the junction
    std::vector<double> log_pi_c(c_count);
    std::vector<AffineLaw> law(c_count);
    std::vector<Eigen::LLT<MatrixXd>> law_llt(c_count);
    std::vector<double> law_logdet(c_count, 0.0);
    for (int c = 0; c < c_count; ++c) {
        const int full = static_cast<int>(c * s_tail);  // tail components all zero
        double pi = 1.0;
        for (int t = 0; t < chain_c.head_len; ++t)
            pi *= chain_c.layer(t).comps[table_c->paths[full][t]].pi;
        log_pi_c[c] = pi > 0 ? std::log(pi) : kNegInf;
        law[c] = compose_to_output(chain_c, table_c->paths[full], chain_c.head_len - 1);
        law_llt[c].compute(law[c].cov);
        if (law_llt[c].info() != Eigen::Success)
            throw NumericalError("tail_posteriors: singular continuous-head covariance");
        for (Eigen::Index r = 0; r < law[c].cov.rows(); ++r)
            law_logdet[c] += std::log(law_llt[c].matrixL()(r, r));
    }
    VectorXd log_prior_d(s_d);
    for (int s = 0; s < s_d; ++s)
        log_prior_d[s] = table_d->prior[s] > 0 ? std::log(table_d->prior[s]) : kNegInf;

    const int e_junction = chain_d.head_len;  // D-chain level holding the junction latent
    const int p_c = static_cast<int>(y_c->cols());
    const double half_log_2pi = 0.5 * std::log(2.0 * M_PI);

    tail.log_joint_norm.resize(n);
    for (int j = 0; j < n_tail_layers; ++j)
        tail.comp_post.emplace_back(MatrixXd::Zero(n, params.layers_tail[j].K()));
    MatrixXd path_post_d = MatrixXd::Zero(n, s_d);
    MatrixXd path_post_c = MatrixXd::Zero(n, s_c);

    parallel_for(n, threads, [&](int i) {
        const int pool_j = es_d->pool[e_junction];
        // log g(c, s, m) = log N(y_i^C; offset_c + gain_c x_m, cov_c)
        MatrixXd log_joint(c_count, s_d);
        std::vector<MatrixXd> w_fused(s_d);  // per s: c_count x pool_j, normalized over m
        for (int s = 0; s < s_d; ++s) {
            const MatrixXd& x = es_d->d(i, s, e_junction);
            const VectorXd& wj = es_d->w(i, s, e_junction);
            MatrixXd logwg(c_count, pool_j);
            for (int c = 0; c < c_count; ++c) {
                for (int m = 0; m < pool_j; ++m) {
                    const VectorXd d = y_c->row(i).transpose() - law[c].offset - law[c].gain * x.col(m);
                    const double log_g = -p_c * half_log_2pi - law_logdet[c] -
                                         0.5 * law_llt[c].matrixL().solve(d).squaredNorm();
                    logwg(c, m) = (wj[m] > 0 ? std::log(wj[m]) : kNegInf) + log_g;
                }
                const double lse = logsumexp(logwg.row(c).transpose());
                log_joint(c, s) = log_pi_c[c] + log_prior_d[s] + es_d->log_fy(i, s) + lse;
            }
            w_fused[s] = logwg;
        }
        const double norm = logsumexp(Eigen::Map<VectorXd>(log_joint.data(), log_joint.size()));
        if (!std::isfinite(norm))
            throw NumericalError("tail_posteriors: zero joint likelihood");
        tail.log_joint_norm[i] = norm;
        const MatrixXd joint = (log_joint.array() - norm).exp();

        for (int s = 0; s < s_d; ++s) {
            const double ps = joint.col(s).sum();
            path_post_d(i, s) = ps;
            const int tail_idx = static_cast<int>(s % s_tail);
            for (int j = 0; j < n_tail_layers; ++j)
                tail.comp_post[j](i, table_d->paths[s][chain_d.head_len + j]) += ps;
            for (int c = 0; c < c_count; ++c)
                path_post_c(i, static_cast<int>(c * s_tail) + tail_idx) += joint(c, s);

            // fused junction weights: mixture over head paths of the
            // y^C-reweighted draw weights
            VectorXd w_new = VectorXd::Zero(pool_j);
            if (ps > kWeightSkip) {
                for (int c = 0; c < c_count; ++c) {
                    if (joint(c, s) <= 0) continue;
                    const double lse = logsumexp(w_fused[s].row(c).transpose());
                    if (!std::isfinite(lse)) continue;
                    w_new += (joint(c, s) / ps) *
                             (w_fused[s].row(c).transpose().array() - lse).exp().matrix();
                }
                const double total = w_new.sum();
                if (total > 0) w_new /= total;
            }
            if (w_new.sum() <= 0) w_new = es_d->w(i, s, e_junction);
            auto& w = es_d->weights[static_cast<std::size_t>(i) * s_d + s];
            w[e_junction] = w_new;
            for (int e = e_junction + 1; e < es_d->n_levels(); ++e) {
                const int kids = es_d->children(e);
                for (int m = 0; m < es_d->pool[e - 1]; ++m)
                    w[e].segment(static_cast<Eigen::Index>(m) * kids, kids)
                        .setConstant(w[e - 1][m] / kids);
            }
        }
    });
    es_d->path_post = std::move(path_post_d);
    es_c->path_post = std::move(path_post_c);
    return tail;
}

MixtureLayer update_dgmm_layer(const ChainEState& es, const Chain& chain, const PathTable& table,
                               int t, const MatrixXd* y_out, WarningLog* warnings) {
    const Levels lv = level_layout(chain, es.gllvm_head);
    const int ei = t - lv.off + 1;  // input level of layer t
    const int eo = ei - 1;          // output level (-1: observed rows)
    if (eo < 0 && !y_out)
        throw ConfigError("update_dgmm_layer: layer 0 of a continuous head needs the observed block");

    const MixtureLayer& old = chain.layer(t);
    const int k_count = old.K();
    const int out_dim = old.out_dim;
    const int in_dim = old.in_dim;

    std::vector<MatrixXd> suu(k_count, MatrixXd::Zero(in_dim + 1, in_dim + 1));
    std::vector<MatrixXd> suv(k_count, MatrixXd::Zero(in_dim + 1, out_dim));
    std::vector<MatrixXd> svv(k_count, MatrixXd::Zero(out_dim, out_dim));
    std::vector<double> sw(k_count, 0.0);

    VectorXd u(in_dim + 1);
    u[0] = 1.0;
    for (int i = 0; i < es.n; ++i) {
        for (int s = 0; s < table.size(); ++s) {
            const double pp = es.path_post(i, s);
            if (pp < kWeightSkip) continue;
            const int k = table.paths[s][t];
            const MatrixXd& zin = es.d(i, s, ei);
            const VectorXd& w = es.w(i, s, ei);
            const int kids = ei > 0 ? es.children(ei) : 1;
            for (int m = 0; m < es.pool[ei]; ++m) {
                const double omega = pp * w[m];
                if (omega < kWeightSkip) continue;
                u.tail(in_dim) = zin.col(m);
                VectorXd v = eo < 0 ? VectorXd(y_out->row(i).transpose())
                                    : VectorXd(es.d(i, s, eo).col(m / kids));
                sw[k] += omega;
                suu[k].noalias() += omega * u * u.transpose();
                suv[k].noalias() += omega * u * v.transpose();
                svv[k].noalias() += omega * v * v.transpose();
            }
        }
    }

    MixtureLayer out;
    out.out_dim = out_dim;
    out.in_dim = in_dim;
    out.comps.resize(k_count);
    double total_w = 0.0;
    for (double w : sw) total_w += w;
    for (int k = 0; k < k_count; ++k) {
        FactorComponent& c = out.comps[k];
        c.pi = total_w > 0 ? sw[k] / total_w : 1.0 / k_count;
        if (sw[k] < 1e-12) {
            if (warnings) warnings->add("update_dgmm_layer: component with no posterior mass");
            c = old.comps[k];
            c.pi = total_w > 0 ? sw[k] / total_w : 1.0 / k_count;
            continue;
        }
        MatrixXd a = suu[k] + kRidge * sw[k] * MatrixXd::Identity(in_dim + 1, in_dim + 1);
        Eigen::LDLT<MatrixXd> ldlt(a);
        const MatrixXd coef = ldlt.solve(suv[k]);  // rows: intercept then slopes
        c.eta = coef.row(0).transpose();
        c.lambda = coef.bottomRows(in_dim).transpose();
        MatrixXd resid = svv[k] - suv[k].transpose() * coef - coef.transpose() * suv[k] +
                         coef.transpose() * suu[k] * coef;
        resid /= sw[k];
        resid = 0.5 * (resid + resid.transpose());
        Eigen::SelfAdjointEigenSolver<MatrixXd> eig(resid);
        const VectorXd vals = eig.eigenvalues().cwiseMax(kPsiFloor);
        c.psi = eig.eigenvectors() * vals.asDiagonal() * eig.eigenvectors().transpose();
        c.psi = 0.5 * (c.psi + c.psi.transpose());
    }
    return out;
}

VectorXd update_path_probs(const ChainEState& es, const PathTable& table, int t) {
    int k_count = 0;
    for (const auto& path : table.paths) k_count = std::max(k_count, path[t] + 1);
    VectorXd pi = VectorXd::Zero(k_count);
    for (int i = 0; i < es.n; ++i)
        for (int s = 0; s < table.size(); ++s) pi[table.paths[s][t]] += es.path_post(i, s);
    const double total = pi.sum();
    if (total > 0) pi /= total;
    return pi;
}

namespace {

struct LinkCodec {
    static VectorXd encode(const LinkParams& p) {
        const int r = static_cast<int>(p.loadings.size());
        VectorXd theta;
        switch (p.kind) {
            case VarKind::Ordinal: {
                theta.resize(p.intercepts.size() + r);
                theta.head(p.intercepts.size()) = cutpoints_encode(p.intercepts);
                theta.tail(r) = p.loadings;
                break;
            }
            case VarKind::Continuous: {
                theta.resize(1 + r + 1);
                theta[0] = p.intercepts[0];
                theta.segment(1, r) = p.loadings;
                theta[1 + r] = std::log(std::max(p.sigma2, kPsiFloor));
                break;
            }
            default: {
                theta.resize(p.intercepts.size() + r);
                theta.head(p.intercepts.size()) = p.intercepts;
                theta.tail(r) = p.loadings;
            }
        }
        return theta;
    }

    static LinkParams decode(const LinkParams& base, const VectorXd& theta) {
        LinkParams p = base;
        const int r = static_cast<int>(base.loadings.size());
        switch (p.kind) {
            case VarKind::Ordinal:
                p.intercepts = cutpoints_decode(theta.head(base.intercepts.size()));
                p.loadings = theta.tail(r);
                break;
            case VarKind::Continuous:
                p.intercepts[0] = theta[0];
                p.loadings = theta.segment(1, r);
                p.sigma2 = std::exp(theta[1 + r]);
                break;
            default:
                p.intercepts = theta.head(base.intercepts.size());
                p.loadings = theta.tail(r);
        }
        return p;
    }

    /// Map the per-sample gradient (link parameter space) into theta space.
    static VectorXd to_theta_grad(const LinkParams& p, const VectorXd& theta, const VectorXd& g) {
        if (p.kind != VarKind::Ordinal) return g;  // identity elsewhere (log-sigma2 already applied)
        const int nc = static_cast<int>(p.intercepts.size());
        VectorXd out(g.size());
        out.head(nc) = cutpoints_chain_grad(theta.head(nc), g.head(nc));
        out.tail(g.size() - nc) = g.tail(g.size() - nc);
        return out;
    }
};

}  // namespace

std::vector<LinkParams> optimize_gllvm(const GllvmObs& obs, const ChainEState& es,
                                       const std::vector<LinkParams>& current, int max_inner,
                                       WarningLog* warnings, int threads) {
    if (max_inner <= 0) return current;
    const int n_links = static_cast<int>(current.size());
    const int S = es.n_paths();

    // sample index shared by every link: (slot, m) pairs with usable weight
    struct Sample {
        int i;
        std::size_t slot;
        int m;
        double omega;
    };
    std::vector<Sample> samples;
    for (int i = 0; i < es.n; ++i) {
        for (int s = 0; s < S; ++s) {
            const double pp = es.path_post(i, s);
            if (pp < kWeightSkip) continue;
            const std::size_t slot = static_cast<std::size_t>(i) * S + s;
            const VectorXd& w = es.weights[slot][0];
            for (int m = 0; m < es.pool[0]; ++m) {
                const double omega = pp * w[m];
                if (omega >= kWeightSkip) samples.push_back({i, slot, m, omega});
            }
        }
    }

    std::vector<LinkParams> out = current;
    const int nd = static_cast<int>(obs.codes.cols());
    parallel_for(n_links, threads, [&](int j) {
        const LinkParams& base = current[j];
        const int r = static_cast<int>(base.loadings.size());
        // upper-triangular mask on binary/count rows (loadings tail of theta)
        std::vector<int> masked;
        if (base.kind == VarKind::Binary || base.kind == VarKind::Count) {
            const int head = static_cast<int>(LinkCodec::encode(base).size()) - r;
            for (int c = j + 1; c < r; ++c) masked.push_back(head + c);
        }
        LinkParams start = base;
        for (int c = j + 1; c < r && (base.kind == VarKind::Binary || base.kind == VarKind::Count); ++c)
            start.loadings[c] = 0.0;

        auto fg = [&](const VectorXd& theta, VectorXd* grad) -> double {
            const LinkParams p = LinkCodec::decode(start, theta);
            if (p.kind == VarKind::Ordinal) {
                for (Eigen::Index c = 1; c < p.intercepts.size(); ++c)
                    if (!(p.intercepts[c] > p.intercepts[c - 1]))
                        return kNegInf;
            }
            double f = 0.0;
            VectorXd g = grad ? VectorXd::Zero(theta.size()) : VectorXd();
            for (const Sample& sm : samples) {
                const auto z = es.draws[sm.slot][0].col(sm.m);
                if (j < nd) {
                    f += sm.omega * log_density(p, obs.codes(sm.i, j), z, obs.trials[j]);
                    if (grad)
                        g += sm.omega *
                             LinkCodec::to_theta_grad(p, theta, grad_log_density(p, obs.codes(sm.i, j), z, obs.trials[j]));
                } else {
                    f += sm.omega * log_density_continuous(p, obs.values(sm.i, j - nd), z);
                    if (grad)
                        g += sm.omega * grad_log_density_continuous(p, obs.values(sm.i, j - nd), z);
                }
            }
            if (grad) {
                for (int idx : masked) g[idx] = 0.0;
                *grad = g;
            }
            return f;
        };

        const VectorXd theta0 = LinkCodec::encode(start);
        const OptimResult res = maximize_bfgs(fg, theta0, max_inner);
        if (res.improved) {
            out[j] = LinkCodec::decode(start, res.x);
        } else {
            out[j] = start;
            if (warnings && res.iterations > 0)
                warnings->add("optimize_gllvm: no ascent for link " + std::to_string(j));
        }
        for (int idx = j + 1; idx < r && (out[j].kind == VarKind::Binary || out[j].kind == VarKind::Count);
             ++idx)
            out[j].loadings[idx] = 0.0;
    });
    return out;
}

double observed_loglik_estimate(const ChainEState& es, const PathTable& table) {
    VectorXd log_prior(table.size());
    for (int s = 0; s < table.size(); ++s)
        log_prior[s] = table.prior[s] > 0 ? std::log(table.prior[s]) : kNegInf;
    double total = 0.0;
    for (int i = 0; i < es.n; ++i)
        total += logsumexp(log_prior + es.log_fy.row(i).transpose());
    return total;
}

double observed_loglik_joint(const TailEState& tail) { return tail.log_joint_norm.sum(); }

}  // namespace mixclus
