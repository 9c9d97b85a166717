#include "mixclus/nsep.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mixclus/gaussnet.hpp"
#include "mixclus/links.hpp"
#include "mixclus/optim.hpp"
#include "mixclus/rng.hpp"

namespace mixclus {

namespace {

constexpr double kCovFloor = 1e-6;

MatrixXd center_columns(const MatrixXd& x) {
    return x.rowwise() - x.colwise().mean();
}

void fix_sign(MatrixXd& vectors) {
    for (Eigen::Index c = 0; c < vectors.cols(); ++c) {
        int arg = 0;
        vectors.col(c).cwiseAbs().maxCoeff(&arg);
        if (vectors(arg, c) < 0) vectors.col(c) = -vectors.col(c);
    }
}

MatrixXd floor_spd(const MatrixXd& m, double floor) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(0.5 * (m + m.transpose()));
    const VectorXd vals = eig.eigenvalues().cwiseMax(floor);
    return eig.eigenvectors() * vals.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace

McaResult mca(const Eigen::MatrixXi& codes, const std::vector<int>& n_levels, int r,
              WarningLog* warnings) {
    const int n = static_cast<int>(codes.rows());
    const int q = static_cast<int>(codes.cols());
    if (q == 0 || n == 0) throw ConfigError("mca: empty input");

    // column layout of the indicator matrix, dropping empty levels
    std::vector<std::pair<int, int>> level_cols;  // (variable, level)
    for (int j = 0; j < q; ++j) {
        std::vector<int> count(n_levels[j], 0);
        for (int i = 0; i < n; ++i) count.at(codes(i, j))++;
        for (int l = 0; l < n_levels[j]; ++l) {
            if (count[l] == 0) {
                if (warnings) warnings->add("mca: level with zero occurrences dropped");
                continue;
            }
            level_cols.emplace_back(j, l);
        }
    }
    const int jcols = static_cast<int>(level_cols.size());
    const int max_rank = jcols - q;
    if (r > max_rank)
        throw ConfigError("mca: requested " + std::to_string(r) + " dimensions, rank is " +
                          std::to_string(max_rank));

    MatrixXd z = MatrixXd::Zero(n, jcols);
    for (int c = 0; c < jcols; ++c)
        for (int i = 0; i < n; ++i)
            if (codes(i, level_cols[c].first) == level_cols[c].second) z(i, c) = 1.0;

    // correspondence analysis of Z with uniform row masses
    const double total = static_cast<double>(n) * q;
    const VectorXd col_mass = z.colwise().sum().transpose() / total;
    const double row_mass = 1.0 / n;
    MatrixXd s = z / total;
    for (int c = 0; c < jcols; ++c) s.col(c).array() -= row_mass * col_mass[c];
    s *= 1.0 / std::sqrt(row_mass);
    for (int c = 0; c < jcols; ++c) s.col(c) /= std::sqrt(col_mass[c]);

    Eigen::BDCSVD<MatrixXd> svd(s, Eigen::ComputeThinU | Eigen::ComputeThinV);
    MatrixXd u = svd.matrixU().leftCols(r);
    MatrixXd v = svd.matrixV().leftCols(r);
    fix_sign(u);
    fix_sign(v);

    McaResult out;
    out.inertia = svd.singularValues().head(r).array().square();
    out.scores = std::sqrt(static_cast<double>(n)) * u * svd.singularValues().head(r).asDiagonal();
    out.col_coords.resize(jcols, r);
    for (int c = 0; c < jcols; ++c)
        out.col_coords.row(c) =
            (v.row(c).array() / std::sqrt(col_mass[c])).matrix() *
            svd.singularValues().head(r).asDiagonal();
    return out;
}

MatrixXd famd(const MixedDataset& ds, int r, WarningLog* warnings) {
    std::vector<VectorXd> cols;
    // standardized continuous block (counts join it, standardized likewise)
    for (int c = 0; c < ds.p_c(); ++c) cols.emplace_back(ds.y_c.col(c));
    const int n = ds.n;
    for (int d = 0; d < ds.p_d(); ++d) {
        const VariableSpec& spec = ds.schema.columns[ds.discrete_cols[d]];
        if (spec.kind == VarKind::Count) {
            VectorXd x = ds.y_d.col(d).cast<double>();
            const double mean = x.mean();
            double sd = std::sqrt((x.array() - mean).square().mean());
            if (sd < 1e-12) {
                if (warnings) warnings->add("famd: constant count column skipped");
                continue;
            }
            cols.emplace_back((x.array() - mean) / sd);
        } else {
            const int levels = spec.kind == VarKind::Binary
                                   ? 2
                                   : static_cast<int>(spec.levels.size());
            for (int l = 0; l < levels; ++l) {
                VectorXd ind = VectorXd::Zero(n);
                for (int i = 0; i < n; ++i) ind[i] = ds.y_d(i, d) == l ? 1.0 : 0.0;
                const double p = ind.mean();
                if (p <= 0) {
                    if (warnings) warnings->add("famd: level with zero occurrences dropped");
                    continue;
                }
                // MCA weighting: indicator / sqrt(proportion), centered
                cols.emplace_back((ind.array() - p) / std::sqrt(p));
            }
        }
    }
    MatrixXd x(n, static_cast<Eigen::Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) x.col(c) = cols[c];
    return pca(x, r).scores;
}

namespace {

GmmResult gmm_em_once(const MatrixXd& z, int k, std::uint64_t seed, int max_iter) {
    const int n = static_cast<int>(z.rows());
    const int d = static_cast<int>(z.cols());
    if (k < 1) throw ConfigError("gmm_em: k must be >= 1");
    if (n <= k) throw ConfigError("gmm_em: need more observations than components");

    Rng rng(seed);
    // k-means++ seeding
    std::vector<int> centers;
    centers.push_back(static_cast<int>(rng.uniform() * n) % n);
    VectorXd min_d2 = (z.rowwise() - z.row(centers[0])).rowwise().squaredNorm();
    while (static_cast<int>(centers.size()) < k) {
        const double total = min_d2.sum();
        int pick = 0;
        if (total > 0) {
            double target = rng.uniform() * total;
            double acc = 0.0;
            for (int i = 0; i < n; ++i) {
                acc += min_d2[i];
                if (acc >= target) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = static_cast<int>(rng.uniform() * n) % n;
        }
        centers.push_back(pick);
        min_d2 = min_d2.cwiseMin((z.rowwise() - z.row(pick)).rowwise().squaredNorm());
    }

    GmmResult res;
    res.weights = VectorXd::Constant(k, 1.0 / k);
    const MatrixXd zc = center_columns(z);
    MatrixXd global_cov = floor_spd(zc.transpose() * zc / n, kCovFloor);
    // scores built from discrete data concentrate on a few atoms; a floor
    // relative to the global scale keeps spike components from dominating
    const double cov_floor =
        std::max(kCovFloor, 1e-1 * global_cov.trace() / static_cast<double>(d));
    for (int c : centers) {
        res.means.emplace_back(z.row(c).transpose());
        res.covs.push_back(global_cov);
    }
    res.resp.resize(n, k);

    bool reseeded = false;
    for (int it = 0; it < max_iter; ++it) {
        // E step in log domain
        MatrixXd logp(n, k);
        for (int c = 0; c < k; ++c) {
            const double lw = std::log(std::max(res.weights[c], 1e-300));
            for (int i = 0; i < n; ++i)
                logp(i, c) = lw + log_mvn_density(z.row(i).transpose(), res.means[c], res.covs[c]);
        }
        double ll = 0.0;
        for (int i = 0; i < n; ++i) {
            const double m = logp.row(i).maxCoeff();
            const double lse = m + std::log((logp.row(i).array() - m).exp().sum());
            ll += lse;
            res.resp.row(i) = (logp.row(i).array() - lse).exp();
        }
        res.loglik_trace.push_back(ll);

        // M step
        bool collapsed = false;
        for (int c = 0; c < k; ++c) {
            const double nk = res.resp.col(c).sum();
            if (nk < 1e-6) {
                collapsed = true;
                if (!reseeded) {
                    const int pick = static_cast<int>(rng.uniform() * n) % n;
                    res.means[c] = z.row(pick).transpose();
                    res.covs[c] = global_cov;
                    res.weights[c] = 1.0 / n;
                }
                continue;
            }
            res.weights[c] = nk / n;
            res.means[c] = (res.resp.col(c).transpose() * z).transpose() / nk;
            MatrixXd cov = MatrixXd::Zero(d, d);
            for (int i = 0; i < n; ++i) {
                const VectorXd dv = z.row(i).transpose() - res.means[c];
                cov.noalias() += res.resp(i, c) * dv * dv.transpose();
            }
            res.covs[c] = floor_spd(cov / nk, cov_floor);
        }
        if (collapsed) {
            if (reseeded) break;
            reseeded = true;
            continue;
        }
        res.weights /= res.weights.sum();
        if (res.loglik_trace.size() >= 2) {
            const double prev = res.loglik_trace[res.loglik_trace.size() - 2];
            if (ll - prev < 1e-8 * (std::abs(prev) + 1.0)) break;
        }
    }
    return res;
}

}  // namespace

GmmResult gmm_em(const MatrixXd& z, int k, std::uint64_t seed, int max_iter) {
    // a handful of seeded restarts; single k-means++ starts land in poor
    // local optima too often
    constexpr int kStarts = 4;
    GmmResult best;
    double best_ll = -std::numeric_limits<double>::infinity();
    for (int s = 0; s < kStarts; ++s) {
        GmmResult run = gmm_em_once(z, k, mix64(seed + 0x9e3779b9ULL * s), max_iter);
        const double ll = run.loglik_trace.empty()
                              ? -std::numeric_limits<double>::infinity()
                              : run.loglik_trace.back();
        if (ll > best_ll) {
            best_ll = ll;
            best = std::move(run);
        }
    }
    return best;
}

FaResult fa_em(const MatrixXd& z, int r_next, int max_iter) {
    const int n = static_cast<int>(z.rows());
    const int d = static_cast<int>(z.cols());
    if (r_next >= d) throw ConfigError("fa_em: factor count must be below the data dimension");

    FaResult res;
    res.mean = z.colwise().mean().transpose();
    const MatrixXd yc = z.rowwise() - res.mean.transpose();
    const MatrixXd s = yc.transpose() * yc / n;

    // PCA start
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(s);
    MatrixXd lambda(d, r_next);
    for (int c = 0; c < r_next; ++c) {
        const int idx = d - 1 - c;
        lambda.col(c) = eig.eigenvectors().col(idx) *
                        std::sqrt(std::max(eig.eigenvalues()[idx], kCovFloor));
    }
    fix_sign(lambda);
    VectorXd psi = (s.diagonal() - (lambda * lambda.transpose()).diagonal()).cwiseMax(kCovFloor);

    double prev_ll = -std::numeric_limits<double>::infinity();
    for (int it = 0; it < max_iter; ++it) {
        const MatrixXd psi_inv_l = psi.cwiseInverse().asDiagonal() * lambda;
        MatrixXd g = MatrixXd::Identity(r_next, r_next) + lambda.transpose() * psi_inv_l;
        Eigen::LLT<MatrixXd> g_llt(0.5 * (g + g.transpose()));
        const MatrixXd beta = g_llt.solve(psi_inv_l.transpose());  // r x d, E[z|y] = beta yc
        const MatrixXd ez = yc * beta.transpose();                 // n x r
        const MatrixXd ezz = n * g_llt.solve(MatrixXd::Identity(r_next, r_next)) +
                             ez.transpose() * ez;
        const MatrixXd syz = yc.transpose() * ez;  // d x r
        lambda = syz * (0.5 * (ezz + ezz.transpose())).ldlt().solve(MatrixXd::Identity(r_next, r_next));
        psi = (s - lambda * syz.transpose() / n).diagonal().cwiseMax(kCovFloor);

        const MatrixXd cov = lambda * lambda.transpose() + MatrixXd(psi.asDiagonal());
        double ll = 0.0;
        for (int i = 0; i < n; ++i)
            ll += log_mvn_density(z.row(i).transpose(), res.mean, cov);
        res.loglik_trace.push_back(ll);
        if (std::abs(ll - prev_ll) < 1e-6 * (std::abs(ll) + 1.0)) break;
        prev_ll = ll;
    }
    res.loading = lambda;
    res.psi = psi;
    const MatrixXd psi_inv_l = psi.cwiseInverse().asDiagonal() * lambda;
    MatrixXd g = MatrixXd::Identity(r_next, r_next) + lambda.transpose() * psi_inv_l;
    res.scores = yc * Eigen::LLT<MatrixXd>(0.5 * (g + g.transpose())).solve(psi_inv_l.transpose()).transpose();
    return res;
}

PcaResult pca(const MatrixXd& z, int r) {
    const int n = static_cast<int>(z.rows());
    const MatrixXd zc = center_columns(z);
    const MatrixXd cov = zc.transpose() * zc / n;
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(cov);
    const int d = static_cast<int>(cov.rows());
    if (r > d) throw ConfigError("pca: more dimensions requested than available");

    PcaResult out;
    out.loadings.resize(d, r);
    out.eigenvalues.resize(r);
    for (int c = 0; c < r; ++c) {
        out.loadings.col(c) = eig.eigenvectors().col(d - 1 - c);
        out.eigenvalues[c] = std::max(eig.eigenvalues()[d - 1 - c], 0.0);
    }
    fix_sign(out.loadings);
    out.scores = zc * out.loadings;
    return out;
}

PlsResult pls_regression(const MatrixXd& x, const MatrixXd& y, int r) {
    if (r > std::min(x.cols(), y.cols()) && y.cols() > 1)
        throw ConfigError("pls_regression: too many components");
    if (r > x.cols()) throw ConfigError("pls_regression: too many components");
    MatrixXd ex = center_columns(x);
    MatrixXd ey = center_columns(y);
    if (ex.norm() < 1e-12 || ey.norm() < 1e-12)
        throw ConfigError("pls_regression: zero-variance block");

    const int p = static_cast<int>(x.cols());
    const int q = static_cast<int>(y.cols());
    PlsResult out;
    out.x_weights.resize(p, r);
    out.x_scores.resize(x.rows(), r);
    out.y_loadings.resize(q, r);
    MatrixXd x_loadings(p, r);

    for (int c = 0; c < r; ++c) {
        VectorXd u = ey.col(0);
        VectorXd w = VectorXd::Zero(p), t = VectorXd::Zero(x.rows()), qv = VectorXd::Zero(q);
        for (int it = 0; it < 200; ++it) {
            w = ex.transpose() * u;
            const double wn = w.norm();
            if (wn < 1e-14) { w.setZero(); w[c % p] = 1.0; } else { w /= wn; }
            t = ex * w;
            const double tt = t.squaredNorm();
            if (tt < 1e-14) break;
            qv = ey.transpose() * t / tt;
            if (qv.norm() < 1e-14) break;
            const VectorXd u_new = ey * qv / qv.squaredNorm();
            if ((u_new - u).norm() < 1e-10 * (u.norm() + 1e-30)) { u = u_new; break; }
            u = u_new;
        }
        const double tt = std::max(t.squaredNorm(), 1e-300);
        const VectorXd pl = ex.transpose() * t / tt;
        out.x_weights.col(c) = w;
        out.x_scores.col(c) = t;
        out.y_loadings.col(c) = qv;
        x_loadings.col(c) = pl;
        ex -= t * pl.transpose();
        ey -= t * qv.transpose();
    }
    const MatrixXd pw = x_loadings.transpose() * out.x_weights;
    out.coef = out.x_weights *
               pw.colPivHouseholderQr().solve(out.y_loadings.transpose());
    return out;
}

namespace {

/// Fit one mixture-of-factor-analyzers transform on the scores of its output
/// latent: GMM for the mixture, per-component FA for (eta, lambda, psi).
/// Returns the transform and the factor scores feeding the next one.
///
/// With residual_mixture set, the mixture is fit on the factor-analysis
/// residuals instead of the raw scores and every component shares the global
/// loading. Head layers use this form: seeding their component means with the
/// raw-score clusters would duplicate structure that the propagated factor
/// scores already carry, leaving the deeper (clustering) layers nothing to
/// discriminate on.
std::pair<MixtureLayer, MatrixXd> fit_transform(const MatrixXd& scores, int in_dim, int k,
                                                std::uint64_t seed, WarningLog* warnings,
                                                std::vector<int>* assign_out = nullptr,
                                                bool residual_mixture = false) {
    const int n = static_cast<int>(scores.rows());
    const int d = static_cast<int>(scores.cols());
    if (residual_mixture && k > 1) {
        FaResult global = fa_em(scores, in_dim);
        MatrixXd resid = scores;
        resid.rowwise() -= global.mean.transpose();
        resid -= global.scores * global.loading.transpose();
        const GmmResult gmm = gmm_em(resid, k, seed);
        MixtureLayer layer;
        layer.out_dim = d;
        layer.in_dim = in_dim;
        layer.comps.resize(k);
        double pi_sum = 0.0;
        for (int c = 0; c < k; ++c) {
            layer.comps[c].eta = global.mean + gmm.means[c];
            layer.comps[c].lambda = global.loading;
            layer.comps[c].psi = floor_spd(gmm.covs[c], kCovFloor);
            layer.comps[c].pi = std::max(gmm.weights[c], 1e-10);
            pi_sum += layer.comps[c].pi;
        }
        for (auto& c : layer.comps) c.pi /= pi_sum;
        if (assign_out) {
            assign_out->resize(n);
            for (int i = 0; i < n; ++i) {
                int arg = 0;
                gmm.resp.row(i).maxCoeff(&arg);
                (*assign_out)[i] = arg;
            }
        }
        return {layer, global.scores};
    }
    const GmmResult gmm = gmm_em(scores, k, seed);

    std::vector<int> assign(n);
    for (int i = 0; i < n; ++i) {
        int arg = 0;
        gmm.resp.row(i).maxCoeff(&arg);
        assign[i] = arg;
    }
    FaResult global = fa_em(scores, in_dim);

    MixtureLayer layer;
    layer.out_dim = d;
    layer.in_dim = in_dim;
    layer.comps.resize(k);
    MatrixXd next(n, in_dim);
    std::vector<FaResult> fits(k);
    for (int c = 0; c < k; ++c) {
        std::vector<int> members;
        for (int i = 0; i < n; ++i)
            if (assign[i] == c) members.push_back(i);
        if (static_cast<int>(members.size()) < in_dim + 2) {
            if (warnings) warnings->add("nsep: tiny component absorbed the global factor fit");
            fits[c] = global;
            fits[c].mean = gmm.means[c];
        } else {
            MatrixXd sub(members.size(), d);
            for (std::size_t i = 0; i < members.size(); ++i) sub.row(i) = scores.row(members[i]);
            fits[c] = fa_em(sub, in_dim);
        }
        layer.comps[c].eta = fits[c].mean;
        layer.comps[c].lambda = fits[c].loading;
        layer.comps[c].psi = MatrixXd(fits[c].psi.asDiagonal());
        layer.comps[c].pi = std::max(gmm.weights[c], 1e-10);
    }
    double pi_sum = 0.0;
    for (auto& c : layer.comps) pi_sum += c.pi;
    for (auto& c : layer.comps) c.pi /= pi_sum;

    // next-layer scores come from the global fit: per-component centering
    // would strip the across-component structure the deeper layers must see
    next = global.scores;
    if (assign_out) *assign_out = assign;
    return {layer, next};
}

/// Refit (eta, lambda, psi) of a transform by per-component PLS regression of
/// its output scores on the merged junction scores; mixture kept as fitted.
void refit_on_junction(MixtureLayer& layer, const MatrixXd& out_scores, const MatrixXd& junction,
                       const std::vector<int>& assign, WarningLog* warnings) {
    const int n = static_cast<int>(out_scores.rows());
    const int in_dim = static_cast<int>(junction.cols());
    for (int c = 0; c < layer.K(); ++c) {
        std::vector<int> members;
        for (int i = 0; i < n; ++i)
            if (assign[i] == c) members.push_back(i);
        if (static_cast<int>(members.size()) < in_dim + 2) {
            if (warnings) warnings->add("nsep: tiny component kept its factor fit at the junction");
            continue;
        }
        MatrixXd xs(members.size(), in_dim), ys(members.size(), out_scores.cols());
        for (std::size_t i = 0; i < members.size(); ++i) {
            xs.row(i) = junction.row(members[i]);
            ys.row(i) = out_scores.row(members[i]);
        }
        PlsResult pls;
        try {
            pls = pls_regression(xs, ys, in_dim);
        } catch (const ConfigError&) {
            continue;
        }
        layer.comps[c].lambda = pls.coef.transpose();
        layer.comps[c].eta = ys.colwise().mean().transpose() -
                             layer.comps[c].lambda * xs.colwise().mean().transpose();
        const MatrixXd resid = (ys.rowwise() - ys.colwise().mean()) -
                               (xs.rowwise() - xs.colwise().mean()) * pls.coef;
        layer.comps[c].psi =
            floor_spd(resid.transpose() * resid / static_cast<double>(members.size()), kCovFloor);
    }
}

LinkParams fit_link_seed(const VariableSpec& spec, VarKind kind, int link_row,
                         const Eigen::VectorXi* codes, const VectorXd* values, int trials,
                         const MatrixXd& z1) {
    const int n = static_cast<int>(z1.rows());
    const int r = static_cast<int>(z1.cols());
    LinkParams link;
    link.variable_index = link_row;
    link.kind = kind;
    link.loadings = VectorXd::Zero(r);

    if (kind == VarKind::Continuous) {
        // ridge least squares and residual variance
        MatrixXd x(n, r + 1);
        x.col(0).setOnes();
        x.rightCols(r) = z1;
        MatrixXd a = x.transpose() * x + 1e-4 * MatrixXd::Identity(r + 1, r + 1);
        const VectorXd beta = a.ldlt().solve(x.transpose() * *values);
        link.intercepts = beta.head(1);
        link.loadings = beta.tail(r);
        link.sigma2 = std::max((*values - x * beta).squaredNorm() / n, kCovFloor);
        return link;
    }

    // frequency-based starting intercepts
    switch (kind) {
        case VarKind::Binary: {
            const double p = std::clamp(codes->cast<double>().mean(), 1e-3, 1.0 - 1e-3);
            link.intercepts = VectorXd::Constant(1, std::log(p / (1.0 - p)));
            break;
        }
        case VarKind::Count: {
            const double p =
                std::clamp(codes->cast<double>().mean() / std::max(trials, 1), 1e-3, 1.0 - 1e-3);
            link.intercepts = VectorXd::Constant(1, std::log(p / (1.0 - p)));
            break;
        }
        case VarKind::Ordinal: {
            const int levels = static_cast<int>(spec.levels.size());
            link.n_levels = levels;
            link.intercepts.resize(levels - 1);
            double cum = 0.0, prev = -1e9;
            for (int l = 0; l < levels - 1; ++l) {
                cum += static_cast<double>((codes->array() == l).count()) / n;
                const double p = std::clamp(cum, 1e-3, 1.0 - 1e-3);
                double cut = std::log(p / (1.0 - p));
                if (cut <= prev) cut = prev + 1e-3;
                link.intercepts[l] = cut;
                prev = cut;
            }
            break;
        }
        case VarKind::Categorical: {
            const int levels = static_cast<int>(spec.levels.size());
            link.n_levels = levels;
            link.intercepts.resize(levels - 1);
            const double p0 =
                std::max(static_cast<double>((codes->array() == 0).count()) / n, 1e-3);
            for (int l = 1; l < levels; ++l) {
                const double pl =
                    std::max(static_cast<double>((codes->array() == l).count()) / n, 1e-3);
                link.intercepts[l - 1] = std::log(pl / p0);
            }
            break;
        }
        default: break;
    }

    // ridge-penalized maximum likelihood on the embedding scores
    std::vector<int> masked;
    if (kind == VarKind::Binary || kind == VarKind::Count) {
        const Eigen::Index head = link.intercepts.size();
        for (int c = link_row + 1; c < r; ++c) masked.push_back(static_cast<int>(head) + c);
    }
    const Eigen::Index nc = link.intercepts.size();
    VectorXd theta0(nc + r);
    theta0.head(nc) = kind == VarKind::Ordinal ? cutpoints_encode(link.intercepts) : link.intercepts;
    theta0.tail(r).setZero();

    auto fg = [&](const VectorXd& theta, VectorXd* grad) -> double {
        LinkParams p = link;
        p.intercepts = kind == VarKind::Ordinal ? cutpoints_decode(theta.head(nc))
                                                : VectorXd(theta.head(nc));
        p.loadings = theta.tail(r);
        if (kind == VarKind::Ordinal)
            for (Eigen::Index c = 1; c < p.intercepts.size(); ++c)
                if (!(p.intercepts[c] > p.intercepts[c - 1]))
                    return -std::numeric_limits<double>::infinity();
        double f = -0.5 * 1e-4 * theta.squaredNorm();
        VectorXd g = grad ? VectorXd(-1e-4 * theta) : VectorXd();
        for (int i = 0; i < n; ++i) {
            f += log_density(p, (*codes)[i], z1.row(i).transpose(), trials);
            if (grad) {
                VectorXd gi = grad_log_density(p, (*codes)[i], z1.row(i).transpose(), trials);
                if (kind == VarKind::Ordinal)
                    gi.head(nc) = cutpoints_chain_grad(theta.head(nc), gi.head(nc));
                g += gi;
            }
        }
        if (grad) {
            *grad = g;
            for (int idx : masked) (*grad)[idx] = 0.0;
        }
        return f;
    };
    const OptimResult res = maximize_bfgs(fg, theta0, 100);
    const VectorXd theta = res.improved ? res.x : theta0;
    link.intercepts =
        kind == VarKind::Ordinal ? cutpoints_decode(theta.head(nc)) : VectorXd(theta.head(nc));
    link.loadings = theta.tail(r);
    for (int idx = link_row + 1;
         idx < r && (kind == VarKind::Binary || kind == VarKind::Count); ++idx)
        link.loadings[idx] = 0.0;
    return link;
}

}  // namespace

std::pair<ModelParams, InitReport> nsep_init(const MixedDataset& ds, const Architecture& arch,
                                             std::uint64_t seed, WarningLog* warnings) {
    arch.validate(ds.p_c(), ds.p_d());
    ModelParams params;
    params.mode = arch.mode;
    params.terminal_dim = arch.terminal_dim();
    InitReport report;

    const bool has_gllvm = arch.mode != Mode::Dgmm;
    const bool has_c_head = arch.mode == Mode::Dgmm || arch.mode == Mode::M2;
    std::uint64_t sub_seed = seed;
    auto next_seed = [&sub_seed] { return mix64(++sub_seed); };

    // embedding scores of the GLLVM latent z1
    MatrixXd z1;
    if (has_gllvm) {
        const int r1 = arch.head_d.front().r;
        if (arch.mode == Mode::M1) {
            z1 = famd(ds, r1, warnings);
        } else {
            std::vector<int> n_levels(ds.p_d());
            Eigen::MatrixXi codes = ds.y_d;
            for (int d = 0; d < ds.p_d(); ++d) {
                const VariableSpec& spec = ds.schema.columns[ds.discrete_cols[d]];
                switch (spec.kind) {
                    case VarKind::Binary: n_levels[d] = 2; break;
                    case VarKind::Count: n_levels[d] = ds.y_d.col(d).maxCoeff() + 1; break;
                    default: n_levels[d] = static_cast<int>(spec.levels.size());
                }
            }
            z1 = mca(codes, n_levels, r1, warnings).scores;
        }
        // keep the principal scores' descending-variance ordering (the final
        // rescaling pass standardizes the latent consistently); only guard
        // against degenerate dimensions
        for (Eigen::Index c = 0; c < z1.cols(); ++c) {
            const double mean = z1.col(c).mean();
            const double sd = std::sqrt((z1.col(c).array() - mean).square().mean());
            if (sd < 1e-8) {
                if (warnings) warnings->add("nsep: near-constant embedding dimension");
                z1.col(c).array() += 0.0;
            }
            z1.col(c).array() -= mean;
        }

        // per-variable regression seeds for the links
        int row = 0;
        for (int d = 0; d < ds.p_d(); ++d, ++row) {
            const VariableSpec& spec = ds.schema.columns[ds.discrete_cols[d]];
            const Eigen::VectorXi codes = ds.y_d.col(d);
            params.gllvm.push_back(
                fit_link_seed(spec, spec.kind, row, &codes, nullptr, ds.trials[d], z1));
        }
        if (arch.mode == Mode::M1) {
            for (int c = 0; c < ds.p_c(); ++c, ++row) {
                const VectorXd vals = ds.y_c.col(c);
                params.gllvm.push_back(fit_link_seed(ds.schema.columns[ds.continuous_cols[c]],
                                                     VarKind::Continuous, row, nullptr, &vals, 1,
                                                     z1));
            }
        }
    }

    // chain fits: GMM + per-component FA, layer by layer
    auto head_in_dim = [&arch](const std::vector<LayerSpec>& head, std::size_t t, bool is_c) {
        if (is_c) return head[t].r;
        return t + 1 < head.size() ? head[t + 1].r : arch.junction_dim();
    };

    MatrixXd scores_d, scores_c;
    std::vector<int> last_assign_d, last_assign_c;
    MatrixXd out_scores_d;  // output scores of the last discrete-head transform
    if (has_gllvm) {
        scores_d = z1;
        for (std::size_t t = 0; t < arch.head_d.size(); ++t) {
            if (t + 1 == arch.head_d.size()) out_scores_d = scores_d;
            auto [layer, next] =
                fit_transform(scores_d, head_in_dim(arch.head_d, t, false), arch.head_d[t].k,
                              next_seed(), warnings,
                              t + 1 == arch.head_d.size() ? &last_assign_d : nullptr, true);
            params.layers_d.push_back(std::move(layer));
            scores_d = std::move(next);
        }
    }
    MatrixXd out_scores_c;  // output scores of the last continuous-head transform
    if (has_c_head) {
        scores_c = ds.y_c;
        for (std::size_t t = 0; t < arch.head_c.size(); ++t) {
            if (t + 1 == arch.head_c.size()) out_scores_c = scores_c;
            auto [layer, next] =
                fit_transform(scores_c, head_in_dim(arch.head_c, t, true), arch.head_c[t].k,
                              next_seed(), warnings,
                              t + 1 == arch.head_c.size() ? &last_assign_c : nullptr, true);
            params.layers_c.push_back(std::move(layer));
            scores_c = std::move(next);
        }
    }

    // junction scores shared by the tail
    MatrixXd junction;
    if (arch.mode == Mode::M2) {
        MatrixXd stacked(ds.n, scores_c.cols() + scores_d.cols());
        stacked << scores_c, scores_d;
        const PcaResult merged = pca(stacked, arch.junction_dim());
        junction = merged.scores;
        refit_on_junction(params.layers_c.back(), out_scores_c, junction, last_assign_c, warnings);
        refit_on_junction(params.layers_d.back(), out_scores_d, junction, last_assign_d, warnings);
    } else {
        junction = arch.mode == Mode::Dgmm ? scores_c : scores_d;
    }

    MatrixXd tail_scores = junction;
    for (int t = 0; t + 1 < static_cast<int>(arch.tail.size()); ++t) {
        auto [layer, next] =
            fit_transform(tail_scores, arch.tail[t + 1].r, arch.tail[t].k, next_seed(), warnings);
        params.layers_tail.push_back(std::move(layer));
        tail_scores = std::move(next);
    }

    // embedding quality summary
    if (has_gllvm || has_c_head) {
        const MatrixXd& base = has_gllvm ? z1 : scores_c;
        const PcaResult p = pca(base, static_cast<int>(base.cols()));
        const double total = std::max(p.eigenvalues.sum(), 1e-300);
        for (Eigen::Index c = 0; c < p.eigenvalues.size(); ++c)
            report.explained_variance.push_back(p.eigenvalues[c] / total);
    }

    std::vector<VarKind> kinds;
    for (const auto& link : params.gllvm) kinds.push_back(link.kind);
    mask_embedding_loadings(params, kinds);
    rescale_layers(params);
    params.validate();
    return {params, report};
}

}  // namespace mixclus
