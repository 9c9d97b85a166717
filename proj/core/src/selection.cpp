#include "mixclus/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mixclus {

namespace {

constexpr double kWald10 = 1.6449;  // two-sided 10% normal quantile
constexpr double kRidgeSel = 1e-4;
constexpr double kPcThreshold = 0.2;

std::vector<int> all_indices(int n) {
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    return idx;
}

VectorXd select_entries(const VectorXd& v, const std::vector<int>& keep) {
    VectorXd out(keep.size());
    for (std::size_t i = 0; i < keep.size(); ++i) out[i] = v[keep[i]];
    return out;
}

MatrixXd select_rows(const MatrixXd& m, const std::vector<int>& keep) {
    MatrixXd out(keep.size(), m.cols());
    for (std::size_t i = 0; i < keep.size(); ++i) out.row(i) = m.row(keep[i]);
    return out;
}

MatrixXd select_cols(const MatrixXd& m, const std::vector<int>& keep) {
    MatrixXd out(m.rows(), keep.size());
    for (std::size_t i = 0; i < keep.size(); ++i) out.col(i) = m.col(keep[i]);
    return out;
}

void slice_out_dims(MixtureLayer& layer, const std::vector<int>& keep) {
    for (auto& c : layer.comps) {
        c.eta = select_entries(c.eta, keep);
        c.lambda = select_rows(c.lambda, keep);
        c.psi = select_cols(select_rows(c.psi, keep), keep);
    }
    layer.out_dim = static_cast<int>(keep.size());
}

void slice_in_dims(MixtureLayer& layer, const std::vector<int>& keep) {
    for (auto& c : layer.comps) c.lambda = select_cols(c.lambda, keep);
    layer.in_dim = static_cast<int>(keep.size());
}

void slice_components(MixtureLayer& layer, const std::vector<int>& keep) {
    std::vector<FactorComponent> kept;
    double total = 0.0;
    for (int k : keep) {
        kept.push_back(layer.comps[k]);
        total += layer.comps[k].pi;
    }
    for (auto& c : kept) c.pi /= total;
    layer.comps = std::move(kept);
}

/// Posterior-mean latent scores at one estate level, per observation and path.
std::vector<MatrixXd> path_mean_scores(const ChainEState& es, int level) {
    const int s_count = es.n_paths();
    const int dim = static_cast<int>(es.d(0, 0, level).rows());
    std::vector<MatrixXd> scores(s_count, MatrixXd(es.n, dim));
    for (int s = 0; s < s_count; ++s)
        for (int i = 0; i < es.n; ++i)
            scores[s].row(i) = (es.d(i, s, level) * es.w(i, s, level)).transpose();
    return scores;
}

/// Ridge-stabilized logistic fit of y on [1, z]; returns per-coordinate Wald
/// statistics for the slope entries.
VectorXd logistic_wald(const MatrixXd& z, const VectorXd& y) {
    const int n = static_cast<int>(z.rows());
    const int p = static_cast<int>(z.cols()) + 1;
    MatrixXd x(n, p);
    x.col(0).setOnes();
    x.rightCols(p - 1) = z;
    VectorXd beta = VectorXd::Zero(p);
    MatrixXd info = MatrixXd::Identity(p, p);
    for (int it = 0; it < 50; ++it) {
        const VectorXd eta = x * beta;
        const VectorXd mu = (1.0 + (-eta.array()).exp()).inverse();
        const VectorXd w = (mu.array() * (1.0 - mu.array())).cwiseMax(1e-10);
        info = x.transpose() * w.asDiagonal() * x + kRidgeSel * MatrixXd::Identity(p, p);
        const VectorXd grad = x.transpose() * (y - mu) - kRidgeSel * beta;
        const VectorXd step = info.ldlt().solve(grad);
        beta += step;
        if (step.norm() < 1e-8) break;
    }
    const MatrixXd cov = info.inverse();
    VectorXd wald(p - 1);
    for (int d = 0; d < p - 1; ++d)
        wald[d] = std::abs(beta[d + 1]) / std::sqrt(std::max(cov(d + 1, d + 1), 1e-300));
    return wald;
}

/// Ridge least squares of y on [1, z]; per-coordinate t statistics.
VectorXd linear_wald(const MatrixXd& z, const VectorXd& y) {
    const int n = static_cast<int>(z.rows());
    const int p = static_cast<int>(z.cols()) + 1;
    MatrixXd x(n, p);
    x.col(0).setOnes();
    x.rightCols(p - 1) = z;
    const MatrixXd info = x.transpose() * x + kRidgeSel * MatrixXd::Identity(p, p);
    const VectorXd beta = info.ldlt().solve(x.transpose() * y);
    const double dof = std::max(n - p, 1);
    const double s2 = std::max((y - x * beta).squaredNorm() / dof, 1e-300);
    const MatrixXd cov = s2 * info.inverse();
    VectorXd wald(p - 1);
    for (int d = 0; d < p - 1; ++d)
        wald[d] = std::abs(beta[d + 1]) / std::sqrt(std::max(cov(d + 1, d + 1), 1e-300));
    return wald;
}

}  // namespace

std::vector<int> prune_components(const MixtureLayer& layer, bool frozen) {
    const int k = layer.K();
    if (frozen) return all_indices(k);
    const double threshold = 1.0 / (4.0 * k);
    int arg_max = 0;
    for (int c = 1; c < k; ++c)
        if (layer.comps[c].pi > layer.comps[arg_max].pi) arg_max = c;
    std::vector<int> kept;
    for (int c = 0; c < k; ++c)
        if (layer.comps[c].pi >= threshold || c == arg_max) kept.push_back(c);
    return kept;
}

std::vector<int> select_embedding_dims(const GllvmObs& obs, const std::vector<VarKind>& kinds,
                                       const ChainEState& es, int level) {
    const std::vector<MatrixXd> scores = path_mean_scores(es, level);
    const int r = static_cast<int>(scores.front().cols());
    if (r == 1) return {0};
    const int n = es.n;

    Eigen::ArrayXd insignificant = Eigen::ArrayXd::Zero(r);
    Eigen::ArrayXd strength = Eigen::ArrayXd::Zero(r);
    int fits = 0;
    for (std::size_t j = 0; j < kinds.size(); ++j) {
        // discrete variables enter as a binary response: the raw code for
        // binary links, above-median (ordinal, count) or modal-level
        // (categorical) indicators otherwise
        VectorXd y(n);
        bool logistic = true;
        if (kinds[j] == VarKind::Continuous) {
            y = obs.values.col(static_cast<Eigen::Index>(j) - obs.codes.cols());
            logistic = false;
        } else {
            const Eigen::VectorXi codes = obs.codes.col(static_cast<Eigen::Index>(j));
            if (kinds[j] == VarKind::Binary) {
                y = codes.cast<double>();
            } else if (kinds[j] == VarKind::Categorical) {
                std::vector<int> count(codes.maxCoeff() + 1, 0);
                for (int i = 0; i < n; ++i) count[codes[i]]++;
                const int mode = static_cast<int>(
                    std::max_element(count.begin(), count.end()) - count.begin());
                for (int i = 0; i < n; ++i) y[i] = codes[i] == mode ? 1.0 : 0.0;
            } else {
                std::vector<int> sorted(codes.data(), codes.data() + n);
                std::nth_element(sorted.begin(), sorted.begin() + n / 2, sorted.end());
                const int median = sorted[n / 2];
                for (int i = 0; i < n; ++i) y[i] = codes[i] > median ? 1.0 : 0.0;
            }
            const double mean = y.mean();
            if (mean <= 0.0 || mean >= 1.0) continue;  // degenerate response
        }
        for (const MatrixXd& z : scores) {
            const VectorXd wald = logistic ? logistic_wald(z, y) : linear_wald(z, y);
            for (int d = 0; d < r; ++d) {
                if (wald[d] < kWald10) insignificant[d] += 1.0;
                strength[d] += wald[d];
            }
            ++fits;
        }
    }
    std::vector<int> kept;
    if (fits > 0)
        for (int d = 0; d < r; ++d)
            if (insignificant[d] / fits < 0.25) kept.push_back(d);
    if (kept.empty()) {
        int arg = 0;
        if (fits > 0) strength.maxCoeff(&arg);
        kept.push_back(arg);
    }
    return kept;
}

std::vector<int> select_dgmm_dims(const ChainEState& es, int level) {
    const int dim = static_cast<int>(es.d(0, 0, level).rows());
    if (dim == 1) return {0};
    const int s_count = es.n_paths();

    Eigen::ArrayXd contribution = Eigen::ArrayXd::Zero(dim);
    for (int s = 0; s < s_count; ++s) {
        // weighted second-moment structure of the draws pooled over the sample
        VectorXd mean = VectorXd::Zero(dim);
        MatrixXd second = MatrixXd::Zero(dim, dim);
        double total = 0.0;
        for (int i = 0; i < es.n; ++i) {
            const MatrixXd& d = es.d(i, s, level);
            const VectorXd& w = es.w(i, s, level);
            mean.noalias() += d * w;
            second.noalias() += d * w.asDiagonal() * d.transpose();
            total += w.sum();
        }
        mean /= total;
        const MatrixXd cov = second / total - mean * mean.transpose();
        Eigen::SelfAdjointEigenSolver<MatrixXd> eig(0.5 * (cov + cov.transpose()));
        contribution += eig.eigenvectors().col(dim - 1).cwiseAbs().array();
    }
    contribution /= static_cast<double>(s_count);

    std::vector<int> kept;
    for (int d = 0; d < dim; ++d)
        if (contribution[d] >= kPcThreshold) kept.push_back(d);
    if (kept.empty()) {
        int arg = 0;
        contribution.maxCoeff(&arg);
        kept.push_back(arg);
    }
    return kept;
}

std::pair<Architecture, ModelParams> apply_architecture_update(const Architecture& arch,
                                                               const ModelParams& params,
                                                               SelectionDecision& decision) {
    Architecture a = arch;
    ModelParams p = params;
    decision.restart_required = false;

    const bool gllvm = a.mode != Mode::Dgmm;
    const int n_tail_vars = static_cast<int>(a.tail.size());
    if (decision.tail_dims.empty())
        for (int v = 0; v < n_tail_vars; ++v)
            decision.tail_dims.emplace_back(all_indices(a.tail[v].r));
    if (gllvm && decision.embedding_dims.empty())
        decision.embedding_dims = all_indices(a.head_d.front().r);

    // restore strict width decrease: junction capped by the heads above it,
    // each tail variable capped by its predecessor, the embedding padded back
    // up over the variable below it
    auto trim = [](std::vector<int>& keep, int max_size) {
        if (static_cast<int>(keep.size()) > max_size)
            keep.resize(static_cast<std::size_t>(std::max(max_size, 1)));
    };
    auto pad = [](std::vector<int>& keep, int full, int min_size) {
        for (int d = 0; d < full && static_cast<int>(keep.size()) < min_size; ++d)
            if (std::find(keep.begin(), keep.end(), d) == keep.end())
                keep.insert(std::lower_bound(keep.begin(), keep.end(), d), d);
    };
    int above_junction = gllvm ? (a.head_d.size() > 1 ? a.head_d.back().r
                                                      : static_cast<int>(decision.embedding_dims.size()))
                               : a.head_c.size() > 1 ? a.head_c[a.head_c.size() - 2].r
                                                     : params.layers_c.front().out_dim;
    if (a.mode == Mode::M2 && a.head_c.size() > 1)
        above_junction = std::min(above_junction, a.head_c[a.head_c.size() - 2].r);
    trim(decision.tail_dims[0], above_junction - 1);
    if (gllvm && a.head_d.size() == 1)
        pad(decision.embedding_dims, a.head_d.front().r,
            static_cast<int>(decision.tail_dims[0].size()) + 1);
    for (int v = 1; v < n_tail_vars; ++v)
        trim(decision.tail_dims[v], static_cast<int>(decision.tail_dims[v - 1].size()) - 1);

    // component pruning
    auto apply_comps = [&](std::vector<MixtureLayer>& layers, std::vector<LayerSpec*> specs,
                           const std::vector<std::vector<int>>& kept_sets) {
        for (std::size_t t = 0; t < layers.size() && t < kept_sets.size(); ++t) {
            if (kept_sets[t].empty()) continue;
            slice_components(layers[t], kept_sets[t]);
            specs[t]->k = static_cast<int>(kept_sets[t].size());
        }
    };
    std::vector<LayerSpec*> spec_c, spec_d, spec_tail;
    for (auto& s : a.head_c) spec_c.push_back(&s);
    for (auto& s : a.head_d) spec_d.push_back(&s);
    for (auto& s : a.tail) spec_tail.push_back(&s);
    apply_comps(p.layers_c, spec_c, decision.comps_c);
    apply_comps(p.layers_d, spec_d, decision.comps_d);
    apply_comps(p.layers_tail, spec_tail, decision.comps_tail);

    // dimension slicing: each variable's producer loses rows, consumers lose
    // columns
    if (gllvm &&
        static_cast<int>(decision.embedding_dims.size()) < a.head_d.front().r) {
        slice_out_dims(p.layers_d.front(), decision.embedding_dims);
        for (auto& link : p.gllvm) link.loadings = select_entries(link.loadings, decision.embedding_dims);
        a.head_d.front().r = static_cast<int>(decision.embedding_dims.size());
    }
    for (int v = 0; v < n_tail_vars; ++v) {
        const std::vector<int>& keep = decision.tail_dims[v];
        if (static_cast<int>(keep.size()) == a.tail[v].r) continue;
        if (v + 1 < n_tail_vars) slice_out_dims(p.layers_tail[v], keep);
        if (v == 0) {
            if (!p.layers_c.empty()) slice_in_dims(p.layers_c.back(), keep);
            if (!p.layers_d.empty()) slice_in_dims(p.layers_d.back(), keep);
            if (!a.head_c.empty()) a.head_c.back().r = static_cast<int>(keep.size());
        } else {
            slice_in_dims(p.layers_tail[v - 1], keep);
        }
        a.tail[v].r = static_cast<int>(keep.size());
    }
    p.terminal_dim = a.tail.back().r;

    // tail truncation at a mid-tail width-1 variable
    for (int v = 0; v + 1 < static_cast<int>(a.tail.size()); ++v) {
        if (a.tail[v].r != 1) continue;
        a.tail.resize(static_cast<std::size_t>(v) + 1);
        a.tail[v].k = 1;
        p.layers_tail.resize(static_cast<std::size_t>(v));
        p.terminal_dim = 1;
        break;
    }

    // head truncation: a width-2 head latent with transforms below it loses
    // them and forces a restart. head_d entries carry output widths (entry t
    // is the latent produced by transform t), head_c entries input widths
    // (entry t is the latent consumed by transform t).
    for (std::size_t t = 0; t + 1 < a.head_d.size(); ++t) {
        if (a.head_d[t].r != 2) continue;
        a.head_d.resize(t + 1);
        p.layers_d.resize(t + 1);
        decision.restart_required = true;
        break;
    }
    for (std::size_t t = 0; t + 1 < a.head_c.size(); ++t) {
        if (a.head_c[t].r != 2) continue;
        a.head_c.resize(t + 1);
        p.layers_c.resize(t + 1);
        decision.restart_required = true;
        break;
    }

    // reconcile the junction after deletions; a restart refits anyway
    if (decision.restart_required) {
        int junction = a.tail.front().r;
        if (!a.head_c.empty()) junction = std::min(junction, a.head_c.back().r);
        if (gllvm) junction = std::min(junction, a.head_d.back().r - 1);
        junction = std::max(junction, 1);
        a.tail.front().r = junction;
        if (!a.head_c.empty()) a.head_c.back().r = junction;
        for (std::size_t v = 1; v < a.tail.size(); ++v)
            a.tail[v].r = std::min(a.tail[v].r, a.tail[v - 1].r - 1);
        for (std::size_t v = 0; v + 1 < a.tail.size(); ++v) {
            if (a.tail[v].r != 1) continue;
            a.tail.resize(v + 1);
            a.tail[v].k = 1;
            break;
        }
        a.tail.back().k = 1;
        p.terminal_dim = a.tail.back().r;
    }
    a.tail.back().k = 1;
    return {std::move(a), std::move(p)};
}

}  // namespace mixclus
