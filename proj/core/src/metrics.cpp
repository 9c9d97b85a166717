#include "mixclus/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace mixclus {

MatrixXd gower_matrix(const MixedDataset& ds, WarningLog* warnings) {
    const int n = ds.n;
    if (n < 2) throw ConfigError("gower_matrix: need at least 2 observations");

    struct Feature {
        bool numeric;           // range-normalized absolute difference
        int col;                // column in y_c or y_d
        bool continuous;
        double inv_range = 0.0;
    };
    std::vector<Feature> feats;
    for (int c = 0; c < ds.p_c(); ++c) {
        const double range = ds.y_c.col(c).maxCoeff() - ds.y_c.col(c).minCoeff();
        if (range <= 0) {
            if (warnings)
                warnings->add("gower_matrix: zero-range feature '" +
                              ds.schema.columns[ds.continuous_cols[c]].name + "' skipped");
            continue;
        }
        feats.push_back({true, c, true, 1.0 / range});
    }
    for (int d = 0; d < ds.p_d(); ++d) {
        const VarKind kind = ds.schema.columns[ds.discrete_cols[d]].kind;
        if (kind == VarKind::Ordinal || kind == VarKind::Count) {
            const int lo = ds.y_d.col(d).minCoeff();
            const int hi = ds.y_d.col(d).maxCoeff();
            if (hi == lo) {
                if (warnings)
                    warnings->add("gower_matrix: zero-range feature '" +
                                  ds.schema.columns[ds.discrete_cols[d]].name + "' skipped");
                continue;
            }
            feats.push_back({true, d, false, 1.0 / (hi - lo)});
        } else {
            feats.push_back({false, d, false, 0.0});
        }
    }
    if (feats.empty()) throw ConfigError("gower_matrix: no usable features");

    MatrixXd dist = MatrixXd::Zero(n, n);
    const double inv_p = 1.0 / static_cast<double>(feats.size());
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            double acc = 0.0;
            for (const Feature& f : feats) {
                if (f.numeric) {
                    const double a = f.continuous ? ds.y_c(i, f.col) : ds.y_d(i, f.col);
                    const double b = f.continuous ? ds.y_c(j, f.col) : ds.y_d(j, f.col);
                    acc += std::abs(a - b) * f.inv_range;
                } else {
                    acc += ds.y_d(i, f.col) != ds.y_d(j, f.col) ? 1.0 : 0.0;
                }
            }
            const double d = std::min(1.0, acc * inv_p);
            dist(i, j) = d;
            dist(j, i) = d;
        }
    }
    return dist;
}

double silhouette(const std::vector<int>& labels, const MatrixXd& dist) {
    const int n = static_cast<int>(labels.size());
    if (n != dist.rows()) throw ConfigError("silhouette: label/distance size mismatch");
    std::map<int, std::vector<int>> clusters;
    for (int i = 0; i < n; ++i) clusters[labels[i]].push_back(i);
    if (clusters.size() < 2) return std::numeric_limits<double>::quiet_NaN();

    double cluster_mean_sum = 0.0;
    for (const auto& [label, members] : clusters) {
        double s_sum = 0.0;
        for (int i : members) {
            if (members.size() == 1) continue;  // singleton point scores 0
            double a = 0.0;
            for (int j : members)
                if (j != i) a += dist(i, j);
            a /= static_cast<double>(members.size() - 1);
            double b = std::numeric_limits<double>::infinity();
            for (const auto& [other, omembers] : clusters) {
                if (other == label) continue;
                double m = 0.0;
                for (int j : omembers) m += dist(i, j);
                b = std::min(b, m / static_cast<double>(omembers.size()));
            }
            const double denom = std::max(a, b);
            s_sum += denom > 0 ? (b - a) / denom : 0.0;
        }
        cluster_mean_sum += s_sum / static_cast<double>(members.size());
    }
    return cluster_mean_sum / static_cast<double>(clusters.size());
}

std::vector<int> hungarian_max(const MatrixXd& score) {
    const int rows = static_cast<int>(score.rows());
    const int cols = static_cast<int>(score.cols());
    const int dim = std::max(rows, cols);
    // pad to square and negate: classic potential-based minimizer
    MatrixXd cost = MatrixXd::Zero(dim, dim);
    cost.topLeftCorner(rows, cols) = -score;

    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(dim + 1, 0.0), v(dim + 1, 0.0);
    std::vector<int> p(dim + 1, 0), way(dim + 1, 0);
    for (int i = 1; i <= dim; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(dim + 1, inf);
        std::vector<char> used(dim + 1, false);
        do {
            used[j0] = true;
            const int i0 = p[j0];
            double delta = inf;
            int j1 = 0;
            for (int j = 1; j <= dim; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= dim; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    std::vector<int> assign(rows, -1);
    for (int j = 1; j <= dim; ++j) {
        const int i = p[j];
        if (i >= 1 && i <= rows && j <= cols) assign[i - 1] = j - 1;
    }
    return assign;
}

PrecisionScores precision_scores(const std::vector<int>& pred, const std::vector<int>& truth) {
    if (pred.empty() || pred.size() != truth.size())
        throw ConfigError("precision_scores: label vectors empty or mismatched");
    const int n = static_cast<int>(pred.size());

    std::map<int, int> pred_id, truth_id;
    for (int x : pred) pred_id.emplace(x, static_cast<int>(pred_id.size()));
    for (int x : truth) truth_id.emplace(x, static_cast<int>(truth_id.size()));
    const int kp = static_cast<int>(pred_id.size());
    const int kt = static_cast<int>(truth_id.size());

    MatrixXd counts = MatrixXd::Zero(kp, kt);
    for (int i = 0; i < n; ++i) counts(pred_id[pred[i]], truth_id[truth[i]]) += 1.0;
    const std::vector<int> match = hungarian_max(counts);

    PrecisionScores out;
    double matched = 0.0;
    double macro_sum = 0.0;
    for (int k = 0; k < kp; ++k) {
        const double size = counts.row(k).sum();
        const double tp = match[k] >= 0 ? counts(k, match[k]) : 0.0;
        matched += tp;
        macro_sum += size > 0 ? tp / size : 0.0;
    }
    out.micro = matched / static_cast<double>(n);
    out.macro = macro_sum / static_cast<double>(kp);
    return out;
}

}  // namespace mixclus
