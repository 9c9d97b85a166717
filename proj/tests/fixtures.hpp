#pragma once

// Shared synthetic generators and random-model builders for the test suites.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "mixclus/dataset.hpp"
#include "mixclus/model.hpp"
#include "mixclus/rng.hpp"

namespace fixtures {

using mixclus::Architecture;
using mixclus::FactorComponent;
using mixclus::LayerSpec;
using mixclus::LinkParams;
using mixclus::MatrixXd;
using mixclus::MixtureLayer;
using mixclus::Mode;
using mixclus::ModelParams;
using mixclus::Rng;
using mixclus::VarKind;
using mixclus::VectorXd;

struct SyntheticData {
    std::string csv;
    std::string schema;
    std::vector<int> truth;
};

inline void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Two well-separated groups, 4 continuous + 4 binary columns.
inline SyntheticData make_blob(int n, std::uint64_t seed) {
    Rng rng(seed);
    std::ostringstream csv;
    csv << "x1,x2,x3,x4,b1,b2,b3,b4\n";
    SyntheticData out;
    const double a[4] = {1.0, 0.8, 0.7, 0.6};
    std::vector<std::pair<std::string, int>> rows;
    for (int i = 0; i < n; ++i) {
        const int g = i % 2;
        const double mu = g ? 2.0 : -2.0;
        const double f = mu + 0.6 * rng.normal();
        std::ostringstream line;
        line.precision(17);
        for (int j = 0; j < 4; ++j) line << a[j] * f + 0.8 * rng.normal() << ",";
        for (int j = 0; j < 4; ++j) {
            const double p = 1.0 / (1.0 + std::exp(-2.5 * (g ? 1.0 : -1.0)));
            line << (rng.uniform() < p ? 1 : 0) << (j == 3 ? "" : ",");
        }
        rows.emplace_back(line.str(), g);
    }
    std::shuffle(rows.begin(), rows.end(), rng.engine());
    for (auto& [line, g] : rows) {
        csv << line << "\n";
        out.truth.push_back(g);
    }
    out.csv = csv.str();
    out.schema = R"({"columns":[
      {"name":"x1","kind":"continuous"},{"name":"x2","kind":"continuous"},
      {"name":"x3","kind":"continuous"},{"name":"x4","kind":"continuous"},
      {"name":"b1","kind":"binary"},{"name":"b2","kind":"binary"},
      {"name":"b3","kind":"binary"},{"name":"b4","kind":"binary"}]})";
    return out;
}

// Surrogate for the Statlog Heart table: 270 rows, 2 overlapping classes,
// 5 continuous + 3 binary + 3 categorical + 2 ordinal columns. Difficulty is
// calibrated so a well-initialized mixed model lands around 0.8 precision.
inline SyntheticData make_heart_surrogate(std::uint64_t seed) {
    Rng rng(seed);
    const int n = 270;
    const double shift = 1.5, noise = 0.55, gain = 2.8;
    auto cat = [&](int levels, double center) {
        std::vector<double> w(levels);
        double tot = 0.0;
        for (int l = 0; l < levels; ++l) tot += w[l] = std::exp(-0.5 * (l - center) * (l - center));
        double t = rng.uniform() * tot, acc = 0.0;
        for (int l = 0; l < levels; ++l) {
            acc += w[l];
            if (t <= acc) return l;
        }
        return levels - 1;
    };
    std::vector<std::pair<std::string, int>> rows;
    for (int i = 0; i < n; ++i) {
        const int g = i < 150 ? 0 : 1;
        const double s = g ? -shift : shift;
        const double f = s + rng.normal();
        const double f2 = 0.55 * s + rng.normal();
        const double cont[5] = {0.9 * f + noise * rng.normal(),
                                0.7 * f + 0.3 * f2 + noise * rng.normal(),
                                0.6 * f2 + noise * rng.normal(),
                                -0.8 * f + noise * rng.normal(),
                                0.7 * f - 0.4 * f2 + noise * rng.normal()};
        const double sig = 1.0 / (1.0 + std::exp(-gain * f));
        const int bins[3] = {rng.uniform() < 0.2 + 0.6 * sig ? 1 : 0,
                             rng.uniform() < 0.15 + 0.65 * sig ? 1 : 0,
                             rng.uniform() < 0.8 - 0.6 * sig ? 1 : 0};
        const int cats[3] = {cat(4, 0.5 + 2.2 * sig), cat(3, 0.2 + 1.6 * sig),
                             cat(3, 1.8 - 1.6 * sig)};
        const int ords[2] = {cat(4, 0.4 + 2.2 * sig), cat(4, 2.6 - 2.2 * sig)};
        std::ostringstream line;
        line.precision(17);
        for (double c : cont) line << c << ",";
        for (int b : bins) line << b << ",";
        for (int c : cats) line << "L" << c << ",";
        line << ords[0] << "," << ords[1];
        rows.emplace_back(line.str(), g);
    }
    std::shuffle(rows.begin(), rows.end(), rng.engine());
    SyntheticData out;
    std::ostringstream csv;
    csv << "c0,c1,c2,c3,c4,b0,b1,b2,cat0,cat1,cat2,o0,o1\n";
    for (auto& [line, g] : rows) {
        csv << line << "\n";
        out.truth.push_back(g);
    }
    out.csv = csv.str();
    out.schema = R"({"columns":[
      {"name":"c0","kind":"continuous"},{"name":"c1","kind":"continuous"},
      {"name":"c2","kind":"continuous"},{"name":"c3","kind":"continuous"},
      {"name":"c4","kind":"continuous"},
      {"name":"b0","kind":"binary"},{"name":"b1","kind":"binary"},{"name":"b2","kind":"binary"},
      {"name":"cat0","kind":"categorical","levels":["L0","L1","L2","L3"]},
      {"name":"cat1","kind":"categorical","levels":["L0","L1","L2"]},
      {"name":"cat2","kind":"categorical","levels":["L0","L1","L2"]},
      {"name":"o0","kind":"ordinal","levels":["0","1","2","3"]},
      {"name":"o1","kind":"ordinal","levels":["0","1","2","3"]}]})";
    return out;
}

inline std::string truth_csv(const std::vector<int>& truth) {
    std::ostringstream ss;
    ss << "label\n";
    for (int t : truth) ss << t << "\n";
    return ss.str();
}

inline MatrixXd random_spd(int d, Rng& rng, double floor = 0.3) {
    MatrixXd a(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) a(i, j) = rng.normal();
    return a * a.transpose() / d + floor * MatrixXd::Identity(d, d);
}

inline MixtureLayer random_layer(int out_dim, int in_dim, int k, Rng& rng) {
    MixtureLayer layer;
    layer.out_dim = out_dim;
    layer.in_dim = in_dim;
    double tot = 0.0;
    for (int c = 0; c < k; ++c) {
        FactorComponent comp;
        comp.eta = rng.normal_vector(out_dim);
        comp.lambda = MatrixXd(out_dim, in_dim);
        for (int i = 0; i < out_dim; ++i)
            for (int j = 0; j < in_dim; ++j) comp.lambda(i, j) = rng.normal();
        comp.psi = random_spd(out_dim, rng);
        comp.pi = 0.2 + rng.uniform();
        tot += comp.pi;
        layer.comps.push_back(std::move(comp));
    }
    for (auto& comp : layer.comps) comp.pi /= tot;
    return layer;
}

inline LinkParams random_link(int var_index, VarKind kind, int r1, Rng& rng, int levels = 3) {
    LinkParams link;
    link.variable_index = var_index;
    link.kind = kind;
    link.loadings = rng.normal_vector(r1);
    switch (kind) {
        case VarKind::Binary:
        case VarKind::Count:
            link.intercepts = rng.normal_vector(1);
            link.n_levels = 2;
            break;
        case VarKind::Ordinal: {
            link.n_levels = levels;
            VectorXd cuts(levels - 1);
            cuts[0] = rng.normal();
            for (int c = 1; c < levels - 1; ++c) cuts[c] = cuts[c - 1] + 0.3 + rng.uniform();
            link.intercepts = cuts;
            break;
        }
        case VarKind::Categorical:
            link.n_levels = levels;
            link.intercepts = rng.normal_vector(levels - 1);
            break;
        case VarKind::Continuous:
            link.intercepts = rng.normal_vector(1);
            link.sigma2 = 0.3 + rng.uniform();
            break;
    }
    return link;
}

// Random parameter set matching an architecture, for property tests.
// p_c is the continuous block width, kinds the discrete column kinds.
inline ModelParams random_params(const Architecture& arch, int p_c,
                                 const std::vector<VarKind>& kinds, Rng& rng) {
    ModelParams params;
    params.mode = arch.mode;
    params.terminal_dim = arch.terminal_dim();
    const bool gllvm = arch.mode != Mode::Dgmm;
    if (gllvm) {
        const int r1 = arch.head_d.front().r;
        int idx = 0;
        for (VarKind kind : kinds) params.gllvm.push_back(random_link(idx++, kind, r1, rng));
        if (arch.mode == Mode::M1)
            for (int j = 0; j < p_c; ++j)
                params.gllvm.push_back(random_link(idx++, VarKind::Continuous, r1, rng));
        for (std::size_t t = 0; t < arch.head_d.size(); ++t) {
            const int out = arch.head_d[t].r;
            const int in = t + 1 < arch.head_d.size() ? arch.head_d[t + 1].r : arch.junction_dim();
            params.layers_d.push_back(random_layer(out, in, arch.head_d[t].k, rng));
        }
    }
    if (arch.mode == Mode::Dgmm || arch.mode == Mode::M2) {
        for (std::size_t t = 0; t < arch.head_c.size(); ++t) {
            const int out = t == 0 ? p_c : arch.head_c[t - 1].r;
            params.layers_c.push_back(random_layer(out, arch.head_c[t].r, arch.head_c[t].k, rng));
        }
    }
    for (int t = 0; t + 1 < static_cast<int>(arch.tail.size()); ++t)
        params.layers_tail.push_back(
            random_layer(arch.tail[t].r, arch.tail[t + 1].r, arch.tail[t].k, rng));
    return params;
}

// Random single-head architecture with strictly decreasing widths.
inline Architecture random_architecture(Rng& rng, int top_width) {
    Architecture arch;
    arch.mode = Mode::Ddgmm;
    int w = top_width;
    arch.head_d.push_back({w, 1 + static_cast<int>(rng.uniform() * 3)});
    int depth = 1 + static_cast<int>(rng.uniform() * 2);
    for (int t = 0; t < depth && w > 2; ++t) {
        w = 1 + static_cast<int>(rng.uniform() * (w - 1));
        arch.tail.push_back({w, 1 + static_cast<int>(rng.uniform() * 2)});
    }
    if (arch.tail.empty()) arch.tail.push_back({std::max(1, w - 1), 1});
    arch.tail.back().k = 1;
    return arch;
}

}  // namespace fixtures
