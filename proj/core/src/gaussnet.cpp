#include "mixclus/gaussnet.hpp"

#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

namespace mixclus {

using nlohmann::json;

std::string to_string(Mode m) {
    switch (m) {
        case Mode::Dgmm: return "dgmm";
        case Mode::Ddgmm: return "ddgmm";
        case Mode::M1: return "m1";
        case Mode::M2: return "m2";
    }
    return "?";
}

Mode mode_from_string(const std::string& s) {
    if (s == "dgmm") return Mode::Dgmm;
    if (s == "ddgmm") return Mode::Ddgmm;
    if (s == "m1") return Mode::M1;
    if (s == "m2") return Mode::M2;
    throw ConfigError("unknown mode: " + s);
}

namespace {

void check_chain_widths(const std::string& head, int p_obs, const std::vector<LayerSpec>& specs,
                        int next_width) {
    int prev = p_obs;
    for (const auto& s : specs) {
        if (s.r < 1 || s.k < 1) throw ConfigError(head + ": widths and component counts must be >= 1");
        if (s.r >= prev)
            throw ConfigError(head + ": latent widths must strictly decrease (" +
                              std::to_string(s.r) + " !< " + std::to_string(prev) + ")");
        prev = s.r;
    }
    if (next_width > prev)
        throw ConfigError(head + ": tail junction width " + std::to_string(next_width) +
                          " exceeds last head width " + std::to_string(prev));
}

}  // namespace

void Architecture::validate(int p_c, int p_d) const {
    if (tail.empty()) throw ConfigError("architecture: tail must be non-empty");
    for (const auto& s : tail)
        if (s.r < 1 || s.k < 1) throw ConfigError("architecture: tail widths and counts must be >= 1");
    for (std::size_t j = 1; j < tail.size(); ++j)
        if (tail[j].r >= tail[j - 1].r)
            throw ConfigError("architecture: tail widths must strictly decrease");
    if (tail.back().k != 1)
        throw ConfigError("architecture: terminal tail layer must have a single component");

    const bool want_c = mode == Mode::Dgmm || mode == Mode::M2;
    const bool want_d = mode != Mode::Dgmm;
    if (want_c != !head_c.empty())
        throw ConfigError("architecture: head_c " + std::string(want_c ? "required" : "not allowed") +
                          " in mode " + to_string(mode));
    if (want_d != !head_d.empty())
        throw ConfigError("architecture: head_d " + std::string(want_d ? "required" : "not allowed") +
                          " in mode " + to_string(mode));

    if (want_c) {
        if (p_c <= 0) throw ConfigError("mode " + to_string(mode) + " needs continuous columns");
        check_chain_widths("head_c", p_c, head_c, tail.front().r);
        if (head_c.back().r != tail.front().r)
            throw ConfigError("architecture: last head_c width must equal the junction width");
    } else if (mode == Mode::Dgmm && p_d > 0) {
        throw ConfigError("dgmm mode cannot model discrete columns");
    }
    if (want_d) {
        const int p_obs = mode == Mode::M1 ? p_c + p_d : p_d;
        if (mode != Mode::M1 && p_d <= 0)
            throw ConfigError("mode " + to_string(mode) + " needs discrete columns");
        check_chain_widths("head_d", p_obs, head_d, tail.front().r);
        if (head_d.back().r <= tail.front().r)
            throw ConfigError("architecture: last head_d width must exceed the junction width");
    } else if (mode == Mode::Ddgmm && p_c > 0) {
        throw ConfigError("ddgmm mode cannot model continuous columns");
    }
}

std::string Architecture::describe() const {
    std::ostringstream os;
    os << to_string(mode);
    auto block = [&os](const char* name, const std::vector<LayerSpec>& v) {
        if (v.empty()) return;
        os << " " << name << "=";
        for (std::size_t i = 0; i < v.size(); ++i)
            os << (i ? "," : "") << "(" << v[i].r << "," << v[i].k << ")";
    };
    block("head_c", head_c);
    block("head_d", head_d);
    block("tail", tail);
    return os.str();
}

namespace {

std::vector<LayerSpec> parse_spec_list(const json& arr, const std::string& where) {
    if (!arr.is_array()) throw ConfigError("architecture: '" + where + "' must be an array");
    std::vector<LayerSpec> out;
    for (const auto& e : arr) {
        if (!e.is_array() || e.size() != 2)
            throw ConfigError("architecture: entries of '" + where + "' must be [r, k] pairs");
        out.push_back({e[0].get<int>(), e[1].get<int>()});
    }
    return out;
}

}  // namespace

Architecture parse_architecture(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed architecture document: ") + e.what());
    }
    if (!doc.is_object()) throw ConfigError("architecture document must be an object");
    Architecture arch;
    if (doc.contains("mode")) arch.mode = mode_from_string(doc["mode"].get<std::string>());

    if (doc.contains("r") || doc.contains("k")) {
        // compact one-head form: first (r, k) is the head layer, the rest the
        // tail; a trailing terminal layer with k = 1 is appended when k is one
        // entry shorter than r.
        auto r = doc.at("r").get<std::vector<int>>();
        auto k = doc.at("k").get<std::vector<int>>();
        if (r.empty()) throw ConfigError("architecture: 'r' must be non-empty");
        if (k.size() + 1 == r.size()) k.push_back(1);
        if (k.size() != r.size())
            throw ConfigError("architecture: 'k' must have the same length as 'r' (or one fewer)");
        if (arch.mode == Mode::M2)
            throw ConfigError("architecture: compact r/k form cannot describe m2 (two heads)");
        const std::size_t L = r.size();
        if (arch.mode == Mode::Dgmm) {
            // K_1 belongs to the head transform reading z1; deeper K_j shift
            // onto the tail transform whose input is z_{j}
            arch.head_c.push_back({r[0], k[0]});
            for (std::size_t j = 0; j + 1 < L; ++j) arch.tail.push_back({r[j], k[j + 1]});
            arch.tail.push_back({r[L - 1], 1});
        } else {
            arch.head_d.push_back({r[0], k[0]});
            for (std::size_t j = 1; j < L; ++j) arch.tail.push_back({r[j], k[j]});
            if (arch.tail.empty())
                throw ConfigError("architecture: a discrete head needs at least two latent widths");
        }
        return arch;
    }

    if (doc.contains("head_c")) arch.head_c = parse_spec_list(doc["head_c"], "head_c");
    if (doc.contains("head_d")) arch.head_d = parse_spec_list(doc["head_d"], "head_d");
    if (doc.contains("tail")) arch.tail = parse_spec_list(doc["tail"], "tail");
    if (arch.tail.empty()) throw ConfigError("architecture: 'tail' is required");
    return arch;
}

std::string architecture_to_json(const Architecture& arch) {
    auto dump = [](const std::vector<LayerSpec>& v) {
        json arr = json::array();
        for (const auto& s : v) arr.push_back(json::array({s.r, s.k}));
        return arr;
    };
    json doc{{"mode", to_string(arch.mode)}};
    if (!arch.head_c.empty()) doc["head_c"] = dump(arch.head_c);
    if (!arch.head_d.empty()) doc["head_d"] = dump(arch.head_d);
    doc["tail"] = dump(arch.tail);
    return doc.dump();
}

void MixtureLayer::validate() const {
    if (comps.empty()) throw ConfigError("layer has no components");
    double pi_sum = 0.0;
    for (const auto& c : comps) {
        if (c.eta.size() != out_dim || c.lambda.rows() != out_dim || c.lambda.cols() != in_dim ||
            c.psi.rows() != out_dim || c.psi.cols() != out_dim)
            throw ConfigError("layer component shape mismatch");
        pi_sum += c.pi;
    }
    if (std::abs(pi_sum - 1.0) > 1e-8) throw ConfigError("layer weights do not sum to 1");
}

void ModelParams::validate() const {
    auto check_chain = [](const std::vector<MixtureLayer>& layers, const char* name) {
        for (std::size_t t = 0; t < layers.size(); ++t) {
            layers[t].validate();
            if (t + 1 < layers.size() && layers[t].in_dim != layers[t + 1].out_dim)
                throw ConfigError(std::string(name) + ": adjacent layer shapes do not chain");
        }
    };
    check_chain(layers_tail, "tail");
    if (!layers_tail.empty() && layers_tail.back().in_dim != terminal_dim)
        throw ConfigError("tail: last layer must read the terminal latent");
    const int junction = layers_tail.empty() ? terminal_dim : layers_tail.front().out_dim;
    check_chain(layers_c, "head_c");
    if (!layers_c.empty() && layers_c.back().in_dim != junction)
        throw ConfigError("head_c: last layer must read the junction latent");
    check_chain(layers_d, "head_d");
    if (!layers_d.empty() && layers_d.back().in_dim != junction)
        throw ConfigError("head_d: last layer must read the junction latent");
    const int r1 = embedding_dim();
    for (const auto& link : gllvm) {
        link.validate();
        if (link.loadings.size() != r1) throw ConfigError("gllvm loading length != embedding width");
    }
}

Architecture ModelParams::architecture(int p_c) const {
    Architecture arch;
    arch.mode = mode;
    for (std::size_t t = 0; t < layers_c.size(); ++t)
        arch.head_c.push_back({layers_c[t].in_dim, layers_c[t].K()});
    for (std::size_t t = 0; t < layers_d.size(); ++t)
        arch.head_d.push_back({layers_d[t].out_dim, layers_d[t].K()});
    for (const auto& layer : layers_tail) arch.tail.push_back({layer.out_dim, layer.K()});
    arch.tail.push_back({terminal_dim, 1});
    (void)p_c;
    return arch;
}

Chain build_chain(const ModelParams& params, Head head) {
    Chain chain;
    const auto& head_layers = head == Head::C ? params.layers_c : params.layers_d;
    for (const auto& l : head_layers) chain.layers.push_back(&l);
    chain.head_len = static_cast<int>(head_layers.size());
    for (const auto& l : params.layers_tail) chain.layers.push_back(&l);
    chain.terminal_dim = params.terminal_dim;
    return chain;
}

long n_paths(const Chain& chain) {
    long s = 1;
    for (const auto* l : chain.layers) s *= l->K();
    return s;
}

PathTable enumerate_paths(const Chain& chain) {
    PathTable table;
    const int T = chain.size();
    const long S = n_paths(chain);
    table.paths.reserve(S);
    table.prior.resize(S);
    std::vector<int> idx(T, 0);
    for (long s = 0; s < S; ++s) {
        double pi = 1.0;
        for (int t = 0; t < T; ++t) pi *= chain.layer(t).comps[idx[t]].pi;
        table.paths.push_back(idx);
        table.prior[s] = pi;
        for (int t = T - 1; t >= 0; --t) {  // last layer fastest: lexicographic order
            if (++idx[t] < chain.layer(t).K()) break;
            idx[t] = 0;
        }
    }
    return table;
}

std::pair<VectorXd, MatrixXd> path_moments(const Chain& chain, const std::vector<int>& path, int t) {
    const int T = chain.size();
    if (t < 0 || t >= T) throw ConfigError("path_moments: layer index out of range");
    VectorXd mu = VectorXd::Zero(chain.terminal_dim);
    MatrixXd sigma = MatrixXd::Identity(chain.terminal_dim, chain.terminal_dim);
    for (int u = T - 1; u >= t; --u) {
        const FactorComponent& c = chain.layer(u).comps.at(path.at(u));
        sigma = c.psi + c.lambda * sigma * c.lambda.transpose();
        mu = c.eta + c.lambda * mu;
        sigma = 0.5 * (sigma + sigma.transpose());
    }
    return {mu, sigma};
}

void fill_path_moments(const Chain& chain, PathTable& table) {
    const int T = chain.size();
    table.mu.assign(table.size(), std::vector<VectorXd>(T));
    table.sigma.assign(table.size(), std::vector<MatrixXd>(T));
    for (int s = 0; s < table.size(); ++s) {
        VectorXd mu = VectorXd::Zero(chain.terminal_dim);
        MatrixXd sigma = MatrixXd::Identity(chain.terminal_dim, chain.terminal_dim);
        for (int u = T - 1; u >= 0; --u) {
            const FactorComponent& c = chain.layer(u).comps.at(table.paths[s][u]);
            sigma = c.psi + c.lambda * sigma * c.lambda.transpose();
            sigma = 0.5 * (sigma + sigma.transpose());
            mu = c.eta + c.lambda * mu;
            table.mu[s][u] = mu;
            table.sigma[s][u] = sigma;
        }
    }
}

std::pair<VectorXd, MatrixXd> condition_next_layer(const Chain& chain, const std::vector<int>& path,
                                                   int t, const VectorXd& z) {
    const int T = chain.size();
    VectorXd mu;
    MatrixXd sigma;
    if (t + 1 < T) {
        std::tie(mu, sigma) = path_moments(chain, path, t + 1);
    } else {
        mu = VectorXd::Zero(chain.terminal_dim);
        sigma = MatrixXd::Identity(chain.terminal_dim, chain.terminal_dim);
    }
    const FactorComponent& c = chain.layer(t).comps.at(path.at(t));

    Eigen::LLT<MatrixXd> psi_llt(c.psi);
    if (psi_llt.info() != Eigen::Success)
        throw NumericalError("condition_next_layer: singular noise covariance");
    Eigen::LLT<MatrixXd> sigma_llt(sigma);
    if (sigma_llt.info() != Eigen::Success)
        throw NumericalError("condition_next_layer: singular prior covariance");

    const MatrixXd psi_inv_lambda = psi_llt.solve(c.lambda);
    MatrixXd prec = sigma_llt.solve(MatrixXd::Identity(mu.size(), mu.size())) +
                    c.lambda.transpose() * psi_inv_lambda;
    prec = 0.5 * (prec + prec.transpose());
    Eigen::LLT<MatrixXd> prec_llt(prec);
    if (prec_llt.info() != Eigen::Success)
        throw NumericalError("condition_next_layer: degenerate posterior precision");
    MatrixXd xi = prec_llt.solve(MatrixXd::Identity(mu.size(), mu.size()));
    xi = 0.5 * (xi + xi.transpose());
    const VectorXd rho = xi * (psi_inv_lambda.transpose() * (z - c.eta) + sigma_llt.solve(mu));
    return {rho, xi};
}

AffineLaw compose_to_output(const Chain& chain, const std::vector<int>& path, int t) {
    const FactorComponent& first = chain.layer(0).comps.at(path.at(0));
    AffineLaw law{first.eta, first.lambda, first.psi};
    for (int u = 1; u <= t; ++u) {
        const FactorComponent& c = chain.layer(u).comps.at(path.at(u));
        law.offset += law.gain * c.eta;
        law.cov += law.gain * c.psi * law.gain.transpose();
        law.gain = (law.gain * c.lambda).eval();
    }
    law.cov = 0.5 * (law.cov + law.cov.transpose());
    return law;
}

std::pair<VectorXd, MatrixXd> layer_moments(const MixtureLayer& layer) {
    VectorXd mean = VectorXd::Zero(layer.out_dim);
    for (const auto& c : layer.comps) mean += c.pi * c.eta;
    MatrixXd var = MatrixXd::Zero(layer.out_dim, layer.out_dim);
    for (const auto& c : layer.comps)
        var += c.pi * (c.lambda * c.lambda.transpose() + c.psi + c.eta * c.eta.transpose());
    var -= mean * mean.transpose();
    var = 0.5 * (var + var.transpose());
    return {mean, var};
}

namespace {

/// Standardize the output latent of `producer` and push the compensating map
/// v = m + L v' into every consumer of that latent.
void rescale_one(MixtureLayer& producer, const std::vector<MixtureLayer*>& consumer_layers,
                 std::vector<LinkParams>* gllvm) {
    auto [m, v] = layer_moments(producer);
    Eigen::LLT<MatrixXd> llt(v);
    if (llt.info() != Eigen::Success)
        throw NumericalError("rescale_layers: layer variance not positive definite");
    const MatrixXd l = llt.matrixL();

    for (auto& c : producer.comps) {
        c.eta = llt.matrixL().solve(c.eta - m);
        c.lambda = llt.matrixL().solve(c.lambda);
        const MatrixXd half = llt.matrixL().solve(c.psi);
        c.psi = llt.matrixL().solve(half.transpose()).transpose();
        c.psi = 0.5 * (c.psi + c.psi.transpose());
    }
    for (MixtureLayer* consumer : consumer_layers) {
        for (auto& c : consumer->comps) {
            c.eta += c.lambda * m;
            c.lambda = (c.lambda * l).eval();
        }
    }
    if (gllvm) {
        for (auto& link : *gllvm) {
            const double shift = link.loadings.dot(m);
            switch (link.kind) {
                case VarKind::Binary:
                case VarKind::Count:
                case VarKind::Continuous:
                    link.intercepts[0] += shift;
                    break;
                case VarKind::Ordinal:
                    link.intercepts.array() -= shift;
                    break;
                case VarKind::Categorical:
                    link.intercepts.array() += shift;
                    break;
            }
            link.loadings = (l.transpose() * link.loadings).eval();
        }
    }
}

}  // namespace

void rescale_layers(ModelParams& params) {
    // deepest latent first so that every layer sees an already-standardized input
    const int q = static_cast<int>(params.layers_tail.size());
    for (int t = q - 1; t >= 0; --t) {
        std::vector<MixtureLayer*> consumers;
        std::vector<LinkParams>* gllvm = nullptr;
        if (t > 0) {
            consumers.push_back(&params.layers_tail[t - 1]);
        } else {
            if (!params.layers_c.empty()) consumers.push_back(&params.layers_c.back());
            if (!params.layers_d.empty()) consumers.push_back(&params.layers_d.back());
            if (params.layers_d.empty() && !params.gllvm.empty()) gllvm = &params.gllvm;
        }
        rescale_one(params.layers_tail[t], consumers, gllvm);
    }
    for (int t = static_cast<int>(params.layers_d.size()) - 1; t >= 0; --t) {
        std::vector<MixtureLayer*> consumers;
        if (t > 0) consumers.push_back(&params.layers_d[t - 1]);
        rescale_one(params.layers_d[t], consumers, t == 0 ? &params.gllvm : nullptr);
    }
    // layer 0 of the continuous head produces the observables, never rescaled
    for (int t = static_cast<int>(params.layers_c.size()) - 1; t >= 1; --t)
        rescale_one(params.layers_c[t], {&params.layers_c[t - 1]}, nullptr);
}

namespace {

void diagonalize_layer(MixtureLayer& layer) {
    for (auto& c : layer.comps) {
        if (c.lambda.cols() == 0) continue;
        Eigen::LLT<MatrixXd> psi_llt(c.psi);
        if (psi_llt.info() != Eigen::Success)
            throw NumericalError("diagonalize_loadings: singular noise covariance");
        MatrixXd b = c.lambda.transpose() * psi_llt.solve(c.lambda);
        b = 0.5 * (b + b.transpose());
        Eigen::SelfAdjointEigenSolver<MatrixXd> eig(b);
        if (eig.info() != Eigen::Success)
            throw NumericalError("diagonalize_loadings: eigendecomposition failed");
        const int r = static_cast<int>(b.rows());
        MatrixXd p(r, r);
        for (int j = 0; j < r; ++j) {
            VectorXd v = eig.eigenvectors().col(r - 1 - j);  // descending eigenvalues
            int arg = 0;
            v.cwiseAbs().maxCoeff(&arg);
            if (v[arg] < 0) v = -v;
            p.col(j) = v;
        }
        c.lambda = (c.lambda * p).eval();
    }
}

}  // namespace

void diagonalize_loadings(ModelParams& params) {
    for (auto& l : params.layers_c) diagonalize_layer(l);
    for (auto& l : params.layers_d) diagonalize_layer(l);
    for (auto& l : params.layers_tail) diagonalize_layer(l);
}

void mask_embedding_loadings(ModelParams& params, const std::vector<VarKind>& kinds) {
    for (std::size_t j = 0; j < params.gllvm.size(); ++j) {
        const VarKind k = j < kinds.size() ? kinds[j] : params.gllvm[j].kind;
        if (k != VarKind::Binary && k != VarKind::Count) continue;
        for (int c = static_cast<int>(j) + 1; c < params.gllvm[j].loadings.size(); ++c)
            params.gllvm[j].loadings[c] = 0.0;
    }
}

double log_mvn_density(const VectorXd& x, const VectorXd& mu, const MatrixXd& sigma) {
    Eigen::LLT<MatrixXd> llt(sigma);
    if (llt.info() != Eigen::Success) {
        MatrixXd jittered = sigma + kRidge * MatrixXd::Identity(sigma.rows(), sigma.cols());
        llt.compute(jittered);
        if (llt.info() != Eigen::Success) throw NumericalError("log_mvn_density: covariance not SPD");
    }
    const VectorXd d = x - mu;
    const VectorXd w = llt.matrixL().solve(d);
    double log_det = 0.0;
    for (int i = 0; i < sigma.rows(); ++i) log_det += std::log(llt.matrixL()(i, i));
    return -0.5 * x.size() * std::log(2.0 * M_PI) - log_det - 0.5 * w.squaredNorm();
}

}  // namespace mixclus
