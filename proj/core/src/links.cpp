#include "mixclus/links.hpp"

#include <cmath>

namespace mixclus {

namespace {

constexpr double kEtaClamp = 35.0;  // < 1e-15 effect on probabilities

double clamp_eta(double eta) { return std::clamp(eta, -kEtaClamp, kEtaClamp); }

// log(1 + exp(x)) without overflow
double log1pexp(double x) {
    if (x > 35.0) return x;
    return std::log1p(std::exp(x));
}

double log_binom_coeff(int n, int k) {
    return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

void check_code(const LinkParams& p, int code, int trials) {
    switch (p.kind) {
        case VarKind::Binary:
            if (code != 0 && code != 1) throw ConfigError("binary code outside {0,1}");
            break;
        case VarKind::Count:
            if (code < 0 || code > trials) throw ConfigError("count code outside [0, trials]");
            break;
        case VarKind::Ordinal:
        case VarKind::Categorical:
            if (code < 0 || code >= p.n_levels) throw ConfigError("level code out of range");
            break;
        case VarKind::Continuous:
            break;
    }
}

}  // namespace

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

int LinkParams::n_params() const {
    const int r = static_cast<int>(loadings.size());
    switch (kind) {
        case VarKind::Binary:
        case VarKind::Count: return 1 + r;
        case VarKind::Continuous: return 1 + r + 1;  // + log variance
        case VarKind::Ordinal:
        case VarKind::Categorical: return (n_levels - 1) + r;
    }
    return 0;
}

void LinkParams::validate() const {
    switch (kind) {
        case VarKind::Binary:
        case VarKind::Count:
        case VarKind::Continuous:
            if (intercepts.size() != 1) throw ConfigError("link: expected scalar intercept");
            break;
        case VarKind::Ordinal:
            if (intercepts.size() != n_levels - 1)
                throw ConfigError("link: ordinal needs |levels|-1 cut-points");
            for (int i = 1; i < intercepts.size(); ++i)
                if (!(intercepts[i] > intercepts[i - 1]))
                    throw ConfigError("link: ordinal cut-points must be strictly increasing");
            break;
        case VarKind::Categorical:
            if (intercepts.size() != n_levels - 1)
                throw ConfigError("link: categorical needs |levels|-1 intercepts");
            break;
    }
    if (kind == VarKind::Continuous && !(sigma2 > 0)) throw ConfigError("link: sigma2 <= 0");
}

double log_density(const LinkParams& p, int y, const ConstVecRef& z, int trials) {
    check_code(p, y, trials);
    switch (p.kind) {
        case VarKind::Binary: {
            const double eta = clamp_eta(p.intercepts[0] + p.loadings.dot(z));
            return y == 1 ? -log1pexp(-eta) : -log1pexp(eta);
        }
        case VarKind::Count: {
            const double eta = clamp_eta(p.intercepts[0] + p.loadings.dot(z));
            return log_binom_coeff(trials, y) - y * log1pexp(-eta) - (trials - y) * log1pexp(eta);
        }
        case VarKind::Ordinal: {
            const double eta = p.loadings.dot(z);
            const int c = p.n_levels - 1;  // number of cut-points
            const double upper = y < c ? logistic(clamp_eta(p.intercepts[y] - eta)) : 1.0;
            const double lower = y > 0 ? logistic(clamp_eta(p.intercepts[y - 1] - eta)) : 0.0;
            return std::log(std::max(upper - lower, 1e-300));
        }
        case VarKind::Categorical: {
            const double bz = p.loadings.dot(z);
            // eta_0 = 0 (reference), eta_c = alpha_c + beta'z
            double max_eta = 0.0;
            VectorXd eta(p.n_levels);
            eta[0] = 0.0;
            for (int c = 1; c < p.n_levels; ++c) {
                eta[c] = clamp_eta(p.intercepts[c - 1] + bz);
                max_eta = std::max(max_eta, eta[c]);
            }
            double lse = 0.0;
            for (int c = 0; c < p.n_levels; ++c) lse += std::exp(eta[c] - max_eta);
            return eta[y] - max_eta - std::log(lse);
        }
        case VarKind::Continuous:
            return log_density_continuous(p, static_cast<double>(y), z);
    }
    return 0.0;
}

double log_density_continuous(const LinkParams& p, double y, const ConstVecRef& z) {
    const double s2 = std::max(p.sigma2, kPsiFloor);
    const double mu = p.intercepts[0] + p.loadings.dot(z);
    const double d = y - mu;
    return -0.5 * std::log(2.0 * M_PI * s2) - d * d / (2.0 * s2);
}

VectorXd grad_log_density(const LinkParams& p, int y, const ConstVecRef& z, int trials) {
    check_code(p, y, trials);
    const int r = static_cast<int>(p.loadings.size());
    switch (p.kind) {
        case VarKind::Binary: {
            const double eta = p.intercepts[0] + p.loadings.dot(z);
            const double g = y - logistic(eta);
            VectorXd out(1 + r);
            out[0] = g;
            out.tail(r) = g * z;
            return out;
        }
        case VarKind::Count: {
            const double eta = p.intercepts[0] + p.loadings.dot(z);
            const double g = y - trials * logistic(eta);
            VectorXd out(1 + r);
            out[0] = g;
            out.tail(r) = g * z;
            return out;
        }
        case VarKind::Ordinal: {
            const int c = p.n_levels - 1;
            const double eta = p.loadings.dot(z);
            const double fu = y < c ? [&] {
                const double F = logistic(p.intercepts[y] - eta);
                return F * (1.0 - F);
            }() : 0.0;
            const double fl = y > 0 ? [&] {
                const double F = logistic(p.intercepts[y - 1] - eta);
                return F * (1.0 - F);
            }() : 0.0;
            const double upper = y < c ? logistic(p.intercepts[y] - eta) : 1.0;
            const double lower = y > 0 ? logistic(p.intercepts[y - 1] - eta) : 0.0;
            const double prob = std::max(upper - lower, 1e-300);
            VectorXd out = VectorXd::Zero(c + r);
            if (y < c) out[y] += fu / prob;
            if (y > 0) out[y - 1] -= fl / prob;
            const double deta = (fl - fu) / prob;
            out.tail(r) = deta * z;
            return out;
        }
        case VarKind::Categorical: {
            const double bz = p.loadings.dot(z);
            VectorXd eta(p.n_levels);
            eta[0] = 0.0;
            for (int cc = 1; cc < p.n_levels; ++cc) eta[cc] = p.intercepts[cc - 1] + bz;
            const double m = eta.maxCoeff();
            VectorXd prob = (eta.array() - m).exp();
            prob /= prob.sum();
            VectorXd out(p.n_levels - 1 + r);
            for (int cc = 1; cc < p.n_levels; ++cc) out[cc - 1] = (y == cc ? 1.0 : 0.0) - prob[cc];
            const double dbz = (y >= 1 ? 1.0 : 0.0) - (1.0 - prob[0]);
            out.tail(r) = dbz * z;
            return out;
        }
        case VarKind::Continuous:
            return grad_log_density_continuous(p, static_cast<double>(y), z);
    }
    return {};
}

VectorXd grad_log_density_continuous(const LinkParams& p, double y, const ConstVecRef& z) {
    const int r = static_cast<int>(p.loadings.size());
    const double s2 = std::max(p.sigma2, kPsiFloor);
    const double d = y - (p.intercepts[0] + p.loadings.dot(z));
    VectorXd out(1 + r + 1);
    out[0] = d / s2;
    out.segment(1, r) = (d / s2) * z;
    out[1 + r] = -0.5 + d * d / (2.0 * s2);  // wrt log(sigma2)
    return out;
}

VectorXd cutpoints_encode(const VectorXd& cuts) {
    VectorXd u(cuts.size());
    if (cuts.size() == 0) return u;
    u[0] = cuts[0];
    for (int i = 1; i < cuts.size(); ++i) {
        const double inc = cuts[i] - cuts[i - 1];
        if (!(inc > 0)) throw ConfigError("cutpoints_encode: input not strictly increasing");
        u[i] = std::log(inc);
    }
    return u;
}

VectorXd cutpoints_decode(const VectorXd& u) {
    VectorXd cuts(u.size());
    if (u.size() == 0) return cuts;
    cuts[0] = u[0];
    for (int i = 1; i < u.size(); ++i) cuts[i] = cuts[i - 1] + std::exp(u[i]);
    return cuts;
}

VectorXd cutpoints_chain_grad(const VectorXd& u, const VectorXd& grad_wrt_cuts) {
    VectorXd g(u.size());
    double suffix = 0.0;
    for (int i = static_cast<int>(u.size()) - 1; i >= 0; --i) {
        suffix += grad_wrt_cuts[i];
        g[i] = i == 0 ? suffix : std::exp(u[i]) * suffix;
    }
    return g;
}

}  // namespace mixclus
