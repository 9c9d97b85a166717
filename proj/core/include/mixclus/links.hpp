#pragma once

#include "mixclus/common.hpp"
#include "mixclus/schema.hpp"

namespace mixclus {

/// Exponential-family link of one observed variable onto the first latent
/// layer. Intercept layout depends on the kind:
///   binary/count/continuous: single intercept
///   ordinal:     strictly increasing cut-points, length |levels|-1
///   categorical: per-level intercepts, length |levels|-1 (reference level 0)
struct LinkParams {
    int variable_index = 0;
    VarKind kind = VarKind::Binary;
    VectorXd intercepts;
    VectorXd loadings;       // row of the embedding loading matrix, length r1
    double sigma2 = 1.0;     // continuous only (free Gaussian variance)
    int n_levels = 2;        // ordinal/categorical

    [[nodiscard]] int n_params() const;
    void validate() const;
};

using ConstVecRef = Eigen::Ref<const VectorXd>;

/// log f(y_j | z) for one coded observation. `trials` is the binomial trial
/// count for count variables, ignored otherwise.
double log_density(const LinkParams& p, int y_or_code, const ConstVecRef& z, int trials = 1);
double log_density_continuous(const LinkParams& p, double y, const ConstVecRef& z);

/// Analytic gradient, laid out as (intercepts..., loadings...), with
/// d/d log(sigma2) appended for continuous links.
VectorXd grad_log_density(const LinkParams& p, int y_or_code, const ConstVecRef& z, int trials = 1);
VectorXd grad_log_density_continuous(const LinkParams& p, double y, const ConstVecRef& z);

/// Reparameterize increasing cut-points: (c1, c2, ...) <-> (c1, log(c2-c1), ...).
VectorXd cutpoints_encode(const VectorXd& increasing);
VectorXd cutpoints_decode(const VectorXd& unconstrained);

/// Jacobian-vector product d(encoded)/d(cuts)^T * grad_wrt_cuts, i.e. the
/// chain rule taking a gradient in cut-point space to encoded space.
VectorXd cutpoints_chain_grad(const VectorXd& unconstrained, const VectorXd& grad_wrt_cuts);

double logistic(double x);

}  // namespace mixclus
