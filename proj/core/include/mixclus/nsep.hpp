#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mixclus/dataset.hpp"
#include "mixclus/model.hpp"

namespace mixclus {

struct InitReport {
    std::vector<double> explained_variance;  // embedding dims, non-increasing
    std::vector<std::string> notes;
    bool converged = true;
};

struct McaResult {
    MatrixXd scores;      // n x r, principal row coordinates
    MatrixXd col_coords;  // kept levels x r
    VectorXd inertia;     // per retained dimension
};

/// Correspondence analysis of the complete indicator matrix. n_levels gives
/// the level count per coded column; zero-occurrence levels are dropped.
McaResult mca(const Eigen::MatrixXi& codes, const std::vector<int>& n_levels, int r,
              WarningLog* warnings = nullptr);

/// Factor analysis of mixed data: PCA of standardized continuous columns
/// concatenated with MCA-weighted centered indicator columns.
MatrixXd famd(const MixedDataset& ds, int r, WarningLog* warnings = nullptr);

struct GmmResult {
    VectorXd weights;
    std::vector<VectorXd> means;
    std::vector<MatrixXd> covs;
    MatrixXd resp;  // n x k responsibilities
    std::vector<double> loglik_trace;
};

GmmResult gmm_em(const MatrixXd& z, int k, std::uint64_t seed, int max_iter = 100);

struct FaResult {
    VectorXd mean;
    MatrixXd loading;  // d x r
    VectorXd psi;      // diagonal noise variances
    MatrixXd scores;   // n x r posterior means
    std::vector<double> loglik_trace;
};

FaResult fa_em(const MatrixXd& z, int r_next, int max_iter = 200);

struct PcaResult {
    MatrixXd scores;
    MatrixXd loadings;  // columns orthonormal
    VectorXd eigenvalues;
};

PcaResult pca(const MatrixXd& z, int r);

struct PlsResult {
    MatrixXd x_weights;  // per component
    MatrixXd x_scores;
    MatrixXd y_loadings;
    MatrixXd coef;  // cols(X) x cols(Y), Y ~ X * coef (centered blocks)
};

PlsResult pls_regression(const MatrixXd& x, const MatrixXd& y, int r);

/// Full initialization: embedding (MCA or FAMD), per-layer GMM + factor
/// analyses down both heads and the tail, PCA + PLS junction merge (m2),
/// link seeds from per-variable regression fits, final rescaling pass.
std::pair<ModelParams, InitReport> nsep_init(const MixedDataset& ds, const Architecture& arch,
                                             std::uint64_t seed, WarningLog* warnings = nullptr);

}  // namespace mixclus
