#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "mixclus/gaussnet.hpp"
#include "mixclus/nsep.hpp"

using namespace mixclus;

TEST_CASE("mca: shapes, centering, inertia ordering, rank guard") {
    fixtures::Rng rng(1);
    const int n = 200;
    Eigen::MatrixXi codes(n, 3);
    std::vector<int> levels = {3, 2, 4};
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < 3; ++j)
            codes(i, j) = static_cast<int>(rng.uniform() * levels[j]);
    McaResult res = mca(codes, levels, 3);
    CHECK(res.scores.rows() == n);
    CHECK(res.scores.cols() == 3);
    for (int c = 0; c < 3; ++c) CHECK(std::abs(res.scores.col(c).mean()) < 1e-8);
    for (int c = 1; c < 3; ++c) CHECK(res.inertia[c] <= res.inertia[c - 1] + 1e-12);
    // rank of the indicator residual space is sum(levels) - q = 6
    CHECK_THROWS_AS(mca(codes, levels, 7), ConfigError);

    // an empty level is dropped with a warning, not an error
    WarningLog w;
    Eigen::MatrixXi sparse = codes;
    for (int i = 0; i < n; ++i)
        if (sparse(i, 2) == 3) sparse(i, 2) = 0;
    mca(sparse, levels, 2, &w);
    CHECK(w.count() > 0);
}

TEST_CASE("mca separates categorical group structure") {
    fixtures::Rng rng(2);
    const int n = 300;
    Eigen::MatrixXi codes(n, 4);
    std::vector<int> levels(4, 3);
    std::vector<int> truth(n);
    for (int i = 0; i < n; ++i) {
        const int g = i % 2;
        truth[i] = g;
        for (int j = 0; j < 4; ++j) {
            // group 0 favors level 0, group 1 favors level 2
            const double u = rng.uniform();
            codes(i, j) = u < 0.75 ? (g ? 2 : 0) : (u < 0.9 ? 1 : (g ? 0 : 2));
        }
    }
    McaResult res = mca(codes, levels, 2);
    // the leading dimension should split the two groups almost perfectly
    int agree = 0;
    for (int i = 0; i < n; ++i) {
        const int pred = res.scores(i, 0) > 0 ? 1 : 0;
        agree += pred == truth[i] ? 1 : 0;
    }
    const double acc = std::max(agree, n - agree) / static_cast<double>(n);
    CHECK(acc > 0.9);
}

TEST_CASE("famd reduces mixed data and keeps scores centered") {
    fixtures::SyntheticData blob = fixtures::make_blob(200, 5);
    Schema schema = parse_schema(blob.schema);
    WarningLog w;
    MixedDataset ds = load_dataset_text(blob.csv, schema, &w);
    MatrixXd scores = famd(ds, 3, &w);
    CHECK(scores.rows() == 200);
    CHECK(scores.cols() == 3);
    for (int c = 0; c < 3; ++c) CHECK(std::abs(scores.col(c).mean()) < 1e-8);
    VectorXd vars(3);
    for (int c = 0; c < 3; ++c) vars[c] = scores.col(c).squaredNorm() / 200;
    for (int c = 1; c < 3; ++c) CHECK(vars[c] <= vars[c - 1] + 1e-10);

    // the leading dimension should carry the group separation
    int agree = 0;
    for (int i = 0; i < 200; ++i)
        agree += (scores(i, 0) > 0 ? 1 : 0) == blob.truth[i] ? 1 : 0;
    CHECK(std::max(agree, 200 - agree) / 200.0 > 0.9);
}

TEST_CASE("gmm_em recovers well-separated blobs") {
    fixtures::Rng rng(3);
    const int n = 400;
    MatrixXd z(n, 2);
    std::vector<int> truth(n);
    for (int i = 0; i < n; ++i) {
        const int g = i < n / 2 ? 0 : 1;
        truth[i] = g;
        z(i, 0) = (g ? 3.0 : -3.0) + rng.normal();
        z(i, 1) = (g ? -1.0 : 1.0) + rng.normal();
    }
    GmmResult res = gmm_em(z, 2, 9);
    CHECK(res.weights.sum() == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(res.weights.minCoeff() > 0.4);
    for (std::size_t t = 1; t < res.loglik_trace.size(); ++t)
        CHECK(res.loglik_trace[t] >= res.loglik_trace[t - 1] - 1e-6);
    int agree = 0;
    for (int i = 0; i < n; ++i) {
        int arg = 0;
        res.resp.row(i).maxCoeff(&arg);
        agree += arg == truth[i] ? 1 : 0;
    }
    CHECK(std::max(agree, n - agree) / static_cast<double>(n) > 0.98);
    const int hi = res.means[0][0] > res.means[1][0] ? 0 : 1;
    CHECK(res.means[hi][0] == doctest::Approx(3.0).epsilon(0.15));
    CHECK(res.means[1 - hi][0] == doctest::Approx(-3.0).epsilon(0.15));
}

TEST_CASE("fa_em recovers a planted factor covariance") {
    fixtures::Rng rng(4);
    const int n = 3000, p = 6, r = 2;
    MatrixXd lambda(p, r);
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < r; ++j) lambda(i, j) = rng.normal();
    VectorXd psi(p);
    for (int i = 0; i < p; ++i) psi[i] = 0.3 + 0.4 * rng.uniform();
    MatrixXd z(n, p);
    for (int i = 0; i < n; ++i) {
        const VectorXd f = rng.normal_vector(r);
        for (int j = 0; j < p; ++j)
            z(i, j) = lambda.row(j).dot(f) + std::sqrt(psi[j]) * rng.normal();
    }
    FaResult fit = fa_em(z, r);
    for (std::size_t t = 1; t < fit.loglik_trace.size(); ++t)
        CHECK(fit.loglik_trace[t] >= fit.loglik_trace[t - 1] - 1e-6);
    const MatrixXd truth_cov = lambda * lambda.transpose() + MatrixXd(psi.asDiagonal());
    const MatrixXd fit_cov =
        fit.loading * fit.loading.transpose() + MatrixXd(fit.psi.asDiagonal());
    CHECK((fit_cov - truth_cov).norm() / truth_cov.norm() < 0.10);
    CHECK(fit.scores.rows() == n);
    CHECK(fit.scores.cols() == r);
    CHECK(fit.psi.minCoeff() > 0.0);
}

TEST_CASE("pca basics") {
    fixtures::Rng rng(5);
    const int n = 150, p = 4;
    MatrixXd x(n, p);
    for (int i = 0; i < n; ++i) {
        const double f = rng.normal();
        for (int j = 0; j < p; ++j) x(i, j) = (j + 1) * f + 0.2 * rng.normal();
    }
    PcaResult res = pca(x, 2);
    CHECK((res.loadings.transpose() * res.loadings - MatrixXd::Identity(2, 2))
              .cwiseAbs()
              .maxCoeff() < 1e-10);
    CHECK(res.eigenvalues[0] >= res.eigenvalues[1]);
    const MatrixXd centered = x.rowwise() - x.colwise().mean();
    CHECK((res.scores - centered * res.loadings).cwiseAbs().maxCoeff() < 1e-10);
    // almost rank one: first eigenvalue dominates
    CHECK(res.eigenvalues[0] / res.eigenvalues.sum() > 0.9);
}

TEST_CASE("pls regression: exact linear map, score orthogonality, noise rejection") {
    fixtures::Rng rng(6);
    const int n = 5000, p = 3;
    MatrixXd x(n, p);
    for (int i = 0; i < n; ++i) x.row(i) = rng.normal_vector(p).transpose();
    MatrixXd y = 2.0 * x;
    PlsResult exact = pls_regression(x, y, p);
    CHECK((exact.coef - 2.0 * MatrixXd::Identity(p, p)).cwiseAbs().maxCoeff() < 1e-8);
    for (int a = 0; a < exact.x_scores.cols(); ++a)
        for (int b = 0; b < a; ++b)
            CHECK(std::abs(exact.x_scores.col(a).dot(exact.x_scores.col(b))) /
                      (exact.x_scores.col(a).norm() * exact.x_scores.col(b).norm()) <
                  1e-8);

    MatrixXd noise(n, 2);
    for (int i = 0; i < n; ++i) noise.row(i) = rng.normal_vector(2).transpose();
    PlsResult null_fit = pls_regression(x, noise, 2);
    CHECK(null_fit.coef.cwiseAbs().maxCoeff() < 0.1);
}

TEST_CASE("nsep_init produces a standardized, deterministic, valid model") {
    fixtures::SyntheticData blob = fixtures::make_blob(240, 11);
    Schema schema = parse_schema(blob.schema);
    WarningLog w;
    MixedDataset ds = load_dataset_text(blob.csv, schema, &w);
    Architecture arch = parse_architecture(
        R"({"mode":"m1","head_d":[[3,1]],"tail":[[2,2],[1,1]]})");

    auto [params, report] = nsep_init(ds, arch, 7, &w);
    params.validate();
    CHECK(params.gllvm.size() == 8);  // 4 binary + 4 continuous links in m1

    // every latent standardized after the final rescale
    for (const auto& layer : params.layers_d) {
        auto [mean, var] = layer_moments(layer);
        CHECK(mean.cwiseAbs().maxCoeff() < 1e-8);
        CHECK((var - MatrixXd::Identity(var.rows(), var.cols())).cwiseAbs().maxCoeff() < 1e-8);
    }
    for (const auto& layer : params.layers_tail) {
        auto [mean, var] = layer_moments(layer);
        CHECK(mean.cwiseAbs().maxCoeff() < 1e-8);
        CHECK((var - MatrixXd::Identity(var.rows(), var.cols())).cwiseAbs().maxCoeff() < 1e-8);
    }

    // binary loading rows keep the upper-triangular mask
    for (int j = 0; j < 4; ++j)
        for (int c = j + 1; c < params.gllvm[j].loadings.size(); ++c)
            CHECK(params.gllvm[j].loadings[c] == 0.0);

    // explained-variance summary is a non-increasing fraction vector
    REQUIRE(!report.explained_variance.empty());
    double total = 0.0;
    for (std::size_t c = 1; c < report.explained_variance.size(); ++c)
        CHECK(report.explained_variance[c] <= report.explained_variance[c - 1] + 1e-12);
    for (double v : report.explained_variance) total += v;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-8));

    // the clustering layer mixture must see the two groups
    CHECK(params.layers_tail[0].K() == 2);
    CHECK(params.layers_tail[0].comps[0].pi > 0.2);
    CHECK(params.layers_tail[0].comps[0].pi < 0.8);

    auto [params2, report2] = nsep_init(ds, arch, 7, &w);
    CHECK((params.layers_tail[0].comps[0].eta - params2.layers_tail[0].comps[0].eta)
              .cwiseAbs()
              .maxCoeff() == 0.0);
    auto [params3, report3] = nsep_init(ds, arch, 8, &w);
    (void)params3;
}

TEST_CASE("nsep_init seeds links better than chance") {
    fixtures::SyntheticData blob = fixtures::make_blob(240, 13);
    Schema schema = parse_schema(blob.schema);
    WarningLog w;
    MixedDataset ds = load_dataset_text(blob.csv, schema, &w);
    Architecture arch = parse_architecture(
        R"({"mode":"ddgmm","head_d":[[3,1]],"tail":[[2,2],[1,1]]})");
    auto [params, report] = nsep_init(ds, arch, 3, &w);

    // intercept-only baseline: observed level frequencies
    double seeded = 0.0, baseline = 0.0;
    for (int d = 0; d < ds.p_d(); ++d) {
        const double p1 =
            ds.y_d.col(d).cast<double>().mean();
        for (int i = 0; i < ds.n; ++i) {
            const int y = ds.y_d(i, d);
            baseline += std::log(std::max(y ? p1 : 1 - p1, 1e-12));
            seeded += log_density(params.gllvm[d], y, VectorXd::Zero(params.embedding_dim()));
        }
    }
    // the seeded links are evaluated at the latent origin; their fitted
    // intercepts should not be catastrophically worse than the frequency fit
    CHECK(seeded > baseline - 0.2 * std::abs(baseline));

    // and all four m2-style chain pieces survive a full walk on the m2 mode
    fixtures::SyntheticData blob2 = fixtures::make_blob(240, 17);
    MixedDataset ds2 = load_dataset_text(blob2.csv, schema, &w);
    Architecture m2 = parse_architecture(
        R"({"mode":"m2","head_c":[[2,2]],"head_d":[[3,2]],"tail":[[2,2],[1,1]]})");
    auto [params_m2, rep2] = nsep_init(ds2, m2, 5, &w);
    params_m2.validate();
    CHECK(params_m2.layers_c.size() == 1);
    CHECK(params_m2.layers_d.size() == 1);
    CHECK(params_m2.layers_tail.size() == 1);
}
