#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "mixclus/metrics.hpp"
#include "mixclus/trainer.hpp"

using namespace mixclus;

namespace {

// minimal standalone factor-analysis EM used as an oracle
std::pair<MatrixXd, VectorXd> fa_oracle(const MatrixXd& y, int r, int iters) {
    const int n = static_cast<int>(y.rows());
    const int p = static_cast<int>(y.cols());
    const MatrixXd yc = y.rowwise() - y.colwise().mean();
    const MatrixXd s = yc.transpose() * yc / n;
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(s);
    MatrixXd lambda(p, r);
    for (int j = 0; j < r; ++j)
        lambda.col(j) = eig.eigenvectors().col(p - 1 - j) *
                        std::sqrt(std::max(eig.eigenvalues()[p - 1 - j], 1e-6));
    VectorXd psi = (s - lambda * lambda.transpose()).diagonal().cwiseMax(1e-6);
    for (int it = 0; it < iters; ++it) {
        const MatrixXd psi_inv = psi.cwiseInverse().asDiagonal();
        const MatrixXd m =
            (MatrixXd::Identity(r, r) + lambda.transpose() * psi_inv * lambda).inverse();
        const MatrixXd beta = m * lambda.transpose() * psi_inv;  // E[z|y] = beta y
        const MatrixXd ez = yc * beta.transpose();
        const MatrixXd ezz = n * m + ez.transpose() * ez;
        const MatrixXd syz = yc.transpose() * ez;
        lambda = syz * ezz.inverse();
        psi = (s - lambda * syz.transpose() / n).diagonal().cwiseMax(1e-6);
    }
    return {lambda, psi};
}

}  // namespace

TEST_CASE("mc_schedule pinned values") {
    CHECK(mc_schedule(270, 1, 4) == 14);
    CHECK(mc_schedule(100, 2, 1) == 17);
    // (40 / ln n) t sqrt(r) < 2 floors at 1
    CHECK(mc_schedule(2000000000, 1, 1) == 1);
    CHECK(mc_schedule(270, 2, 4) == 28);
}

TEST_CASE("assign_clusters takes the argmax, ties to the lowest index") {
    MatrixXd post(3, 3);
    post << 0.2, 0.5, 0.3, 0.4, 0.4, 0.2, 1.0 / 3, 1.0 / 3, 1.0 / 3;
    CHECK(assign_clusters(post) == std::vector<int>{1, 0, 0});
}

TEST_CASE("fit config validation") {
    FitConfig cfg;
    cfg.arch = parse_architecture(R"({"mode":"ddgmm","head_d":[[3,1]],"tail":[[2,2],[1,1]]})");
    cfg.validate();
    FitConfig bad = cfg;
    bad.max_iter = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.clustering_layer = 5;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.threads = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("fit is deterministic in the seed") {
    fixtures::SyntheticData blob = fixtures::make_blob(120, 31);
    Schema schema = parse_schema(blob.schema);
    WarningLog w;
    MixedDataset ds = load_dataset_text(blob.csv, schema, &w);
    FitConfig cfg;
    cfg.arch = parse_architecture(R"({"mode":"ddgmm","head_d":[[3,1]],"tail":[[2,2],[1,1]]})");
    cfg.seed = 5;
    cfg.max_iter = 3;
    cfg.selection_iters = {};

    FitResult a = fit(ds, cfg, &w);
    FitResult b = fit(ds, cfg, &w);
    CHECK(a.labels == b.labels);
    REQUIRE(a.trace.size() == b.trace.size());
    for (std::size_t t = 0; t < a.trace.size(); ++t) {
        CHECK(a.trace[t].loglik == b.trace[t].loglik);
        CHECK(a.trace[t].silhouette == b.trace[t].silhouette);
        CHECK(a.trace[t].m_schedule == b.trace[t].m_schedule);
    }

    cfg.seed = 6;
    FitResult c = fit(ds, cfg, &w);
    bool some_diff = c.trace[0].loglik != a.trace[0].loglik;
    CHECK(some_diff);
}

TEST_CASE("trace bookkeeping and snapshot selection") {
    fixtures::SyntheticData blob = fixtures::make_blob(150, 37);
    Schema schema = parse_schema(blob.schema);
    WarningLog w;
    MixedDataset ds = load_dataset_text(blob.csv, schema, &w);
    FitConfig cfg;
    cfg.arch = parse_architecture(R"({"mode":"m1","head_d":[[3,1]],"tail":[[2,2],[1,1]]})");
    cfg.seed = 2;
    cfg.max_iter = 5;
    cfg.patience = 10;  // run all iterations
    cfg.selection_iters = {};
    FitResult res = fit(ds, cfg, &w);
    REQUIRE(!res.trace.empty());
    CHECK(res.trace.size() <= 5);
    double best = -1.0;
    int best_iter = 0;
    for (std::size_t t = 0; t < res.trace.size(); ++t) {
        CHECK(res.trace[t].iteration == static_cast<int>(t) + 1);
        CHECK(res.trace[t].m_schedule ==
              mc_schedule(ds.n, static_cast<int>(t) + 1, cfg.arch.tail[0].r));
        if (!std::isnan(res.trace[t].silhouette) && res.trace[t].silhouette > best) {
            best = res.trace[t].silhouette;
            best_iter = static_cast<int>(t) + 1;
        }
    }
    CHECK(res.selected_iteration == best_iter);
    CHECK(static_cast<int>(res.labels.size()) == ds.n);
    // one embedding per tail transform, junction first
    REQUIRE(res.embeddings.size() == 1);
    CHECK(res.embeddings[0].rows() == ds.n);
    CHECK(res.embeddings[0].cols() == 2);
    res.params.validate();
}

TEST_CASE("two separated groups are recovered end to end") {
    fixtures::SyntheticData blob = fixtures::make_blob(200, 41);
    Schema schema = parse_schema(blob.schema);
    WarningLog w;
    MixedDataset ds = load_dataset_text(blob.csv, schema, &w);
    FitConfig cfg;
    cfg.arch = parse_architecture(
        R"({"mode":"m2","head_c":[[2,1]],"head_d":[[3,1]],"tail":[[2,2],[1,1]]})");
    cfg.seed = 1;
    cfg.max_iter = 6;
    cfg.selection_iters = {};
    FitResult res = fit(ds, cfg, &w);
    const PrecisionScores s = precision_scores(res.labels, blob.truth);
    CHECK(s.micro >= 0.95);
}

TEST_CASE("single-layer single-component dgmm converges to the factor-analysis fixed point") {
    fixtures::Rng rng(47);
    const int n = 2000, p = 6, r = 2;
    MatrixXd lambda(p, r);
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < r; ++j) lambda(i, j) = rng.normal();
    VectorXd psi(p);
    for (int i = 0; i < p; ++i) psi[i] = 0.3 + 0.3 * rng.uniform();
    std::ostringstream csv;
    csv << "v1,v2,v3,v4,v5,v6\n";
    csv.precision(17);
    for (int i = 0; i < n; ++i) {
        const VectorXd f = rng.normal_vector(r);
        for (int j = 0; j < p; ++j)
            csv << lambda.row(j).dot(f) + std::sqrt(psi[j]) * rng.normal()
                << (j + 1 < p ? "," : "\n");
    }
    std::string schema_json = R"({"columns":[)";
    for (int j = 0; j < p; ++j)
        schema_json += std::string(j ? "," : "") + R"({"name":"v)" + std::to_string(j + 1) +
                       R"(","kind":"continuous"})";
    schema_json += "]}";
    Schema schema = parse_schema(schema_json);
    WarningLog w;
    MixedDataset ds = load_dataset_text(csv.str(), schema, &w);

    FitConfig cfg;
    cfg.arch = parse_architecture(R"({"mode":"dgmm","head_c":[[2,1]],"tail":[[2,1]]})");
    cfg.seed = 3;
    cfg.max_iter = 15;
    cfg.patience = 20;
    cfg.selection_iters = {};
    FitResult res = fit(ds, cfg, &w);

    auto [lam_o, psi_o] = fa_oracle(ds.y_c, r, 500);
    const MatrixXd cov_o = lam_o * lam_o.transpose() + MatrixXd(psi_o.asDiagonal());
    const FactorComponent& comp = res.params.layers_c[0].comps[0];
    const MatrixXd cov_fit = comp.lambda * comp.lambda.transpose() + comp.psi;
    CHECK((cov_fit - cov_o).norm() / cov_o.norm() < 0.02);
}
