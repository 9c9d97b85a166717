#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "fixtures.hpp"
#include "mixclus/dataset.hpp"
#include "mixclus/links.hpp"
#include "mixclus/metrics.hpp"

using namespace mixclus;
namespace fs = std::filesystem;

namespace {

#ifndef MIXCLUS_BIN
#error "MIXCLUS_BIN must point at the CLI binary"
#endif

const std::string kBin = MIXCLUS_BIN;

int run(const std::string& args, const std::string& log = "/dev/null") {
    const std::string cmd = kBin + " " + args + " >" + log + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

struct Workspace {
    fs::path dir;
    explicit Workspace(const std::string& name) {
        dir = fs::temp_directory_path() / ("mixclus_cli_" + name);
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~Workspace() { fs::remove_all(dir); }
    std::string put(const std::string& name, const std::string& text) const {
        const std::string p = (dir / name).string();
        fixtures::write_file(p, text);
        return p;
    }
    std::string path(const std::string& name) const { return (dir / name).string(); }
};

const char* kConfig =
    R"({"architecture":{"mode":"m2","head_c":[[2,1]],"head_d":[[3,1]],"tail":[[2,2],[1,1]]},)"
    R"("max_iter":3,"selection_iters":[]})";

Workspace make_fit_ws(const std::string& name, int n = 150, int seed = 23) {
    Workspace ws(name);
    fixtures::SyntheticData blob = fixtures::make_blob(n, seed);
    ws.put("data.csv", blob.csv);
    ws.put("schema.json", blob.schema);
    ws.put("config.json", kConfig);
    ws.put("truth.csv", fixtures::truth_csv(blob.truth));
    return ws;
}

std::string fit_args(const Workspace& ws, const std::string& out, const std::string& extra = "") {
    return "fit --data " + ws.path("data.csv") + " --schema " + ws.path("schema.json") +
           " --config " + ws.path("config.json") + " --labels " + ws.path("truth.csv") +
           " --seed 1 --out " + ws.path(out) + (extra.empty() ? "" : " " + extra);
}

}  // namespace

TEST_CASE("fit writes the full artifact set") {
    Workspace ws = make_fit_ws("artifacts");
    REQUIRE(run(fit_args(ws, "out")) == 0);
    for (const char* name : {"labels.csv", "embedding_layer0.csv", "trace.csv", "metrics.json",
                             "model.json", "run_meta.json"})
        CHECK(fs::exists(ws.path(std::string("out/") + name)));

    const std::string labels = fixtures::read_file(ws.path("out/labels.csv"));
    CHECK(labels.rfind("label\n", 0) == 0);
    CHECK(std::count(labels.begin(), labels.end(), '\n') == 151);

    const std::string metrics = fixtures::read_file(ws.path("out/metrics.json"));
    for (const char* key : {"silhouette", "loglik", "micro_precision", "macro_precision"})
        CHECK(metrics.find(key) != std::string::npos);

    const std::string meta = fixtures::read_file(ws.path("out/run_meta.json"));
    for (const char* key : {"seed", "threads", "architecture", "selected_iteration", "wall_seconds"})
        CHECK(meta.find(key) != std::string::npos);

    const std::string trace = fixtures::read_file(ws.path("out/trace.csv"));
    CHECK(trace.rfind("iteration,loglik,silhouette,m_schedule\n", 0) == 0);
}

TEST_CASE("fit is byte-deterministic in the seed") {
    Workspace ws = make_fit_ws("determinism");
    REQUIRE(run(fit_args(ws, "a")) == 0);
    REQUIRE(run(fit_args(ws, "b")) == 0);
    CHECK(fixtures::read_file(ws.path("a/labels.csv")) ==
          fixtures::read_file(ws.path("b/labels.csv")));
    CHECK(fixtures::read_file(ws.path("a/trace.csv")) ==
          fixtures::read_file(ws.path("b/trace.csv")));

    // a different seed changes the trace
    const std::string args = "fit --data " + ws.path("data.csv") + " --schema " +
                             ws.path("schema.json") + " --config " + ws.path("config.json") +
                             " --seed 7 --out " + ws.path("c");
    REQUIRE(run(args) == 0);
    CHECK(fixtures::read_file(ws.path("a/trace.csv")) !=
          fixtures::read_file(ws.path("c/trace.csv")));
}

TEST_CASE("thread count does not change the labels") {
    Workspace ws = make_fit_ws("threads");
    REQUIRE(run(fit_args(ws, "t1", "--threads 1")) == 0);
    REQUIRE(run(fit_args(ws, "t4", "--threads 4")) == 0);
    CHECK(fixtures::read_file(ws.path("t1/labels.csv")) ==
          fixtures::read_file(ws.path("t4/labels.csv")));

    // MIXCLUS_THREADS is the fallback when no flag or config entry is given
    const std::string cmd = "MIXCLUS_THREADS=3 " + kBin + " " + fit_args(ws, "tenv") +
                            " >/dev/null 2>&1";
    REQUIRE(WEXITSTATUS(std::system(cmd.c_str())) == 0);
    const std::string meta = fixtures::read_file(ws.path("tenv/run_meta.json"));
    CHECK(meta.find("\"threads\": 3") != std::string::npos);
    CHECK(fixtures::read_file(ws.path("t1/labels.csv")) ==
          fixtures::read_file(ws.path("tenv/labels.csv")));
}

TEST_CASE("gower subcommand round-trips the library matrix") {
    Workspace ws("gower");
    fixtures::SyntheticData blob = fixtures::make_blob(30, 11);
    ws.put("data.csv", blob.csv);
    ws.put("schema.json", blob.schema);
    REQUIRE(run("gower --data " + ws.path("data.csv") + " --schema " + ws.path("schema.json") +
                " --out " + ws.path("g.csv")) == 0);

    Schema schema = parse_schema(blob.schema);
    MixedDataset ds = load_dataset_text(blob.csv, schema);
    const MatrixXd expect = gower_matrix(ds);

    csv::Table table = csv::read_file(ws.path("g.csv"));
    REQUIRE(static_cast<int>(table.rows.size()) == ds.n);
    for (int i = 0; i < ds.n; ++i)
        for (int j = 0; j < ds.n; ++j)
            CHECK(std::stod(table.rows[i][j]) == doctest::Approx(expect(i, j)).epsilon(1e-15));
}

TEST_CASE("metrics subcommand reports the requested scores") {
    Workspace ws = make_fit_ws("metrics");
    REQUIRE(run(fit_args(ws, "out")) == 0);

    const std::string base = "metrics --pred " + ws.path("out/labels.csv") + " --data " +
                             ws.path("data.csv") + " --schema " + ws.path("schema.json");
    REQUIRE(run(base, ws.path("no_truth.json")) == 0);
    const std::string no_truth = fixtures::read_file(ws.path("no_truth.json"));
    CHECK(no_truth.find("silhouette") != std::string::npos);
    CHECK(no_truth.find("micro_precision") == std::string::npos);

    REQUIRE(run(base + " --truth " + ws.path("truth.csv"), ws.path("with_truth.json")) == 0);
    const std::string with_truth = fixtures::read_file(ws.path("with_truth.json"));
    CHECK(with_truth.find("silhouette") != std::string::npos);
    CHECK(with_truth.find("micro_precision") != std::string::npos);
    CHECK(with_truth.find("macro_precision") != std::string::npos);
}

TEST_CASE("configuration problems exit with code 1") {
    Workspace ws = make_fit_ws("errors");
    // missing file
    CHECK(run("fit --data " + ws.path("nope.csv") + " --schema " + ws.path("schema.json") +
              " --config " + ws.path("config.json") + " --out " + ws.path("o")) == 1);
    // malformed config json
    ws.put("bad.json", "{not json");
    CHECK(run("fit --data " + ws.path("data.csv") + " --schema " + ws.path("schema.json") +
              " --config " + ws.path("bad.json") + " --out " + ws.path("o")) == 1);
    // config without an architecture
    ws.put("noarch.json", R"({"max_iter":3})");
    CHECK(run("fit --data " + ws.path("data.csv") + " --schema " + ws.path("schema.json") +
              " --config " + ws.path("noarch.json") + " --out " + ws.path("o")) == 1);
    // invalid architecture widths
    ws.put("badarch.json",
           R"({"architecture":{"mode":"ddgmm","head_d":[[2,1]],"tail":[[2,2],[1,1]]}})");
    CHECK(run("fit --data " + ws.path("data.csv") + " --schema " + ws.path("schema.json") +
              " --config " + ws.path("badarch.json") + " --out " + ws.path("o")) == 1);
    // unknown flag
    CHECK(run("fit --bogus 1") == 1);
    // non-finite continuous cell
    ws.put("inf.csv", "x1,x2,x3,b1,b2\n1.0,inf,0.5,0,1\n2.0,1.0,1.5,1,0\n");
    CHECK(run("fit --data " + ws.path("inf.csv") + " --schema " + ws.path("schema.json") +
              " --config " + ws.path("config.json") + " --out " + ws.path("o")) == 1);
}

TEST_CASE("the mode flag overrides the config") {
    Workspace ws("modeflag");
    fixtures::Rng rng(13);
    std::string csv = "b1,b2,b3,b4\n";
    for (int i = 0; i < 120; ++i) {
        const double f = (i % 2 ? 2.0 : -2.0) + 0.6 * rng.normal();
        for (int j = 0; j < 4; ++j)
            csv += std::string(rng.uniform() < logistic(2.5 * f) ? "1" : "0") +
                   (j + 1 < 4 ? "," : "\n");
    }
    ws.put("data.csv", csv);
    ws.put("schema.json", R"({"columns":[{"name":"b1","kind":"binary"},
        {"name":"b2","kind":"binary"},{"name":"b3","kind":"binary"},
        {"name":"b4","kind":"binary"}]})");
    ws.put("config.json",
           R"({"architecture":{"mode":"ddgmm","r":[3,2],"k":[2]},"max_iter":2,"selection_iters":[]})");

    REQUIRE(run("fit --data " + ws.path("data.csv") + " --schema " + ws.path("schema.json") +
                " --config " + ws.path("config.json") + " --seed 1 --mode m1 --out " +
                ws.path("out")) == 0);
    const std::string meta = fixtures::read_file(ws.path("out/run_meta.json"));
    CHECK(meta.find("\"mode\": \"m1\"") != std::string::npos);
}
