#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mixclus/architecture.hpp"
#include "mixclus/dataset.hpp"
#include "mixclus/gaussnet.hpp"
#include "mixclus/metrics.hpp"
#include "mixclus/trainer.hpp"

namespace {

using json = nlohmann::json;
using namespace mixclus;

std::string fmt17(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write file: " + path);
    out << text;
}

std::vector<int> read_label_column(const std::string& path, std::vector<std::string>* raw = nullptr) {
    const csv::Table table = csv::read_file(path);
    std::vector<std::string> cells;
    for (const auto& row : table.rows) {
        if (row.empty()) continue;
        cells.push_back(row.front());
    }
    // a numeric header cell means the file had no header row
    if (!table.header.empty()) {
        const std::string& h = table.header.front();
        char* end = nullptr;
        std::strtod(h.c_str(), &end);
        if (end != h.c_str() && *end == '\0') cells.insert(cells.begin(), h);
    }
    if (cells.empty()) throw ConfigError("no labels in " + path);
    std::vector<int> labels;
    std::vector<std::string> seen;
    for (const auto& c : cells) {
        auto it = std::find(seen.begin(), seen.end(), c);
        if (it == seen.end()) {
            seen.push_back(c);
            it = std::prev(seen.end());
        }
        labels.push_back(static_cast<int>(it - seen.begin()));
    }
    if (raw) *raw = cells;
    return labels;
}

json vector_to_json(const VectorXd& v) {
    json arr = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
    return arr;
}

json matrix_to_json(const MatrixXd& m) {
    json arr = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        arr.push_back(std::move(row));
    }
    return arr;
}

json layers_to_json(const std::vector<MixtureLayer>& layers) {
    json arr = json::array();
    for (const auto& layer : layers) {
        json comps = json::array();
        for (const auto& c : layer.comps)
            comps.push_back({{"pi", c.pi},
                             {"eta", vector_to_json(c.eta)},
                             {"lambda", matrix_to_json(c.lambda)},
                             {"psi", matrix_to_json(c.psi)}});
        arr.push_back({{"out_dim", layer.out_dim}, {"in_dim", layer.in_dim}, {"components", comps}});
    }
    return arr;
}

json model_to_json(const ModelParams& p) {
    json links = json::array();
    for (const auto& link : p.gllvm) {
        json entry = {{"variable_index", link.variable_index},
                      {"kind", to_string(link.kind)},
                      {"intercepts", vector_to_json(link.intercepts)},
                      {"loadings", vector_to_json(link.loadings)}};
        if (link.kind == VarKind::Continuous) entry["sigma2"] = link.sigma2;
        if (link.kind == VarKind::Ordinal || link.kind == VarKind::Categorical)
            entry["n_levels"] = link.n_levels;
        links.push_back(std::move(entry));
    }
    return {{"mode", to_string(p.mode)},
            {"terminal_dim", p.terminal_dim},
            {"gllvm", std::move(links)},
            {"layers_c", layers_to_json(p.layers_c)},
            {"layers_d", layers_to_json(p.layers_d)},
            {"layers_tail", layers_to_json(p.layers_tail)}};
}

int resolve_threads(int flag_value, const json& config) {
    if (flag_value > 0) return flag_value;
    if (config.contains("threads")) return config["threads"].get<int>();
    if (const char* env = std::getenv("MIXCLUS_THREADS")) {
        const int t = std::atoi(env);
        if (t > 0) return t;
    }
    return 1;
}

struct FitArgs {
    std::string data, schema, config, mode, labels, out;
    std::int64_t seed = -1;
    int threads = 0;
};

int cmd_fit(const FitArgs& args) {
    json config;
    try {
        config = json::parse(read_text_file(args.config));
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config parse: ") + e.what());
    }

    const Schema schema = read_schema_file(args.schema);
    WarningLog warnings;
    const MixedDataset ds = load_dataset_file(args.data, schema, &warnings);

    if (!config.contains("architecture")) throw ConfigError("config missing \"architecture\"");
    json arch_json = config["architecture"];
    // flags win over the config file
    if (!args.mode.empty()) arch_json["mode"] = args.mode;
    else if (config.contains("mode") && !arch_json.contains("mode"))
        arch_json["mode"] = config["mode"];

    FitConfig fc;
    fc.arch = parse_architecture(arch_json.dump());
    fc.seed = args.seed >= 0 ? static_cast<std::uint64_t>(args.seed)
                             : config.value("seed", std::uint64_t{0});
    fc.max_iter = config.value("max_iter", 30);
    fc.patience = config.value("patience", 1);
    if (config.contains("selection_iters"))
        fc.selection_iters = config["selection_iters"].get<std::vector<int>>();
    fc.autoclus = config.value("autoclus", false);
    fc.multi_clustering = config.value("multi_clustering", false);
    fc.clustering_layer = config.value("clustering_layer", 0);
    fc.max_pool = config.value("max_pool", 512);
    fc.threads = resolve_threads(args.threads, config);

    std::string out_dir = args.out;
    if (out_dir.empty()) out_dir = config.value("out", "");
    if (out_dir.empty()) throw ConfigError("no output directory (--out or config \"out\")");
    std::filesystem::create_directories(out_dir);
    const auto path = [&out_dir](const std::string& name) {
        return (std::filesystem::path(out_dir) / name).string();
    };

    const FitResult result = fit(ds, fc, &warnings);

    // labels.csv
    {
        std::string text = "label\n";
        for (int l : result.labels) text += std::to_string(l) + "\n";
        write_text_file(path("labels.csv"), text);
    }
    // embedding_layer<l>.csv
    for (std::size_t l = 0; l < result.embeddings.size(); ++l) {
        const MatrixXd& emb = result.embeddings[l];
        std::string text;
        for (Eigen::Index c = 0; c < emb.cols(); ++c)
            text += (c ? "," : "") + ("dim_" + std::to_string(c));
        text += "\n";
        for (Eigen::Index r = 0; r < emb.rows(); ++r) {
            for (Eigen::Index c = 0; c < emb.cols(); ++c)
                text += (c ? "," : "") + fmt17(emb(r, c));
            text += "\n";
        }
        write_text_file(path("embedding_layer" + std::to_string(l) + ".csv"), text);
    }
    // trace.csv; wall times go to run_meta.json so that identical runs emit
    // byte-identical traces
    {
        std::string text = "iteration,loglik,silhouette,m_schedule\n";
        for (const TraceRow& row : result.trace)
            text += std::to_string(row.iteration) + "," + fmt17(row.loglik) + "," +
                    fmt17(row.silhouette) + "," + std::to_string(row.m_schedule) + "\n";
        write_text_file(path("trace.csv"), text);
    }
    // metrics.json
    {
        json metrics;
        const MatrixXd gower = gower_matrix(ds);
        metrics["silhouette"] = silhouette(result.labels, gower);
        metrics["loglik"] = result.trace.empty() ? 0.0 : result.trace.back().loglik;
        if (!args.labels.empty()) {
            const std::vector<int> truth = read_label_column(args.labels);
            if (truth.size() != result.labels.size())
                throw ConfigError("ground-truth label count does not match the dataset");
            const PrecisionScores prec = precision_scores(result.labels, truth);
            metrics["micro_precision"] = prec.micro;
            metrics["macro_precision"] = prec.macro;
        }
        write_text_file(path("metrics.json"), metrics.dump(2) + "\n");
    }
    // model.json
    write_text_file(path("model.json"), model_to_json(result.params).dump(2) + "\n");
    // run_meta.json
    {
        json meta;
        meta["seed"] = fc.seed;
        meta["threads"] = fc.threads;
        meta["version"] = "0.1.0";
        meta["data"] = args.data;
        meta["schema"] = args.schema;
        meta["config_hash"] = std::hash<std::string>{}(config.dump());
        meta["architecture"] = json::parse(architecture_to_json(result.architecture_final));
        meta["selected_iteration"] = result.selected_iteration;
        meta["iterations"] = static_cast<int>(result.trace.size());
        json walls = json::array();
        for (const TraceRow& row : result.trace) walls.push_back(row.wall_seconds);
        meta["wall_seconds"] = std::move(walls);
        meta["warnings"] = warnings.messages;
        write_text_file(path("run_meta.json"), meta.dump(2) + "\n");
    }
    return 0;
}

int cmd_metrics(const std::string& pred_path, const std::string& truth_path,
                const std::string& data_path, const std::string& schema_path) {
    const Schema schema = read_schema_file(schema_path);
    WarningLog warnings;
    const MixedDataset ds = load_dataset_file(data_path, schema, &warnings);
    const std::vector<int> pred = read_label_column(pred_path);
    if (static_cast<int>(pred.size()) != ds.n)
        throw ConfigError("prediction label count does not match the dataset");

    json metrics;
    metrics["silhouette"] = silhouette(pred, gower_matrix(ds, &warnings));
    if (!truth_path.empty()) {
        const std::vector<int> truth = read_label_column(truth_path);
        if (truth.size() != pred.size())
            throw ConfigError("ground-truth label count does not match the predictions");
        const PrecisionScores prec = precision_scores(pred, truth);
        metrics["micro_precision"] = prec.micro;
        metrics["macro_precision"] = prec.macro;
    }
    std::cout << metrics.dump(2) << "\n";
    return 0;
}

int cmd_gower(const std::string& data_path, const std::string& schema_path,
              const std::string& out_path) {
    const Schema schema = read_schema_file(schema_path);
    WarningLog warnings;
    const MixedDataset ds = load_dataset_file(data_path, schema, &warnings);
    const MatrixXd dist = gower_matrix(ds, &warnings);

    std::string text;
    for (int c = 0; c < ds.n; ++c) text += (c ? "," : "") + ("d_" + std::to_string(c));
    text += "\n";
    for (int r = 0; r < ds.n; ++r) {
        for (int c = 0; c < ds.n; ++c) text += (c ? "," : "") + fmt17(dist(r, c));
        text += "\n";
    }
    write_text_file(out_path, text);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mixed deep Gaussian mixture model clustering"};
    app.require_subcommand(1);

    FitArgs fit_args;
    CLI::App* fit_cmd = app.add_subcommand("fit", "Train a model and emit run artifacts");
    fit_cmd->add_option("--data", fit_args.data, "Observations CSV")->required();
    fit_cmd->add_option("--schema", fit_args.schema, "Column schema JSON")->required();
    fit_cmd->add_option("--config", fit_args.config, "Run configuration JSON")->required();
    fit_cmd->add_option("--mode", fit_args.mode, "Model family: m1, m2, ddgmm, dgmm");
    fit_cmd->add_option("--seed", fit_args.seed, "Random seed (overrides the config)");
    fit_cmd->add_option("--threads", fit_args.threads, "Worker threads");
    fit_cmd->add_option("--labels", fit_args.labels, "Ground-truth labels CSV for scoring");
    fit_cmd->add_option("--out", fit_args.out, "Output directory");

    std::string m_pred, m_truth, m_data, m_schema;
    CLI::App* metrics_cmd = app.add_subcommand("metrics", "Score an existing clustering");
    metrics_cmd->add_option("--pred", m_pred, "Predicted labels CSV")->required();
    metrics_cmd->add_option("--truth", m_truth, "Ground-truth labels CSV");
    metrics_cmd->add_option("--data", m_data, "Observations CSV")->required();
    metrics_cmd->add_option("--schema", m_schema, "Column schema JSON")->required();

    std::string g_data, g_schema, g_out;
    CLI::App* gower_cmd = app.add_subcommand("gower", "Write the pairwise Gower distance matrix");
    gower_cmd->add_option("--data", g_data, "Observations CSV")->required();
    gower_cmd->add_option("--schema", g_schema, "Column schema JSON")->required();
    gower_cmd->add_option("--out", g_out, "Output CSV path")->required();

    try {
        app.parse(argc, argv);
        if (fit_cmd->parsed()) return cmd_fit(fit_args);
        if (metrics_cmd->parsed()) return cmd_metrics(m_pred, m_truth, m_data, m_schema);
        if (gower_cmd->parsed()) return cmd_gower(g_data, g_schema, g_out);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
