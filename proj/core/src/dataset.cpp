#include "mixclus/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace mixclus {

namespace csv {

Table parse(const std::string& text) {
    Table t;
    std::vector<std::string> row;
    std::string cell;
    bool in_quotes = false;
    bool row_has_content = false;
    auto end_cell = [&] {
        row.push_back(cell);
        cell.clear();
    };
    auto end_row = [&] {
        end_cell();
        if (t.header.empty())
            t.header = row;
        else
            t.rows.push_back(row);
        row.clear();
        row_has_content = false;
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    cell += '"';
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                cell += c;
            }
        } else if (c == '"') {
            in_quotes = true;
            row_has_content = true;
        } else if (c == ',') {
            end_cell();
            row_has_content = true;
        } else if (c == '\r') {
            // swallowed; \r\n handled at \n
        } else if (c == '\n') {
            if (row_has_content || !cell.empty() || !row.empty()) end_row();
        } else {
            cell += c;
            row_has_content = true;
        }
    }
    if (row_has_content || !cell.empty() || !row.empty()) end_row();
    if (in_quotes) throw ConfigError("CSV: unterminated quoted cell");
    return t;
}

Table read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open data file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

std::string escape(const std::string& cell) {
    if (cell.find_first_of(",\"\n\r") == std::string::npos) return cell;
    std::string out = "\"";
    for (char c : cell) {
        if (c == '"') out += "\"\"";
        out += c;
    }
    out += '"';
    return out;
}

}  // namespace csv

namespace {

bool is_missing(const std::string& cell) {
    return cell.empty() || cell == "NA" || cell == "?" || cell == "nan";
}

double parse_double(const std::string& cell, const std::string& col) {
    std::size_t pos = 0;
    double v = 0;
    try {
        v = std::stod(cell, &pos);
    } catch (...) {
        throw ConfigError("column '" + col + "': non-numeric continuous cell '" + cell + "'");
    }
    if (pos != cell.size() || !std::isfinite(v))
        throw ConfigError("column '" + col + "': non-numeric continuous cell '" + cell + "'");
    return v;
}

}  // namespace

std::string MixedDataset::decode(int discrete_col, int code) const {
    const VariableSpec& spec = schema.columns[discrete_cols.at(discrete_col)];
    if (spec.kind == VarKind::Count) return std::to_string(code);
    if (spec.levels.empty()) return std::to_string(code);  // bare 0/1 binary
    return spec.levels.at(code);
}

MixedDataset load_dataset(const csv::Table& table, const Schema& schema, WarningLog* warnings) {
    schema.validate();
    WarningLog local;
    WarningLog& wl = warnings ? *warnings : local;

    // map schema columns onto CSV columns
    std::unordered_map<std::string, int> csv_col;
    for (std::size_t j = 0; j < table.header.size(); ++j) csv_col[table.header[j]] = static_cast<int>(j);
    std::vector<int> src(schema.columns.size());
    for (std::size_t j = 0; j < schema.columns.size(); ++j) {
        auto it = csv_col.find(schema.columns[j].name);
        if (it == csv_col.end())
            throw ConfigError("CSV is missing schema column '" + schema.columns[j].name + "'");
        src[j] = it->second;
    }

    // drop rows with missing cells
    std::vector<const std::vector<std::string>*> kept;
    for (const auto& row : table.rows) {
        bool missing = false;
        for (std::size_t j = 0; j < schema.columns.size() && !missing; ++j)
            missing = static_cast<std::size_t>(src[j]) >= row.size() || is_missing(row[src[j]]);
        if (missing)
            continue;
        kept.push_back(&row);
    }
    const int n = static_cast<int>(kept.size());
    const int dropped = static_cast<int>(table.rows.size()) - n;
    if (dropped > 0) wl.add("dropped " + std::to_string(dropped) + " rows with missing cells");
    if (n == 0) throw ConfigError("dataset has no complete rows");

    MixedDataset ds;
    ds.schema = schema;
    ds.n = n;
    ds.dropped_rows = dropped;
    for (int j = 0; j < schema.width(); ++j) {
        if (schema.columns[j].kind == VarKind::Continuous)
            ds.continuous_cols.push_back(j);
        else
            ds.discrete_cols.push_back(j);
    }
    ds.y_c.resize(n, static_cast<Eigen::Index>(ds.continuous_cols.size()));
    ds.y_d.resize(n, static_cast<Eigen::Index>(ds.discrete_cols.size()));
    ds.center = VectorXd::Zero(ds.y_c.cols());
    ds.scale = VectorXd::Ones(ds.y_c.cols());
    ds.trials.assign(ds.discrete_cols.size(), 0);

    // continuous block: parse, then center and scale to unit variance
    for (int c = 0; c < ds.p_c(); ++c) {
        const auto& spec = schema.columns[ds.continuous_cols[c]];
        for (int i = 0; i < n; ++i)
            ds.y_c(i, c) = parse_double((*kept[i])[src[ds.continuous_cols[c]]], spec.name);
        const double mean = ds.y_c.col(c).mean();
        const double var = (ds.y_c.col(c).array() - mean).square().mean();
        double sd = std::sqrt(var);
        if (sd < 1e-12) {
            sd = 1.0;
            wl.add("column '" + spec.name + "' is constant; std fallback to 1");
        }
        ds.center[c] = mean;
        ds.scale[c] = sd;
        ds.y_c.col(c) = (ds.y_c.col(c).array() - mean) / sd;
    }

    // discrete block: level coding / count parsing
    for (int d = 0; d < ds.p_d(); ++d) {
        const auto& spec = schema.columns[ds.discrete_cols[d]];
        const int sj = src[ds.discrete_cols[d]];
        if (spec.kind == VarKind::Count) {
            int max_obs = 0;
            for (int i = 0; i < n; ++i) {
                const std::string& cell = (*kept[i])[sj];
                double v = parse_double(cell, spec.name);
                int iv = static_cast<int>(std::llround(v));
                if (iv < 0 || std::abs(v - iv) > 1e-9)
                    throw ConfigError("column '" + spec.name + "': invalid count '" + cell + "'");
                ds.y_d(i, d) = iv;
                max_obs = std::max(max_obs, iv);
            }
            int trials = spec.trials.value_or(max_obs);
            if (trials < max_obs)
                throw ConfigError("column '" + spec.name + "': trials " + std::to_string(trials) +
                                  " < observed max " + std::to_string(max_obs));
            ds.trials[d] = std::max(trials, 1);
        } else {
            std::vector<std::string> levels = spec.levels;
            if (levels.empty() && spec.kind == VarKind::Binary) levels = {"0", "1"};
            std::unordered_map<std::string, int> code;
            for (std::size_t l = 0; l < levels.size(); ++l) code[levels[l]] = static_cast<int>(l);
            for (int i = 0; i < n; ++i) {
                const std::string& cell = (*kept[i])[sj];
                auto it = code.find(cell);
                if (it == code.end())
                    throw ConfigError("column '" + spec.name + "': unknown level label '" + cell + "'");
                ds.y_d(i, d) = it->second;
            }
        }
    }
    return ds;
}

MixedDataset load_dataset_text(const std::string& csv_text, const Schema& schema, WarningLog* warnings) {
    return load_dataset(csv::parse(csv_text), schema, warnings);
}

MixedDataset load_dataset_file(const std::string& csv_path, const Schema& schema, WarningLog* warnings) {
    return load_dataset(csv::read_file(csv_path), schema, warnings);
}

}  // namespace mixclus
