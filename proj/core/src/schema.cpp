#include "mixclus/schema.hpp"

#include <fstream>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

namespace mixclus {

using nlohmann::json;

std::string to_string(VarKind k) {
    switch (k) {
        case VarKind::Continuous: return "continuous";
        case VarKind::Binary: return "binary";
        case VarKind::Count: return "count";
        case VarKind::Ordinal: return "ordinal";
        case VarKind::Categorical: return "categorical";
    }
    return "?";
}

VarKind var_kind_from_string(const std::string& s) {
    if (s == "continuous") return VarKind::Continuous;
    if (s == "binary") return VarKind::Binary;
    if (s == "count") return VarKind::Count;
    if (s == "ordinal") return VarKind::Ordinal;
    if (s == "categorical") return VarKind::Categorical;
    throw ConfigError("unknown variable kind: " + s);
}

void VariableSpec::validate() const {
    if (name.empty()) throw ConfigError("variable with empty name");
    const bool needs_levels = kind == VarKind::Ordinal || kind == VarKind::Categorical ||
                              kind == VarKind::Binary;
    if (needs_levels && kind != VarKind::Binary && levels.empty())
        throw ConfigError("column '" + name + "': " + to_string(kind) + " requires levels");
    if (kind == VarKind::Binary && !levels.empty() && levels.size() != 2)
        throw ConfigError("column '" + name + "': binary requires exactly 2 levels");
    if (!levels.empty()) {
        std::unordered_set<std::string> seen;
        for (const auto& l : levels)
            if (!seen.insert(l).second)
                throw ConfigError("column '" + name + "': duplicate level '" + l + "'");
    }
    if (kind != VarKind::Ordinal && kind != VarKind::Categorical && kind != VarKind::Binary &&
        !levels.empty())
        throw ConfigError("column '" + name + "': levels not allowed for " + to_string(kind));
    if (trials && kind != VarKind::Count)
        throw ConfigError("column '" + name + "': trials only allowed for count");
    if (trials && *trials <= 0)
        throw ConfigError("column '" + name + "': trials must be positive");
}

int Schema::n_continuous() const {
    int c = 0;
    for (const auto& col : columns) c += col.kind == VarKind::Continuous;
    return c;
}

int Schema::n_discrete() const { return width() - n_continuous(); }

void Schema::validate() const {
    if (columns.empty()) throw ConfigError("schema has no columns");
    std::unordered_set<std::string> seen;
    for (const auto& col : columns) {
        col.validate();
        if (!seen.insert(col.name).second)
            throw ConfigError("duplicate column name: " + col.name);
    }
}

Schema parse_schema(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed schema document: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("columns") || !doc["columns"].is_array())
        throw ConfigError("schema document must be an object with a 'columns' array");

    Schema schema;
    for (const auto& c : doc["columns"]) {
        VariableSpec v;
        v.name = c.at("name").get<std::string>();
        v.kind = var_kind_from_string(c.at("kind").get<std::string>());
        if (c.contains("levels"))
            v.levels = c["levels"].get<std::vector<std::string>>();
        if (c.contains("trials"))
            v.trials = c["trials"].get<int>();
        schema.columns.push_back(std::move(v));
    }
    schema.validate();
    return schema;
}

Schema read_schema_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open schema file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_schema(ss.str());
}

std::string schema_to_json(const Schema& schema) {
    json cols = json::array();
    for (const auto& c : schema.columns) {
        json jc{{"name", c.name}, {"kind", to_string(c.kind)}};
        if (!c.levels.empty()) jc["levels"] = c.levels;
        if (c.trials) jc["trials"] = *c.trials;
        cols.push_back(jc);
    }
    return json{{"columns", cols}}.dump(2);
}

}  // namespace mixclus
