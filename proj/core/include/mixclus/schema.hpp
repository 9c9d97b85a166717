#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mixclus/common.hpp"

namespace mixclus {

enum class VarKind { Continuous, Binary, Count, Ordinal, Categorical };

std::string to_string(VarKind k);
VarKind var_kind_from_string(const std::string& s);

inline bool is_discrete(VarKind k) { return k != VarKind::Continuous; }

struct VariableSpec {
    std::string name;
    VarKind kind = VarKind::Continuous;
    std::vector<std::string> levels;   // ordinal/categorical
    std::optional<int> trials;         // count

    [[nodiscard]] int n_levels() const { return static_cast<int>(levels.size()); }
    void validate() const;
};

struct Schema {
    std::vector<VariableSpec> columns;

    [[nodiscard]] int width() const { return static_cast<int>(columns.size()); }
    [[nodiscard]] int n_continuous() const;
    [[nodiscard]] int n_discrete() const;
    void validate() const;
};

/// Parse the JSON schema document {"columns":[{"name","kind","levels","trials"}]}.
Schema parse_schema(const std::string& text);
Schema read_schema_file(const std::string& path);
std::string schema_to_json(const Schema& schema);

}  // namespace mixclus
