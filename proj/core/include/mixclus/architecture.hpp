#pragma once

#include <string>
#include <vector>

#include "mixclus/common.hpp"

namespace mixclus {

enum class Mode { Dgmm, Ddgmm, M1, M2 };

std::string to_string(Mode m);
Mode mode_from_string(const std::string& s);

struct LayerSpec {
    int r = 1;  // latent width
    int k = 1;  // mixture components
};

/// Layer widths and component counts for the heads and the common tail.
/// The last tail entry is the terminal standard-normal layer (k must be 1).
/// For the continuous head the last head width coincides with the junction
/// (first tail) width; the discrete head feeds into the junction from its
/// last layer.
struct Architecture {
    Mode mode = Mode::Ddgmm;
    std::vector<LayerSpec> head_c;
    std::vector<LayerSpec> head_d;
    std::vector<LayerSpec> tail;

    [[nodiscard]] int junction_dim() const { return tail.front().r; }
    [[nodiscard]] int terminal_dim() const { return tail.back().r; }
    [[nodiscard]] int n_tail_transforms() const { return static_cast<int>(tail.size()) - 1; }

    /// p_c/p_d: observed block widths of the dataset this architecture targets.
    void validate(int p_c, int p_d) const;

    [[nodiscard]] std::string describe() const;
};

/// Parse {"mode":.., "head_c":[[r,k],..], "head_d":.., "tail":..} or the
/// compact one-head form {"mode":.., "r":[..], "k":[..]}.
Architecture parse_architecture(const std::string& json_text);
std::string architecture_to_json(const Architecture& arch);

}  // namespace mixclus
