#pragma once

#include <string>
#include <vector>

#include "mixclus/common.hpp"
#include "mixclus/csv.hpp"
#include "mixclus/schema.hpp"

namespace mixclus {

/// Column-typed observation matrix: continuous block standardized to zero
/// mean / unit variance, discrete block integer coded against the schema.
struct MixedDataset {
    int n = 0;
    MatrixXd y_c;                    // n x p_C, standardized
    Eigen::MatrixXi y_d;             // n x p_D, level codes
    Schema schema;
    std::vector<int> continuous_cols;  // schema column index per y_c column
    std::vector<int> discrete_cols;    // schema column index per y_d column
    VectorXd center;                   // per continuous column
    VectorXd scale;
    std::vector<int> trials;           // per discrete column; 0 unless count
    int dropped_rows = 0;

    [[nodiscard]] int p_c() const { return static_cast<int>(y_c.cols()); }
    [[nodiscard]] int p_d() const { return static_cast<int>(y_d.cols()); }

    /// Decode an integer code back to its level label.
    [[nodiscard]] std::string decode(int discrete_col, int code) const;
};

MixedDataset load_dataset(const csv::Table& table, const Schema& schema,
                          WarningLog* warnings = nullptr);
MixedDataset load_dataset_text(const std::string& csv_text, const Schema& schema,
                               WarningLog* warnings = nullptr);
MixedDataset load_dataset_file(const std::string& csv_path, const Schema& schema,
                               WarningLog* warnings = nullptr);

}  // namespace mixclus
