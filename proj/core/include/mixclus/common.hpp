#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace mixclus {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Eigen::VectorXi;

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-fatal events (dropped rows, floored variances, ...) collected during a run.
struct WarningLog {
    std::vector<std::string> messages;
    void add(std::string msg) { messages.push_back(std::move(msg)); }
    [[nodiscard]] std::size_t count() const { return messages.size(); }
};

inline constexpr double kPsiFloor = 1e-8;
inline constexpr double kRidge = 1e-8;

}  // namespace mixclus
