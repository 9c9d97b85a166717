#pragma once

#include <functional>

#include "mixclus/common.hpp"

namespace mixclus {

/// Objective callback: returns f(x) and, when grad is non-null, writes the
/// gradient into it.
using ObjectiveFn = std::function<double(const VectorXd& x, VectorXd* grad)>;

struct OptimResult {
    VectorXd x;
    double value = 0.0;
    int iterations = 0;
    bool improved = false;  // value strictly above the starting point
};

/// Dense BFGS ascent with Armijo backtracking. Returns the best iterate seen;
/// never returns a point below the starting value.
OptimResult maximize_bfgs(const ObjectiveFn& fg, const VectorXd& x0, int max_iter,
                          double grad_tol = 1e-7);

}  // namespace mixclus
