#include "mixclus/optim.hpp"

#include <cmath>

namespace mixclus {

OptimResult maximize_bfgs(const ObjectiveFn& fg, const VectorXd& x0, int max_iter, double grad_tol) {
    const int d = static_cast<int>(x0.size());
    OptimResult res;
    res.x = x0;

    VectorXd g(d);
    double f = fg(x0, &g);
    const double f0 = f;
    res.value = f;
    if (!std::isfinite(f)) return res;

    VectorXd x = x0;
    MatrixXd h = MatrixXd::Identity(d, d);  // inverse Hessian approximation

    for (int it = 0; it < max_iter; ++it) {
        if (g.norm() < grad_tol) break;
        VectorXd dir = h * g;
        double slope = g.dot(dir);
        if (slope <= 0 || !dir.allFinite()) {  // reset on a non-ascent direction
            h.setIdentity();
            dir = g;
            slope = g.squaredNorm();
        }
        // Armijo backtracking
        double step = 1.0;
        double f_new = -std::numeric_limits<double>::infinity();
        VectorXd x_new;
        bool accepted = false;
        for (int ls = 0; ls < 40; ++ls) {
            x_new = x + step * dir;
            f_new = fg(x_new, nullptr);
            if (std::isfinite(f_new) && f_new >= f + 1e-4 * step * slope) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        res.iterations = it + 1;
        if (!accepted) break;

        VectorXd g_new(d);
        fg(x_new, &g_new);
        const VectorXd s = x_new - x;
        const VectorXd y = g - g_new;  // ascent convention: y = -(grad_new - grad)
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            const double rho = 1.0 / sy;
            const MatrixXd i = MatrixXd::Identity(d, d);
            h = (i - rho * s * y.transpose()) * h * (i - rho * y * s.transpose()) +
                rho * s * s.transpose();
        } else {
            h.setIdentity();
        }
        x = x_new;
        f = f_new;
        g = g_new;
        if (f > res.value) {
            res.value = f;
            res.x = x;
        }
    }
    res.improved = res.value > f0;
    return res;
}

}  // namespace mixclus
