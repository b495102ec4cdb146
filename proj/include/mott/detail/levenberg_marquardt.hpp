#pragma once

#include <cmath>
#include <cstddef>
#include <functional>

#include <Eigen/Dense>

namespace mott::detail {

struct LmOptions {
    int max_iterations = 200;
    double step_tolerance = 1e-10;  ///< relative parameter step for convergence
    double initial_lambda = 1e-3;
};

struct LmResult {
    Eigen::VectorXd x;
    double cost = 0.0;  ///< 0.5 * sum of squared residuals
    int iterations = 0;
    bool converged = false;
};

/// residual(x, r) fills r (size m); jacobian(x, J) fills J (m x n).
using LmResidual = std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&)>;
using LmJacobian = std::function<void(const Eigen::VectorXd&, Eigen::MatrixXd&)>;

/// Levenberg-Marquardt with Marquardt diagonal scaling.
inline LmResult levenberg_marquardt(const LmResidual& residual, const LmJacobian& jacobian, Eigen::VectorXd x,
                                    std::size_t m, const LmOptions& opt = {}) {
    const auto n = x.size();
    Eigen::VectorXd r(static_cast<Eigen::Index>(m));
    Eigen::VectorXd r_new(static_cast<Eigen::Index>(m));
    Eigen::MatrixXd J(static_cast<Eigen::Index>(m), n);
    residual(x, r);
    double cost = 0.5 * r.squaredNorm();
    double lambda = opt.initial_lambda;
    LmResult out;
    for (int it = 0; it < opt.max_iterations; ++it) {
        out.iterations = it + 1;
        jacobian(x, J);
        const Eigen::MatrixXd JtJ = J.transpose() * J;
        const Eigen::VectorXd g = J.transpose() * r;
        Eigen::VectorXd diag = JtJ.diagonal();
        for (Eigen::Index k = 0; k < n; ++k) {
            if (!(diag[k] > 0.0)) diag[k] = 1e-300;
        }
        bool accepted = false;
        for (int tries = 0; tries < 40; ++tries) {
            Eigen::MatrixXd A = JtJ;
            A.diagonal() += lambda * diag;
            const Eigen::VectorXd step = A.ldlt().solve(-g);
            if (!step.allFinite()) {
                lambda *= 10.0;
                continue;
            }
            const Eigen::VectorXd trial = x + step;
            residual(trial, r_new);
            const double c_new = r_new.allFinite() ? 0.5 * r_new.squaredNorm() : INFINITY;
            if (c_new <= cost) {
                const double rel = step.norm() / (x.norm() + 1e-300);
                x = trial;
                r.swap(r_new);
                const double c_old = cost;
                cost = c_new;
                lambda = std::max(lambda * 0.3, 1e-15);
                accepted = true;
                if (rel < opt.step_tolerance || c_old - c_new <= 1e-30 * c_old) {
                    out.x = x;
                    out.cost = cost;
                    out.converged = true;
                    return out;
                }
                break;
            }
            lambda *= 10.0;
        }
        if (!accepted) {
            // No descent possible: x is a stationary point to working precision.
            out.x = x;
            out.cost = cost;
            out.converged = true;
            return out;
        }
    }
    out.x = x;
    out.cost = cost;
    out.converged = false;
    return out;
}

}  // namespace mott::detail
