#pragma once

// Limited-memory BFGS with Armijo backtracking (halving). Small and
// deterministic on purpose: the controls vector is a few hundred entries and
// every objective call is a full forward/adjoint sweep.

#include <Eigen/Core>

#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "fpcirc/errors.hpp"

namespace fpcirc {

struct LbfgsOptions {
    double gtol = 1e-8;  ///< stop when ||g||_inf <= gtol
    int max_iters = 2000;
    int memory = 20;
    double armijo = 1e-4;
    int max_halvings = 60;
    /// On line-search failure, accept the iterate when this returns true
    /// (the objective can no longer resolve a decrease in double precision).
    std::function<bool(const Eigen::VectorXd& x, double f, const Eigen::VectorXd& g)> at_rounding_floor;
};

struct LbfgsResult {
    Eigen::VectorXd x;
    double f = 0.0;
    Eigen::VectorXd grad;
    std::vector<double> f_history;
    std::vector<double> gnorm_history;
    int iterations = 0;
    std::string status;  ///< "gtol", "max_iters" or "rounding floor"
};

/// fg(x, grad) returns f(x) and writes the gradient; a non-finite f marks an
/// infeasible trial point and is rejected by the line search.
inline LbfgsResult lbfgs_minimize(const std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>& fg,
                                  Eigen::VectorXd x, const LbfgsOptions& opt) {
    LbfgsResult out;
    Eigen::VectorXd g(x.size());
    double f = fg(x, g);
    if (!std::isfinite(f)) throw OptimizerError("lbfgs: objective is not finite at the starting point");
    std::deque<Eigen::VectorXd> S, Y;
    std::deque<double> rho;
    out.f_history.push_back(f);
    out.gnorm_history.push_back(g.cwiseAbs().maxCoeff());

    auto finish = [&](const std::string& status, int it) {
        out.x = x;
        out.f = f;
        out.grad = g;
        out.iterations = it;
        out.status = status;
        return out;
    };

    for (int it = 0; it < opt.max_iters; ++it) {
        if (g.cwiseAbs().maxCoeff() <= opt.gtol) return finish("gtol", it);

        // two-loop recursion
        Eigen::VectorXd q = g;
        std::vector<double> a(S.size());
        for (int i = static_cast<int>(S.size()) - 1; i >= 0; --i) {
            a[static_cast<std::size_t>(i)] = rho[static_cast<std::size_t>(i)] * S[static_cast<std::size_t>(i)].dot(q);
            q -= a[static_cast<std::size_t>(i)] * Y[static_cast<std::size_t>(i)];
        }
        if (!S.empty()) q *= S.back().dot(Y.back()) / Y.back().squaredNorm();
        for (std::size_t i = 0; i < S.size(); ++i) {
            const double b = rho[i] * Y[i].dot(q);
            q += (a[i] - b) * S[i];
        }
        Eigen::VectorXd dir = -q;
        double slope = g.dot(dir);
        bool steepest = S.empty();
        if (!(slope < 0.0)) steepest = true;

        Eigen::VectorXd x_new, g_new(x.size());
        double f_new = std::numeric_limits<double>::infinity();
        bool accepted = false;
        // a failed quasi-Newton direction gets one retry along -g with the memory cleared
        for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
            if (steepest) {
                S.clear();
                Y.clear();
                rho.clear();
                dir = -g;
                slope = -g.squaredNorm();
            }
            double step = steepest ? std::min(1.0, 1.0 / std::max(g.cwiseAbs().maxCoeff(), 1e-300)) : 1.0;
            for (int h = 0; h <= opt.max_halvings; ++h, step *= 0.5) {
                x_new = x + step * dir;
                f_new = fg(x_new, g_new);
                // strict decrease: at the rounding floor Armijo alone admits null steps
                if (std::isfinite(f_new) && f_new < f && f_new <= f + opt.armijo * step * slope) {
                    accepted = true;
                    break;
                }
            }
            if (steepest) break;
            steepest = true;
        }
        if (!accepted) {
            if (opt.at_rounding_floor && opt.at_rounding_floor(x, f, g)) return finish("rounding floor", it);
            throw OptimizerError("lbfgs: line search failed after " + std::to_string(opt.max_halvings) +
                                 " halvings at iteration " + std::to_string(it) + " (f = " + std::to_string(f) +
                                 ", ||g||_inf = " + std::to_string(g.cwiseAbs().maxCoeff()) + ")");
        }
        const Eigen::VectorXd s = x_new - x, y = g_new - g;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            S.push_back(s);
            Y.push_back(y);
            rho.push_back(1.0 / sy);
            if (static_cast<int>(S.size()) > opt.memory) {
                S.pop_front();
                Y.pop_front();
                rho.pop_front();
            }
        }
        x = x_new;
        f = f_new;
        g = g_new;
        out.f_history.push_back(f);
        out.gnorm_history.push_back(g.cwiseAbs().maxCoeff());
    }
    if (g.cwiseAbs().maxCoeff() <= opt.gtol) return finish("gtol", opt.max_iters);
    return finish("max_iters", opt.max_iters);
}

}  // namespace fpcirc
