#pragma once

// Lanczos with full reorthogonalisation for the largest eigenvalues of a
// symmetric operator given only through its action. No restarts: the Krylov
// space grows until the wanted Ritz pairs converge or the dimension cap is hit.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "fpcirc/errors.hpp"

namespace fpcirc {

struct LanczosOptions {
    int nev = 6;
    int max_dim = 400;
    double tol = 1e-11;          ///< relative residual estimate |beta_j s_ji| / |theta_i|
    int check_every = 5;
    std::uint64_t seed = 7;
};

struct LanczosResult {
    Eigen::VectorXd values;       ///< descending
    Eigen::MatrixXd vectors;      ///< unit 2-norm columns
    Eigen::VectorXd residual_estimates;
    int iterations = 0;
};

inline LanczosResult lanczos_largest(Eigen::Index n, const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& apply,
                                     const LanczosOptions& opt) {
    const int nev = opt.nev;
    const int max_dim = static_cast<int>(std::min<Eigen::Index>(opt.max_dim, n));
    if (nev < 1 || nev > max_dim) throw EigenSolverError("lanczos: requested eigenpair count outside [1, max_dim]");

    Eigen::MatrixXd Q(n, max_dim);
    std::vector<double> alpha, beta;
    std::mt19937_64 rng(opt.seed);
    std::normal_distribution<double> normal;
    Eigen::VectorXd q(n);
    for (Eigen::Index i = 0; i < n; ++i) q[i] = normal(rng);
    q.normalize();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> tri;
    std::vector<double> last_res;
    for (int j = 0; j < max_dim; ++j) {
        Q.col(j) = q;
        Eigen::VectorXd r = apply(q);
        const double a = q.dot(r);
        alpha.push_back(a);
        // two passes of classical Gram-Schmidt against the whole basis
        for (int pass = 0; pass < 2; ++pass) {
            const Eigen::VectorXd h = Q.leftCols(j + 1).transpose() * r;
            r.noalias() -= Q.leftCols(j + 1) * h;
        }
        const double b = r.norm();
        const int m = j + 1;
        const bool last = (m == max_dim);
        const bool breakdown = b <= 1e-14 * std::abs(a);
        if ((m >= nev && (m - nev) % opt.check_every == 0) || last || breakdown) {
            Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m, m);
            for (int k = 0; k < m; ++k) {
                T(k, k) = alpha[k];
                if (k + 1 < m) T(k, k + 1) = T(k + 1, k) = beta[k];
            }
            tri.compute(T);
            if (m >= nev) {
                bool converged = true;
                last_res.assign(nev, 0.0);
                for (int i = 0; i < nev; ++i) {
                    const int col = m - 1 - i;  // eigenvalues come ascending
                    const double theta = tri.eigenvalues()[col];
                    const double est = std::abs(b * tri.eigenvectors()(m - 1, col));
                    last_res[i] = est / std::max(std::abs(theta), 1e-300);
                    if (last_res[i] > opt.tol) converged = false;
                }
                if (converged || breakdown) {
                    LanczosResult out;
                    out.values.resize(nev);
                    out.vectors.resize(n, nev);
                    out.residual_estimates.resize(nev);
                    for (int i = 0; i < nev; ++i) {
                        const int col = m - 1 - i;
                        out.values[i] = tri.eigenvalues()[col];
                        out.vectors.col(i) = (Q.leftCols(m) * tri.eigenvectors().col(col)).normalized();
                        out.residual_estimates[i] = last_res[i];
                    }
                    out.iterations = m;
                    return out;
                }
            }
        }
        if (last) break;
        if (breakdown) {
            // invariant subspace found early: continue from a fresh direction
            for (Eigen::Index i = 0; i < n; ++i) r[i] = normal(rng);
            for (int pass = 0; pass < 2; ++pass) r -= Q.leftCols(m) * (Q.leftCols(m).transpose() * r);
            beta.push_back(0.0);
            q = r.normalized();
            continue;
        }
        beta.push_back(b);
        q = r / b;
    }
    throw EigenSolverError("lanczos: no convergence within " + std::to_string(max_dim) + " vectors", last_res);
}

}  // namespace fpcirc
