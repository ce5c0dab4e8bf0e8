#pragma once

// Discretise-then-optimise control of the reduced bilinear model. The forward
// model is explicit Euler with piecewise-constant controls, the objective is
// the left-rectangle sum that matches it, and the gradient is the exact
// transpose of that recursion.

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "fpcirc/lbfgs.hpp"
#include "fpcirc/problem.hpp"
#include "fpcirc/spectral_reduction.hpp"

namespace fpcirc {

/// u1[k], u2[k] act on [t0 + k dt, t0 + (k+1) dt).
struct ControlTrajectory {
    double t0 = 0.0;
    double tf = 1.0;
    double dt = 5e-3;
    Eigen::VectorXd u1;
    Eigen::VectorXd u2;

    int K() const noexcept { return static_cast<int>(u1.size()); }
    double time(int k) const noexcept { return t0 + k * dt; }

    static ControlTrajectory constant(double t0, double tf, double dt, double u1, double u2) {
        const double steps = (tf - t0) / dt;
        const auto K = static_cast<Eigen::Index>(std::llround(steps));
        if (K < 1 || std::abs(steps - static_cast<double>(K)) > 1e-9 * std::max(1.0, steps))
            throw ConfigError("control horizon must be a positive integer number of steps");
        return {t0, tf, dt, Eigen::VectorXd::Constant(K, u1), Eigen::VectorXd::Constant(K, u2)};
    }

    /// [u1; u2]
    Eigen::VectorXd packed() const {
        Eigen::VectorXd x(2 * K());
        x << u1, u2;
        return x;
    }
    ControlTrajectory with_packed(const Eigen::VectorXd& x) const {
        ControlTrajectory out = *this;
        out.u1 = x.head(K());
        out.u2 = x.tail(K());
        return out;
    }
};

/// CSV `t,u1,u2` with left-endpoint times.
inline void write_controls_csv(const std::filesystem::path& path, const ControlTrajectory& U) {
    std::ofstream os(path);
    if (!os) throw Error("cannot open " + path.string() + " for writing");
    os << csv_precision << "t,u1,u2\n";
    for (int k = 0; k < U.K(); ++k) os << U.time(k) << ',' << U.u1[k] << ',' << U.u2[k] << '\n';
}

/// Reads controls written by write_controls_csv; the times must match the grid t0 + k dt.
inline ControlTrajectory read_controls_csv(const std::filesystem::path& path, double t0, double tf, double dt) {
    ControlTrajectory U = ControlTrajectory::constant(t0, tf, dt, 0.0, 0.0);
    std::ifstream is(path);
    if (!is) throw Error("cannot open " + path.string());
    std::string line;
    std::getline(is, line);
    if (line != "t,u1,u2") throw Error(path.string() + ": unexpected header '" + line + "'");
    for (int k = 0; k < U.K(); ++k) {
        if (!std::getline(is, line)) throw Error(path.string() + ": fewer rows than control steps");
        const auto row = detail::split_doubles(line);
        if (row.size() != 3 || std::abs(row[0] - U.time(k)) > 1e-9 * std::max(1.0, std::abs(tf)))
            throw Error(path.string() + ": control times do not match the configured grid");
        U.u1[k] = row[1];
        U.u2[k] = row[2];
    }
    return U;
}

/// Column k is c at t0 + k dt, k = 0..K.
using StateTrajectory = Eigen::MatrixXd;
/// Column k is mu_k, k = 0..K.
using AdjointTrajectory = Eigen::MatrixXd;

inline StateTrajectory rollout_state(const ReducedModel& model, const Eigen::VectorXd& c0, const ControlTrajectory& U) {
    if (c0.size() != model.M) throw Error("rollout_state: initial state has the wrong size");
    if (!c0.allFinite()) throw Error("rollout_state: initial state is not finite");
    StateTrajectory C(model.M, U.K() + 1);
    C.col(0) = c0;
    for (int k = 0; k < U.K(); ++k) {
        C.col(k + 1) = C.col(k) + U.dt * reduced_rhs(model, C.col(k), U.u1[k], U.u2[k]);
        if (!C.col(k + 1).allFinite()) throw BlowUpError("rollout_state: state is not finite", k + 1);
    }
    return C;
}

namespace detail {

/// (A1 + u1 A2 + u2 A3) c - d
inline Eigen::VectorXd vorticity_residual(const ReducedModel& m, const Eigen::VectorXd& c, double u1, double u2) {
    return m.A1 * c + u1 * (m.A2 * c) + u2 * (m.A3 * c) - m.d;
}

inline void check_lengths(const ReducedModel& model, const StateTrajectory& C, const ControlTrajectory& U, const char* where) {
    if (C.rows() != model.M || C.cols() != U.K() + 1)
        throw Error(std::string(where) + ": trajectory length does not match the controls");
}

}  // namespace detail

struct ObjectiveTerms {
    double state = 0.0;      ///< sum dt Q1/2 |c - c_s|^2
    double vorticity = 0.0;  ///< sum dt Q2/2 |A_u c - d|^2
    double input = 0.0;      ///< sum dt (R1 u1^2 + R2 u2^2)/2
    double terminal = 0.0;   ///< Qf/2 |c_K - c_s|^2 + Rf/2 (u2[K-1] - 1)^2
    double total() const noexcept { return state + vorticity + input + terminal; }
};

namespace detail {

/// Neumaier-compensated running sum; keeps the objective resolvable to a few
/// ulps of its value, which the line search relies on near the optimum.
struct CompensatedSum {
    double sum = 0.0, carry = 0.0;
    void add(double v) {
        const double t = sum + v;
        carry += std::abs(sum) >= std::abs(v) ? (sum - t) + v : (v - t) + sum;
        sum = t;
    }
    double value() const { return sum + carry; }
};

}  // namespace detail

inline ObjectiveTerms objective_terms(const ReducedModel& model, const StateTrajectory& C, const ControlTrajectory& U,
                                      const CostWeights& w) {
    detail::check_lengths(model, C, U, "objective");
    detail::CompensatedSum state, vort, input;
    const int K = U.K();
    for (int k = 0; k < K; ++k) {
        const Eigen::VectorXd r = detail::vorticity_residual(model, C.col(k), U.u1[k], U.u2[k]);
        state.add(U.dt * 0.5 * w.Q1 * (C.col(k) - model.c_s).squaredNorm());
        vort.add(U.dt * 0.5 * w.Q2 * r.squaredNorm());
        input.add(U.dt * 0.5 * (w.R1 * U.u1[k] * U.u1[k] + w.R2 * U.u2[k] * U.u2[k]));
    }
    ObjectiveTerms t{state.value(), vort.value(), input.value(), 0.0};
    const double du = U.u2[K - 1] - 1.0;
    t.terminal = 0.5 * w.Qf * (C.col(K) - model.c_s).squaredNorm() + 0.5 * w.Rf * du * du;
    return t;
}

inline double objective(const ReducedModel& model, const Eigen::VectorXd& c0, const ControlTrajectory& U,
                        const CostWeights& w) {
    return objective_terms(model, rollout_state(model, c0, U), U, w).total();
}

inline AdjointTrajectory rollout_adjoint(const ReducedModel& model, const StateTrajectory& C, const ControlTrajectory& U,
                                         const CostWeights& w) {
    detail::check_lengths(model, C, U, "rollout_adjoint");
    const int K = U.K();
    AdjointTrajectory mu(model.M, K + 1);
    mu.col(K) = w.Qf * (C.col(K) - model.c_s);
    for (int k = K - 1; k >= 0; --k) {
        const double u1 = U.u1[k], u2 = U.u2[k];
        const Eigen::VectorXd r = detail::vorticity_residual(model, C.col(k), u1, u2);
        const Eigen::VectorXd m1 = mu.col(k + 1);
        const Eigen::VectorXd AuT_r = model.A1.transpose() * r + u1 * (model.A2.transpose() * r) + u2 * (model.A3.transpose() * r);
        const Eigen::VectorXd dyn =
            model.lambda.cwiseProduct(m1) + u1 * (model.B1.transpose() * m1) + u2 * (model.B2.transpose() * m1);
        mu.col(k) = m1 + U.dt * (w.Q1 * (C.col(k) - model.c_s) + w.Q2 * AuT_r + dyn);
    }
    return mu;
}

struct ControlGradient {
    Eigen::VectorXd u1;
    Eigen::VectorXd u2;
    Eigen::VectorXd packed() const {
        Eigen::VectorXd x(u1.size() + u2.size());
        x << u1, u2;
        return x;
    }
};

inline ControlGradient control_gradient(const ReducedModel& model, const StateTrajectory& C, const AdjointTrajectory& mu,
                                        const ControlTrajectory& U, const CostWeights& w) {
    detail::check_lengths(model, C, U, "control_gradient");
    detail::check_lengths(model, mu, U, "control_gradient");
    const int K = U.K();
    ControlGradient g{Eigen::VectorXd(K), Eigen::VectorXd(K)};
    for (int k = 0; k < K; ++k) {
        const Eigen::VectorXd c = C.col(k);
        const Eigen::VectorXd a2 = model.A2 * c, a3 = model.A3 * c;
        const Eigen::VectorXd r = model.A1 * c + U.u1[k] * a2 + U.u2[k] * a3 - model.d;
        const Eigen::VectorXd m1 = mu.col(k + 1);
        g.u1[k] = U.dt * (w.R1 * U.u1[k] + w.Q2 * a2.dot(r) + m1.dot(model.B1 * c));
        g.u2[k] = U.dt * (w.R2 * U.u2[k] + w.Q2 * a3.dot(r) + m1.dot(model.B2 * c));
    }
    g.u2[K - 1] += w.Rf * (U.u2[K - 1] - 1.0);
    return g;
}

/// Objective and packed gradient in one forward/backward sweep.
inline double objective_and_gradient(const ReducedModel& model, const Eigen::VectorXd& c0, const ControlTrajectory& U,
                                     const CostWeights& w, Eigen::VectorXd& grad) {
    const StateTrajectory C = rollout_state(model, c0, U);
    const AdjointTrajectory mu = rollout_adjoint(model, C, U, w);
    grad = control_gradient(model, C, mu, U, w).packed();
    return objective_terms(model, C, U, w).total();
}

/// max_k |dJ/du_i[k]| / dt: the Hamiltonian stationarity condition per unit
/// time, with the terminal Rf term kept on the last u2 entry.
inline double stationarity_residual(const ReducedModel& model, const StateTrajectory& C, const AdjointTrajectory& mu,
                                    const ControlTrajectory& U, const CostWeights& w) {
    const ControlGradient g = control_gradient(model, C, mu, U, w);
    return std::max(g.u1.cwiseAbs().maxCoeff(), g.u2.cwiseAbs().maxCoeff()) / U.dt;
}

inline double stationarity_residual(const ReducedModel& model, const Eigen::VectorXd& c0, const ControlTrajectory& U,
                                    const CostWeights& w) {
    const StateTrajectory C = rollout_state(model, c0, U);
    return stationarity_residual(model, C, rollout_adjoint(model, C, U, w), U, w);
}

struct GradientCheck {
    double max_relative_error = 0.0;
    std::vector<double> relative_errors;
};

/// Adjoint directional derivatives against central differences of the
/// objective along random unit directions.
inline GradientCheck check_gradient(const ReducedModel& model, const Eigen::VectorXd& c0, const ControlTrajectory& U,
                                    const CostWeights& w, int directions = 20, double eps = 1e-6,
                                    std::uint64_t seed = 1) {
    Eigen::VectorXd grad;
    objective_and_gradient(model, c0, U, w, grad);
    const Eigen::VectorXd x = U.packed();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    GradientCheck out;
    for (int i = 0; i < directions; ++i) {
        Eigen::VectorXd e(x.size());
        for (Eigen::Index j = 0; j < e.size(); ++j) e[j] = normal(rng);
        e.normalize();
        const double fp = objective(model, c0, U.with_packed(x + eps * e), w);
        const double fm = objective(model, c0, U.with_packed(x - eps * e), w);
        const double fd = (fp - fm) / (2.0 * eps);
        const double ad = grad.dot(e);
        const double rel = std::abs(ad - fd) / std::max({std::abs(fd), std::abs(ad), 1e-300});
        out.relative_errors.push_back(rel);
        out.max_relative_error = std::max(out.max_relative_error, rel);
    }
    return out;
}

struct OptimizationReport {
    std::vector<double> objective_history;
    std::vector<double> gradient_norm_history;
    double initial_objective = 0.0;
    double final_objective = 0.0;
    double stationarity = 0.0;
    int iterations = 0;
    double wall_time = 0.0;
    std::string status;
    int start_index = 0;

    bool monotone() const {
        for (std::size_t i = 1; i < objective_history.size(); ++i)
            if (objective_history[i] > objective_history[i - 1]) return false;
        return true;
    }
};

inline nlohmann::json to_json(const OptimizationReport& r) {
    return {{"objective_history", r.objective_history},
            {"gradient_norm_history", r.gradient_norm_history},
            {"initial_objective", r.initial_objective},
            {"final_objective", r.final_objective},
            {"stationarity_residual", r.stationarity},
            {"iterations", r.iterations},
            {"wall_time_s", r.wall_time},
            {"status", r.status},
            {"monotone", r.monotone()},
            {"start_index", r.start_index}};
}

struct OptimizationResult {
    ControlTrajectory controls;
    OptimizationReport report;
};

/// Local minimiser from U0. A line search that cannot find a decrease is
/// accepted only when the iterate is already stationary to 1e-6 (1 + |J|);
/// otherwise OptimizerError is raised.
inline OptimizationResult optimize(const ReducedModel& model, const Eigen::VectorXd& c0, const ControlTrajectory& U0,
                                   const CostWeights& w, const OptimizerSettings& settings = {}) {
    const auto start = std::chrono::steady_clock::now();
    auto fg = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
        try {
            return objective_and_gradient(model, c0, U0.with_packed(x), w, g);
        } catch (const BlowUpError&) {
            g.setZero(x.size());
            return std::numeric_limits<double>::infinity();
        }
    };
    LbfgsOptions lo;
    lo.gtol = settings.gtol;
    lo.max_iters = settings.max_iters;
    lo.memory = settings.memory;
    lo.at_rounding_floor = [&](const Eigen::VectorXd& x, double f, const Eigen::VectorXd&) {
        return stationarity_residual(model, c0, U0.with_packed(x), w) <= 1e-6 * (1.0 + std::abs(f));
    };
    const LbfgsResult lr = lbfgs_minimize(fg, U0.packed(), lo);

    OptimizationResult out;
    out.controls = U0.with_packed(lr.x);
    out.report.objective_history = lr.f_history;
    out.report.gradient_norm_history = lr.gnorm_history;
    out.report.initial_objective = lr.f_history.front();
    out.report.final_objective = lr.f;
    out.report.iterations = lr.iterations;
    out.report.status = lr.status;
    out.report.stationarity = stationarity_residual(model, c0, out.controls, w);
    out.report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

/// Runs optimize from U0 and from `extra` random perturbations of it (unit
/// normal per entry, drawn from `seed`), returning the lowest objective.
inline OptimizationResult optimize_multistart(const ReducedModel& model, const Eigen::VectorXd& c0,
                                              const ControlTrajectory& U0, const CostWeights& w,
                                              const OptimizerSettings& settings, int extra, std::uint64_t seed) {
    OptimizationResult best = optimize(model, c0, U0, w, settings);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    for (int s = 1; s <= extra; ++s) {
        Eigen::VectorXd x = U0.packed();
        for (Eigen::Index j = 0; j < x.size(); ++j) x[j] += normal(rng);
        OptimizationResult r;
        try {
            r = optimize(model, c0, U0.with_packed(x), w, settings);
        } catch (const OptimizerError&) {
            continue;
        }
        r.report.start_index = s;
        if (r.report.final_objective < best.report.final_objective) best = std::move(r);
    }
    return best;
}

}  // namespace fpcirc
