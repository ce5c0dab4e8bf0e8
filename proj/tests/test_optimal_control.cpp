#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "fpcirc/lbfgs.hpp"
#include "fpcirc/optimal_control.hpp"

using namespace fpcirc;
using Catch::Approx;

namespace {

struct Fixture {
    Problem p = reference_problem();
    SpectralBasis basis = eigenbasis(assemble_generator(p.potential, p.D, p.grid), p.rho_s, p.weights, 21);
    ReducedModel model = assemble_reduced_model(basis, p.shapes, p.potential, p.D, p.omega_d);
    Eigen::VectorXd c0 = project(p.rho0, basis);
    ControlTrajectory U0 = ControlTrajectory::constant(0.0, 1.0, 5e-3, 0.0, 1.0);
};

const Fixture& fx() {
    static const Fixture f;
    return f;
}

Eigen::VectorXd unit(int M, int k) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(M);
    e[k] = 1.0;
    return e;
}

ControlTrajectory random_controls(std::uint64_t seed, double scale = 1.0) {
    ControlTrajectory U = ControlTrajectory::constant(0.0, 1.0, 5e-3, 0.0, 0.0);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n;
    for (int k = 0; k < U.K(); ++k) {
        U.u1[k] = scale * n(rng);
        U.u2[k] = scale * n(rng);
    }
    return U;
}

CostWeights zero_weights() { return {0.0, 0.0, 0.0, 0.0, 0.0, 0.0}; }

}  // namespace

TEST_CASE("control trajectory layout") {
    const ControlTrajectory U = ControlTrajectory::constant(0.0, 1.0, 5e-3, -2.0, 3.0);
    CHECK(U.K() == 200);
    CHECK(U.time(0) == 0.0);
    CHECK(U.time(200) == Approx(1.0).epsilon(1e-14));
    const Eigen::VectorXd x = U.packed();
    CHECK(x.size() == 400);
    CHECK(x[0] == -2.0);
    CHECK(x[200] == 3.0);
    CHECK_THROWS_AS(ControlTrajectory::constant(0.0, 1.0, 3e-3, 0.0, 0.0), ConfigError);
}

TEST_CASE("state rollout") {
    const Fixture& f = fx();
    const int M = f.model.M;

    // the stationary coefficient vector is invariant under pure circulation
    const StateTrajectory S = rollout_state(f.model, unit(M, 0), f.U0);
    CHECK((S.colwise() - unit(M, 0)).cwiseAbs().maxCoeff() <= 1e-8);

    // without control each mode decays by the factor (1 + dt lambda) per step
    const ControlTrajectory zero = ControlTrajectory::constant(0.0, 1.0, 5e-3, 0.0, 0.0);
    const StateTrajectory C = rollout_state(f.model, f.c0, zero);
    for (int m = 0; m < M; ++m)
        CHECK(C(m, zero.K()) == Approx(std::pow(1.0 + zero.dt * f.model.lambda[m], zero.K()) * f.c0[m]).margin(1e-14));

    // mass is carried by c_0 and never changes
    const StateTrajectory R = rollout_state(f.model, f.c0, random_controls(3));
    CHECK((R.row(0).array() - f.c0[0]).abs().maxCoeff() <= 1e-8);

    CHECK_THROWS_AS(rollout_state(f.model, Eigen::VectorXd::Zero(M - 1), f.U0), Error);
    CHECK_THROWS_AS(rollout_state(f.model, f.c0, ControlTrajectory::constant(0.0, 1.0, 5e-3, 1e200, 0.0)), BlowUpError);
}

TEST_CASE("objective terms in closed form") {
    const Fixture& f = fx();
    const int M = f.model.M;
    const CostWeights w = f.p.config.weights;

    // constant state e_0 under (0, 1): only the vorticity residual and the u2 effort remain
    const ObjectiveTerms t = objective_terms(f.model, rollout_state(f.model, unit(M, 0), f.U0), f.U0, w);
    const double r2 = ((f.model.A1 + f.model.A3) * unit(M, 0) - f.model.d).squaredNorm();
    CHECK(t.state <= 1e-12);
    CHECK(t.terminal <= 1e-12);
    CHECK(t.input == Approx(0.5 * w.R2).epsilon(1e-13));
    CHECK(t.vorticity == Approx(0.5 * w.Q2 * r2).epsilon(1e-6).margin(1e-14));

    CostWeights r1 = zero_weights();
    r1.R1 = 3.0;
    const ControlTrajectory U = random_controls(11);
    CHECK(objective(f.model, f.c0, U, r1) == Approx(0.5 * 3.0 * U.dt * U.u1.squaredNorm()).epsilon(1e-13));

    CostWeights rf = zero_weights();
    rf.Rf = 2.0;
    CHECK(objective(f.model, f.c0, U, rf) == Approx(std::pow(U.u2[U.K() - 1] - 1.0, 2)).epsilon(1e-14));
}

TEST_CASE("adjoint recursion") {
    const Fixture& f = fx();
    const ControlTrajectory zero = ControlTrajectory::constant(0.0, 1.0, 5e-3, 0.0, 0.0);
    const StateTrajectory C = rollout_state(f.model, f.c0, zero);

    CHECK(rollout_adjoint(f.model, C, zero, zero_weights()).cwiseAbs().maxCoeff() == 0.0);

    // terminal weight only: mu_k = (1 + dt lambda)^(K - k) Qf (c_K - c_s), per mode
    CostWeights qf = zero_weights();
    qf.Qf = 100.0;
    const AdjointTrajectory mu = rollout_adjoint(f.model, C, zero, qf);
    const Eigen::VectorXd muK = 100.0 * (C.col(zero.K()) - f.model.c_s);
    for (int k : {0, 57, 199})
        for (int m = 0; m < f.model.M; ++m)
            CHECK(mu(m, k) == Approx(std::pow(1.0 + zero.dt * f.model.lambda[m], zero.K() - k) * muK[m]).margin(1e-12));
}

TEST_CASE("adjoint gradient against finite differences") {
    const Fixture& f = fx();
    const CostWeights w = f.p.config.weights;
    const GradientCheck gc = check_gradient(f.model, f.c0, f.U0, w, 20, 1e-6, 1);
    CHECK(gc.max_relative_error <= 1e-6);
    CHECK(check_gradient(f.model, f.c0, random_controls(5, 0.5), w, 10, 1e-6, 2).max_relative_error <= 1e-6);

    // componentwise central differences on a few entries
    Eigen::VectorXd g;
    objective_and_gradient(f.model, f.c0, f.U0, w, g);
    const Eigen::VectorXd x = f.U0.packed();
    for (Eigen::Index j : {0, 1, 100, 199, 200, 300, 399}) {
        // cancellation in J ~ 2e3 limits the difference quotient to about 1e-16 J / h
        const double h = 1e-5;
        Eigen::VectorXd xp = x, xm = x;
        xp[j] += h;
        xm[j] -= h;
        const double fd =
            (objective(f.model, f.c0, f.U0.with_packed(xp), w) - objective(f.model, f.c0, f.U0.with_packed(xm), w)) /
            (2.0 * h);
        CHECK(g[j] == Approx(fd).epsilon(1e-5).margin(1e-7));
    }
}

TEST_CASE("gradient at the stationary state under pure circulation") {
    const Fixture& f = fx();
    const int M = f.model.M;
    CostWeights w = f.p.config.weights;
    w.Q2 = 0.0;
    Eigen::VectorXd g;
    objective_and_gradient(f.model, unit(M, 0), f.U0, w, g);
    const int K = f.U0.K();
    CHECK(g.head(K).cwiseAbs().maxCoeff() <= 1e-8);
    for (int k = 0; k < K; ++k) CHECK(g[K + k] == Approx(f.U0.dt * w.R2).margin(1e-10));

    objective_and_gradient(f.model, f.c0, random_controls(8), zero_weights(), g);
    CHECK(g.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("stationarity residual") {
    const Fixture& f = fx();
    const CostWeights w = f.p.config.weights;
    CHECK(stationarity_residual(f.model, f.c0, f.U0, w) > 1.0);
    CHECK(stationarity_residual(f.model, f.c0, random_controls(4), zero_weights()) == 0.0);
}

TEST_CASE("optimization of the reference problem") {
    const Fixture& f = fx();
    const CostWeights w = f.p.config.weights;
    const OptimizationResult r = optimize(f.model, f.c0, f.U0, w);
    const OptimizationReport& rep = r.report;
    CHECK(rep.initial_objective == Approx(objective(f.model, f.c0, f.U0, w)).epsilon(1e-14));
    CHECK(rep.final_objective < rep.initial_objective);
    CHECK(rep.final_objective == Approx(objective(f.model, f.c0, r.controls, w)).epsilon(1e-14));
    for (std::size_t k = 1; k < rep.objective_history.size(); ++k)
        CHECK(rep.objective_history[k] <= rep.objective_history[k - 1]);
    CHECK(rep.stationarity <= 1e-6 * (1.0 + std::abs(rep.final_objective)));
    CHECK((rep.status == "gtol" || rep.status == "rounding floor"));

    // a strong initial push away from the stationary state, then circulation at the end
    CHECK(r.controls.u1[0] < -1.0);
    const int K = r.controls.K();
    CHECK(std::abs(r.controls.u2[K - 1] - 1.0) < 0.1);
    CHECK(std::abs(r.controls.u1[K - 1]) < 0.1);
}

TEST_CASE("effort-only objective is minimised by zero control") {
    const Fixture& f = fx();
    CostWeights w = zero_weights();
    w.R1 = 1.0;
    w.R2 = 2.0;
    const OptimizationResult r = optimize(f.model, f.c0, f.U0, w);
    CHECK(r.controls.packed().cwiseAbs().maxCoeff() <= 1e-6);
    CHECK(r.report.final_objective <= 1e-12);
}

TEST_CASE("optimizer failures") {
    const Fixture& f = fx();
    const ControlTrajectory wild = ControlTrajectory::constant(0.0, 1.0, 5e-3, 1e200, 0.0);
    CHECK_THROWS_AS(optimize(f.model, f.c0, wild, f.p.config.weights), OptimizerError);
}

TEST_CASE("multi-start never does worse than the single start") {
    const Fixture& f = fx();
    const ReducedModel small = f.model.truncated(6);
    const Eigen::VectorXd c0 = f.c0.head(6);
    const ControlTrajectory U0 = ControlTrajectory::constant(0.0, 0.25, 5e-3, 0.0, 1.0);
    const CostWeights w = f.p.config.weights;
    const OptimizationResult single = optimize(small, c0, U0, w);
    const OptimizationResult multi = optimize_multistart(small, c0, U0, w, {}, 2, 17);
    CHECK(multi.report.final_objective <= single.report.final_objective);
}

TEST_CASE("L-BFGS on the Rosenbrock function") {
    auto fg = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
        g.resize(2);
        g[0] = -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]);
        g[1] = 200.0 * (x[1] - x[0] * x[0]);
        return std::pow(1.0 - x[0], 2) + 100.0 * std::pow(x[1] - x[0] * x[0], 2);
    };
    const LbfgsResult r = lbfgs_minimize(fg, Eigen::Vector2d(-1.2, 1.0), {});
    CHECK(r.x[0] == Approx(1.0).margin(1e-6));
    CHECK(r.x[1] == Approx(1.0).margin(1e-6));
    CHECK(r.status == "gtol");
}

TEST_CASE("controls CSV round trip") {
    const ControlTrajectory U = random_controls(23, 10.0);
    const auto path = std::filesystem::temp_directory_path() / "fpcirc_controls_roundtrip.csv";
    write_controls_csv(path, U);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header == "t,u1,u2");
    const ControlTrajectory back = read_controls_csv(path, 0.0, 1.0, 5e-3);
    CHECK((back.u1.array() == U.u1.array()).all());
    CHECK((back.u2.array() == U.u2.array()).all());
    CHECK_THROWS_AS(read_controls_csv(path, 0.0, 1.0, 1e-2), Error);
    std::filesystem::remove(path);
}
