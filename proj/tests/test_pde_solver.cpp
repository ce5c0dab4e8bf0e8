#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "fpcirc/optimal_control.hpp"
#include "fpcirc/pde_solver.hpp"

using namespace fpcirc;
using Catch::Approx;

namespace {

struct Fixture {
    Problem p = reference_problem();
    DiscreteGenerator gen = assemble_generator(p.potential, p.D, p.grid);
    SpectralBasis basis = eigenbasis(gen, p.rho_s, p.weights, 21);
    ControlledOperator op = make_controlled_operator(gen, p.shapes, p.rho_s);
    DriftModel drift = make_drift_model(p);
};

const Fixture& fx() {
    static const Fixture f;
    return f;
}

ControlTrajectory constant(double u1, double u2, double tf = 1.0, double dt = 5e-3) {
    return ControlTrajectory::constant(0.0, tf, dt, u1, u2);
}

// rho_s (1 + eps v_m / rho_s): a single eigenmode on top of equilibrium
ScalarField single_mode(const Fixture& f, int m, double eps) {
    return ScalarField(f.p.grid, f.p.rho_s.values + eps * f.basis.modes.col(m));
}

}  // namespace

TEST_CASE("equilibrium is a fixed point of the implicit step") {
    const Fixture& f = fx();
    const double scale = max_abs(f.p.rho_s);
    for (auto [u1, u2] : {std::pair{0.0, 0.0}, std::pair{0.0, 1.0}, std::pair{0.0, -3.0}}) {
        ImplicitStepper s(f.op, 5e-3);
        ScalarField rho = f.p.rho_s;
        for (int k = 0; k < 20; ++k) rho = s.step(rho, u1, u2);
        CHECK((rho.values - f.p.rho_s.values).cwiseAbs().maxCoeff() <= 1e-8 * scale);
    }
}

TEST_CASE("mass conservation under arbitrary controls") {
    const Fixture& f = fx();
    std::mt19937_64 rng(31);
    std::normal_distribution<double> n;
    for (TimeScheme scheme : {TimeScheme::BackwardEuler, TimeScheme::CrankNicolson}) {
        ImplicitStepper s(f.op, 5e-3, scheme);
        ScalarField rho = f.p.rho0;
        for (int k = 0; k < 10; ++k) {
            rho = s.step(rho, 2.0 * n(rng), 2.0 * n(rng));
            CHECK(integrate(rho, f.p.weights) == Approx(1.0).margin(1e-12));
        }
        CHECK(s.factorizations() == 10);
    }
}

TEST_CASE("factorisation is reused while the controls are unchanged") {
    const Fixture& f = fx();
    ImplicitStepper s(f.op, 5e-3);
    ScalarField rho = f.p.rho0;
    for (int k = 0; k < 5; ++k) rho = s.step(rho, 0.3, 1.0);
    CHECK(s.factorizations() == 1);
    rho = s.step(rho, 0.3, 1.5);
    CHECK(s.factorizations() == 2);
    CHECK_THROWS_AS(ImplicitStepper(f.op, 0.0), ConfigError);
}

TEST_CASE("single eigenmode decays at the implicit Euler rate") {
    const Fixture& f = fx();
    // oracle: backward Euler multiplies an eigenmode by 1 / (1 - dt lambda) per step
    const double dt = 5e-3;
    for (int m : {1, 2, 5}) {
        const FpeRun run =
            integrate_fpe(f.op, f.drift, f.p.omega_d, single_mode(f, m, 1e-3), constant(0.0, 0.0, 0.5, dt));
        const double slope = -std::log(1.0 - dt * f.basis.eigenvalues[m]) / dt;
        CHECK(log_slope(run.diagnostics, 0.0) == Approx(slope).epsilon(1e-6));
        const double e0 = run.diagnostics.e_rho.front();
        CHECK(e0 == Approx(1e-3).epsilon(1e-10));
    }
}

TEST_CASE("Crank-Nicolson is second order and backward Euler first order in time") {
    const Fixture& f = fx();
    const double lambda = f.basis.eigenvalues[1];
    const ScalarField rho0 = single_mode(f, 1, 1e-2);
    // oracle: the semi-discrete solution of an eigenmode is exp(lambda t)
    auto error = [&](TimeScheme scheme, double dt) {
        const FpeRun run = integrate_fpe(f.op, f.drift, f.p.omega_d, rho0, constant(0.0, 0.0, 1.0, dt), scheme);
        return std::abs(run.diagnostics.e_rho.back() - 1e-2 * std::exp(lambda));
    };
    const double be = error(TimeScheme::BackwardEuler, 0.05) / error(TimeScheme::BackwardEuler, 0.025);
    const double cn = error(TimeScheme::CrankNicolson, 0.05) / error(TimeScheme::CrankNicolson, 0.025);
    CHECK(be == Approx(2.0).margin(0.15));
    CHECK(cn == Approx(4.0).margin(0.3));
}

TEST_CASE("uncontrolled relaxation of the reference initial density") {
    const Fixture& f = fx();
    const FpeRun run = integrate_fpe(f.op, f.drift, f.p.omega_d, f.p.rho0, constant(0.0, 0.0));
    const DiagnosticsSeries& d = run.diagnostics;
    CHECK(d.times.size() == 201u);
    for (std::size_t k = 1; k < d.e_rho.size(); ++k) CHECK(d.e_rho[k] < d.e_rho[k - 1]);
    CHECK(d.positivity_violations.empty());
    CHECK(d.factorizations == 1);

    // the symmetric mixture has no component on modes odd in x, so the late-time
    // decay follows the slowest mode it does excite
    const Eigen::VectorXd c = project(f.p.rho0, f.basis);
    int slowest = -1;
    for (int m = 1; m < f.basis.size() && slowest < 0; ++m)
        if (std::abs(c[m]) > 1e-6) slowest = m;
    REQUIRE(slowest > 0);
    const double dt = 5e-3;
    const double slope = -std::log(1.0 - dt * f.basis.eigenvalues[slowest]) / dt;
    CHECK(log_slope(d, 0.5) == Approx(slope).epsilon(0.02));
}

TEST_CASE("optimized controls drive the full model toward equilibrium") {
    const Fixture& f = fx();
    const ReducedModel model = assemble_reduced_model(f.basis, f.p.shapes, f.p.potential, f.p.D, f.p.omega_d);
    const Eigen::VectorXd c0 = project(f.p.rho0, f.basis);
    const OptimizationResult opt = optimize(model, c0, constant(0.0, 1.0), f.p.config.weights);

    const FpeRun controlled = integrate_fpe(f.op, f.drift, f.p.omega_d, f.p.rho0, opt.controls);
    const FpeRun free = integrate_fpe(f.op, f.drift, f.p.omega_d, f.p.rho0, constant(0.0, 0.0));
    const DiagnosticsSeries& d = controlled.diagnostics;
    CHECK(d.e_rho.back() < free.diagnostics.e_rho.back());
    for (double m : d.mass) CHECK(m == Approx(1.0).margin(1e-10));
    CHECK(d.positivity_violations.empty());

    // vorticity error at the end against the error of equilibrium density under plain circulation at the start
    const VectorField J = compute_flux(f.p.rho0, 0.0, 1.0, f.drift);
    const double e_ref =
        weighted_norm(ScalarField(f.p.grid, compute_vorticity(J).values - f.p.omega_d.values), f.p.rho_s, f.p.weights);
    CHECK(d.e_omega.back() / e_ref <= 0.1);

    for (double b : d.boundary_flux) CHECK(b <= 1e-12);
}

TEST_CASE("discrete wall flux vanishes for any density") {
    const Fixture& f = fx();
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    ScalarField rho(f.p.grid);
    for (Eigen::Index a = 0; a < rho.values.size(); ++a) rho.values[a] = u(rng);
    const double scale = max_abs(compute_flux(rho, 1.0, -2.0, f.drift));
    CHECK(wall_flux(f.op, 1.0, -2.0, rho) <= 1e-12 * scale);
}

TEST_CASE("least-squares log slope") {
    DiagnosticsSeries d;
    for (int k = 0; k <= 10; ++k) {
        d.times.push_back(0.1 * k);
        d.e_rho.push_back(3.0 * std::exp(-2.5 * 0.1 * k));
    }
    CHECK(log_slope(d, 0.0) == Approx(-2.5).epsilon(1e-12));
    CHECK(log_slope(d, 0.5) == Approx(-2.5).epsilon(1e-12));
    CHECK_THROWS_AS(log_slope(d, 0.95), Error);
}
