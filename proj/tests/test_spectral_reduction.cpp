#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "fpcirc/spectral_reduction.hpp"

using namespace fpcirc;
using Catch::Approx;

namespace {

struct Fixture {
    Problem p = reference_problem();
    DiscreteGenerator gen = assemble_generator(p.potential, p.D, p.grid);
    SpectralBasis basis = eigenbasis(gen, p.rho_s, p.weights, 21);
    ReducedModel model = assemble_reduced_model(basis, p.shapes, p.potential, p.D, p.omega_d);
    DriftModel drift = make_drift_model(p);
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

// max |v(-x, y) + v(x, y)| relative to max |v|: zero for modes odd in x
double odd_x_defect(const ScalarField& v) {
    const Grid2D& g = v.grid;
    double d = 0.0;
    for (int i = 0; i < g.nx; ++i)
        for (int j = 0; j < g.ny; ++j) d = std::max(d, std::abs(v(i, j) + v(g.nx - 1 - i, j)));
    return d / max_abs(v);
}

}  // namespace

TEST_CASE("projection and reconstruction") {
    const Fixture& f = fx();
    const int M = f.basis.size();
    CHECK((project(f.p.rho_s, f.basis) - unit(M, 0)).cwiseAbs().maxCoeff() <= 1e-10);

    const ScalarField shifted(f.p.grid, f.basis.modes.col(3) + f.p.rho_s.values);
    CHECK((project(shifted, f.basis) - unit(M, 0) - unit(M, 3)).cwiseAbs().maxCoeff() <= 1e-8);

    CHECK((reconstruct(unit(M, 0), f.basis).values - f.p.rho_s.values).cwiseAbs().maxCoeff() == 0.0);

    std::mt19937_64 rng(5);
    std::normal_distribution<double> n;
    Eigen::VectorXd c(M);
    for (int k = 0; k < M; ++k) c[k] = n(rng);
    CHECK((project(reconstruct(c, f.basis), f.basis) - c).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK_THROWS_AS(reconstruct(Eigen::VectorXd::Zero(M - 1), f.basis), Error);
}

TEST_CASE("projection of the initial mixture") {
    const Fixture& f = fx();
    const Eigen::VectorXd c = project(f.p.rho0, f.basis);
    CHECK(c[0] == Approx(1.0).margin(1e-10));

    // oracle: explicit node-by-node quadrature of each weighted inner product
    const Grid2D& g = f.p.grid;
    for (int m = 0; m < f.basis.size(); ++m) {
        double direct = 0.0;
        for (int i = 0; i < g.nx; ++i)
            for (int j = 0; j < g.ny; ++j) {
                const auto a = static_cast<Eigen::Index>(g.index(i, j));
                direct += f.p.weights.w[a] * f.p.rho0.values[a] * f.basis.modes(a, m) / f.p.rho_s.values[a];
            }
        CHECK(c[m] == Approx(direct).margin(1e-12));
        if (odd_x_defect(f.basis.mode(m)) < 1e-6) CHECK(std::abs(c[m]) <= 1e-8);
    }
}

TEST_CASE("truncation error decreases with M") {
    const Fixture& f = fx();
    double previous = INFINITY;
    for (int M : {6, 11, 16, 21}) {
        const SpectralBasis b = f.basis.truncated(M);
        const ScalarField r = reconstruct(project(f.p.rho0, b), b);
        const double e = weighted_norm(ScalarField(f.p.grid, r.values - f.p.rho0.values), f.p.rho_s, f.p.weights);
        CHECK(e < previous);
        previous = e;
    }
}

TEST_CASE("reduced model structure") {
    const ReducedModel& r = fx().model;
    const int M = r.M;
    CHECK(r.lambda[0] == Approx(0.0).margin(1e-8));
    CHECK((r.c_s - unit(M, 0)).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK(r.B1.row(0).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK(r.B2.row(0).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK((r.B2 * unit(M, 0)).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK(((r.A1 + r.A3) * unit(M, 0) - r.d).norm() <= 1e-3 * r.d.norm());
}

TEST_CASE("row 0 of B1 against direct quadrature of the divergence") {
    // oracle: quadrature of div(v_k grad alpha) with stencil derivatives. It
    // equals the wall integral of v_k d_n alpha, which the flux form drops and
    // which is small only because v_k is small on the walls.
    const Fixture& f = fx();
    for (int k = 0; k < 5; ++k) {
        const ScalarField v = f.basis.mode(k);
        const VectorField F = tabulate(f.p.grid, [&](double x, double y) -> Vec2 {
            return interpolate(v, x, y) * f.p.shapes.grad_alpha(x, y);
        });
        CHECK(std::abs(integrate(divergence(F), f.p.weights)) <= 1e-5);
        CHECK(std::abs(f.model.B1(0, k)) <= 1e-8);
    }
}

TEST_CASE("reduced right-hand side") {
    const ReducedModel& r = fx().model;
    const int M = r.M;
    for (double u2 : {-2.0, 0.5, 1.0, 7.0})
        CHECK(reduced_rhs(r, unit(M, 0), 0.0, u2).cwiseAbs().maxCoeff() <= 1e-8);

    std::mt19937_64 rng(9);
    std::normal_distribution<double> n;
    for (int trial = 0; trial < 10; ++trial) {
        Eigen::VectorXd c(M);
        for (int k = 0; k < M; ++k) c[k] = n(rng);
        CHECK((reduced_rhs(r, c, 0.0, 0.0) - r.lambda.cwiseProduct(c)).cwiseAbs().maxCoeff() == 0.0);
        CHECK(std::abs(reduced_rhs(r, c, n(rng), n(rng))[0]) <= 1e-8);
    }
}

TEST_CASE("flux from coefficients") {
    const Fixture& f = fx();
    const int M = f.basis.size();
    const VectorField eq = flux_from_coefficients(unit(M, 0), 0.0, 0.0, f.basis, f.drift);
    CHECK(max_abs(eq) <= 1e-3);

    // oracle: -perp grad phi from its closed form
    const VectorField circ = flux_from_coefficients(unit(M, 0), 0.0, 1.0, f.basis, f.drift);
    const VectorField target = tabulate(f.p.grid, [&](double x, double y) -> Vec2 { return -f.p.shapes.perp_grad_phi(x, y); });
    const double err = std::max(max_abs(ScalarField(f.p.grid, circ.x.values - target.x.values)),
                                max_abs(ScalarField(f.p.grid, circ.y.values - target.y.values)));
    CHECK(err <= 1e-2 * max_abs(target));

    // the integral of omega is the wall circulation of J, negligible while the
    // density at the walls is of the size of rho_s
    std::mt19937_64 rng(21);
    std::normal_distribution<double> n;
    for (int trial = 0; trial < 5; ++trial) {
        const ScalarField omega = vorticity_from_coefficients(unit(M, 0), n(rng), n(rng), f.basis, f.drift);
        CHECK(std::abs(integrate(omega, f.p.weights)) <= 1e-6);
    }
}

TEST_CASE("stationary vorticity under unit circulation matches the target") {
    const Fixture& f = fx();
    const ScalarField omega = vorticity_from_coefficients(unit(f.basis.size(), 0), 0.0, 1.0, f.basis, f.drift);
    const double err = weighted_norm(ScalarField(f.p.grid, omega.values - f.p.omega_d.values), f.p.rho_s, f.p.weights);
    CHECK(err <= 0.02 * weighted_norm(f.p.omega_d, f.p.rho_s, f.p.weights));
}

TEST_CASE("reduced model JSON round trip and truncation") {
    const ReducedModel& r = fx().model;
    const ReducedModel back = reduced_model_from_json(nlohmann::json::parse(to_json(r).dump()));
    CHECK(back.M == r.M);
    CHECK((back.B1.array() == r.B1.array()).all());
    CHECK((back.A3.array() == r.A3.array()).all());
    CHECK((back.d.array() == r.d.array()).all());

    const ReducedModel t = r.truncated(6);
    CHECK(t.M == 6);
    CHECK((t.B2.array() == r.B2.topLeftCorner(6, 6).array()).all());
    CHECK_THROWS_AS(r.truncated(22), Error);
}
