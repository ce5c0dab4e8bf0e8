#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "fpcirc/field_io.hpp"
#include "fpcirc/potential.hpp"
#include "fpcirc/problem.hpp"

using namespace fpcirc;
using Catch::Approx;

namespace {

// Integral of exp(-k t^2) over [-L, L].
double gaussian_integral(double k, double L) { return std::sqrt(std::numbers::pi / k) * std::erf(L * std::sqrt(k)); }

template <class Fn>
double interior_max(const Grid2D& g, int margin, Fn&& fn) {
    double m = 0.0;
    for (int i = margin; i < g.nx - margin; ++i)
        for (int j = margin; j < g.ny - margin; ++j) m = std::max(m, std::abs(fn(i, j)));
    return m;
}

}  // namespace

TEST_CASE("grid spacing and node placement") {
    const Grid2D g = make_grid(4.0, 101, 101);
    CHECK(g.dx == Approx(0.08).epsilon(1e-14));
    CHECK(g.dy == Approx(0.08).epsilon(1e-14));
    CHECK(g.x(0) == -4.0);
    CHECK(g.y(0) == -4.0);
    CHECK(g.x(100) == 4.0);
    CHECK(g.y(100) == 4.0);
    CHECK(g.index(3, 7) == 3u * 101u + 7u);

    const Grid2D small = make_grid(1.0, 5, 5);
    CHECK(small.dx == 0.5);
    CHECK(small.dy == 0.5);

    CHECK_THROWS_AS(make_grid(4.0, 2, 101), ConfigError);
    CHECK_THROWS_AS(make_grid(-1.0, 11, 11), ConfigError);
}

TEST_CASE("trapezoid quadrature") {
    const Grid2D g = make_grid(4.0, 101, 101);
    const QuadratureWeights w = trapezoid_weights(g);
    CHECK(w.w.sum() == Approx(64.0).epsilon(1e-12));
    CHECK(w.w.minCoeff() > 0.0);
    CHECK(integrate(tabulate(g, [](double, double) { return 1.0; }), w) == Approx(64.0).epsilon(1e-12));
    CHECK(std::abs(integrate(tabulate(g, [](double x, double) { return x; }), w)) < 1e-12);
}

TEST_CASE("stationary density normalisation against the error-function integral") {
    const Grid2D g = make_grid(4.0, 101, 101);
    const QuadratureWeights w = trapezoid_weights(g);
    const double a = 2.0, b = 3.0, D = 2.0;
    const ScalarField rho_s = stationary_density(Potential::quadratic(a, b), D, w);
    CHECK(integrate(rho_s, w) == Approx(1.0).margin(1e-12));
    // exact normaliser of exp(-V/D) on the box
    const double Z = gaussian_integral(a / D, 4.0) * gaussian_integral(b / D, 4.0);
    CHECK(rho_s(50, 50) * Z == Approx(1.0).margin(1e-6));
}

TEST_CASE("weighted inner product") {
    const Grid2D g = make_grid(4.0, 41, 41);
    const QuadratureWeights w = trapezoid_weights(g);
    const ScalarField rho_s = stationary_density(Potential::quadratic(2.0, 3.0), 2.0, w);
    CHECK(weighted_inner(rho_s, rho_s, rho_s, w) == Approx(1.0).margin(1e-12));

    std::mt19937_64 rng(7);
    std::normal_distribution<double> n;
    ScalarField p(g), q(g);
    for (Eigen::Index k = 0; k < p.values.size(); ++k) {
        p.values[k] = n(rng);
        q.values[k] = n(rng);
    }
    CHECK(weighted_inner(p, q, rho_s, w) == Approx(weighted_inner(q, p, rho_s, w)).epsilon(1e-14));
    CHECK(weighted_norm(p, rho_s, w) == Approx(std::sqrt(weighted_inner(p, p, rho_s, w))).epsilon(1e-14));

    const Grid2D other = make_grid(4.0, 21, 21);
    CHECK_THROWS_AS(weighted_inner(p, ScalarField(other), rho_s, w), GridMismatch);
}

TEST_CASE("stencils are exact on quadratics") {
    const Grid2D g = make_grid(4.0, 41, 41);
    const ScalarField f = tabulate(g, [](double x, double y) { return 2.0 * x * x + 3.0 * y * y; });
    const VectorField grad = gradient(f);
    CHECK(interior_max(g, 1, [&](int i, int j) { return grad.x(i, j) - 4.0 * g.x(i); }) < 1e-12);
    CHECK(interior_max(g, 1, [&](int i, int j) { return grad.y(i, j) - 6.0 * g.y(j); }) < 1e-12);
    // one-sided second-order differences are exact on quadratics as well
    CHECK(std::abs(grad.x(0, 5) - 4.0 * g.x(0)) < 1e-11);

    const ScalarField r2 = tabulate(g, [](double x, double y) { return x * x + y * y; });
    const ScalarField lap = laplacian(r2);
    CHECK(interior_max(g, 1, [&](int i, int j) { return lap(i, j) - 4.0; }) < 1e-11);

    const VectorField perp = perp_gradient(f);
    CHECK(interior_max(g, 1, [&](int i, int j) { return perp.x(i, j) - 6.0 * g.y(j); }) < 1e-12);
    CHECK(interior_max(g, 1, [&](int i, int j) { return perp.y(i, j) + 4.0 * g.x(i); }) < 1e-12);
}

TEST_CASE("divergence of a perpendicular gradient vanishes for a smooth stream function") {
    const Problem p = reference_problem();
    const ScalarField div = divergence(perp_gradient(p.shapes.phi));
    CHECK(max_abs(div) < 1e-3);
}

TEST_CASE("curl and divergence agree with analytic fields") {
    const Grid2D g = make_grid(1.0, 81, 81);
    const VectorField F = tabulate(g, [](double x, double y) -> Vec2 { return {-y * y * y, x * x * x}; });
    const ScalarField c = curl(F);
    // curl = 3x^2 + 3y^2; the centred stencil of a cubic has error h^2 f'''/6 per term
    const double h2 = g.dx * g.dx;
    CHECK(interior_max(g, 1, [&](int i, int j) { return c(i, j) - 3.0 * (g.x(i) * g.x(i) + g.y(j) * g.y(j)); }) <
          1.01 * 2.0 * h2);
    const ScalarField d = divergence(F);
    CHECK(interior_max(g, 1, [&](int i, int j) { return d(i, j); }) < 1e-12);
}

TEST_CASE("bilinear interpolation reproduces bilinear functions") {
    const Grid2D g = make_grid(2.0, 11, 21);
    const ScalarField f = tabulate(g, [](double x, double y) { return 1.0 + 2.0 * x - y + 0.5 * x * y; });
    for (auto [x, y] : {std::pair{0.13, -0.71}, std::pair{-2.0, 2.0}, std::pair{1.99, -1.37}})
        CHECK(interpolate(f, x, y) == Approx(1.0 + 2.0 * x - y + 0.5 * x * y).epsilon(1e-13));
}

TEST_CASE("field CSV round trip is bit exact") {
    const Grid2D g = make_grid(4.0, 21, 17);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n;
    ScalarField f(g);
    for (Eigen::Index k = 0; k < f.values.size(); ++k) f.values[k] = n(rng) * std::pow(10.0, static_cast<int>(k % 40) - 20);
    const auto path = std::filesystem::temp_directory_path() / "fpcirc_field_roundtrip.csv";
    write_field_csv(path, f);
    const ScalarField back = read_field_csv(path, g);
    CHECK((back.values.array() == f.values.array()).all());
    CHECK_THROWS_AS(read_field_csv(path, make_grid(4.0, 21, 21)), Error);
    std::filesystem::remove(path);
}
