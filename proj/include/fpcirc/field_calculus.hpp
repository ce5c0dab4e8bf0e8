#pragma once

// Node-centred fields on the square [-L, L]^2 and the finite-difference /
// finite-volume calculus used everywhere else.
//
// Layout: node (i, j) sits at (x_i, y_j) and is stored at flat index
// i * ny + j, i.e. row-major with the x index as the row. CSV output walks
// the same order.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>

#include "fpcirc/errors.hpp"

namespace fpcirc {

using Vec2 = Eigen::Vector2d;

struct Grid2D {
    double L = 1.0;
    int nx = 5;
    int ny = 5;
    double dx = 0.5;
    double dy = 0.5;

    std::size_t size() const noexcept { return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny); }
    std::size_t index(int i, int j) const noexcept {
        return static_cast<std::size_t>(i) * static_cast<std::size_t>(ny) + static_cast<std::size_t>(j);
    }
    // Written as L * (2i - (n-1)) / (n-1) so that x(i) == -x(n-1-i) bit for bit
    // and the end nodes land exactly on -L and L.
    double x(int i) const noexcept { return L * static_cast<double>(2 * i - (nx - 1)) / static_cast<double>(nx - 1); }
    double y(int j) const noexcept { return L * static_cast<double>(2 * j - (ny - 1)) / static_cast<double>(ny - 1); }
    double area() const noexcept { return 4.0 * L * L; }

    bool on_boundary(int i, int j) const noexcept { return i == 0 || j == 0 || i == nx - 1 || j == ny - 1; }

    bool operator==(const Grid2D&) const = default;
};

inline Grid2D make_grid(double L, int nx, int ny) {
    if (!(L > 0.0) || !std::isfinite(L)) throw ConfigError("make_grid: half-width L must be positive, got " + std::to_string(L));
    if (nx < 5 || ny < 5) {
        throw ConfigError("make_grid: need at least 5 nodes per axis, got nx=" + std::to_string(nx) +
                          " ny=" + std::to_string(ny));
    }
    return Grid2D{L, nx, ny, 2.0 * L / (nx - 1), 2.0 * L / (ny - 1)};
}

struct ScalarField {
    Grid2D grid;
    Eigen::VectorXd values;

    ScalarField() = default;
    explicit ScalarField(const Grid2D& g) : grid(g), values(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(g.size()))) {}
    ScalarField(const Grid2D& g, Eigen::VectorXd v) : grid(g), values(std::move(v)) {
        if (static_cast<std::size_t>(values.size()) != grid.size()) throw GridMismatch("ScalarField: value count does not match grid");
    }

    double& operator()(int i, int j) { return values[static_cast<Eigen::Index>(grid.index(i, j))]; }
    double operator()(int i, int j) const { return values[static_cast<Eigen::Index>(grid.index(i, j))]; }

    bool all_finite() const { return values.allFinite(); }
};

struct VectorField {
    ScalarField x;
    ScalarField y;

    VectorField() = default;
    explicit VectorField(const Grid2D& g) : x(g), y(g) {}
    VectorField(ScalarField fx, ScalarField fy) : x(std::move(fx)), y(std::move(fy)) {
        if (!(x.grid == y.grid)) throw GridMismatch("VectorField: components on different grids");
    }
    const Grid2D& grid() const noexcept { return x.grid; }
};

struct QuadratureWeights {
    Grid2D grid;
    Eigen::VectorXd w;
};

inline void require_same_grid(const Grid2D& a, const Grid2D& b, const char* where) {
    if (!(a == b)) throw GridMismatch(std::string(where) + ": grid mismatch");
}

/// Tensor-product trapezoidal weights; they sum to (2L)^2.
inline QuadratureWeights trapezoid_weights(const Grid2D& g) {
    QuadratureWeights q{g, Eigen::VectorXd(static_cast<Eigen::Index>(g.size()))};
    for (int i = 0; i < g.nx; ++i) {
        const double wx = (i == 0 || i == g.nx - 1) ? 0.5 * g.dx : g.dx;
        for (int j = 0; j < g.ny; ++j) {
            const double wy = (j == 0 || j == g.ny - 1) ? 0.5 * g.dy : g.dy;
            q.w[static_cast<Eigen::Index>(g.index(i, j))] = wx * wy;
        }
    }
    return q;
}

/// Samples f(x, y) at every node.
inline ScalarField tabulate(const Grid2D& g, const std::function<double(double, double)>& f) {
    ScalarField out(g);
    for (int i = 0; i < g.nx; ++i)
        for (int j = 0; j < g.ny; ++j) out(i, j) = f(g.x(i), g.y(j));
    return out;
}

inline VectorField tabulate(const Grid2D& g, const std::function<Vec2(double, double)>& f) {
    VectorField out(g);
    for (int i = 0; i < g.nx; ++i)
        for (int j = 0; j < g.ny; ++j) {
            const Vec2 v = f(g.x(i), g.y(j));
            out.x(i, j) = v.x();
            out.y(i, j) = v.y();
        }
    return out;
}

inline double integrate(const ScalarField& f, const QuadratureWeights& w) {
    require_same_grid(f.grid, w.grid, "integrate");
    return f.values.dot(w.w);
}

/// Discrete L2(Omega; 1/rho_s) inner product  sum_ij p q w / rho_s.
inline double weighted_inner(const ScalarField& p, const ScalarField& q, const ScalarField& rho_s,
                             const QuadratureWeights& w) {
    require_same_grid(p.grid, q.grid, "weighted_inner");
    require_same_grid(p.grid, rho_s.grid, "weighted_inner");
    require_same_grid(p.grid, w.grid, "weighted_inner");
    if (!(rho_s.values.minCoeff() > 0.0)) throw Error("weighted_inner: weight density must be strictly positive");
    return (p.values.array() * q.values.array() * w.w.array() / rho_s.values.array()).sum();
}

inline double weighted_norm(const ScalarField& p, const ScalarField& rho_s, const QuadratureWeights& w) {
    return std::sqrt(weighted_inner(p, p, rho_s, w));
}

namespace detail {

// First derivative along one axis of a strided line: central in the interior,
// second-order one-sided at both ends.
inline void diff1(const double* f, double* out, int n, std::ptrdiff_t stride, double h) {
    const auto at = [&](int k) { return f[k * stride]; };
    out[0] = (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h);
    for (int k = 1; k < n - 1; ++k) out[k * stride] = (at(k + 1) - at(k - 1)) / (2.0 * h);
    out[(n - 1) * stride] = (3.0 * at(n - 1) - 4.0 * at(n - 2) + at(n - 3)) / (2.0 * h);
}

inline void diff2(const double* f, double* out, int n, std::ptrdiff_t stride, double h) {
    const auto at = [&](int k) { return f[k * stride]; };
    const double h2 = h * h;
    out[0] = (2.0 * at(0) - 5.0 * at(1) + 4.0 * at(2) - at(3)) / h2;
    for (int k = 1; k < n - 1; ++k) out[k * stride] = (at(k + 1) - 2.0 * at(k) + at(k - 1)) / h2;
    out[(n - 1) * stride] = (2.0 * at(n - 1) - 5.0 * at(n - 2) + 4.0 * at(n - 3) - at(n - 4)) / h2;
}

}  // namespace detail

inline ScalarField partial_x(const ScalarField& f) {
    const Grid2D& g = f.grid;
    ScalarField out(g);
    for (int j = 0; j < g.ny; ++j)
        detail::diff1(f.values.data() + j, out.values.data() + j, g.nx, g.ny, g.dx);
    return out;
}

inline ScalarField partial_y(const ScalarField& f) {
    const Grid2D& g = f.grid;
    ScalarField out(g);
    for (int i = 0; i < g.nx; ++i) {
        const std::size_t row = g.index(i, 0);
        detail::diff1(f.values.data() + row, out.values.data() + row, g.ny, 1, g.dy);
    }
    return out;
}

inline VectorField gradient(const ScalarField& f) { return VectorField(partial_x(f), partial_y(f)); }

/// (d_y f, -d_x f)
inline VectorField perp_gradient(const ScalarField& f) {
    ScalarField fx = partial_x(f);
    fx.values = -fx.values;
    return VectorField(partial_y(f), std::move(fx));
}

inline ScalarField divergence(const VectorField& F) {
    ScalarField out = partial_x(F.x);
    out.values += partial_y(F.y).values;
    return out;
}

/// Scalar curl d_x F_y - d_y F_x, i.e. -<perp, F>.
inline ScalarField curl(const VectorField& F) {
    ScalarField out = partial_x(F.y);
    out.values -= partial_y(F.x).values;
    return out;
}

inline ScalarField laplacian(const ScalarField& f) {
    const Grid2D& g = f.grid;
    ScalarField out(g);
    ScalarField tmp(g);
    for (int j = 0; j < g.ny; ++j)
        detail::diff2(f.values.data() + j, out.values.data() + j, g.nx, g.ny, g.dx);
    for (int i = 0; i < g.nx; ++i) {
        const std::size_t row = g.index(i, 0);
        detail::diff2(f.values.data() + row, tmp.values.data() + row, g.ny, 1, g.dy);
    }
    out.values += tmp.values;
    return out;
}

/// Finite-volume divergence on the dual (trapezoid) cells: face normal
/// components are averaged from the two adjacent nodes; the outer faces of
/// boundary cells use the node value. Integrates to the boundary flux of F
/// exactly, so it telescopes to zero when F.n = 0 on the boundary.
inline ScalarField conservative_divergence(const VectorField& F, const QuadratureWeights& w) {
    const Grid2D& g = F.grid();
    require_same_grid(g, w.grid, "conservative_divergence");
    ScalarField flux_sum(g);
    auto wy = [&](int j) { return (j == 0 || j == g.ny - 1) ? 0.5 * g.dy : g.dy; };
    auto wx = [&](int i) { return (i == 0 || i == g.nx - 1) ? 0.5 * g.dx : g.dx; };
    for (int i = 0; i + 1 < g.nx; ++i)
        for (int j = 0; j < g.ny; ++j) {
            const double flux = 0.5 * (F.x(i, j) + F.x(i + 1, j)) * wy(j);
            flux_sum(i, j) += flux;
            flux_sum(i + 1, j) -= flux;
        }
    for (int i = 0; i < g.nx; ++i)
        for (int j = 0; j + 1 < g.ny; ++j) {
            const double flux = 0.5 * (F.y(i, j) + F.y(i, j + 1)) * wx(i);
            flux_sum(i, j) += flux;
            flux_sum(i, j + 1) -= flux;
        }
    for (int j = 0; j < g.ny; ++j) {
        flux_sum(0, j) -= F.x(0, j) * wy(j);
        flux_sum(g.nx - 1, j) += F.x(g.nx - 1, j) * wy(j);
    }
    for (int i = 0; i < g.nx; ++i) {
        flux_sum(i, 0) -= F.y(i, 0) * wx(i);
        flux_sum(i, g.ny - 1) += F.y(i, g.ny - 1) * wx(i);
    }
    flux_sum.values.array() /= w.w.array();
    return flux_sum;
}

/// Bilinear interpolation of node values; points outside the box are clamped.
inline double interpolate(const ScalarField& f, double x, double y) {
    const Grid2D& g = f.grid;
    const double sx = std::clamp((x + g.L) / g.dx, 0.0, static_cast<double>(g.nx - 1));
    const double sy = std::clamp((y + g.L) / g.dy, 0.0, static_cast<double>(g.ny - 1));
    const int i = std::min(static_cast<int>(sx), g.nx - 2);
    const int j = std::min(static_cast<int>(sy), g.ny - 2);
    const double tx = sx - i;
    const double ty = sy - j;
    return (1 - tx) * (1 - ty) * f(i, j) + tx * (1 - ty) * f(i + 1, j) + (1 - tx) * ty * f(i, j + 1) +
           tx * ty * f(i + 1, j + 1);
}

inline double max_abs(const ScalarField& f) { return f.values.cwiseAbs().maxCoeff(); }
inline double max_abs(const VectorField& F) { return std::max(max_abs(F.x), max_abs(F.y)); }

}  // namespace fpcirc
