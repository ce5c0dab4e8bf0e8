#pragma once

// Probability flux  J = -rho (grad V + u1 grad alpha + u2 rho_s^{-1} perp grad phi) - D grad rho
// and its scalar curl.
//
// The potential and diffusion parts are combined before differentiating:
// with g = rho / rho_s and grad rho_s = -rho_s grad V / D,
//   -rho grad V - D grad rho = -D rho_s grad g,
// which vanishes identically at rho = rho_s instead of leaving an O(dx^2)
// cancellation residual.

#include "fpcirc/problem.hpp"

namespace fpcirc {

/// Node values of every drift ingredient, tabulated once per problem.
struct DriftModel {
    Grid2D grid;
    double D = 1.0;
    ScalarField rho_s;
    VectorField grad_V;
    VectorField grad_alpha;
    VectorField circulation;  ///< rho_s^{-1} perp grad phi
};

inline DriftModel make_drift_model(const Potential& V, double D, const ScalarField& rho_s, const ShapeFunctions& shapes) {
    const Grid2D& g = rho_s.grid;
    require_same_grid(g, shapes.alpha.grid, "make_drift_model");
    return DriftModel{g, D, rho_s, V.gradient_on_grid(g), tabulate(g, shapes.grad_alpha), tabulate(g, shapes.circulation)};
}

inline DriftModel make_drift_model(const Problem& p) { return make_drift_model(p.potential, p.D, p.rho_s, p.shapes); }

inline VectorField compute_flux(const ScalarField& rho, double u1, double u2, const DriftModel& m) {
    require_same_grid(rho.grid, m.grid, "compute_flux");
    const ScalarField g(m.grid, rho.values.cwiseQuotient(m.rho_s.values));
    const VectorField grad_g = gradient(g);
    const Eigen::ArrayXd r = rho.values.array();
    const Eigen::ArrayXd drs = m.D * m.rho_s.values.array();
    VectorField J(m.grid);
    J.x.values = (-r * (u1 * m.grad_alpha.x.values.array() + u2 * m.circulation.x.values.array()) -
                  drs * grad_g.x.values.array())
                     .matrix();
    J.y.values = (-r * (u1 * m.grad_alpha.y.values.array() + u2 * m.circulation.y.values.array()) -
                  drs * grad_g.y.values.array())
                     .matrix();
    return J;
}

/// omega = d_x J_y - d_y J_x
inline ScalarField compute_vorticity(const VectorField& J) { return curl(J); }

/// max |J.n| over wall nodes (corners take the larger of their two normals).
inline double boundary_normal_flux(const VectorField& J) {
    const Grid2D& g = J.grid();
    double out = 0.0;
    for (int j = 0; j < g.ny; ++j) out = std::max({out, std::abs(J.x(0, j)), std::abs(J.x(g.nx - 1, j))});
    for (int i = 0; i < g.nx; ++i) out = std::max({out, std::abs(J.y(i, 0)), std::abs(J.y(i, g.ny - 1))});
    return out;
}

}  // namespace fpcirc
