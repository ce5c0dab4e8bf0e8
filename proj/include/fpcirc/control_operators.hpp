#pragma once

// Flux-form discretisations of the two control drifts,
//   K_alpha rho ~ div(rho grad alpha),   K_phi rho ~ div(rho rho_s^{-1} perp grad phi),
// on the same dual cells as the generator. Neither has wall faces, so both
// conserve mass column by column for any shape functions.

#include "fpcirc/fpe_operator.hpp"
#include "fpcirc/problem.hpp"

namespace fpcirc {

struct ControlOperators {
    SparseMatrix K_alpha;
    SparseMatrix K_phi;
};

/// K_alpha: arithmetic-mean face density times the node difference of alpha.
inline SparseMatrix assemble_alpha_operator(const ScalarField& alpha) {
    const Grid2D& g = alpha.grid;
    Triplets t;
    t.reserve(g.size() * 10);
    detail::for_each_face(g, [&](const Face& f) {
        const double s = f.length * (alpha.values[f.b] - alpha.values[f.a]) / f.h;
        detail::add_face_flux(t, f, -0.5 * s, 0.5 * s);
    });
    return detail::finish_operator(g, t, trapezoid_weights(g));
}

/// K_phi: the face integral of perp grad phi is the difference of phi at the
/// two ends of the face, so every dual cell sees a telescoping sum of corner
/// values. The transported quantity rho / rho_s is averaged arithmetically,
/// which makes K_phi rho_s = 0 exactly and W_rho K_phi skew-symmetric.
inline SparseMatrix assemble_phi_operator(const ShapeFunctions& shapes, const ScalarField& rho_s) {
    const Grid2D& g = rho_s.grid;
    require_same_grid(g, shapes.phi.grid, "assemble_phi_operator");
    Triplets t;
    t.reserve(g.size() * 10);
    detail::for_each_face(g, [&](const Face& f) {
        double stream;
        if (f.axis == 0)
            stream = shapes.phi_at(f.mid_x, f.hi) - shapes.phi_at(f.mid_x, f.lo);
        else
            stream = -(shapes.phi_at(f.hi, f.mid_y) - shapes.phi_at(f.lo, f.mid_y));
        detail::add_face_flux(t, f, -0.5 * stream / rho_s.values[f.a], 0.5 * stream / rho_s.values[f.b]);
    });
    return detail::finish_operator(g, t, trapezoid_weights(g));
}

inline ControlOperators assemble_control_operators(const ShapeFunctions& shapes, const ScalarField& rho_s) {
    require_same_grid(shapes.alpha.grid, rho_s.grid, "assemble_control_operators");
    return {assemble_alpha_operator(shapes.alpha), assemble_phi_operator(shapes, rho_s)};
}

}  // namespace fpcirc
