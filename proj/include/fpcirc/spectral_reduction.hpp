#pragma once

// Galerkin reduction of the controlled Fokker-Planck equation onto the
// leading eigenfunctions:  dc/dt = Lambda c + u1 B1 c + u2 B2 c,
// with the vorticity cost  omega ~ (A1 + u1 A2 + u2 A3) c  projected onto the
// same modes.

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>

#include "fpcirc/control_operators.hpp"
#include "fpcirc/flux.hpp"

namespace fpcirc {

inline Eigen::VectorXd project(const ScalarField& rho, const SpectralBasis& basis) {
    require_same_grid(rho.grid, basis.grid, "project");
    return basis.modes.transpose() * rho.values.cwiseProduct(basis.inner_weights());
}

inline ScalarField reconstruct(const Eigen::VectorXd& c, const SpectralBasis& basis) {
    if (c.size() != basis.size()) throw Error("reconstruct: coefficient count does not match the basis");
    return ScalarField(basis.grid, basis.modes * c);
}

struct ReducedModel {
    int M = 0;
    Eigen::VectorXd lambda;
    Eigen::MatrixXd B1, B2;
    Eigen::MatrixXd A1, A2, A3;
    Eigen::VectorXd d;
    Eigen::VectorXd c_s;

    /// The model restricted to the leading m modes (every block is a leading block).
    ReducedModel truncated(int m) const {
        if (m < 1 || m > M) throw Error("ReducedModel::truncated: size outside [1, M]");
        return ReducedModel{m,
                            lambda.head(m),
                            B1.topLeftCorner(m, m),
                            B2.topLeftCorner(m, m),
                            A1.topLeftCorner(m, m),
                            A2.topLeftCorner(m, m),
                            A3.topLeftCorner(m, m),
                            d.head(m),
                            c_s.head(m)};
    }
};

/// f = Lambda c + u1 B1 c + u2 B2 c
inline Eigen::VectorXd reduced_rhs(const ReducedModel& model, const Eigen::VectorXd& c, double u1, double u2) {
    return model.lambda.cwiseProduct(c) + u1 * (model.B1 * c) + u2 * (model.B2 * c);
}

/// Vorticity fields of each basis density split by drift channel, written
/// through g_m = v_m / rho_s (with grad rho_s = -rho_s grad V / D):
///   omega_V     = rho_s <perp grad g, grad V>
///   omega_alpha = rho_s <perp grad g, grad alpha> - (rho_s g / D) <perp grad V, grad alpha>
///   omega_phi   = grad g . grad phi + g Lap(phi)
/// The phi channel is the grouping <perp grad g, perp grad phi> + g Lap(phi).
struct ModeVorticity {
    Eigen::MatrixXd omega_V;
    Eigen::MatrixXd omega_alpha;
    Eigen::MatrixXd omega_phi;
};

inline ModeVorticity mode_vorticity(const SpectralBasis& basis, const DriftModel& drift, const ShapeFunctions& shapes,
                                    const ScalarField& lap_phi) {
    const Grid2D& grid = basis.grid;
    const auto n = static_cast<Eigen::Index>(grid.size());
    const int M = basis.size();
    const VectorField pg = tabulate(grid, shapes.perp_grad_phi);
    // grad phi = (-(perp grad phi)_y, (perp grad phi)_x)
    const Eigen::ArrayXd phi_x = -pg.y.values.array();
    const Eigen::ArrayXd phi_y = pg.x.values.array();
    const Eigen::ArrayXd Vx = drift.grad_V.x.values.array(), Vy = drift.grad_V.y.values.array();
    const Eigen::ArrayXd ax = drift.grad_alpha.x.values.array(), ay = drift.grad_alpha.y.values.array();
    const Eigen::ArrayXd rs = basis.rho_s.values.array();
    const Eigen::ArrayXd perpV_dot_alpha = Vy * ax - Vx * ay;

    ModeVorticity out{Eigen::MatrixXd(n, M), Eigen::MatrixXd(n, M), Eigen::MatrixXd(n, M)};
    for (int m = 0; m < M; ++m) {
        const ScalarField g(grid, basis.modes.col(m).cwiseQuotient(basis.rho_s.values));
        const Eigen::ArrayXd gx = partial_x(g).values.array(), gy = partial_y(g).values.array();
        const Eigen::ArrayXd ga = g.values.array();
        // perp grad g = (g_y, -g_x)
        out.omega_V.col(m) = (rs * (gy * Vx - gx * Vy)).matrix();
        out.omega_alpha.col(m) = (rs * (gy * ax - gx * ay) - rs * ga / drift.D * perpV_dot_alpha).matrix();
        out.omega_phi.col(m) = (gx * phi_x + gy * phi_y + ga * lap_phi.values.array()).matrix();
    }
    return out;
}

/// B_i = V^T W_rho K_i V for the flux-form control operators, so that mass
/// (row 0) and the stationarity of rho_s under circulation (B2 e0) are exact.
/// A_i(k, m) = <omega_i(v_m), v_k>, d_k = <omega_d, v_k>.
inline ReducedModel assemble_reduced_model(const SpectralBasis& basis, const ShapeFunctions& shapes, const Potential& V,
                                           double D, const ScalarField& omega_d) {
    require_same_grid(basis.grid, shapes.alpha.grid, "assemble_reduced_model");
    require_same_grid(basis.grid, omega_d.grid, "assemble_reduced_model");
    const ControlOperators ops = assemble_control_operators(shapes, basis.rho_s);
    const DriftModel drift = make_drift_model(V, D, basis.rho_s, shapes);
    const Eigen::MatrixXd WV = basis.inner_weights().asDiagonal() * basis.modes;

    ReducedModel r;
    r.M = basis.size();
    r.lambda = basis.eigenvalues;
    r.B1 = WV.transpose() * (ops.K_alpha * basis.modes);
    r.B2 = WV.transpose() * (ops.K_phi * basis.modes);

    const ModeVorticity mv = mode_vorticity(basis, drift, shapes, omega_d);
    r.A1 = WV.transpose() * mv.omega_V;
    r.A2 = WV.transpose() * mv.omega_alpha;
    r.A3 = WV.transpose() * mv.omega_phi;
    r.d = WV.transpose() * omega_d.values;
    r.c_s = project(basis.rho_s, basis);
    return r;
}

inline VectorField flux_from_coefficients(const Eigen::VectorXd& c, double u1, double u2, const SpectralBasis& basis,
                                          const DriftModel& drift) {
    return compute_flux(reconstruct(c, basis), u1, u2, drift);
}

inline ScalarField vorticity_from_coefficients(const Eigen::VectorXd& c, double u1, double u2, const SpectralBasis& basis,
                                               const DriftModel& drift) {
    return compute_vorticity(flux_from_coefficients(c, u1, u2, basis, drift));
}

namespace detail {

inline nlohmann::json matrix_json(const Eigen::MatrixXd& A) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
        std::vector<double> row(static_cast<std::size_t>(A.cols()));
        for (Eigen::Index j = 0; j < A.cols(); ++j) row[static_cast<std::size_t>(j)] = A(i, j);
        rows.push_back(row);
    }
    return rows;
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, int M, const char* name) {
    Eigen::MatrixXd A(M, M);
    if (!j.is_array() || static_cast<int>(j.size()) != M) throw Error(std::string("reduced model: bad matrix ") + name);
    for (int i = 0; i < M; ++i) {
        const auto row = j[static_cast<std::size_t>(i)].get<std::vector<double>>();
        if (static_cast<int>(row.size()) != M) throw Error(std::string("reduced model: bad row in ") + name);
        for (int k = 0; k < M; ++k) A(i, k) = row[static_cast<std::size_t>(k)];
    }
    return A;
}

inline Eigen::VectorXd vector_from_json(const nlohmann::json& j, int M, const char* name) {
    const auto v = j.get<std::vector<double>>();
    if (static_cast<int>(v.size()) != M) throw Error(std::string("reduced model: bad vector ") + name);
    return Eigen::Map<const Eigen::VectorXd>(v.data(), M);
}

inline std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace detail

inline nlohmann::json to_json(const ReducedModel& r) {
    return {{"M", r.M},
            {"lambda", detail::to_std(r.lambda)},
            {"B1", detail::matrix_json(r.B1)},
            {"B2", detail::matrix_json(r.B2)},
            {"A1", detail::matrix_json(r.A1)},
            {"A2", detail::matrix_json(r.A2)},
            {"A3", detail::matrix_json(r.A3)},
            {"d", detail::to_std(r.d)},
            {"c_s", detail::to_std(r.c_s)}};
}

inline ReducedModel reduced_model_from_json(const nlohmann::json& j) {
    ReducedModel r;
    r.M = j.at("M").get<int>();
    r.lambda = detail::vector_from_json(j.at("lambda"), r.M, "lambda");
    r.B1 = detail::matrix_from_json(j.at("B1"), r.M, "B1");
    r.B2 = detail::matrix_from_json(j.at("B2"), r.M, "B2");
    r.A1 = detail::matrix_from_json(j.at("A1"), r.M, "A1");
    r.A2 = detail::matrix_from_json(j.at("A2"), r.M, "A2");
    r.A3 = detail::matrix_from_json(j.at("A3"), r.M, "A3");
    r.d = detail::vector_from_json(j.at("d"), r.M, "d");
    r.c_s = detail::vector_from_json(j.at("c_s"), r.M, "c_s");
    return r;
}

}  // namespace fpcirc
