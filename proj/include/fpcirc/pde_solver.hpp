#pragma once

// Full-grid integration of the controlled Fokker-Planck equation with
// K(u1, u2) = K + u1 K_alpha + u2 K_phi, controls frozen on each step.

#include <Eigen/SparseLU>

#include <cmath>
#include <functional>
#include <ostream>
#include <vector>

#include "fpcirc/control_operators.hpp"
#include "fpcirc/flux.hpp"
#include "fpcirc/optimal_control.hpp"

namespace fpcirc {

enum class TimeScheme { BackwardEuler, CrankNicolson };

struct ControlledOperator {
    SparseMatrix K;
    SparseMatrix K_alpha;
    SparseMatrix K_phi;
    QuadratureWeights weights;

    SparseMatrix at(double u1, double u2) const { return K + u1 * K_alpha + u2 * K_phi; }
};

inline ControlledOperator make_controlled_operator(const DiscreteGenerator& gen, const ShapeFunctions& shapes,
                                                   const ScalarField& rho_s) {
    ControlOperators ops = assemble_control_operators(shapes, rho_s);
    return {gen.K, std::move(ops.K_alpha), std::move(ops.K_phi), trapezoid_weights(gen.grid)};
}

/// One implicit step per call. The sparsity pattern of K(u) never changes, so
/// it is analysed once; the numeric factorisation is redone only when
/// (u1, u2) moves by more than 1e-14.
class ImplicitStepper {
public:
    ImplicitStepper(const ControlledOperator& op, double dt, TimeScheme scheme = TimeScheme::BackwardEuler)
        : op_(op), dt_(dt), scheme_(scheme) {
        if (!(dt > 0.0)) throw ConfigError("ImplicitStepper: dt must be positive");
        const auto n = op.K.rows();
        identity_.resize(n, n);
        identity_.setIdentity();
    }

    ScalarField step(const ScalarField& rho, double u1, double u2) {
        prepare(u1, u2);
        Eigen::VectorXd rhs = rho.values;
        if (scheme_ == TimeScheme::CrankNicolson) rhs += 0.5 * dt_ * (current_ * rho.values);
        Eigen::VectorXd next = lu_.solve(rhs);
        if (lu_.info() != Eigen::Success || !next.allFinite())
            throw LinearSolverError("implicit step: sparse solve failed");
        return ScalarField(rho.grid, std::move(next));
    }

    int factorizations() const noexcept { return factorizations_; }

private:
    void prepare(double u1, double u2) {
        if (have_ && std::abs(u1 - u1_) <= 1e-14 && std::abs(u2 - u2_) <= 1e-14) return;
        current_ = op_.at(u1, u2);
        const double theta = scheme_ == TimeScheme::CrankNicolson ? 0.5 : 1.0;
        const SparseMatrix A = identity_ - theta * dt_ * current_;
        if (!analysed_) {
            lu_.analyzePattern(A);
            analysed_ = true;
        }
        lu_.factorize(A);
        if (lu_.info() != Eigen::Success) throw LinearSolverError("implicit step: factorisation failed");
        ++factorizations_;
        u1_ = u1;
        u2_ = u2;
        have_ = true;
    }

    const ControlledOperator& op_;
    double dt_;
    TimeScheme scheme_;
    SparseMatrix identity_;
    SparseMatrix current_;
    Eigen::SparseLU<SparseMatrix> lu_;
    bool analysed_ = false;
    bool have_ = false;
    double u1_ = 0.0, u2_ = 0.0;
    int factorizations_ = 0;
};

/// max over wall cells of |outflow through the walls| / (wall length of the cell).
inline double wall_flux(const ControlledOperator& op, double u1, double u2, const ScalarField& rho) {
    const Grid2D& g = rho.grid;
    const Eigen::RowVectorXd defect = op.weights.w.transpose() * op.at(u1, u2);
    double out = 0.0;
    for (int i = 0; i < g.nx; ++i)
        for (int j = 0; j < g.ny; ++j) {
            if (!g.on_boundary(i, j)) continue;
            double length = 0.0;
            if (i == 0 || i == g.nx - 1) length += (j == 0 || j == g.ny - 1) ? 0.5 * g.dy : g.dy;
            if (j == 0 || j == g.ny - 1) length += (i == 0 || i == g.nx - 1) ? 0.5 * g.dx : g.dx;
            const auto a = static_cast<Eigen::Index>(g.index(i, j));
            out = std::max(out, std::abs(defect[a] * rho.values[a]) / length);
        }
    return out;
}

struct DiagnosticsSeries {
    std::vector<double> times;
    std::vector<double> e_rho;
    std::vector<double> e_omega;
    std::vector<double> mass;
    std::vector<double> min_density;
    /// Discrete wall flux per unit length relative to max |J|. A dual cell's
    /// outflow through the walls equals its column-sum defect (w^T K(u))_a
    /// times rho_a, because every interior face appears in K(u) exactly once.
    std::vector<double> boundary_flux;
    /// max |J.n| at wall nodes relative to max |J|, from the stencil flux;
    /// one-sided derivatives make this O(dx) even though the scheme has no wall faces.
    std::vector<double> stencil_boundary_flux;
    std::vector<int> positivity_violations;  ///< steps with min density < -1e-12
    int factorizations = 0;
};

inline void write_diagnostics_csv(std::ostream& os, const DiagnosticsSeries& d) {
    os << csv_precision << "t,e_rho,e_omega,mass\n";
    for (std::size_t k = 0; k < d.times.size(); ++k)
        os << d.times[k] << ',' << d.e_rho[k] << ',' << d.e_omega[k] << ',' << d.mass[k] << '\n';
}

struct FpeRun {
    DiagnosticsSeries diagnostics;
    ScalarField final_density;
};

/// Called after every recorded state with (k, t_k, rho_k), k = 0..K.
using FpeObserver = std::function<void(int, double, const ScalarField&)>;

/// Steps rho0 through U. e_omega at step k uses the controls active on
/// [t_k, t_{k+1}); the final state reuses the last step's controls.
inline FpeRun integrate_fpe(const ControlledOperator& op, const DriftModel& drift, const ScalarField& omega_d,
                            const ScalarField& rho0, const ControlTrajectory& U,
                            TimeScheme scheme = TimeScheme::BackwardEuler, const FpeObserver& observer = {}) {
    require_same_grid(rho0.grid, drift.grid, "integrate_fpe");
    ImplicitStepper stepper(op, U.dt, scheme);
    FpeRun run;
    DiagnosticsSeries& d = run.diagnostics;
    const int K = U.K();
    auto record = [&](int k, const ScalarField& rho) {
        const int kc = std::min(k, K - 1);
        const VectorField J = compute_flux(rho, U.u1[kc], U.u2[kc], drift);
        const ScalarField omega = compute_vorticity(J);
        const double t = U.time(k);
        d.times.push_back(t);
        d.e_rho.push_back(weighted_norm(ScalarField(rho.grid, rho.values - drift.rho_s.values), drift.rho_s, op.weights));
        d.e_omega.push_back(weighted_norm(ScalarField(rho.grid, omega.values - omega_d.values), drift.rho_s, op.weights));
        d.mass.push_back(integrate(rho, op.weights));
        const double mn = rho.values.minCoeff();
        d.min_density.push_back(mn);
        if (mn < -1e-12) d.positivity_violations.push_back(k);
        const double jmax = max_abs(J);
        d.boundary_flux.push_back(jmax > 0.0 ? wall_flux(op, U.u1[kc], U.u2[kc], rho) / jmax : 0.0);
        d.stencil_boundary_flux.push_back(jmax > 0.0 ? boundary_normal_flux(J) / jmax : 0.0);
        if (observer) observer(k, t, rho);
    };
    ScalarField rho = rho0;
    record(0, rho);
    for (int k = 0; k < K; ++k) {
        rho = stepper.step(rho, U.u1[k], U.u2[k]);
        record(k + 1, rho);
    }
    d.factorizations = stepper.factorizations();
    run.final_density = std::move(rho);
    return run;
}

/// Least-squares slope of log e_rho against t over samples with t >= t_min.
inline double log_slope(const DiagnosticsSeries& d, double t_min) {
    double st = 0, sy = 0, stt = 0, sty = 0;
    int n = 0;
    for (std::size_t k = 0; k < d.times.size(); ++k) {
        if (d.times[k] < t_min - 1e-12 || !(d.e_rho[k] > 0.0)) continue;
        const double t = d.times[k], y = std::log(d.e_rho[k]);
        st += t;
        sy += y;
        stt += t * t;
        sty += t * y;
        ++n;
    }
    if (n < 2) throw Error("log_slope: fewer than two samples in the fit window");
    return (n * sty - st * sy) / (n * stt - st * st);
}

}  // namespace fpcirc
