#pragma once

// Discrete Fokker-Planck generator with reflecting walls and its weighted
// orthonormal eigenbasis.
//
// Every operator here is assembled in flux form on the dual (trapezoid) cells
// of the node grid: mass leaves a node only through the faces it shares with
// its four neighbours, and the walls carry no faces at all. Writing the face
// flux as  F_ab = p_ab rho_a - q_ab rho_b  gives  G = W K  with zero column
// sums, where W = diag(w).

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "fpcirc/field_calculus.hpp"
#include "fpcirc/field_io.hpp"
#include "fpcirc/lanczos.hpp"
#include "fpcirc/potential.hpp"

namespace fpcirc {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplets = std::vector<Eigen::Triplet<double>>;

struct Face {
    Eigen::Index a = 0;  ///< lower node
    Eigen::Index b = 0;  ///< upper node (i+1 or j+1)
    int axis = 0;        ///< 0: x-face between (i,j),(i+1,j); 1: y-face between (i,j),(i,j+1)
    double h = 0.0;      ///< node spacing across the face
    double length = 0.0; ///< dual-cell face length (halved on the walls)
    double mid_x = 0.0, mid_y = 0.0;
    double lo = 0.0, hi = 0.0;  ///< extent of the face segment along its own direction
};

namespace detail {

template <class Fn>
void for_each_face(const Grid2D& g, Fn&& fn) {
    for (int i = 0; i + 1 < g.nx; ++i)
        for (int j = 0; j < g.ny; ++j) {
            Face f;
            f.a = static_cast<Eigen::Index>(g.index(i, j));
            f.b = static_cast<Eigen::Index>(g.index(i + 1, j));
            f.axis = 0;
            f.h = g.dx;
            f.mid_x = 0.5 * (g.x(i) + g.x(i + 1));
            f.mid_y = g.y(j);
            f.lo = j == 0 ? -g.L : 0.5 * (g.y(j - 1) + g.y(j));
            f.hi = j == g.ny - 1 ? g.L : 0.5 * (g.y(j) + g.y(j + 1));
            f.length = f.hi - f.lo;
            fn(f);
        }
    for (int i = 0; i < g.nx; ++i)
        for (int j = 0; j + 1 < g.ny; ++j) {
            Face f;
            f.a = static_cast<Eigen::Index>(g.index(i, j));
            f.b = static_cast<Eigen::Index>(g.index(i, j + 1));
            f.axis = 1;
            f.h = g.dy;
            f.mid_x = g.x(i);
            f.mid_y = 0.5 * (g.y(j) + g.y(j + 1));
            f.lo = i == 0 ? -g.L : 0.5 * (g.x(i - 1) + g.x(i));
            f.hi = i == g.nx - 1 ? g.L : 0.5 * (g.x(i) + g.x(i + 1));
            f.length = f.hi - f.lo;
            fn(f);
        }
}

/// Adds the contribution of F_ab = p rho_a - q rho_b (already multiplied by
/// the face length) to G.
inline void add_face_flux(Triplets& t, const Face& f, double p, double q) {
    t.emplace_back(f.a, f.a, -p);
    t.emplace_back(f.a, f.b, q);
    t.emplace_back(f.b, f.a, p);
    t.emplace_back(f.b, f.b, -q);
}

/// K = W^{-1} G
inline SparseMatrix finish_operator(const Grid2D& g, const Triplets& t, const QuadratureWeights& w) {
    const auto n = static_cast<Eigen::Index>(g.size());
    SparseMatrix G(n, n);
    G.setFromTriplets(t.begin(), t.end());
    const Eigen::VectorXd inv_w = w.w.cwiseInverse();
    SparseMatrix K = inv_w.asDiagonal() * G;
    K.makeCompressed();
    return K;
}

/// B(x) = x / (e^x - 1)
inline double bernoulli(double x) {
    if (std::abs(x) < 1e-8) return 1.0 - 0.5 * x;
    return x / std::expm1(x);
}

}  // namespace detail

enum class FaceScheme {
    /// Exponentially fitted (Scharfetter-Gummel) face flux. Exact discrete
    /// detailed balance with rho_s = exp(-V/D)/Z.
    ScharfetterGummel,
    /// Arithmetic-mean face density with the analytic face-midpoint gradient.
    ArithmeticMean,
};

struct DiscreteGenerator {
    Grid2D grid;
    double D = 1.0;
    FaceScheme scheme = FaceScheme::ScharfetterGummel;
    SparseMatrix K;
};

/// Finite-volume discretisation of  rho -> div(rho grad V) + D Lap(rho)
/// with zero flux through the walls.
inline DiscreteGenerator assemble_generator(const Potential& V, double D, const Grid2D& g,
                                            FaceScheme scheme = FaceScheme::ScharfetterGummel) {
    if (!(D > 0.0)) throw ConfigError("assemble_generator: D must be positive");
    const QuadratureWeights w = trapezoid_weights(g);
    const ScalarField v = V.on_grid(g);
    Triplets t;
    t.reserve(g.size() * 10);
    detail::for_each_face(g, [&](const Face& f) {
        const double c = D * f.length / f.h;
        if (scheme == FaceScheme::ScharfetterGummel) {
            const double delta = (v.values[f.b] - v.values[f.a]) / D;
            detail::add_face_flux(t, f, c * detail::bernoulli(delta), c * detail::bernoulli(-delta));
        } else {
            const Vec2 gv = V.gradient_at(f.mid_x, f.mid_y);
            const double slope = f.axis == 0 ? gv.x() : gv.y();
            detail::add_face_flux(t, f, c - 0.5 * slope * f.length, c + 0.5 * slope * f.length);
        }
    });
    return DiscreteGenerator{g, D, scheme, detail::finish_operator(g, t, w)};
}

/// ||W_rho K - K^T W_rho||_F / ||W_rho K||_F with W_rho = diag(w / rho_s).
inline double selfadjointness_report(const SparseMatrix& K, const ScalarField& rho_s, const QuadratureWeights& w) {
    require_same_grid(rho_s.grid, w.grid, "selfadjointness_report");
    const Eigen::VectorXd wr = w.w.cwiseQuotient(rho_s.values);
    const SparseMatrix WK = wr.asDiagonal() * K;
    const SparseMatrix WKt = SparseMatrix(WK.transpose());
    return (WK - WKt).norm() / WK.norm();
}

/// |w^T K| per column, maximised, relative to max |K_ij|.
inline double mass_defect(const SparseMatrix& K, const QuadratureWeights& w) {
    const Eigen::RowVectorXd col = w.w.transpose() * K;
    double kmax = 0.0;
    for (int k = 0; k < K.outerSize(); ++k)
        for (SparseMatrix::InnerIterator it(K, k); it; ++it) kmax = std::max(kmax, std::abs(it.value()));
    // column sums are weighted, so compare against a weighted scale
    return col.cwiseAbs().maxCoeff() / (kmax * w.w.maxCoeff());
}

struct SpectralBasis {
    Grid2D grid;
    QuadratureWeights weights;
    ScalarField rho_s;
    Eigen::VectorXd eigenvalues;  ///< descending, eigenvalues[0] ~ 0
    Eigen::MatrixXd modes;        ///< column m holds v_m at the nodes
    Eigen::VectorXd residuals;    ///< ||K v_m - lambda_m v_m||_{rho_s^{-1}}
    std::string solver;
    int iterations = 0;

    int size() const noexcept { return static_cast<int>(eigenvalues.size()); }
    ScalarField mode(int m) const { return ScalarField(grid, modes.col(m)); }
    /// w / rho_s, the diagonal of the weighted inner product
    Eigen::VectorXd inner_weights() const { return weights.w.cwiseQuotient(rho_s.values); }
    Eigen::MatrixXd gram() const { return modes.transpose() * inner_weights().asDiagonal() * modes; }
    /// Leading m modes only.
    SpectralBasis truncated(int m) const {
        SpectralBasis b = *this;
        b.eigenvalues = eigenvalues.head(m);
        b.modes = modes.leftCols(m);
        b.residuals = residuals.head(m);
        return b;
    }
};

/// Index groups of (nearly) equal eigenvalues: |l_i - l_j| <= rel * max|l|.
inline std::vector<std::vector<int>> eigen_groups(const Eigen::VectorXd& values, double rel = 1e-6) {
    std::vector<std::vector<int>> groups;
    const double scale = values.cwiseAbs().maxCoeff();
    for (int i = 0; i < values.size(); ++i) {
        if (!groups.empty() && std::abs(values[groups.back().back()] - values[i]) <= rel * scale)
            groups.back().push_back(i);
        else
            groups.push_back({i});
    }
    return groups;
}

/// The M algebraically largest eigenpairs of K, orthonormal in L2(1/rho_s).
///
/// With S = diag(sqrt(w / rho_s)) the matrix S K S^{-1} is symmetric. Below
/// dense_threshold nodes it is diagonalised densely; above, shift-invert
/// Lanczos runs on (shift I - S K S^{-1})^{-1}, which is SPD because K is
/// dissipative. Conventions: v_0 is pinned to rho_s, and every other mode is
/// signed so that its largest-magnitude node is positive.
inline SpectralBasis eigenbasis(const DiscreteGenerator& gen, const ScalarField& rho_s, const QuadratureWeights& w, int M,
                                int cap = 64, int dense_threshold = 2500, int max_lanczos = 400, double tol = 1e-11,
                                double shift = 1.0) {
    const Grid2D& g = gen.grid;
    require_same_grid(g, rho_s.grid, "eigenbasis");
    require_same_grid(g, w.grid, "eigenbasis");
    const auto n = static_cast<Eigen::Index>(g.size());
    if (M < 1) throw EigenSolverError("eigenbasis: M must be at least 1");
    if (M > cap) throw EigenSolverError("eigenbasis: M = " + std::to_string(M) + " exceeds the cap " + std::to_string(cap));
    if (M > n) throw EigenSolverError("eigenbasis: M = " + std::to_string(M) + " exceeds the node count " + std::to_string(n));

    const Eigen::VectorXd wr = w.w.cwiseQuotient(rho_s.values);
    const Eigen::VectorXd s = wr.cwiseSqrt();
    SparseMatrix A = s.asDiagonal() * gen.K * s.cwiseInverse().asDiagonal();
    A = 0.5 * (A + SparseMatrix(A.transpose()));

    SpectralBasis out;
    out.grid = g;
    out.weights = w;
    out.rho_s = rho_s;
    Eigen::MatrixXd Y;
    Eigen::VectorXd lambda;
    if (n <= dense_threshold) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es{Eigen::MatrixXd(A)};
        if (es.info() != Eigen::Success) throw EigenSolverError("eigenbasis: dense eigensolver failed");
        lambda = es.eigenvalues().tail(M).reverse();
        Y = es.eigenvectors().rightCols(M).rowwise().reverse();
        out.solver = "dense";
    } else {
        SparseMatrix shifted = -A;
        for (Eigen::Index i = 0; i < n; ++i) shifted.coeffRef(i, i) += shift;
        Eigen::SimplicialLDLT<SparseMatrix> ldlt(shifted);
        if (ldlt.info() != Eigen::Success) throw EigenSolverError("eigenbasis: factorisation of the shifted operator failed");
        LanczosOptions lo;
        lo.nev = static_cast<int>(std::min<Eigen::Index>(M + 4, n));
        lo.max_dim = max_lanczos;
        lo.tol = tol;
        const LanczosResult lr = lanczos_largest(n, [&](const Eigen::VectorXd& x) { return Eigen::VectorXd(ldlt.solve(x)); }, lo);
        lambda = (shift - lr.values.head(M).cwiseInverse().array()).matrix();
        Y = lr.vectors.leftCols(M);
        out.solver = "shift-invert lanczos";
        out.iterations = lr.iterations;
    }

    // back to node values: v = S^{-1} y, which is unit norm in L2(1/rho_s)
    Eigen::MatrixXd Vm = s.cwiseInverse().asDiagonal() * Y;
    const double scale = std::max(1.0, lambda.cwiseAbs().maxCoeff());
    if (std::abs(lambda[0]) > 1e-6 * scale)
        throw EigenSolverError("eigenbasis: leading eigenvalue " + std::to_string(lambda[0]) + " is not zero");
    Vm.col(0) = rho_s.values;
    for (int pass = 0; pass < 2; ++pass)
        for (int m = 1; m < M; ++m) {
            for (int k = 0; k < m; ++k) Vm.col(m) -= (Vm.col(k).cwiseProduct(wr).dot(Vm.col(m))) * Vm.col(k);
            Vm.col(m) /= std::sqrt(Vm.col(m).cwiseProduct(wr).dot(Vm.col(m)));
        }
    for (int m = 1; m < M; ++m) {
        Eigen::Index arg = 0;
        Vm.col(m).cwiseAbs().maxCoeff(&arg);
        if (Vm(arg, m) < 0.0) Vm.col(m) = -Vm.col(m);
    }

    const Eigen::MatrixXd KV = gen.K * Vm;
    out.eigenvalues.resize(M);
    out.residuals.resize(M);
    for (int m = 0; m < M; ++m) {
        out.eigenvalues[m] = Vm.col(m).cwiseProduct(wr).dot(KV.col(m));
        const Eigen::VectorXd r = KV.col(m) - out.eigenvalues[m] * Vm.col(m);
        out.residuals[m] = std::sqrt(r.cwiseProduct(wr).dot(r));
    }
    // keep v_0 first, order the rest by Rayleigh quotient
    std::vector<int> order(M);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin() + 1, order.end(),
                     [&](int i, int j) { return out.eigenvalues[i] > out.eigenvalues[j]; });
    out.modes.resize(n, M);
    Eigen::VectorXd ev(M), res(M);
    for (int m = 0; m < M; ++m) {
        out.modes.col(m) = Vm.col(order[m]);
        ev[m] = out.eigenvalues[order[m]];
        res[m] = out.residuals[order[m]];
    }
    out.eigenvalues = ev;
    out.residuals = res;
    return out;
}

inline nlohmann::json grid_json(const Grid2D& g) {
    return {{"L", g.L}, {"nx", g.nx}, {"ny", g.ny}, {"dx", g.dx}, {"dy", g.dy}};
}

/// Writes eigenvalues.csv, rho_s.csv, mode_XXX.csv and manifest.json into dir.
inline void save_basis(const std::filesystem::path& dir, const SpectralBasis& b, nlohmann::json manifest = {}) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream os(dir / "eigenvalues.csv");
        os << csv_precision << "index,lambda\n";
        for (int m = 0; m < b.size(); ++m) os << m << ',' << b.eigenvalues[m] << '\n';
    }
    write_field_csv(dir / "rho_s.csv", b.rho_s);
    std::vector<std::string> files;
    for (int m = 0; m < b.size(); ++m) {
        char name[32];
        std::snprintf(name, sizeof name, "mode_%03d.csv", m);
        write_field_csv(dir / name, b.mode(m));
        files.emplace_back(name);
    }
    manifest["grid"] = grid_json(b.grid);
    manifest["M"] = b.size();
    manifest["solver"] = b.solver;
    manifest["iterations"] = b.iterations;
    manifest["residuals"] = std::vector<double>(b.residuals.data(), b.residuals.data() + b.residuals.size());
    manifest["mode_files"] = files;
    std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
}

inline SpectralBasis load_basis(const std::filesystem::path& dir) {
    std::ifstream ms(dir / "manifest.json");
    if (!ms) throw Error("no basis manifest in " + dir.string());
    const nlohmann::json man = nlohmann::json::parse(ms);
    const auto& gj = man.at("grid");
    SpectralBasis b;
    b.grid = make_grid(gj.at("L").get<double>(), gj.at("nx").get<int>(), gj.at("ny").get<int>());
    b.weights = trapezoid_weights(b.grid);
    b.rho_s = read_field_csv(dir / "rho_s.csv", b.grid);
    const int M = man.at("M").get<int>();
    b.solver = man.value("solver", "");
    b.iterations = man.value("iterations", 0);
    b.eigenvalues.resize(M);
    {
        std::ifstream es(dir / "eigenvalues.csv");
        std::string line;
        std::getline(es, line);
        for (int m = 0; m < M; ++m) {
            if (!std::getline(es, line)) throw Error("eigenvalues.csv is truncated");
            b.eigenvalues[m] = detail::split_doubles(line).at(1);
        }
    }
    const auto res = man.value("residuals", std::vector<double>(M, 0.0));
    b.residuals = Eigen::Map<const Eigen::VectorXd>(res.data(), M);
    b.modes.resize(static_cast<Eigen::Index>(b.grid.size()), M);
    const auto files = man.at("mode_files").get<std::vector<std::string>>();
    for (int m = 0; m < M; ++m) b.modes.col(m) = read_field_csv(dir / files.at(m), b.grid).values;
    return b;
}

}  // namespace fpcirc
