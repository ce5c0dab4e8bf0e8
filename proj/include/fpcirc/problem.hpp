#pragma once

// The concrete control problem: potential, diffusion, control shape
// functions, initial density and the experiment configuration.

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include "fpcirc/field_calculus.hpp"
#include "fpcirc/potential.hpp"

namespace fpcirc {

/// Control shape functions alpha (u1 channel) and phi (u2 channel).
///
/// Node values are always present. The callables evaluate derivatives at
/// arbitrary points: the finite-volume operators need phi on dual-cell
/// corners and the particle drift needs grad alpha and rho_s^{-1} perp grad phi
/// at particle positions.
struct ShapeFunctions {
    ScalarField alpha;
    ScalarField phi;
    std::function<Vec2(double, double)> grad_alpha;
    std::function<double(double, double)> phi_at;
    std::function<Vec2(double, double)> perp_grad_phi;
    /// rho_s^{-1} perp grad phi, the circulation drift per unit u2.
    std::function<Vec2(double, double)> circulation;
    /// Empty when only the stencil Laplacian is available.
    std::function<double(double, double)> laplacian_phi;
    bool analytic = false;
    std::string description;
};

/// alpha = cos(pi x / 2L) cos(pi y / 2L),  phi = rho_s (L^2/4)(x^2/L^2 - 1)(y^2/L^2 - 1).
/// The phi derivatives are written through psi = phi / rho_s so that
/// rho_s^{-1} perp grad phi never divides by an underflowing density.
inline ShapeFunctions reference_shapes(const Grid2D& g, const StationaryDensity& rho_s) {
    if (rho_s.potential.kind() != Potential::Kind::Quadratic)
        throw ConfigError("reference shape functions require the quadratic potential");
    const double L = g.L;
    const double k = std::numbers::pi / (2.0 * L);
    const double D = rho_s.D;
    const double lap_v = 2.0 * rho_s.potential.a() + 2.0 * rho_s.potential.b();
    const Potential V = rho_s.potential;

    auto psi = [L](double x, double y) { return 0.25 * L * L * (x * x / (L * L) - 1.0) * (y * y / (L * L) - 1.0); };
    auto grad_psi = [L](double x, double y) -> Vec2 {
        return {0.5 * x * (y * y / (L * L) - 1.0), 0.5 * y * (x * x / (L * L) - 1.0)};
    };

    ShapeFunctions s;
    s.analytic = true;
    s.description = "alpha = cos(pi x/2L) cos(pi y/2L); phi = rho_s (L^2/4)(x^2/L^2-1)(y^2/L^2-1)";
    s.grad_alpha = [k](double x, double y) -> Vec2 {
        return {-k * std::sin(k * x) * std::cos(k * y), -k * std::cos(k * x) * std::sin(k * y)};
    };
    s.phi_at = [rho_s, psi](double x, double y) { return rho_s(x, y) * psi(x, y); };
    s.circulation = [V, D, psi, grad_psi](double x, double y) -> Vec2 {
        const Vec2 gp = grad_psi(x, y);
        const Vec2 gv = V.gradient_at(x, y);
        const double p = psi(x, y);
        // perp(psi) - psi/D perp(V), with perp(f) = (f_y, -f_x)
        return {gp.y() - p / D * gv.y(), -gp.x() + p / D * gv.x()};
    };
    s.perp_grad_phi = [rho_s, circ = s.circulation](double x, double y) -> Vec2 { return rho_s(x, y) * circ(x, y); };
    s.laplacian_phi = [rho_s, V, D, L, lap_v, psi, grad_psi](double x, double y) {
        const Vec2 gv = V.gradient_at(x, y);
        const Vec2 gp = grad_psi(x, y);
        const double lap_psi = 0.5 * (y * y / (L * L) - 1.0) + 0.5 * (x * x / (L * L) - 1.0);
        const double p = psi(x, y);
        return rho_s(x, y) * (lap_psi - 2.0 / D * gv.dot(gp) + p * (gv.squaredNorm() / (D * D) - lap_v / D));
    };
    s.alpha = tabulate(g, [k](double x, double y) { return std::cos(k * x) * std::cos(k * y); });
    s.phi = tabulate(g, s.phi_at);
    return s;
}

/// Shape functions known only through node values; derivatives come from the
/// stencils and are interpolated bilinearly off-grid.
inline ShapeFunctions tabulated_shapes(const ScalarField& alpha, const ScalarField& phi, const ScalarField& rho_s) {
    require_same_grid(alpha.grid, phi.grid, "tabulated_shapes");
    require_same_grid(alpha.grid, rho_s.grid, "tabulated_shapes");
    ShapeFunctions s;
    s.analytic = false;
    s.description = "tabulated";
    s.alpha = alpha;
    s.phi = phi;
    const VectorField ga = gradient(alpha);
    const VectorField pp = perp_gradient(phi);
    const VectorField circ(ScalarField(phi.grid, (pp.x.values.array() / rho_s.values.array()).matrix()),
                           ScalarField(phi.grid, (pp.y.values.array() / rho_s.values.array()).matrix()));
    s.grad_alpha = [ga](double x, double y) -> Vec2 { return {interpolate(ga.x, x, y), interpolate(ga.y, x, y)}; };
    s.phi_at = [phi](double x, double y) { return interpolate(phi, x, y); };
    s.perp_grad_phi = [pp](double x, double y) -> Vec2 { return {interpolate(pp.x, x, y), interpolate(pp.y, x, y)}; };
    s.circulation = [circ](double x, double y) -> Vec2 {
        return {interpolate(circ.x, x, y), interpolate(circ.y, x, y)};
    };
    return s;
}

/// omega_d = Laplacian(phi): analytic when the shape provides it, stencil otherwise.
inline ScalarField desired_vorticity(const ShapeFunctions& shapes) {
    if (shapes.laplacian_phi) return tabulate(shapes.phi.grid, shapes.laplacian_phi);
    return laplacian(shapes.phi);
}

struct ShapeBcReport {
    double alpha_normal_max = 0.0;  ///< max |<grad alpha, n>| over boundary nodes
    double phi_normal_max = 0.0;    ///< max |<perp grad phi, n>| over boundary nodes
    double tolerance = 0.0;
    bool alpha_ok = false;
    bool phi_ok = false;
    bool pass() const noexcept { return alpha_ok && phi_ok; }
};

/// Measures the no-flux conditions the shape functions are supposed to meet on
/// the boundary. A violation is reported, never thrown.
inline ShapeBcReport validate_shape_bcs(const ShapeFunctions& shapes) {
    const Grid2D& g = shapes.alpha.grid;
    ShapeBcReport r;
    r.tolerance = shapes.analytic ? 1e-6 : 5.0 * g.dx * g.dx;
    auto visit = [&](int i, int j, Vec2 n) {
        const double x = g.x(i), y = g.y(j);
        r.alpha_normal_max = std::max(r.alpha_normal_max, std::abs(shapes.grad_alpha(x, y).dot(n)));
        r.phi_normal_max = std::max(r.phi_normal_max, std::abs(shapes.perp_grad_phi(x, y).dot(n)));
    };
    for (int j = 0; j < g.ny; ++j) {
        visit(0, j, {-1.0, 0.0});
        visit(g.nx - 1, j, {1.0, 0.0});
    }
    for (int i = 0; i < g.nx; ++i) {
        visit(i, 0, {0.0, -1.0});
        visit(i, g.ny - 1, {0.0, 1.0});
    }
    r.alpha_ok = r.alpha_normal_max <= r.tolerance;
    r.phi_ok = r.phi_normal_max <= r.tolerance;
    return r;
}

struct GaussianComponent {
    double weight = 1.0;
    Vec2 mean = Vec2::Zero();
    Vec2 var = Vec2::Ones();  ///< diagonal of the covariance
};

struct InitialDensitySpec {
    std::vector<GaussianComponent> components;

    void validate() const {
        if (components.empty()) throw ConfigError("initial density needs at least one component");
        double total = 0.0;
        for (const auto& c : components) {
            if (!(c.weight > 0.0)) throw ConfigError("initial density weights must be positive");
            if (!(c.var.x() > 0.0) || !(c.var.y() > 0.0))
                throw ConfigError("initial density: degenerate covariance");
            total += c.weight;
        }
        if (std::abs(total - 1.0) > 1e-12) throw ConfigError("initial density weights must sum to 1");
    }

    double pdf(double x, double y) const {
        double p = 0.0;
        for (const auto& c : components) {
            const double dx = x - c.mean.x(), dy = y - c.mean.y();
            p += c.weight * std::exp(-0.5 * (dx * dx / c.var.x() + dy * dy / c.var.y())) /
                 (2.0 * std::numbers::pi * std::sqrt(c.var.x() * c.var.y()));
        }
        return p;
    }
};

/// Gaussian mixture on the nodes, truncated to the box and renormalised with
/// the grid quadrature.
inline ScalarField build_initial_density(const InitialDensitySpec& spec, const QuadratureWeights& w) {
    spec.validate();
    ScalarField rho = tabulate(w.grid, [&spec](double x, double y) { return spec.pdf(x, y); });
    rho.values = rho.values.cwiseMax(1e-300);
    rho.values /= rho.values.dot(w.w);
    return rho;
}

struct CostWeights {
    double Q1 = 1e4;
    double Q2 = 10.0;
    double R1 = 1.0;
    double R2 = 1.0;
    double Qf = 1e2;
    double Rf = 1.0;

    void validate() const {
        for (double v : {Q1, Q2, R1, R2, Qf, Rf})
            if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("cost weights must be finite and nonnegative");
        if (!(R1 > 0.0) || !(R2 > 0.0)) throw ConfigError("input weights R1 and R2 must be positive");
    }
};

struct OptimizerSettings {
    double gtol = 1e-8;
    int max_iters = 2000;
    int memory = 20;
    int multi_start = 0;
};

struct EigenSettings {
    int cap = 64;
    int dense_threshold = 2500;
    int max_lanczos = 400;
    double tol = 1e-11;
    double shift = 1.0;
};

struct FluxEstimateSettings {
    int coarse_nx = 20;
    int coarse_ny = 20;
    int window = 1;
    int min_count = 10;
};

struct ExperimentConfig {
    double L = 4.0;
    int nx = 101;
    int ny = 101;
    double D = 2.0;
    double potential_a = 2.0;
    double potential_b = 3.0;
    int M = 21;
    double t0 = 0.0;
    double tf = 1.0;
    double dt = 5e-3;
    CostWeights weights;
    double initial_u1 = 0.0;
    double initial_u2 = 1.0;
    InitialDensitySpec initial_density{{{0.5, Vec2(1.0, 0.0), Vec2(0.5, 0.5)}, {0.5, Vec2(-1.0, 0.0), Vec2(0.5, 0.5)}}};
    long particles = 100000;
    std::uint64_t seed = 20240917;
    OptimizerSettings optimizer;
    EigenSettings eigen;
    FluxEstimateSettings flux;
    bool crank_nicolson = false;
    int snapshot_every = 0;

    int steps() const { return static_cast<int>(std::llround((tf - t0) / dt)); }

    void validate() const {
        make_grid(L, nx, ny);
        if (!(D > 0.0)) throw ConfigError("D must be positive");
        if (M < 1) throw ConfigError("M must be at least 1");
        if (!(tf > t0)) throw ConfigError("tf must exceed t0");
        if (!(dt > 0.0)) throw ConfigError("dt must be positive");
        const double k = (tf - t0) / dt;
        if (std::abs(k - std::round(k)) > 1e-9 * std::max(1.0, k)) throw ConfigError("(tf - t0) / dt must be an integer");
        if (!(potential_a > 0.0) || !(potential_b > 0.0)) throw ConfigError("potential coefficients must be positive");
        weights.validate();
        initial_density.validate();
        if (particles < 1) throw ConfigError("particle count must be at least 1");
        if (eigen.cap < 1 || M > eigen.cap) throw ConfigError("M exceeds the eigen cap");
        if (optimizer.max_iters < 0 || optimizer.memory < 1 || !(optimizer.gtol > 0.0))
            throw ConfigError("invalid optimizer settings");
        if (flux.coarse_nx < 1 || flux.coarse_ny < 1 || flux.window < 1) throw ConfigError("invalid flux estimate settings");
    }
};

namespace detail {

inline void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, _] : j.items())
        if (!ok.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
}

template <class T>
void read_if(const nlohmann::json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
}

}  // namespace detail

inline nlohmann::json to_json(const ExperimentConfig& c) {
    nlohmann::json comps = nlohmann::json::array();
    for (const auto& g : c.initial_density.components)
        comps.push_back({{"weight", g.weight}, {"mean", {g.mean.x(), g.mean.y()}}, {"var", {g.var.x(), g.var.y()}}});
    return {
        {"L", c.L},
        {"nx", c.nx},
        {"ny", c.ny},
        {"D", c.D},
        {"potential", {{"a", c.potential_a}, {"b", c.potential_b}}},
        {"M", c.M},
        {"t0", c.t0},
        {"tf", c.tf},
        {"dt", c.dt},
        {"weights",
         {{"Q1", c.weights.Q1}, {"Q2", c.weights.Q2}, {"R1", c.weights.R1}, {"R2", c.weights.R2}, {"Qf", c.weights.Qf},
          {"Rf", c.weights.Rf}}},
        {"initial_guess", {{"u1", c.initial_u1}, {"u2", c.initial_u2}}},
        {"initial_density", comps},
        {"particles", c.particles},
        {"seed", c.seed},
        {"optimizer",
         {{"gtol", c.optimizer.gtol},
          {"max_iters", c.optimizer.max_iters},
          {"memory", c.optimizer.memory},
          {"multi_start", c.optimizer.multi_start}}},
        {"eigen",
         {{"cap", c.eigen.cap},
          {"dense_threshold", c.eigen.dense_threshold},
          {"max_lanczos", c.eigen.max_lanczos},
          {"tol", c.eigen.tol},
          {"shift", c.eigen.shift}}},
        {"flux_estimate",
         {{"coarse_nx", c.flux.coarse_nx},
          {"coarse_ny", c.flux.coarse_ny},
          {"window", c.flux.window},
          {"min_count", c.flux.min_count}}},
        {"pde", {{"scheme", c.crank_nicolson ? "crank_nicolson" : "backward_euler"}, {"snapshot_every", c.snapshot_every}}},
    };
}

/// Parses a config document. Missing keys keep their defaults; unknown keys are errors.
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    using detail::read_if;
    ExperimentConfig c;
    detail::check_keys(j,
                       {"L", "nx", "ny", "D", "potential", "M", "t0", "tf", "dt", "weights", "initial_guess",
                        "initial_density", "particles", "seed", "optimizer", "eigen", "flux_estimate", "pde"},
                       "config");
    read_if(j, "L", c.L);
    read_if(j, "nx", c.nx);
    read_if(j, "ny", c.ny);
    read_if(j, "D", c.D);
    read_if(j, "M", c.M);
    read_if(j, "t0", c.t0);
    read_if(j, "tf", c.tf);
    read_if(j, "dt", c.dt);
    read_if(j, "particles", c.particles);
    read_if(j, "seed", c.seed);
    if (j.contains("potential")) {
        const auto& p = j["potential"];
        detail::check_keys(p, {"a", "b"}, "potential");
        read_if(p, "a", c.potential_a);
        read_if(p, "b", c.potential_b);
    }
    if (j.contains("weights")) {
        const auto& w = j["weights"];
        detail::check_keys(w, {"Q1", "Q2", "R1", "R2", "Qf", "Rf"}, "weights");
        read_if(w, "Q1", c.weights.Q1);
        read_if(w, "Q2", c.weights.Q2);
        read_if(w, "R1", c.weights.R1);
        read_if(w, "R2", c.weights.R2);
        read_if(w, "Qf", c.weights.Qf);
        read_if(w, "Rf", c.weights.Rf);
    }
    if (j.contains("initial_guess")) {
        const auto& g = j["initial_guess"];
        detail::check_keys(g, {"u1", "u2"}, "initial_guess");
        read_if(g, "u1", c.initial_u1);
        read_if(g, "u2", c.initial_u2);
    }
    if (j.contains("initial_density")) {
        const auto& arr = j["initial_density"];
        if (!arr.is_array()) throw ConfigError("initial_density must be an array");
        c.initial_density.components.clear();
        for (const auto& comp : arr) {
            detail::check_keys(comp, {"weight", "mean", "var"}, "initial_density component");
            GaussianComponent g;
            std::vector<double> mean{0.0, 0.0}, var{1.0, 1.0};
            read_if(comp, "weight", g.weight);
            read_if(comp, "mean", mean);
            read_if(comp, "var", var);
            if (mean.size() != 2 || var.size() != 2) throw ConfigError("initial_density: mean and var need 2 entries");
            g.mean = Vec2(mean[0], mean[1]);
            g.var = Vec2(var[0], var[1]);
            c.initial_density.components.push_back(g);
        }
    }
    if (j.contains("optimizer")) {
        const auto& o = j["optimizer"];
        detail::check_keys(o, {"gtol", "max_iters", "memory", "multi_start"}, "optimizer");
        read_if(o, "gtol", c.optimizer.gtol);
        read_if(o, "max_iters", c.optimizer.max_iters);
        read_if(o, "memory", c.optimizer.memory);
        read_if(o, "multi_start", c.optimizer.multi_start);
    }
    if (j.contains("eigen")) {
        const auto& e = j["eigen"];
        detail::check_keys(e, {"cap", "dense_threshold", "max_lanczos", "tol", "shift"}, "eigen");
        read_if(e, "cap", c.eigen.cap);
        read_if(e, "dense_threshold", c.eigen.dense_threshold);
        read_if(e, "max_lanczos", c.eigen.max_lanczos);
        read_if(e, "tol", c.eigen.tol);
        read_if(e, "shift", c.eigen.shift);
    }
    if (j.contains("flux_estimate")) {
        const auto& f = j["flux_estimate"];
        detail::check_keys(f, {"coarse_nx", "coarse_ny", "window", "min_count"}, "flux_estimate");
        read_if(f, "coarse_nx", c.flux.coarse_nx);
        read_if(f, "coarse_ny", c.flux.coarse_ny);
        read_if(f, "window", c.flux.window);
        read_if(f, "min_count", c.flux.min_count);
    }
    if (j.contains("pde")) {
        const auto& p = j["pde"];
        detail::check_keys(p, {"scheme", "snapshot_every"}, "pde");
        std::string scheme = "backward_euler";
        read_if(p, "scheme", scheme);
        if (scheme != "backward_euler" && scheme != "crank_nicolson")
            throw ConfigError("pde.scheme must be backward_euler or crank_nicolson");
        c.crank_nicolson = scheme == "crank_nicolson";
        read_if(p, "snapshot_every", c.snapshot_every);
    }
    c.validate();
    return c;
}

/// Everything derived from a config: grid, quadrature, potential, rho_s,
/// shape functions, initial density and desired vorticity.
struct Problem {
    ExperimentConfig config;
    Grid2D grid;
    QuadratureWeights weights;
    Potential potential;
    double D = 1.0;
    StationaryDensity stationary;
    ScalarField rho_s;
    ShapeFunctions shapes;
    InitialDensitySpec initial;
    ScalarField rho0;
    ScalarField omega_d;
};

inline Problem build_problem(const ExperimentConfig& config) {
    config.validate();
    Problem p;
    p.config = config;
    p.grid = make_grid(config.L, config.nx, config.ny);
    p.weights = trapezoid_weights(p.grid);
    p.potential = Potential::quadratic(config.potential_a, config.potential_b);
    p.D = config.D;
    p.stationary = make_stationary_density(p.potential, p.D, p.weights);
    p.rho_s = stationary_density(p.potential, p.D, p.weights);
    p.shapes = reference_shapes(p.grid, p.stationary);
    p.initial = config.initial_density;
    p.rho0 = build_initial_density(p.initial, p.weights);
    p.omega_d = desired_vorticity(p.shapes);
    return p;
}

/// The configuration of the published experiment (all ExperimentConfig defaults).
inline Problem reference_problem() { return build_problem(ExperimentConfig{}); }

}  // namespace fpcirc
