#pragma once

// The batch workflow behind the command-line tool. Every stage writes its
// artifacts under one output directory; the basis and the optimized controls
// are cached there, keyed by the hash of the config fields they depend on.

#include <Eigen/Core>
#include <nlohmann/json.hpp>
#include <openssl/crypto.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "fpcirc/digest.hpp"
#include "fpcirc/particle_sim.hpp"
#include "fpcirc/pde_solver.hpp"

namespace fpcirc {

inline constexpr const char* kVersion = "1.0.0";

/// Raised after validation artifacts are written when a gate fails.
class GateFailure : public Error {
public:
    GateFailure(const std::string& what, std::vector<std::string> gates) : Error(what), gates_(std::move(gates)) {}
    const std::vector<std::string>& gates() const noexcept { return gates_; }

private:
    std::vector<std::string> gates_;
};

struct RunOptions {
    std::filesystem::path out = "out";
    bool check_grad = false;
    /// JSON object mapping metric name to a number or {"value": x, "rel_tol": r}.
    std::optional<std::filesystem::path> golden;
    std::ostream* log = &std::cout;
};

namespace detail {

inline nlohmann::json subset(const nlohmann::json& j, std::initializer_list<const char*> keys) {
    nlohmann::json out = nlohmann::json::object();
    for (const char* k : keys) out[k] = j.at(k);
    return out;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path);
    if (!os) throw Error("cannot open " + path.string() + " for writing");
    return os;
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot open " + path.string());
    try {
        return nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
        throw Error(path.string() + ": " + e.what());
    }
}

inline double seconds_since(std::chrono::steady_clock::time_point t) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

}  // namespace detail

inline std::string config_hash(const ExperimentConfig& c) { return sha256_hex(to_json(c).dump()); }

/// Fields that determine the spectral basis.
inline std::string basis_key(const ExperimentConfig& c) {
    return sha256_hex(detail::subset(to_json(c), {"L", "nx", "ny", "D", "potential", "M", "eigen"}).dump());
}

/// Fields that determine the optimized controls.
inline std::string controls_key(const ExperimentConfig& c) {
    return sha256_hex(detail::subset(to_json(c), {"L", "nx", "ny", "D", "potential", "M", "eigen", "t0", "tf", "dt",
                                                  "weights", "initial_guess", "initial_density", "optimizer"})
                          .dump());
}

inline void write_reduced_trajectory_csv(const std::filesystem::path& path, const StateTrajectory& C,
                                         const ControlTrajectory& U) {
    auto os = detail::open_output(path);
    os << csv_precision << 't';
    for (Eigen::Index m = 0; m < C.rows(); ++m) os << ",c" << m;
    os << '\n';
    for (Eigen::Index k = 0; k < C.cols(); ++k) {
        os << U.time(static_cast<int>(k));
        for (Eigen::Index m = 0; m < C.rows(); ++m) os << ',' << C(m, k);
        os << '\n';
    }
}

struct GateResult {
    std::string name;
    bool pass = false;
    double value = 0.0;
    double threshold = 0.0;
    std::string condition;
};

inline nlohmann::json to_json(const GateResult& g) {
    return {{"name", g.name}, {"pass", g.pass}, {"value", g.value}, {"threshold", g.threshold}, {"condition", g.condition}};
}

struct ValidationSummary {
    std::vector<GateResult> gates;
    nlohmann::json informational = nlohmann::json::object();

    bool passed() const {
        return std::all_of(gates.begin(), gates.end(), [](const GateResult& g) { return g.pass; });
    }
};

class Pipeline {
public:
    Pipeline(ExperimentConfig config, RunOptions options) : config_(std::move(config)), opt_(std::move(options)) {
        config_.validate();
        std::filesystem::create_directories(opt_.out);
    }

    const ExperimentConfig& config() const noexcept { return config_; }
    const nlohmann::json& metrics() const noexcept { return metrics_; }

    const Problem& problem() {
        if (!problem_) {
            const auto t = std::chrono::steady_clock::now();
            problem_ = build_problem(config_);
            const ShapeBcReport bc = validate_shape_bcs(problem_->shapes);
            residuals_["shape_bc"] = {{"alpha_normal_max", bc.alpha_normal_max},
                                      {"phi_normal_max", bc.phi_normal_max},
                                      {"tolerance", bc.tolerance}};
            if (!bc.alpha_ok)
                log() << "note: alpha violates its Neumann condition (max |d_n alpha| = " << bc.alpha_normal_max
                      << "); the control operator is conservative regardless\n";
            timings_["problem_s"] = detail::seconds_since(t);
        }
        return *problem_;
    }

    const DiscreteGenerator& generator() {
        if (!generator_) {
            const auto t = std::chrono::steady_clock::now();
            const Problem& p = problem();
            generator_ = assemble_generator(p.potential, p.D, p.grid);
            residuals_["generator"] = {{"selfadjointness", selfadjointness_report(generator_->K, p.rho_s, p.weights)},
                                       {"mass_defect", mass_defect(generator_->K, p.weights)}};
            timings_["generator_s"] = detail::seconds_since(t);
        }
        return *generator_;
    }

    /// Loads the cached basis when its key matches, otherwise solves and caches it.
    const SpectralBasis& basis() {
        if (basis_) return *basis_;
        const auto t = std::chrono::steady_clock::now();
        const std::filesystem::path dir = opt_.out / "basis";
        const std::string key = basis_key(config_);
        bool cached = false;
        if (std::filesystem::exists(dir / "manifest.json")) {
            const nlohmann::json man = detail::read_json(dir / "manifest.json");
            if (man.value("basis_key", "") == key) {
                basis_ = load_basis(dir);
                cached = true;
                log() << "reusing cached basis in " << dir.string() << '\n';
            }
        }
        if (!cached) {
            const Problem& p = problem();
            const EigenSettings& e = config_.eigen;
            basis_ = eigenbasis(generator(), p.rho_s, p.weights, config_.M, e.cap, e.dense_threshold, e.max_lanczos,
                                e.tol, e.shift);
            save_basis(dir, *basis_,
                       {{"basis_key", key},
                        {"D", config_.D},
                        {"potential", {{"a", config_.potential_a}, {"b", config_.potential_b}}}});
        }
        const SpectralBasis& b = *basis_;
        const Eigen::MatrixXd gram = b.gram();
        residuals_["eigen"] = {{"solver", b.solver},
                               {"iterations", b.iterations},
                               {"cached", cached},
                               {"max_residual", b.residuals.cwiseAbs().maxCoeff()},
                               {"gram_error", (gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff()}};
        for (int m = 0; m < std::min(3, b.size()); ++m) metrics_["lambda_" + std::to_string(m)] = b.eigenvalues[m];
        timings_["eigen_s"] = detail::seconds_since(t);
        return b;
    }

    const ReducedModel& model() {
        if (!model_) {
            const auto t = std::chrono::steady_clock::now();
            const Problem& p = problem();
            model_ = assemble_reduced_model(basis(), p.shapes, p.potential, p.D, p.omega_d);
            timings_["reduction_s"] = detail::seconds_since(t);
        }
        return *model_;
    }

    Eigen::VectorXd initial_coefficients() { return project(problem().rho0, basis()); }

    ControlTrajectory initial_guess() const {
        return ControlTrajectory::constant(config_.t0, config_.tf, config_.dt, config_.initial_u1, config_.initial_u2);
    }

    /// Optimized controls, from the cache when controls.csv was produced for the same key.
    const ControlTrajectory& controls() {
        if (controls_) return *controls_;
        const std::filesystem::path report = opt_.out / "report.json", csv = opt_.out / "controls.csv";
        if (std::filesystem::exists(report) && std::filesystem::exists(csv) &&
            detail::read_json(report).value("controls_key", "") == controls_key(config_)) {
            controls_ = read_controls_csv(csv, config_.t0, config_.tf, config_.dt);
            log() << "reusing cached controls in " << csv.string() << '\n';
            return *controls_;
        }
        cmd_optimize();
        return *controls_;
    }

    void cmd_eigen() {
        const SpectralBasis& b = basis();
        const Problem& p = problem();
        write_field_csv(opt_.out / "fig1_rho_s.csv", p.rho_s);
        write_field_csv(opt_.out / "fig2_omega_d.csv", p.omega_d);
        log() << "  m        lambda_m      residual\n";
        for (int m = 0; m < b.size(); ++m) {
            char line[96];
            std::snprintf(line, sizeof line, "%3d  %14.8f  %12.3e\n", m, b.eigenvalues[m], b.residuals[m]);
            log() << line;
        }
        log() << "solver: " << b.solver << ", gram error " << residuals_["eigen"]["gram_error"].get<double>() << '\n';
    }

    void cmd_optimize() {
        const ReducedModel& r = model();
        const Eigen::VectorXd c0 = initial_coefficients();
        const ControlTrajectory U0 = initial_guess();
        const CostWeights& w = config_.weights;
        std::ofstream(opt_.out / "reduced_model.json") << to_json(r).dump(1) << '\n';

        nlohmann::json report = nlohmann::json::object();
        if (opt_.check_grad) {
            const GradientCheck gc = check_gradient(r, c0, U0, w, 20, 1e-6, config_.seed);
            log() << "gradient check: max relative error " << std::setprecision(3) << std::scientific
                  << gc.max_relative_error << std::defaultfloat << std::setprecision(6) << " over "
                  << gc.relative_errors.size() << " directions\n";
            report["gradient_check"] = {{"max_relative_error", gc.max_relative_error},
                                        {"relative_errors", gc.relative_errors}};
            metrics_["gradient_check_max_relative_error"] = gc.max_relative_error;
        }
        const auto t = std::chrono::steady_clock::now();
        const int extra = config_.optimizer.multi_start;
        const OptimizationResult res = extra > 0
                                           ? optimize_multistart(r, c0, U0, w, config_.optimizer, extra, config_.seed)
                                           : optimize(r, c0, U0, w, config_.optimizer);
        timings_["optimize_s"] = detail::seconds_since(t);
        controls_ = res.controls;

        const ControlTrajectory& U = *controls_;
        const StateTrajectory C = rollout_state(r, c0, U);
        write_controls_csv(opt_.out / "controls.csv", U);
        write_reduced_trajectory_csv(opt_.out / "reduced_trajectory.csv", C, U);
        const ObjectiveTerms terms = objective_terms(r, C, U, w);
        report["optimization"] = to_json(res.report);
        report["objective_terms"] = {{"state", terms.state},
                                     {"vorticity", terms.vorticity},
                                     {"input", terms.input},
                                     {"terminal", terms.terminal}};
        report["controls_key"] = controls_key(config_);
        report["config_hash"] = config_hash(config_);
        report["multi_start"] = extra;
        std::ofstream(opt_.out / "report.json") << report.dump(1) << '\n';

        metrics_["final_objective"] = res.report.final_objective;
        metrics_["stationarity_residual"] = res.report.stationarity;
        log() << "objective " << std::setprecision(12) << res.report.initial_objective << " -> "
              << res.report.final_objective << std::setprecision(6) << " in " << res.report.iterations
              << " iterations (" << res.report.status << "), stationarity " << res.report.stationarity << '\n';
        log() << "u1(t0) = " << U.u1[0] << ", u1(tf) = " << U.u1[U.K() - 1] << ", u2(tf) = " << U.u2[U.K() - 1]
              << '\n';
    }

    ValidationSummary cmd_validate() {
        const Problem& p = problem();
        const ControlTrajectory& U = controls();
        const ControlTrajectory Uz = ControlTrajectory::constant(config_.t0, config_.tf, config_.dt, 0.0, 0.0);
        const SpectralBasis& b = basis();
        const ReducedModel& r = model();
        const Eigen::VectorXd c0 = initial_coefficients();
        const StateTrajectory C = rollout_state(r, c0, U);
        const ControlledOperator op = make_controlled_operator(generator(), p.shapes, p.rho_s);
        const DriftModel drift = make_drift_model(p);
        const TimeScheme scheme = config_.crank_nicolson ? TimeScheme::CrankNicolson : TimeScheme::BackwardEuler;
        const double e_init =
            weighted_norm(ScalarField(p.grid, p.rho0.values - p.rho_s.values), p.rho_s, p.weights);

        auto t = std::chrono::steady_clock::now();
        std::vector<double> consistency;
        const int every = config_.snapshot_every;
        if (every > 0) std::filesystem::create_directories(opt_.out / "snapshots");
        const FpeRun opt_run = integrate_fpe(op, drift, p.omega_d, p.rho0, U, scheme,
                                             [&](int k, double, const ScalarField& rho) {
                                                 const ScalarField diff(p.grid, reconstruct(C.col(k), b).values - rho.values);
                                                 consistency.push_back(weighted_norm(diff, p.rho_s, p.weights) / e_init);
                                                 if (every > 0 && k % every == 0) {
                                                     char name[40];
                                                     std::snprintf(name, sizeof name, "rho_%04d.csv", k);
                                                     write_field_csv(opt_.out / "snapshots" / name, rho);
                                                 }
                                             });
        const FpeRun zero_run = integrate_fpe(op, drift, p.omega_d, p.rho0, Uz, scheme);
        timings_["pde_s"] = detail::seconds_since(t);
        {
            auto os = detail::open_output(opt_.out / "diagnostics_optimized.csv");
            write_diagnostics_csv(os, opt_run.diagnostics);
        }
        {
            auto os = detail::open_output(opt_.out / "diagnostics_uncontrolled.csv");
            write_diagnostics_csv(os, zero_run.diagnostics);
        }
        {
            auto os = detail::open_output(opt_.out / "reduced_vs_full.csv");
            os << csv_precision << "t,relative_error\n";
            for (std::size_t k = 0; k < consistency.size(); ++k)
                os << U.time(static_cast<int>(k)) << ',' << consistency[k] << '\n';
        }

        t = std::chrono::steady_clock::now();
        const ParticleDrift pdrift = make_particle_drift(p);
        const SimulationSettings sim{config_.flux.coarse_nx, config_.flux.coarse_ny, config_.flux.window,
                                     config_.flux.min_count};
        const auto N = static_cast<std::size_t>(config_.particles);
        ParticleEnsemble ens = sample_initial(p.initial, N, config_.seed, p.grid.L, config_.t0);
        const FluxEstimate flux_opt = simulate(ens, U, pdrift, sim);
        ParticleEnsemble ens_zero = sample_initial(p.initial, N, config_.seed, p.grid.L, config_.t0);
        const FluxEstimate flux_zero = simulate(ens_zero, Uz, pdrift, sim);
        timings_["particles_s"] = detail::seconds_since(t);
        {
            auto os = detail::open_output(opt_.out / "flux_estimate.csv");
            write_flux_csv(os, flux_opt);
        }
        {
            auto os = detail::open_output(opt_.out / "flux_estimate_uncontrolled.csv");
            write_flux_csv(os, flux_zero);
        }
        const TvComparison tv = compare_with_pde(flux_opt, opt_run.final_density);

        const DiagnosticsSeries& dopt = opt_run.diagnostics;
        const DiagnosticsSeries& dzero = zero_run.diagnostics;
        double mass_dev = 0.0;
        for (const DiagnosticsSeries* d : {&dopt, &dzero})
            for (double m : d->mass) mass_dev = std::max(mass_dev, std::abs(m - 1.0));

        ValidationSummary s;
        s.gates.push_back({"e_rho_improvement", dopt.e_rho.back() < dzero.e_rho.back(), dopt.e_rho.back(),
                           dzero.e_rho.back(), "optimized e_rho(tf) < uncontrolled e_rho(tf)"});
        s.gates.push_back({"mass_conservation", mass_dev <= 1e-10, mass_dev, 1e-10, "max |mass - 1| <= threshold"});
        s.gates.push_back({"clockwise_circulation", flux_opt.am_z() <= -5.0, flux_opt.am_z(), -5.0,
                           "angular-momentum z under optimized controls <= threshold"});
        s.gates.push_back({"uncontrolled_circulation_null", std::abs(flux_zero.am_z()) <= 3.0, flux_zero.am_z(), 3.0,
                           "|angular-momentum z| under U = 0 <= threshold"});
        s.gates.push_back({"particle_pde_agreement", tv.pass(3.0), tv.tv, 3.0 * tv.budget(),
                           "total variation to the PDE density <= 3 x (Monte Carlo + binning budget)"});

        // e_omega at t0 when the circulation is switched on at full strength
        const ScalarField omega_start = compute_vorticity(compute_flux(p.rho0, 0.0, 1.0, drift));
        const double e_omega_start =
            weighted_norm(ScalarField(p.grid, omega_start.values - p.omega_d.values), p.rho_s, p.weights);
        const double slope = log_slope(dzero, config_.t0 + 0.3 * (config_.tf - config_.t0));
        const double consistency_max = *std::max_element(consistency.begin(), consistency.end());
        double consistency_after_start = 0.0;
        for (std::size_t k = 1; k < consistency.size(); ++k)
            consistency_after_start = std::max(consistency_after_start, consistency[k]);
        int violations = 0;
        double wall = 0.0, stencil = 0.0, min_density = dopt.min_density.front();
        for (const DiagnosticsSeries* d : {&dopt, &dzero}) {
            violations += static_cast<int>(d->positivity_violations.size());
            for (double v : d->boundary_flux) wall = std::max(wall, v);
            for (double v : d->stencil_boundary_flux) stencil = std::max(stencil, v);
            for (double v : d->min_density) min_density = std::min(min_density, v);
        }
        s.informational = {{"uncontrolled_log_slope", slope},
                           {"lambda_1", b.size() > 1 ? b.eigenvalues[1] : 0.0},
                           {"reduced_full_max_relative_error", consistency_max},
                           {"reduced_full_max_relative_error_after_t0", consistency_after_start},
                           {"e_omega_optimized", {{"t0", dopt.e_omega.front()}, {"tf", dopt.e_omega.back()}}},
                           {"e_omega_t0_circulation_on", e_omega_start},
                           {"e_omega_ratio", dopt.e_omega.back() / e_omega_start},
                           {"e_omega_uncontrolled", {{"t0", dzero.e_omega.front()}, {"tf", dzero.e_omega.back()}}},
                           {"angular_momentum",
                            {{"optimized", {{"mean", flux_opt.am_mean}, {"stderr", flux_opt.am_stderr}, {"count", flux_opt.am_count}}},
                             {"uncontrolled",
                              {{"mean", flux_zero.am_mean}, {"stderr", flux_zero.am_stderr}, {"count", flux_zero.am_count}}}}},
                           {"total_variation",
                            {{"tv", tv.tv}, {"monte_carlo_budget", tv.monte_carlo_budget}, {"binning_budget", tv.binning_budget}}},
                           {"positivity_violations", violations},
                           {"min_density", min_density},
                           {"wall_flux_relative_max", wall},
                           {"stencil_wall_flux_relative_max", stencil},
                           {"factorizations", {{"optimized", dopt.factorizations}, {"uncontrolled", dzero.factorizations}}}};

        metrics_["e_rho_tf_optimized"] = dopt.e_rho.back();
        metrics_["e_rho_tf_uncontrolled"] = dzero.e_rho.back();
        metrics_["uncontrolled_log_slope"] = slope;
        metrics_["reduced_full_max_relative_error"] = consistency_max;
        metrics_["angular_momentum_z_optimized"] = flux_opt.am_z();
        metrics_["angular_momentum_z_uncontrolled"] = flux_zero.am_z();
        metrics_["total_variation"] = tv.tv;
        metrics_["e_omega_ratio"] = dopt.e_omega.back() / e_omega_start;

        nlohmann::json gates = nlohmann::json::array();
        for (const GateResult& g : s.gates) gates.push_back(to_json(g));
        std::ofstream(opt_.out / "validation.json")
            << nlohmann::json{{"gates", gates}, {"passed", s.passed()}, {"informational", s.informational}}.dump(1)
            << '\n';

        for (const GateResult& g : s.gates)
            log() << (g.pass ? "PASS " : "FAIL ") << g.name << ": " << g.value << " (" << g.condition << ", threshold "
                  << g.threshold << ")\n";
        log() << "info uncontrolled log-slope " << slope << ", reduced/full max relative error " << consistency_max
              << " (" << consistency_after_start << " after t0)\n";
        return s;
    }

    /// Runs validation and raises GateFailure once every artifact is on disk.
    void cmd_validate_or_throw() {
        const ValidationSummary s = cmd_validate();
        if (s.passed()) return;
        std::vector<std::string> failed;
        std::string names;
        for (const GateResult& g : s.gates)
            if (!g.pass) {
                failed.push_back(g.name);
                names += (names.empty() ? "" : ", ") + g.name;
            }
        write_manifest("validate");
        throw GateFailure("validation gate failed: " + names, failed);
    }

    void cmd_all() {
        cmd_eigen();
        cmd_optimize();
        cmd_validate_or_throw();
    }

    /// Compares the collected metrics against the golden file, if one was given.
    nlohmann::json golden_comparisons() const {
        nlohmann::json out = nlohmann::json::array();
        if (!opt_.golden) return out;
        const nlohmann::json golden = detail::read_json(*opt_.golden);
        for (const auto& [name, spec] : golden.items()) {
            const double expected = spec.is_object() ? spec.at("value").get<double>() : spec.get<double>();
            const double rel_tol = spec.is_object() ? spec.value("rel_tol", 1e-6) : 1e-6;
            nlohmann::json row{{"metric", name}, {"expected", expected}, {"rel_tol", rel_tol}};
            if (!metrics_.contains(name)) {
                row["actual"] = nullptr;
                row["pass"] = false;
            } else {
                const double actual = metrics_[name].get<double>();
                const double rel = std::abs(actual - expected) / std::max(std::abs(expected), 1e-300);
                row["actual"] = actual;
                row["relative_error"] = rel;
                row["pass"] = rel <= rel_tol;
            }
            out.push_back(row);
        }
        return out;
    }

    /// run_manifest.json: every file under the output directory with its SHA-256.
    void write_manifest(const std::string& command) {
        namespace fs = std::filesystem;
        std::vector<fs::path> files;
        for (const auto& entry : fs::recursive_directory_iterator(opt_.out))
            if (entry.is_regular_file() && entry.path().filename() != "run_manifest.json") files.push_back(entry.path());
        std::sort(files.begin(), files.end());
        nlohmann::json listed = nlohmann::json::array();
        for (const fs::path& f : files)
            listed.push_back({{"path", fs::relative(f, opt_.out).generic_string()},
                              {"sha256", sha256_file(f)},
                              {"bytes", fs::file_size(f)}});
        const nlohmann::json golden = golden_comparisons();
        nlohmann::json man{
            {"command", command},
            {"config_hash", config_hash(config_)},
            {"config", to_json(config_)},
            {"files", listed},
            {"versions",
             {{"fpcirc", kVersion},
              {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                            std::to_string(EIGEN_MINOR_VERSION)},
              {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                    std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                    std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
              {"openssl", OpenSSL_version(OPENSSL_VERSION)},
              {"compiler", __VERSION__}}},
            {"threads", worker_threads()},
            {"timings_s", timings_},
            {"residuals", residuals_},
            {"metrics", metrics_},
            {"golden", golden}};
        std::ofstream(opt_.out / "run_manifest.json") << man.dump(1) << '\n';
        for (const auto& row : golden)
            if (!row["pass"].get<bool>()) log() << "golden mismatch: " << row["metric"].get<std::string>() << '\n';
    }

private:
    std::ostream& log() { return *opt_.log; }

    ExperimentConfig config_;
    RunOptions opt_;
    std::optional<Problem> problem_;
    std::optional<DiscreteGenerator> generator_;
    std::optional<SpectralBasis> basis_;
    std::optional<ReducedModel> model_;
    std::optional<ControlTrajectory> controls_;
    nlohmann::json timings_ = nlohmann::json::object();
    nlohmann::json residuals_ = nlohmann::json::object();
    nlohmann::json metrics_ = nlohmann::json::object();
};

/// Reads and validates a config file.
inline ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

}  // namespace fpcirc
