#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "fpcirc.hpp"

namespace {

enum ExitCode { kOk = 0, kConfig = 1, kEigen = 2, kOptimizer = 3, kGate = 4 };

struct Args {
    std::string command;
    std::string config;
    std::string out = "out";
    std::optional<std::uint64_t> seed;
    std::optional<int> multi_start;
    std::optional<double> gtol;
    std::optional<int> max_iters;
    std::optional<int> snapshot_every;
    std::optional<std::string> golden;
    bool check_grad = false;
    bool dump_config = false;
};

int run(const Args& a) {
    fpcirc::ExperimentConfig config = a.config.empty() ? fpcirc::ExperimentConfig{} : fpcirc::load_config(a.config);
    if (a.seed) config.seed = *a.seed;
    if (a.multi_start) config.optimizer.multi_start = *a.multi_start;
    if (a.gtol) config.optimizer.gtol = *a.gtol;
    if (a.max_iters) config.optimizer.max_iters = *a.max_iters;
    if (a.snapshot_every) config.snapshot_every = *a.snapshot_every;
    config.validate();
    if (a.dump_config) {
        std::cout << fpcirc::to_json(config).dump(2) << '\n';
        return kOk;
    }

    fpcirc::RunOptions options;
    options.out = a.out;
    options.check_grad = a.check_grad;
    if (a.golden) options.golden = *a.golden;
    fpcirc::Pipeline pipeline(config, options);

    if (a.command == "eigen") {
        pipeline.cmd_eigen();
    } else if (a.command == "optimize") {
        pipeline.cmd_optimize();
    } else if (a.command == "validate") {
        pipeline.cmd_validate_or_throw();
    } else {
        pipeline.cmd_all();
    }
    pipeline.write_manifest(a.command);
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spectral optimal control of probability-flux circulation in a 2D Fokker-Planck system"};
    app.require_subcommand(1, 1);
    Args a;
    for (const char* name : {"eigen", "optimize", "validate", "all"}) {
        CLI::App* sub = app.add_subcommand(name);
        sub->add_option("--config", a.config, "JSON config; omitted keys take the reference values");
        sub->add_option("--out", a.out, "output directory")->capture_default_str();
        sub->add_option("--seed", a.seed, "particle and multi-start seed");
        sub->add_option("--multi-start", a.multi_start, "extra randomly perturbed optimizer starts");
        sub->add_option("--gtol", a.gtol, "optimizer gradient tolerance");
        sub->add_option("--max-iters", a.max_iters, "optimizer iteration cap");
        sub->add_option("--snapshot-every", a.snapshot_every, "write the PDE density every N steps");
        sub->add_option("--golden", a.golden, "golden metrics JSON compared in run_manifest.json");
        sub->add_flag("--check-grad", a.check_grad, "finite-difference check of the adjoint gradient");
        sub->add_flag("--dump-config", a.dump_config, "print the effective config and exit");
        sub->callback([&a, name] { a.command = name; });
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfig;
    }

    try {
        return run(a);
    } catch (const fpcirc::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    } catch (const fpcirc::EigenSolverError& e) {
        std::cerr << "eigensolver error: " << e.what() << '\n';
        return kEigen;
    } catch (const fpcirc::OptimizerError& e) {
        std::cerr << "optimizer error: " << e.what() << '\n';
        return kOptimizer;
    } catch (const fpcirc::GateFailure& e) {
        std::cerr << e.what() << '\n';
        return kGate;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kConfig;
    }
}
