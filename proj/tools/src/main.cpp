#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "commands.hpp"
#include "config.hpp"
#include "qcl/error.hpp"

namespace {

int run(int argc, char** argv) {
    using namespace qcl::cli;
    CLI::App app{"Quasiclassical Langevin simulations of damped harmonic oscillators"};
    app.require_subcommand(1);
    app.set_version_flag("--version", QCL_VERSION);

    std::string config_path;
    CommandOptions opt;
    std::uint64_t seed = 0;
    std::size_t traj = 0;
    unsigned threads = 0;
    std::string out = ".";

    auto common = [&](CLI::App* sub, bool needs_config) {
        auto* c = sub->add_option("--config", config_path, "Run configuration file");
        if (needs_config) c->required()->check(CLI::ExistingFile);
        sub->add_option("--out", out, "Output directory")->capture_default_str();
        sub->add_option("--seed", seed, "Master seed; overrides [simulation] master_seed");
        sub->add_option("--traj", traj, "Number of trajectories; overrides [simulation] n_traj");
        sub->add_option("--threads", threads, "Worker threads; default from QCL_THREADS or the core count")
            ->check(CLI::PositiveNumber);
    };
    auto* noise = app.add_subcommand("noise", "Synthesize force noise and check it against its target spectrum");
    auto* dynamics = app.add_subcommand("dynamics", "Ensemble moments against the exact transient");
    auto* steady = app.add_subcommand("steady", "Steady-state covariance sweep by independent routes");
    auto* network = app.add_subcommand("network", "Heat currents through a harmonic network");
    auto* verify = app.add_subcommand("verify", "Run the built-in cross-check suite");
    for (auto* s : {noise, dynamics, steady, network}) common(s, true);
    common(verify, false);
    verify->add_option("--tolerance-scale", opt.tolerance_scale, "Multiply every check tolerance")
        ->check(CLI::NonNegativeNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    CLI::App* sub = app.get_subcommands().front();
    opt.out = out;
    if (sub->count("--seed")) opt.seed = seed;
    if (sub->count("--traj")) opt.traj = traj;
    if (sub->count("--threads")) opt.threads = threads;

    if (sub == verify) return cmd_verify(opt, std::cout);
    const RunConfig cfg = load_config(config_path);
    if (sub == noise) return cmd_noise(cfg, opt, std::cout);
    if (sub == dynamics) return cmd_dynamics(cfg, opt, std::cout);
    if (sub == steady) return cmd_steady(cfg, opt, std::cout);
    return cmd_network(cfg, opt, std::cout);
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const qcl::NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << " (achieved error " << e.achieved_error() << ")\n";
        return 2;
    } catch (const qcl::InstabilityError& e) {
        std::cerr << "unstable configuration: " << e.what() << '\n';
        return 2;
    } catch (const qcl::DegeneratePoleError& e) {
        std::cerr << "degenerate poles: " << e.what() << '\n';
        return 2;
    } catch (const qcl::SingularityError& e) {
        std::cerr << "singular system: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
