// Batch front-end: rbsde-lab run <config> | validate <config> | list-instances
#include "rbsde/experiment.hpp"
#include "rbsde/problem_model.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kNumerical = 3, kIo = 4 };

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> output;
};

rbsde::ExperimentConfig read_config(const std::string& path, const Overrides& ov) {
    std::ifstream in(path);
    if (!in) throw rbsde::IoError("cannot read config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    rbsde::ExperimentConfig config = rbsde::parse_config(ss.str());
    if (ov.seed && config.mc) config.mc->seed = *ov.seed;
    if (ov.output) config.output.directory = *ov.output;
    return config;
}

void print_metrics(const rbsde::ResultRecord& record) {
    std::cout << "experiment " << record.experiment << " (config " << record.config_digest << ")\n";
    std::cout.precision(10);
    for (const auto& [name, value] : record.metrics) std::cout << "  " << name << " = " << value << '\n';
    if (record.schedule && record.schedule->values.size() >= 2) {
        std::cout << rbsde::emit_convergence_table(record).text;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Reflected BSDE and obstacle Isaacs equation lab"};
    app.require_subcommand(1);
    app.fallthrough();

    Overrides ov;
    int threads = 0;
    std::uint64_t seed = 0;
    std::string output;
    auto* seed_opt = app.add_option("--seed", seed, "Override the Monte Carlo seed");
    auto* out_opt = app.add_option("--output", output, "Override the output directory");
    app.add_option("--threads", threads, "Upper bound on worker threads (0 = runtime default)")
        ->check(CLI::NonNegativeNumber);

    std::string config_path;
    auto* run_cmd = app.add_subcommand("run", "Run the experiment described by a config file");
    run_cmd->add_option("config", config_path, "Config file (JSON)")->required();
    auto* validate_cmd = app.add_subcommand("validate", "Check a config file and its instance without running");
    validate_cmd->add_option("config", config_path, "Config file (JSON)")->required();
    auto* list_cmd = app.add_subcommand("list-instances", "List builtin instances and their parameters");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfig;
    }
    if (*seed_opt) ov.seed = seed;
    if (*out_opt) ov.output = output;
    if (threads > 0) rbsde::set_thread_limit(threads);

    try {
        if (*list_cmd) {
            for (const auto& name : rbsde::builtin_instance_names()) {
                std::cout << name;
                for (const auto& [k, v] : rbsde::builtin_defaults(name)) std::cout << ' ' << k << '=' << v;
                std::cout << '\n';
            }
            std::cout << "experiments:";
            for (const auto& e : rbsde::experiment_names()) std::cout << ' ' << e;
            std::cout << '\n';
            return kOk;
        }
        const rbsde::ExperimentConfig config = read_config(config_path, ov);
        if (*validate_cmd) {
            const rbsde::GameInstance instance = rbsde::make_instance(config);
            const rbsde::ValidationReport report = rbsde::validate_instance(instance, 64, 0);
            if (config.grid) {
                const rbsde::SpaceTimeGrid grid = rbsde::make_grid(config, instance);
                const rbsde::CflReport cfl = rbsde::check_cfl(instance, grid);
                std::cout << "grid nt=" << grid.nt() << " (minimum " << cfl.min_steps << ")"
                          << (cfl.satisfied ? "" : " violates the stability bound") << '\n';
                if (!cfl.satisfied) {
                    std::cerr << "error: nt=" << grid.nt() << " below the stability minimum " << cfl.min_steps
                              << '\n';
                    return kNumerical;
                }
            }
            for (const auto& v : report.violations) {
                std::cout << "warning: " << v.assumption << " observed " << v.observed << '\n';
            }
            std::cout << "config ok, digest " << rbsde::config_digest(config) << '\n';
            return kOk;
        }
        const rbsde::ResultRecord record = rbsde::run(config);
        print_metrics(record);
        std::cout << "results written to " << config.output.directory.string() << '\n';
        return kOk;
    } catch (const rbsde::CflError& e) {
        std::cerr << "error: " << e.what() << " (minimum nt " << e.required_steps() << ")\n";
        return kNumerical;
    } catch (const rbsde::ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kConfig;
    } catch (const rbsde::IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kIo;
    } catch (const rbsde::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kNumerical;
    }
}
