#include <cstdio>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "kinlim/cli/report.hpp"

using namespace kinlim;
using namespace kinlim::cli;

namespace {

// Exit status: 0 success, 1 invalid input or fatal error, 3 some sweep points failed.
int execute(ExperimentSpec spec, const std::string& out, int threads) {
    spec.out_dir = out;
    const auto rep = run_experiment(spec, threads);
    const auto hash = write_report(spec, rep, out);
    std::cout << "experiment " << rep.kind << " -> " << out << " (config " << hash.substr(0, 12) << ")\n";
    for (const auto& [k, v] : rep.summary) std::cout << "  " << k << ": " << v << "\n";
    int failed = 0;
    for (const auto& p : rep.points)
        if (!p.ok) {
            ++failed;
            std::cerr << "point failed: " << p.label << ": " << p.error << "\n";
        }
    return failed ? 3 : 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"kinlim: Vlasov-Maxwell, Vlasov-Poisson and Vlasov-Darwin experiments"};
    app.require_subcommand(1);
    std::string config, out = "kinlim_out";
    int threads = std::max(1u, std::thread::hardware_concurrency());

    auto add_common = [&](CLI::App* sub, bool needs_config) {
        auto* c = sub->add_option("--config", config, "Run configuration file")->check(CLI::ExistingFile);
        if (needs_config) c->required();
        sub->add_option("--out", out, "Output directory")->capture_default_str();
        sub->add_option("--threads", threads, "Worker threads for sweep points")->check(CLI::PositiveNumber);
    };
    auto* penrose = app.add_subcommand("penrose", "Penrose stability scan of the configured equilibrium");
    add_common(penrose, true);
    auto* run = app.add_subcommand("run", "Single simulation of the [run] section");
    add_common(run, true);
    auto* sweep = app.add_subcommand("sweep", "Experiment named by experiment.kind");
    add_common(sweep, true);
    auto* report = app.add_subcommand("report", "Re-render plots and summary of an output directory");
    add_common(report, false);

    CLI11_PARSE(app, argc, argv);
    try {
        if (report->parsed()) {
            std::cout << regenerate_report(out);
            return 0;
        }
        auto spec = parse_config(config);
        if (penrose->parsed()) spec.kind = ExperimentKind::penrose_scan;
        if (run->parsed()) spec.kind = ExperimentKind::run;
        return execute(std::move(spec), out, threads);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
