#include "mudich/errors.hpp"
#include "mudich/scenario.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <string>

int main(int argc, char** argv) {
    CLI::App app{"mudich: mu-dichotomy spectra, nonresonance checking and constructive "
                 "normal forms for nonautonomous systems"};
    app.require_subcommand(1);

    std::string scenario_path;
    mudich::RunFlags flags;

    const std::pair<const char*, const char*> commands[] = {
        {"spectrum", "Scan the dichotomy spectrum over the configured window"},
        {"resonance", "Check the nonresonance conditions up to the configured order"},
        {"eliminate", "Eliminate one (j, k) Taylor term by the conjugation H = id + h"},
        {"normal-form", "Iterate eliminations over all orders up to ell"},
        {"verify", "Run the equivalence verification battery on one elimination"},
        {"nonuniform-report", "Emit the eta/trumpet-shrinkage diagnostics"},
    };
    for (const auto& [name, desc] : commands) {
        auto* sub = app.add_subcommand(name, desc);
        sub->add_option("--scenario", scenario_path, "Scenario file (JSON)")
            ->required()
            ->envname("MUDICH_SCENARIO")
            ->check(CLI::ExistingFile);
        sub->add_option("--out", flags.out_dir, "Output directory for report.json and CSV series")
            ->envname("MUDICH_OUT");
        sub->add_option("--seed", flags.seed, "Seed of the sampled invariant checks")
            ->envname("MUDICH_SEED");
        sub->add_option("--tol-profile", flags.tol_profile, "fast | accurate")
            ->envname("MUDICH_TOL_PROFILE");
        sub->add_flag("--fixed-clock", flags.fixed_clock,
                      "Omit the timestamp so identical runs emit identical reports")
            ->envname("MUDICH_FIXED_CLOCK");
    }

    CLI11_PARSE(app, argc, argv);

    try {
        const auto scenario = mudich::load_scenario(scenario_path);
        return mudich::run_command(app.get_subcommands().front()->get_name(), scenario, flags);
    } catch (const mudich::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "fatal: " << e.what() << "\n";
        return 4;
    }
}
