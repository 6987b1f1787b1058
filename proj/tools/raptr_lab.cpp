#include "raptr/experiments.hpp"

#include "CLI11.hpp"

#include <fstream>
#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"raptr-lab: subnetwork training experiments"};
    app.require_subcommand(1);

    std::string config_path;
    auto* run = app.add_subcommand("run", "Run the experiment described by a JSON config");
    run->add_option("config", config_path, "Path to the config file")->required();

    std::vector<std::string> dirs;
    std::string output;
    auto* compare = app.add_subcommand("compare", "Tabulate completed boolpoly_train runs as CSV");
    compare->add_option("dirs", dirs, "Run directories")->required();
    compare->add_option("-o,--output", output, "Write the table to this file instead of stdout");

    auto* selftest = app.add_subcommand("selftest", "Gradient checks, shared-base equivalence, h_sqrt invariants");

    std::string defaults_for;
    auto* defaults = app.add_subcommand("defaults", "Print the fully populated default config of an experiment");
    defaults->add_option("experiment", defaults_for, "Experiment name")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : raptr::kExitUsage;
    }

    if (*run) return raptr::run_config_file(config_path, std::cout);

    if (*compare) {
        try {
            std::vector<std::filesystem::path> paths(dirs.begin(), dirs.end());
            if (output.empty()) {
                raptr::compare_runs(paths, std::cout);
            } else {
                std::ofstream f(output);
                if (!f) {
                    std::cerr << "cannot write " << output << "\n";
                    return raptr::kExitIoError;
                }
                raptr::compare_runs(paths, f);
            }
        } catch (const raptr::IncompatibleRuns& e) {
            std::cerr << "incompatible runs: " << e.what() << "\n";
            return raptr::kExitIncompatibleRuns;
        } catch (const std::exception& e) {
            std::cerr << "compare failed: " << e.what() << "\n";
            return raptr::kExitIoError;
        }
        return raptr::kExitOk;
    }

    if (*selftest) return raptr::run_selftest(std::cout);

    if (*defaults) {
        try {
            std::cout << raptr::default_config(defaults_for).dump(2) << "\n";
        } catch (const raptr::ConfigError& e) {
            std::cerr << e.what() << "\n";
            return raptr::kExitConfigError;
        }
    }
    return raptr::kExitOk;
}
