#pragma once

// JSON-configured experiments behind the raptr-lab command line.

#include "json.hpp"

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace raptr {

using Json = nlohmann::ordered_json;

enum ExitCode : int {
    kExitOk = 0,
    /// The experiment ran but a built-in check failed (selftest, sharedbase tolerance).
    kExitCheckFailed = 1,
    kExitConfigError = 2,
    kExitDivergence = 3,
    kExitInfeasibleSchedule = 4,
    kExitIoError = 5,
    kExitIncompatibleRuns = 6,
    kExitUsage = 64,
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IncompatibleRuns : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Names accepted by the `experiment` key.
const std::vector<std::string>& experiment_names();

/// Fully populated default document for one experiment.
Json default_config(const std::string& experiment);

class ExperimentConfig {
public:
    /// Merges `user` over the defaults of its `experiment`. Unknown keys, wrong value
    /// types and out-of-range choices raise ConfigError.
    static ExperimentConfig parse(const Json& user);
    static ExperimentConfig load(const std::filesystem::path& path);

    const Json& doc() const noexcept { return doc_; }
    std::string experiment() const { return doc_.at("experiment").get<std::string>(); }
    std::uint64_t seed() const { return doc_.at("seed").get<std::uint64_t>(); }
    std::filesystem::path output_dir() const { return doc_.at("output_dir").get<std::string>(); }
    /// Copy with a different seed and output directory (replica fan-out).
    ExperimentConfig with_seed(std::uint64_t seed, const std::filesystem::path& dir) const;
    /// FNV-1a of the compact serialized document, as 16 hex digits.
    std::string hash() const;

private:
    explicit ExperimentConfig(Json doc) : doc_(std::move(doc)) {}
    Json doc_;
};

struct RunOutcome {
    int exit_code = kExitOk;
    std::string message;
    /// Experiment-specific headline numbers, also written to summary.json.
    Json summary;
};

/// Runs one replica and writes manifest.json, summary.json and the experiment CSVs into
/// the configured output directory. Progress lines go to `log`.
RunOutcome run_experiment(const ExperimentConfig& cfg, std::ostream& log);

/// Runs all replicas of a config (seed, seed + 1, ...) with at most
/// RAPTR_LAB_THREADS concurrent workers. With more than one replica each gets
/// output_dir/seed_<s> and a replicas.csv aggregate is written in seed order.
int run_config(const ExperimentConfig& cfg, std::ostream& log);

/// Loads `path` and runs it, mapping every failure to its exit code.
int run_config_file(const std::filesystem::path& path, std::ostream& log);

/// One row per run: final eval loss, FLOPs ratio and per-degree component error.
/// Throws IncompatibleRuns unless every run is a boolpoly_train on the same task.
void compare_runs(const std::vector<std::filesystem::path>& dirs, std::ostream& csv);

/// Gradient checks, sine gradients, shared-base equivalence and h_sqrt invariants.
/// Prints one PASS/FAIL line per check and returns kExitOk when all pass.
int run_selftest(std::ostream& out);

/// Worker cap from RAPTR_LAB_THREADS (default: hardware concurrency, at least 1).
unsigned worker_limit();

}  // namespace raptr
