#include "doctest.h"

#include "raptr/experiments.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

using namespace raptr;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        static int counter = 0;
        path = fs::temp_directory_path() / ("raptr_cli_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
    std::ifstream f(p);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

fs::path write_config(const fs::path& dir, const std::string& name, const Json& j) {
    const fs::path p = dir / name;
    std::ofstream(p) << j.dump(2);
    return p;
}

int run_cli(const std::string& args, std::string* out = nullptr) {
    const std::string cmd = std::string(RAPTR_CLI_PATH) + " " + args + " 2>&1";
    FILE* pipe = ::popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::string text;
    char buf[4096];
    while (std::fgets(buf, sizeof buf, pipe) != nullptr) text += buf;
    const int status = ::pclose(pipe);
    if (out != nullptr) *out = text;
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Json tiny_boolpoly(const fs::path& out, const std::string& method = "raptr", int d = 8) {
    return Json{{"experiment", "boolpoly_train"},
                {"method", method},
                {"seed", 3},
                {"output_dir", out.string()},
                {"task", {{"d", d}, {"t", 5}, {"k", 2}, {"m", 2}}},
                {"model", {{"depth", 3}, {"hidden", 8}}},
                {"train", {{"steps", 60}, {"batch", 8}, {"eval_every", 30}, {"eval_size", 64}, {"boundary_probe", 2}}},
                {"raptr", {{"stages", {2, 3}}, {"target_avg", 0}}},
                {"stacking", {{"sizes", {2, 3}}}},
                {"components", {{"every", 30}, {"mc_samples", 256}, {"final_mc_samples", 512}}},
                {"save_checkpoint", false}};
}

}  // namespace

TEST_CASE("every experiment has a parseable default config") {
    for (const auto& name : experiment_names()) {
        const Json d = default_config(name);
        CHECK(d.at("experiment") == name);
        const auto cfg = ExperimentConfig::parse(Json{{"experiment", name}});
        CHECK(cfg.doc() == d);
        CHECK(cfg.hash().size() == 16);
        CHECK(ExperimentConfig::parse(d).hash() == cfg.hash());
    }
    CHECK_THROWS_AS(default_config("nope"), ConfigError);
}

TEST_CASE("config validation") {
    CHECK_THROWS_AS(ExperimentConfig::parse(Json{{"experiment", "nope"}}), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::parse(Json{{"seed", 1}}), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::parse(Json{{"experiment", "schedule_report"}, {"depht", 4}}), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::parse(Json{{"experiment", "schedule_report"}, {"depth", "four"}}), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::parse(Json{{"experiment", "boolpoly_train"}, {"method", "magic"}}), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::parse(Json{{"experiment", "boolpoly_train"}, {"task", {{"q", 1}}}}), ConfigError);

    // Floats accept integers; stage entries accept objects.
    const auto cfg = ExperimentConfig::parse(Json{{"experiment", "schedule_report"},
                                                  {"target_avg", 18},
                                                  {"stages", Json::array({6, Json{{"size", 12}, {"fixed", {1}}}, 24})}});
    CHECK(cfg.doc().at("target_avg").get<double>() == 18.0);
    CHECK(cfg.doc().at("stages").size() == 3);

    const auto moved = cfg.with_seed(9, "elsewhere");
    CHECK(moved.seed() == 9);
    CHECK(moved.output_dir() == fs::path("elsewhere"));
    CHECK(moved.hash() != cfg.hash());
}

TEST_CASE("schedule report writes the solved boundaries and a manifest") {
    TempDir tmp;
    const auto cfg = ExperimentConfig::parse(Json{{"experiment", "schedule_report"}, {"output_dir", tmp.path.string()}});
    std::ostringstream log;
    const auto out = run_experiment(cfg, log);
    REQUIRE(out.exit_code == kExitOk);
    CHECK(out.summary.at("x") == 22000);
    CHECK(log.str().find("x = 22000") != std::string::npos);
    CHECK(fs::exists(tmp.path / "schedule.csv"));

    const Json m = Json::parse(slurp(tmp.path / "manifest.json"));
    for (const char* key : {"tool", "format_version", "experiment", "seed", "config_hash", "config", "artifacts"})
        CHECK(m.contains(key));
    CHECK(m.at("config_hash") == cfg.hash());
    CHECK(m.at("config") == cfg.doc());
}

TEST_CASE("boolpoly runs are deterministic and comparable") {
    TempDir tmp;
    std::ostringstream log;
    const auto a = ExperimentConfig::parse(tiny_boolpoly(tmp.path / "a"));
    const auto b = ExperimentConfig::parse(tiny_boolpoly(tmp.path / "b"));
    REQUIRE(run_experiment(a, log).exit_code == kExitOk);
    REQUIRE(run_experiment(b, log).exit_code == kExitOk);
    for (const char* f : {"metrics.csv", "components.csv", "summary.json"})
        CHECK(slurp(tmp.path / "a" / f) == slurp(tmp.path / "b" / f));

    const auto s = ExperimentConfig::parse(tiny_boolpoly(tmp.path / "s", "stacking"));
    REQUIRE(run_experiment(s, log).exit_code == kExitOk);

    std::ostringstream csv;
    compare_runs({tmp.path / "a", tmp.path / "s"}, csv);
    std::istringstream lines(csv.str());
    std::string header, row1, row2, extra;
    std::getline(lines, header);
    std::getline(lines, row1);
    std::getline(lines, row2);
    CHECK(header.rfind("run,method,seed,steps,final_eval_loss,flops_ratio,component_error_1", 0) == 0);
    CHECK(row1.rfind("a,raptr,3,60,", 0) == 0);
    CHECK(row2.rfind("s,stacking,3,60,", 0) == 0);
    CHECK_FALSE(std::getline(lines, extra));

    const auto other = ExperimentConfig::parse(tiny_boolpoly(tmp.path / "d10", "baseline", 10));
    REQUIRE(run_experiment(other, log).exit_code == kExitOk);
    CHECK_THROWS_AS(compare_runs({tmp.path / "a", tmp.path / "d10"}, csv), IncompatibleRuns);
    CHECK_THROWS_AS(compare_runs({tmp.path / "a"}, csv), IncompatibleRuns);
}

TEST_CASE("replicas fan out into per-seed directories") {
    TempDir tmp;
    Json j = tiny_boolpoly(tmp.path / "rep", "baseline");
    j["replicas"] = 2;
    std::ostringstream log;
    REQUIRE(run_config(ExperimentConfig::parse(j), log) == kExitOk);
    CHECK(fs::exists(tmp.path / "rep" / "seed_3" / "manifest.json"));
    CHECK(fs::exists(tmp.path / "rep" / "seed_4" / "manifest.json"));
    const std::string rep = slurp(tmp.path / "rep" / "replicas.csv");
    CHECK(rep.rfind("seed,exit_code,", 0) == 0);
    CHECK(rep.find("\n3,0,") != std::string::npos);
    CHECK(rep.find("\n4,0,") != std::string::npos);
}

TEST_CASE("command line exit codes") {
    TempDir tmp;
    std::string out;
    CHECK(run_cli("", &out) == kExitUsage);
    CHECK(run_cli("frobnicate", &out) == kExitUsage);
    CHECK(run_cli("run " + (tmp.path / "missing.json").string(), &out) == kExitIoError);

    std::ofstream(tmp.path / "broken.json") << "{ not json";
    CHECK(run_cli("run " + (tmp.path / "broken.json").string(), &out) == kExitConfigError);

    const auto bad = write_config(tmp.path, "bad.json", Json{{"experiment", "schedule_report"}, {"bogus", 1}});
    CHECK(run_cli("run " + bad.string(), &out) == kExitConfigError);

    const auto infeasible = write_config(
        tmp.path, "inf.json",
        Json{{"experiment", "schedule_report"}, {"target_avg", 30}, {"output_dir", (tmp.path / "inf").string()}});
    CHECK(run_cli("run " + infeasible.string(), &out) == kExitInfeasibleSchedule);

    const auto ok = write_config(tmp.path, "ok.json",
                                 Json{{"experiment", "schedule_report"}, {"output_dir", (tmp.path / "ok").string()}});
    CHECK(run_cli("run " + ok.string(), &out) == kExitOk);
    CHECK(out.find("x = 22000") != std::string::npos);

    CHECK(run_cli("defaults sinelab", &out) == kExitOk);
    CHECK(Json::parse(out).at("experiment") == "sinelab");
    CHECK(run_cli("defaults nope", &out) == kExitConfigError);

    CHECK(run_cli("compare " + (tmp.path / "ok").string() + " " + (tmp.path / "ok").string(), &out) ==
          kExitIncompatibleRuns);
    CHECK(run_cli("compare " + (tmp.path / "x").string() + " " + (tmp.path / "y").string(), &out) == kExitIoError);
}

TEST_CASE("shipped configs parse") {
    const fs::path dir = fs::path(RAPTR_SOURCE_DIR) / "configs";
    int n = 0;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.path().extension() != ".json") continue;
        CAPTURE(e.path().string());
        CHECK_NOTHROW(ExperimentConfig::load(e.path()));
        ++n;
    }
    CHECK(n >= 10);
}

TEST_CASE("worker limit honours the environment") {
    ::setenv("RAPTR_LAB_THREADS", "3", 1);
    CHECK(worker_limit() == 3);
    ::setenv("RAPTR_LAB_THREADS", "0", 1);
    CHECK(worker_limit() >= 1);
    ::unsetenv("RAPTR_LAB_THREADS");
}
