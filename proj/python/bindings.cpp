#include "raptr/boolpoly.hpp"
#include "raptr/experiments.hpp"
#include "raptr/sharedbase.hpp"
#include "raptr/subnet.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

namespace py = pybind11;
using namespace raptr;

namespace {

GatePattern gates_from_bits(const std::vector<int>& bits) {
    GatePattern g;
    for (int b : bits) g.bits.push_back(b != 0 ? 1 : 0);
    return g;
}

py::dict schedule(const std::vector<double>& sizes, int depth, long total_steps, const std::string& mode,
                  double target_avg, long quantum, long warmup_steps) {
    ScheduleConfig cfg;
    for (double s : sizes) cfg.stages.push_back({s, {}});
    cfg.mode = schedule_mode_from_string(mode);
    cfg.target_avg = target_avg;
    cfg.target_quantum = quantum;
    cfg.warmup_steps = warmup_steps;
    long x = 0;
    const StageSchedule s = make_schedule(cfg, depth, total_steps, &x);
    std::vector<double> ps;
    for (const auto& st : s.stages()) ps.push_back(st.p);
    py::dict out;
    out["x"] = x;
    out["boundaries"] = s.boundaries();
    out["p"] = ps;
    out["avg_length"] = s.avg_length();
    out["relative_flops"] = s.avg_length() / depth;
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Bindings for the raptr-lab experiment library.";

    py::register_exception<ArgumentError>(m, "ArgumentError", PyExc_ValueError);
    py::register_exception<InfeasibleSchedule>(m, "InfeasibleSchedule", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

    m.def("h_sqrt", [](const std::vector<int>& bits) { return h_sqrt(gates_from_bits(bits)); }, py::arg("bits"),
          "Square-root rescaling for a 0/1 gate pattern.");
    m.def("relative_flops", &relative_flops, py::arg("p"), py::arg("fixed_count"), py::arg("depth"));
    m.def("pld_long_run_flops", &pld_long_run_flops, py::arg("alpha_bar"));
    m.def("pld_exact_keep_fraction", &pld_exact_keep_fraction, py::arg("alpha_bar"), py::arg("depth"));
    m.def("flops_overhead", &flops_overhead, py::arg("tokens"), py::arg("depth"));
    m.def("schedule", &schedule, py::arg("sizes"), py::arg("depth"), py::arg("total_steps"),
          py::arg("mode") = "proportional", py::arg("target_avg") = 0.0, py::arg("quantum") = 1,
          py::arg("warmup_steps") = 0, "Build a stage schedule; returns x, boundaries, p and averages.");
    m.def("fourier_coeff_exact",
          py::overload_cast<const Vector&, const std::vector<int>&, int>(&fourier_coeff_exact), py::arg("table"),
          py::arg("subset"), py::arg("d"), "Fourier coefficient of a truth table over {+-1}^d.");

    m.def("experiment_names", &experiment_names);
    m.def("default_config", [](const std::string& e) { return default_config(e).dump(); }, py::arg("experiment"),
          "Default config of an experiment as a JSON string.");
    m.def(
        "run_config_json",
        [](const std::string& text) {
            std::ostringstream log;
            int code = kExitOk;
            {
                py::gil_scoped_release release;
                code = run_config(ExperimentConfig::parse(Json::parse(text)), log);
            }
            return py::make_tuple(code, log.str());
        },
        py::arg("config"), "Run a JSON config string; returns (exit_code, log).");
    m.def(
        "selftest",
        []() {
            std::ostringstream out;
            const int code = run_selftest(out);
            return py::make_tuple(code, out.str());
        },
        "Run the built-in checks; returns (exit_code, report).");
}
