#include "raptr/experiments.hpp"

#include "raptr/boolpoly.hpp"
#include "raptr/sharedbase.hpp"
#include "raptr/sinelab.hpp"
#include "raptr/stability.hpp"
#include "raptr/subnet.hpp"
#include "raptr/trainers.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <thread>

namespace raptr {

namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kMethods{"raptr", "pld", "stacking", "baseline", "width_raptr"};
const std::vector<std::string> kVariants{"residual_ln", "residual", "plain_ln"};

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

// ---------------------------------------------------------------- config parsing

Json common_defaults(const std::string& experiment) {
    Json j;
    j["experiment"] = experiment;
    j["seed"] = 1u;
    j["output_dir"] = "runs/" + experiment;
    j["replicas"] = 1u;
    return j;
}

bool same_kind(const Json& def, const Json& val) {
    if (def.is_boolean()) return val.is_boolean();
    if (def.is_number_unsigned()) return val.is_number_unsigned() || (val.is_number_integer() && val.get<long>() >= 0);
    if (def.is_number_integer()) return val.is_number_integer();
    if (def.is_number_float()) return val.is_number();
    if (def.is_string()) return val.is_string();
    if (def.is_array()) return val.is_array();
    if (def.is_object()) return val.is_object();
    return false;
}

void check_array(const Json& def, const Json& val, const std::string& path) {
    // Empty default arrays hold integers (layer index lists).
    const Json elem = def.empty() ? Json(0) : def.front();
    const bool stage_list = path == "stages" || path.ends_with(".stages");
    for (const auto& v : val) {
        if (stage_list && v.is_object()) {
            // {"size": 12, "fixed": [1, 24]}
            for (auto it = v.begin(); it != v.end(); ++it)
                if (it.key() != "size" && it.key() != "fixed") throw ConfigError("unknown key '" + path + "[]." + it.key() + "'");
            if (!v.contains("size") || !v.at("size").is_number()) throw ConfigError("stage entries in '" + path + "' need a numeric 'size'");
            if (v.contains("fixed") && !v.at("fixed").is_array()) throw ConfigError("'fixed' of a stage must be an array");
            continue;
        }
        if (!same_kind(elem, v)) throw ConfigError("wrong element type in '" + path + "'");
    }
}

void merge_into(Json& target, const Json& user, const std::string& prefix) {
    if (!user.is_object()) throw ConfigError("'" + (prefix.empty() ? std::string("config") : prefix) + "' must be an object");
    for (auto it = user.begin(); it != user.end(); ++it) {
        const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (!target.contains(it.key())) throw ConfigError("unknown key '" + path + "'");
        Json& slot = target[it.key()];
        if (!same_kind(slot, it.value())) throw ConfigError("wrong type for '" + path + "'");
        if (slot.is_object()) {
            merge_into(slot, it.value(), path);
        } else {
            if (slot.is_array()) check_array(slot, it.value(), path);
            if (slot.is_number_float()) {
                slot = it.value().get<double>();
            } else if (slot.is_number_unsigned()) {
                slot = it.value().get<std::uint64_t>();
            } else if (slot.is_array() && !slot.empty() && slot.front().is_number_float()) {
                Json arr = Json::array();
                for (const auto& v : it.value()) arr.push_back(v.is_object() ? v : Json(v.get<double>()));
                slot = arr;
            } else {
                slot = it.value();
            }
        }
    }
}

void require(bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
}

bool in_list(const std::string& s, const std::vector<std::string>& list) {
    return std::find(list.begin(), list.end(), s) != list.end();
}

template <class F>
void check_enum(F&& parse, const Json& j, const std::string& path) {
    try {
        parse(j.get<std::string>());
    } catch (const ArgumentError&) {
        throw ConfigError("invalid value '" + j.get<std::string>() + "' for '" + path + "'");
    }
}

void validate(const Json& doc) {
    const std::string exp = doc.at("experiment").get<std::string>();
    require(doc.at("replicas").get<std::uint64_t>() >= 1, "'replicas' must be >= 1");
    require(!doc.at("output_dir").get<std::string>().empty(), "'output_dir' must not be empty");
    if (exp == "boolpoly_train") {
        require(in_list(doc.at("method").get<std::string>(), kMethods),
                "'method' must be one of raptr, pld, stacking, baseline, width_raptr");
        const auto& t = doc.at("train");
        require(t.at("steps").get<long>() >= 1 && t.at("batch").get<long>() >= 1, "'train.steps' and 'train.batch' must be >= 1");
        require(t.at("eval_every").get<long>() >= 1, "'train.eval_every' must be >= 1");
        require(t.at("eval_size").get<long>() >= 1, "'train.eval_size' must be >= 1");
        require(t.at("lr").get<double>() > 0.0, "'train.lr' must be positive");
        check_enum(optim_kind_from_string, t.at("optimizer"), "train.optimizer");
        check_enum(lr_decay_from_string, t.at("final_decay"), "train.final_decay");
        check_enum(schedule_mode_from_string, doc.at("raptr").at("mode"), "raptr.mode");
        check_enum(scale_rule_from_string, doc.at("raptr").at("scale_rule"), "raptr.scale_rule");
        check_enum(growth_op_from_string, doc.at("stacking").at("op"), "stacking.op");
        check_enum(schedule_mode_from_string, doc.at("width").at("mode"), "width.mode");
        const auto& c = doc.at("components");
        require(c.at("every").get<long>() >= 1, "'components.every' must be >= 1");
        require(c.at("mc_samples").get<long>() >= 2 && c.at("final_mc_samples").get<long>() >= 2,
                "'components' sample counts must be >= 2");
    } else if (exp == "stability_sweep") {
        for (const auto& v : doc.at("variants"))
            require(in_list(v.get<std::string>(), kVariants), "'variants' entries must be residual_ln, residual or plain_ln");
        require(!doc.at("variants").empty() && !doc.at("depths").empty() && !doc.at("taus").empty(),
                "'variants', 'depths' and 'taus' must be non-empty");
        for (const auto& t : doc.at("taus")) require(t.get<double>() >= 0.0 && t.get<double>() <= 1.0, "'taus' must lie in [0, 1]");
        for (const auto& L : doc.at("depths")) require(L.get<long>() >= 1, "'depths' must be >= 1");
        check_enum(shared_matrix_mode_from_string, doc.at("a_mode"), "a_mode");
    } else if (exp == "sinelab") {
        const int d = doc.at("d").get<int>();
        require(d >= 2 && d <= kMaxSineDim, "'d' must lie in [2, 14]");
        require(doc.at("eta").get<double>() > 0.0, "'eta' must be positive");
    } else if (exp == "sharedbase_check") {
        require(doc.at("cases").get<long>() >= 1, "'cases' must be >= 1");
        for (const auto& k : doc.at("kinds")) check_enum(block_kind_from_string, k, "kinds");
        require(!doc.at("kinds").empty(), "'kinds' must be non-empty");
    } else if (exp == "schedule_report") {
        check_enum(schedule_mode_from_string, doc.at("mode"), "mode");
        require(!doc.at("stages").empty(), "'stages' must be non-empty");
    }
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

// ---------------------------------------------------------------- shared helpers

std::ofstream open_out(const fs::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::ios_base::failure("cannot write " + path.string());
    return f;
}

void write_json(const fs::path& path, const Json& j) {
    auto f = open_out(path);
    f << j.dump(2) << '\n';
}

Json read_json(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw std::ios_base::failure("cannot read " + path.string());
    try {
        return Json::parse(f);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

Json poly_json(const SparsePolynomial& p) {
    Json terms = Json::array();
    for (const auto& t : p.terms) terms.push_back({{"degree", t.degree}, {"subset", t.subset}, {"coeff", t.coeff}});
    return {{"d", p.d}, {"k", p.max_degree}, {"m", p.per_degree}, {"t", p.support}, {"terms", terms}};
}

std::vector<StageSpec> stage_specs(const Json& sizes, const Json& fixed) {
    const std::vector<int> f = fixed.get<std::vector<int>>();
    std::vector<StageSpec> out;
    for (const auto& s : sizes) {
        if (s.is_object()) out.push_back({s.at("size").get<double>(), s.value("fixed", f)});
        else out.push_back({s.get<double>(), f});
    }
    return out;
}

// ---------------------------------------------------------------- boolpoly_train

struct ComponentSnapshot {
    long step;
    std::vector<ComponentRow> rows;
};

RunOutcome run_boolpoly(const Json& doc, const fs::path& dir, std::vector<std::string>& artifacts, Json& manifest,
                        std::ostream& log) {
    const std::uint64_t seed = doc.at("seed").get<std::uint64_t>();
    const std::string method = doc.at("method").get<std::string>();
    const auto& task = doc.at("task");
    const auto& model = doc.at("model");
    const auto& tr = doc.at("train");
    const auto& comp = doc.at("components");

    RngStream target_rng(seed, 1), init_rng(seed, 2), eval_rng(seed, 3), probe_rng(seed, 4);
    const SparsePolynomial poly = sample_target(task.at("d").get<int>(), task.at("k").get<int>(),
                                                task.at("m").get<int>(), task.at("t").get<int>(), target_rng);
    manifest["target"] = poly_json(poly);
    const BoolPolySource data(poly);

    const long depth = model.at("depth").get<long>();
    long hidden = model.at("hidden").get<long>();
    if (hidden == 0) hidden = 4 * poly.d;
    InitConfig init;
    init.readout_gain = model.at("readout_gain").get<double>();
    const bool prenorm = model.at("prenorm").get<bool>();

    std::vector<long> stack_sizes;
    long start_depth = depth;
    if (method == "stacking") {
        stack_sizes = doc.at("stacking").at("sizes").get<std::vector<long>>();
        require(!stack_sizes.empty() && stack_sizes.back() == depth,
                "'stacking.sizes' must end at 'model.depth'");
        start_depth = stack_sizes.front();
    }
    ResidualNet net = make_relu_mlp_net(poly.d, start_depth, hidden, prenorm, HeadKind::ScalarReadout, init_rng, init);

    TrainConfig cfg;
    cfg.steps = tr.at("steps").get<long>();
    cfg.batch = tr.at("batch").get<long>();
    cfg.optim.kind = optim_kind_from_string(tr.at("optimizer").get<std::string>());
    cfg.optim.momentum = tr.at("momentum").get<double>();
    cfg.lr.peak = tr.at("lr").get<double>();
    cfg.lr.warmup_steps = tr.at("lr_warmup_steps").get<long>();
    cfg.lr.final_decay = lr_decay_from_string(tr.at("final_decay").get<std::string>());
    cfg.eval_every = tr.at("eval_every").get<long>();
    cfg.boundary_probe = tr.at("boundary_probe").get<long>();
    cfg.eval_set = data.sample(tr.at("eval_size").get<long>(), eval_rng);
    cfg.seed = seed;

    const long every = comp.at("every").get<long>();
    FourierProbe probe(poly.d, comp.at("mc_samples").get<long>(), probe_rng);
    RngStream final_rng = probe_rng.split(1);
    const long final_samples = comp.at("final_mc_samples").get<long>();
    std::vector<ComponentSnapshot> snaps;
    cfg.on_eval = [&](long step, const ResidualNet& n) {
        if (step % every != 0 && step != cfg.steps) return;
        if (step == cfg.steps) {
            FourierProbe fin(poly.d, final_samples, final_rng);
            fin.evaluate(net_function(n));
            snaps.push_back({step, component_errors(poly, [&](const std::vector<int>& s) { return fin.coeff(s); })});
        } else {
            probe.evaluate(net_function(n));
            snaps.push_back({step, component_errors(poly, [&](const std::vector<int>& s) { return probe.coeff(s); })});
        }
    };

    RunMetrics metrics;
    Json extra = Json::object();
    if (method == "baseline") {
        metrics = train_baseline(net, data, cfg);
    } else if (method == "raptr") {
        const auto& r = doc.at("raptr");
        ScheduleConfig sc;
        sc.stages = stage_specs(r.at("stages"), r.at("fixed"));
        sc.mode = schedule_mode_from_string(r.at("mode").get<std::string>());
        sc.target_avg = r.at("target_avg").get<double>();
        sc.target_quantum = r.at("target_quantum").get<long>();
        sc.warmup_steps = r.at("warmup_steps").get<long>();
        long x = 0;
        const StageSchedule schedule = make_schedule(sc, static_cast<int>(depth), cfg.steps, &x);
        extra["schedule_x"] = x;
        extra["boundaries"] = schedule.boundaries();
        extra["avg_length"] = schedule.avg_length();
        log << "schedule: x = " << x << ", avg length " << num(schedule.avg_length()) << "\n";
        metrics = train_raptr(net, data, schedule, cfg, scale_rule_from_string(r.at("scale_rule").get<std::string>()));
    } else if (method == "pld") {
        PldConfig p;
        p.alpha_bar = doc.at("pld").at("alpha_bar").get<double>();
        p.gamma_f = doc.at("pld").at("gamma_f").get<double>();
        metrics = train_pld(net, data, p, cfg);
    } else if (method == "stacking") {
        metrics = train_stacking(net, data, growth_op_from_string(doc.at("stacking").at("op").get<std::string>()),
                                 stack_sizes, cfg);
    } else {
        WidthSchedule ws;
        ws.groups = doc.at("width").at("groups").get<int>();
        ws.kept = doc.at("width").at("kept").get<std::vector<int>>();
        ws.mode = schedule_mode_from_string(doc.at("width").at("mode").get<std::string>());
        metrics = train_width_raptr(net, data, ws, cfg);
    }

    metrics.write_csv(dir / "metrics.csv");
    artifacts.push_back("metrics.csv");
    {
        auto f = open_out(dir / "components.csv");
        f << "step,degree,error,se\n";
        for (const auto& s : snaps)
            for (const auto& r : s.rows) f << s.step << ',' << r.degree << ',' << num(r.error) << ',' << num(r.se) << '\n';
        artifacts.push_back("components.csv");
    }
    if (doc.at("save_checkpoint").get<bool>()) {
        save_checkpoint(net, dir / "model.ckpt");
        artifacts.push_back("model.ckpt");
    }

    const double threshold = comp.at("threshold").get<double>();
    std::vector<long> crossing(static_cast<std::size_t>(poly.max_degree), -1);
    for (const auto& s : snaps) {
        if (s.step == 0) continue;
        for (const auto& r : s.rows) {
            auto& c = crossing[static_cast<std::size_t>(r.degree - 1)];
            if (c < 0 && r.error < threshold) c = s.step;
        }
    }
    std::vector<double> final_err;
    if (!snaps.empty())
        for (const auto& r : snaps.back().rows) final_err.push_back(r.error);

    RunOutcome out;
    out.summary = {{"method", method},
                   {"final_eval_loss", metrics.final_eval_loss},
                   {"flops_ratio", metrics.flops_ratio},
                   {"component_error", final_err},
                   {"crossing_step", crossing}};
    out.summary.update(extra);
    log << method << ": final eval loss " << num(metrics.final_eval_loss) << ", flops ratio "
        << num(metrics.flops_ratio) << "\n";
    return out;
}

// ---------------------------------------------------------------- stability_sweep

LinearNetConfig variant_config(const std::string& v) {
    LinearNetConfig c;
    c.residual = v != "plain_ln";
    c.layernorm = v != "residual";
    return c;
}

RunOutcome run_stability(const Json& doc, const fs::path& dir, std::vector<std::string>& artifacts,
                         std::ostream& log) {
    const RngStream root(doc.at("seed").get<std::uint64_t>(), 0);
    const auto variants = doc.at("variants").get<std::vector<std::string>>();
    const auto depths = doc.at("depths").get<std::vector<long>>();
    const auto taus = doc.at("taus").get<std::vector<double>>();
    const long width = doc.at("width").get<long>();
    const long probes_n = doc.at("probes").get<long>();
    MuConfig mu;
    mu.n_perturb = doc.at("mu").at("n_perturb").get<long>();
    mu.radial_mix = doc.at("mu").at("radial_mix").get<double>();

    auto prof = open_out(dir / "stability.csv");
    prof << "variant,tau,depth,ell,norm,psi,angle\n";
    auto gaps = open_out(dir / "gaps.csv");
    gaps << "variant,tau,depth,loss_full,loss_dropone,gap,gap_se,mu,rhs,rhs_se,holds\n";
    auto expo = open_out(dir / "exponents.csv");
    expo << "variant,tau,exponent\n";
    artifacts.insert(artifacts.end(), {"stability.csv", "gaps.csv", "exponents.csv"});

    bool all_hold = true;
    Json exponents = Json::array();
    for (std::size_t vi = 0; vi < variants.size(); ++vi) {
        for (std::size_t ti = 0; ti < taus.size(); ++ti) {
            LinearNetConfig lc = variant_config(variants[vi]);
            lc.width = width;
            lc.tau = taus[ti];
            lc.delta = doc.at("delta").get<double>();
            lc.a_mode = shared_matrix_mode_from_string(doc.at("a_mode").get<std::string>());
            lc.g_var_exponent = doc.at("g_var_exponent").get<double>();
            const RngStream group = root.split(1 + 1000 * vi + ti);
            RngStream a_rng = group.split(10), probe_rng = group.split(11);
            const SharedMatrix shared = make_shared_matrix(width, lc.delta, lc.a_mode, a_rng);
            const Matrix probes = sphere_rows(probes_n, width, probe_rng);
            std::vector<double> ls, gs;
            for (long L : depths) {
                lc.depth = L;
                RngStream run_rng = group.split(12).split(static_cast<std::uint64_t>(L));
                const auto r = linear_net_experiment(lc, shared, probes, run_rng, mu);
                if (!r.warning.empty()) log << "warning: " << r.warning << "\n";
                for (long l = 0; l < L; ++l)
                    prof << variants[vi] << ',' << num(lc.tau) << ',' << L << ',' << (l + 1) << ','
                         << num(r.profile.norms[l]) << ',' << num(r.profile.psi[l]) << ','
                         << num(r.angles[static_cast<std::size_t>(l)]) << '\n';
                const auto& c = r.check;
                gaps << variants[vi] << ',' << num(lc.tau) << ',' << L << ',' << num(c.gap.loss_full) << ','
                     << num(c.gap.loss_dropone) << ',' << num(c.gap.gap) << ',' << num(c.gap.gap_se) << ','
                     << num(c.mu) << ',' << num(c.rhs.value) << ',' << num(c.rhs.se) << ',' << (c.holds ? 1 : 0)
                     << '\n';
                all_hold = all_hold && c.holds;
                ls.push_back(static_cast<double>(L));
                gs.push_back(std::abs(c.gap.gap));
            }
            if (ls.size() >= 3 && std::all_of(gs.begin(), gs.end(), [](double g) { return g > 0.0; })) {
                const double e = fit_scaling_exponent(ls, gs);
                expo << variants[vi] << ',' << num(taus[ti]) << ',' << num(e) << '\n';
                exponents.push_back({{"variant", variants[vi]}, {"tau", taus[ti]}, {"exponent", e}});
                log << variants[vi] << " tau " << num(taus[ti]) << ": gap exponent " << num(e) << "\n";
            }
        }
    }
    RunOutcome out;
    out.summary = {{"all_bounds_hold", all_hold}, {"exponents", exponents}};
    log << "bound holds on every configuration: " << (all_hold ? "yes" : "no") << "\n";
    return out;
}

// ---------------------------------------------------------------- sinelab

Json sine_params_json(const SineParams& p) {
    return {{"p0", p.p0}, {"w1", std::vector<double>(p.w1.data(), p.w1.data() + p.w1.size())},
            {"w2", std::vector<double>(p.w2.data(), p.w2.data() + p.w2.size())}, {"b1", p.b1}, {"b2", p.b2}};
}

RunOutcome run_sine(const Json& doc, const fs::path& dir, std::vector<std::string>& artifacts, std::ostream& log) {
    const std::uint64_t seed = doc.at("seed").get<std::uint64_t>();
    const int d = doc.at("d").get<int>();
    PhasePlan plan;
    plan.eta = doc.at("eta").get<double>();
    plan.steps_bias = doc.at("steps").at("bias").get<long>();
    plan.steps_phase1 = doc.at("steps").at("phase1").get<long>();
    plan.steps_phase2 = doc.at("steps").at("phase2").get<long>();
    plan.record_every = doc.at("record_every").get<long>();
    plan.options.p0_in_second = doc.at("p0_in_second").get<bool>();
    plan.random_layer = doc.at("random_layer").get<bool>();
    RngStream rng(seed, 1);
    const SineRun run = train_three_phase(plan, d, rng);
    run.write_csv(dir / "sine_trajectory.csv");
    artifacts.push_back("sine_trajectory.csv");

    RunOutcome out;
    out.summary = {{"final_loss", run.final_loss},
                   {"after_bias", sine_params_json(run.after_bias)},
                   {"after_phase1", sine_params_json(run.after_phase1)},
                   {"final", sine_params_json(run.final_params)},
                   {"alpha_cross", run.alpha_cross},
                   {"beta_cross", run.beta_cross},
                   {"monotone", run.monotone},
                   {"max_grad_error", run.max_grad_error}};
    log << "sine: final population loss " << num(run.final_loss) << ", x1 crosses at " << run.alpha_cross
        << ", x1x2 crosses at " << run.beta_cross << "\n";

    const auto& bf = doc.at("best_fit");
    if (bf.at("enabled").get<bool>()) {
        BestFitConfig bc;
        bc.restarts = bf.at("restarts").get<int>();
        bc.steps = bf.at("steps").get<long>();
        bc.lr = bf.at("lr").get<double>();
        bc.init_scale = bf.at("init_scale").get<double>();
        RngStream fit_rng(seed, 2);
        const BestFit fit = single_layer_best_fit(d, fstar_coeffs(), bc, fit_rng);
        out.summary["best_fit_loss"] = fit.loss;
        out.summary["best_fit_restart"] = fit.best_restart;
        log << "single-layer best fit loss " << num(fit.loss) << "\n";
    }
    return out;
}

// ---------------------------------------------------------------- sharedbase_check

GatePattern random_gates(long depth, RngStream& rng) {
    GatePattern g;
    g.bits.assign(static_cast<std::size_t>(depth), 0);
    while (g.active_count() == 0)
        for (auto& b : g.bits) b = rng.bernoulli(0.5) ? 1 : 0;
    return g;
}

struct SharedCase {
    std::string kind;
    long active;
    bool fold;
    double discrepancy;
};

std::vector<SharedCase> sharedbase_cases(long cases, long depth, long width, long hidden, long batch,
                                         const std::vector<std::string>& kinds, RngStream& rng) {
    std::vector<SharedCase> out;
    for (long i = 0; i < cases; ++i) {
        RngStream r = rng.split(static_cast<std::uint64_t>(i));
        const std::string& kind = kinds[static_cast<std::size_t>(i) % kinds.size()];
        const BlockKind bk = block_kind_from_string(kind);
        const HeadKind head = static_cast<HeadKind>(i % 3);
        ResidualNet net = bk == BlockKind::ReluMlp
                              ? make_relu_mlp_net(width, depth, hidden, i % 2 == 1, head, r)
                              : make_linear_net(width, depth, bk == BlockKind::LinearLn, Composition::Residual, head, r);
        const Matrix x = gauss_matrix(batch, width, 1.0, r);
        const GatePattern g = random_gates(depth, r);
        const Matrix up = gauss_matrix(batch, net.output_dim(), 1.0, r);
        for (bool fold : {false, true})
            out.push_back({kind, g.active_count(), fold, equivalence_check(net, x, g, up, fold)});
    }
    return out;
}

RunOutcome run_sharedbase(const Json& doc, const fs::path& dir, std::vector<std::string>& artifacts,
                          std::ostream& log) {
    RngStream rng(doc.at("seed").get<std::uint64_t>(), 1);
    const auto cases = sharedbase_cases(doc.at("cases").get<long>(), doc.at("depth").get<long>(),
                                        doc.at("width").get<long>(), doc.at("hidden").get<long>(),
                                        doc.at("batch").get<long>(), doc.at("kinds").get<std::vector<std::string>>(),
                                        rng);
    double worst = 0.0;
    auto f = open_out(dir / "sharedbase.csv");
    f << "case,kind,active,fold_scales,discrepancy\n";
    for (std::size_t i = 0; i < cases.size(); ++i) {
        const auto& c = cases[i];
        f << i / 2 << ',' << c.kind << ',' << c.active << ',' << (c.fold ? 1 : 0) << ',' << num(c.discrepancy) << '\n';
        worst = std::max(worst, c.discrepancy);
    }
    artifacts.push_back("sharedbase.csv");

    const long tokens = doc.at("tokens").get<long>();
    const long L = doc.at("overhead_depth").get<long>();
    const long k = doc.at("mac_active").get<long>();
    const long d = doc.at("mac_width").get<long>();
    const double formula = flops_overhead(tokens, L);
    const double base = static_cast<double>(linear_step_macs(tokens, k, d));
    const double counted = (base + static_cast<double>(shared_combination_macs(k, L, d))) / base;
    const double tol = doc.at("tolerance").get<double>();

    RunOutcome out;
    out.summary = {{"max_discrepancy", worst},
                   {"cases", cases.size()},
                   {"flops_overhead", formula},
                   {"counted_overhead", counted},
                   {"overhead_rel_diff", std::abs(counted - formula) / formula}};
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3e", worst);
    log << "max discrepancy = " << buf << " over " << cases.size() << " checks\n";
    log << "flops overhead (B = " << tokens << ", L = " << L << ") = " << num(formula) << ", counted "
        << num(counted) << "\n";
    if (!(worst <= tol)) {
        out.exit_code = kExitCheckFailed;
        out.message = "discrepancy above tolerance " + num(tol);
    }
    return out;
}

// ---------------------------------------------------------------- schedule_report

RunOutcome run_schedule(const Json& doc, const fs::path& dir, std::vector<std::string>& artifacts,
                        std::ostream& log) {
    ScheduleConfig sc;
    sc.stages = stage_specs(doc.at("stages"), doc.at("fixed"));
    sc.mode = schedule_mode_from_string(doc.at("mode").get<std::string>());
    sc.target_avg = doc.at("target_avg").get<double>();
    sc.target_quantum = doc.at("target_quantum").get<long>();
    sc.warmup_steps = doc.at("warmup_steps").get<long>();
    const int depth = doc.at("depth").get<int>();
    const long total = doc.at("total_steps").get<long>();
    long x = 0;
    const StageSchedule s = make_schedule(sc, depth, total, &x);

    auto f = open_out(dir / "schedule.csv");
    f << "stage,start,length,p,expected_active\n";
    for (std::size_t i = 0; i < s.size(); ++i)
        f << (i + 1) << ',' << s.stages()[i].start << ',' << s.stage_length(i) << ',' << num(s.stages()[i].p) << ','
          << num(s.expected_active(i)) << '\n';
    artifacts.push_back("schedule.csv");

    double flops = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i)
        flops += static_cast<double>(s.stage_length(i)) * s.expected_active(i) / depth;
    flops /= static_cast<double>(total);

    RunOutcome out;
    out.summary = {{"boundaries", s.boundaries()}, {"avg_length", s.avg_length()}, {"relative_flops", flops}};
    if (sc.target_avg > 0.0) {
        out.summary["x"] = x;
        log << "x = " << x << "\n";
    }
    log << "boundaries =";
    for (long b : s.boundaries()) log << ' ' << b;
    log << "\naverage length = " << num(s.avg_length()) << ", relative flops = " << num(flops) << "\n";
    return out;
}

// ---------------------------------------------------------------- replicas

Json flatten_scalars(const Json& summary) {
    Json row = Json::object();
    for (auto it = summary.begin(); it != summary.end(); ++it) {
        if (it.value().is_number() || it.value().is_boolean()) {
            row[it.key()] = it.value();
        } else if (it.value().is_array()) {
            std::size_t i = 1;
            bool numeric = true;
            for (const auto& v : it.value()) numeric = numeric && v.is_number();
            if (!numeric) continue;
            for (const auto& v : it.value()) row[it.key() + "_" + std::to_string(i++)] = v;
        }
    }
    return row;
}

std::string cell(const Json& v) {
    if (v.is_boolean()) return v.get<bool>() ? "1" : "0";
    if (v.is_number_integer() || v.is_number_unsigned()) return v.dump();
    if (v.is_number()) return num(v.get<double>());
    return "";
}

}  // namespace

// ---------------------------------------------------------------- public API

const std::vector<std::string>& experiment_names() {
    static const std::vector<std::string> names{"boolpoly_train", "stability_sweep", "sinelab", "sharedbase_check",
                                                "schedule_report"};
    return names;
}

Json default_config(const std::string& experiment) {
    Json j = common_defaults(experiment);
    if (experiment == "boolpoly_train") {
        j["method"] = "raptr";
        j["task"] = {{"d", 30}, {"t", 10}, {"k", 5}, {"m", 10}};
        j["model"] = {{"depth", 12}, {"hidden", 0}, {"prenorm", false}, {"readout_gain", 1.0}};
        j["train"] = {{"steps", 20000},   {"batch", 64},        {"optimizer", "adam"},
                      {"lr", 1e-3},       {"momentum", 0.0},    {"lr_warmup_steps", 0},
                      {"final_decay", "none"}, {"eval_every", 500}, {"eval_size", 4096},
                      {"boundary_probe", 50}};
        j["raptr"] = {{"stages", {6.0, 8.0, 10.0, 12.0}},
                      {"fixed", Json::array()},
                      {"mode", "proportional"},
                      {"target_avg", 9.6},
                      {"target_quantum", 1},
                      {"warmup_steps", 0},
                      {"scale_rule", "h_sqrt"}};
        j["pld"] = {{"alpha_bar", 0.6}, {"gamma_f", 100.0}};
        j["stacking"] = {{"sizes", {3, 6, 9, 12}}, {"op", "topstack"}};
        j["width"] = {{"groups", 4}, {"kept", {1, 2, 3, 4}}, {"mode", "equal"}};
        j["components"] = {{"every", 1000}, {"mc_samples", 20000}, {"final_mc_samples", 100000}, {"threshold", 0.5}};
        j["save_checkpoint"] = true;
    } else if (experiment == "stability_sweep") {
        j["variants"] = {"residual_ln"};
        j["depths"] = {32};
        j["taus"] = {0.0};
        j["width"] = 1024;
        j["probes"] = 16;
        j["delta"] = 0.2;
        j["a_mode"] = "symmetric";
        j["g_var_exponent"] = 1.0;
        j["mu"] = {{"n_perturb", 64}, {"radial_mix", 3.0}};
    } else if (experiment == "sinelab") {
        j["d"] = 5;
        j["eta"] = 1e-3;
        j["steps"] = {{"bias", 5000}, {"phase1", 5000}, {"phase2", 5000}};
        j["record_every"] = 0;
        j["p0_in_second"] = false;
        j["random_layer"] = true;
        j["best_fit"] = {{"enabled", true}, {"restarts", 50}, {"steps", 4000}, {"lr", 0.05}, {"init_scale", 2.0}};
    } else if (experiment == "sharedbase_check") {
        j["cases"] = 100;
        j["depth"] = 6;
        j["width"] = 8;
        j["hidden"] = 16;
        j["batch"] = 4;
        j["kinds"] = {"relu_mlp", "linear", "linear_ln"};
        j["tolerance"] = 1e-12;
        j["tokens"] = 1024;
        j["overhead_depth"] = 24;
        j["mac_active"] = 12;
        j["mac_width"] = 64;
    } else if (experiment == "schedule_report") {
        j["depth"] = 24;
        j["total_steps"] = 400000;
        j["stages"] = {6.0, 12.0, 18.0, 24.0};
        j["fixed"] = Json::array();
        j["mode"] = "proportional";
        j["target_avg"] = 20.0;
        j["target_quantum"] = 1000;
        j["warmup_steps"] = 0;
    } else {
        throw ConfigError("unknown experiment '" + experiment + "'");
    }
    return j;
}

ExperimentConfig ExperimentConfig::parse(const Json& user) {
    if (!user.is_object()) throw ConfigError("config must be a JSON object");
    if (!user.contains("experiment") || !user.at("experiment").is_string())
        throw ConfigError("config needs a string 'experiment'");
    Json doc = default_config(user.at("experiment").get<std::string>());
    merge_into(doc, user, "");
    validate(doc);
    return ExperimentConfig(std::move(doc));
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
    return parse(read_json(path));
}

ExperimentConfig ExperimentConfig::with_seed(std::uint64_t seed, const fs::path& dir) const {
    Json d = doc_;
    d["seed"] = seed;
    d["output_dir"] = dir.string();
    d["replicas"] = 1u;
    return ExperimentConfig(std::move(d));
}

std::string ExperimentConfig::hash() const {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(doc_.dump())));
    return buf;
}

RunOutcome run_experiment(const ExperimentConfig& cfg, std::ostream& log) {
    const Json& doc = cfg.doc();
    const fs::path dir = cfg.output_dir();
    fs::create_directories(dir);
    Json manifest = {{"tool", "raptr-lab"},
                     {"format_version", 1},
                     {"experiment", cfg.experiment()},
                     {"seed", cfg.seed()},
                     {"config_hash", cfg.hash()},
                     {"config", doc}};
    std::vector<std::string> artifacts;
    RunOutcome out;
    const std::string exp = cfg.experiment();
    if (exp == "boolpoly_train") out = run_boolpoly(doc, dir, artifacts, manifest, log);
    else if (exp == "stability_sweep") out = run_stability(doc, dir, artifacts, log);
    else if (exp == "sinelab") out = run_sine(doc, dir, artifacts, log);
    else if (exp == "sharedbase_check") out = run_sharedbase(doc, dir, artifacts, log);
    else out = run_schedule(doc, dir, artifacts, log);

    write_json(dir / "summary.json", out.summary);
    artifacts.push_back("summary.json");
    manifest["artifacts"] = artifacts;
    write_json(dir / "manifest.json", manifest);
    return out;
}

namespace {

int guarded(const std::function<int()>& body, std::ostream& log) {
    try {
        return body();
    } catch (const ConfigError& e) {
        log << "config error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const InfeasibleSchedule& e) {
        log << "infeasible schedule: " << e.what() << "\n";
        return kExitInfeasibleSchedule;
    } catch (const ArgumentError& e) {
        log << "config error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const NumericError& e) {
        log << "numeric divergence: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const nlohmann::json::exception& e) {
        log << "config error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const std::ios_base::failure& e) {
        log << "i/o error: " << e.what() << "\n";
        return kExitIoError;
    } catch (const fs::filesystem_error& e) {
        log << "i/o error: " << e.what() << "\n";
        return kExitIoError;
    }
}

}  // namespace

unsigned worker_limit() {
    unsigned n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("RAPTR_LAB_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1) n = static_cast<unsigned>(v);
    }
    return n;
}

int run_config(const ExperimentConfig& cfg, std::ostream& log) {
    const std::uint64_t replicas = cfg.doc().at("replicas").get<std::uint64_t>();
    if (replicas == 1) {
        return guarded(
            [&] {
                const RunOutcome r = run_experiment(cfg, log);
                if (!r.message.empty()) log << r.message << "\n";
                return r.exit_code;
            },
            log);
    }

    const fs::path root = cfg.output_dir();
    struct Slot {
        std::uint64_t seed;
        int code = kExitOk;
        std::string log;
        Json summary;
    };
    std::vector<Slot> slots;
    for (std::uint64_t i = 0; i < replicas; ++i) {
        Slot s;
        s.seed = cfg.seed() + i;
        slots.push_back(std::move(s));
    }
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < slots.size(); i = next++) {
            Slot& s = slots[i];
            std::ostringstream buf;
            const ExperimentConfig rc = cfg.with_seed(s.seed, root / ("seed_" + std::to_string(s.seed)));
            s.code = guarded(
                [&] {
                    const RunOutcome r = run_experiment(rc, buf);
                    s.summary = r.summary;
                    if (!r.message.empty()) buf << r.message << "\n";
                    return r.exit_code;
                },
                buf);
            s.log = buf.str();
        }
    };
    const unsigned n = std::min<unsigned>(worker_limit(), static_cast<unsigned>(replicas));
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    int code = kExitOk;
    for (const auto& s : slots) {
        log << "[seed " << s.seed << "]\n" << s.log;
        if (code == kExitOk && s.code != kExitOk) code = s.code;
    }
    return guarded(
        [&] {
            fs::create_directories(root);
            std::vector<std::string> cols;
            for (const auto& s : slots) {
                if (s.summary.is_null()) continue;
                const Json flat = flatten_scalars(s.summary);
                for (auto it = flat.begin(); it != flat.end(); ++it)
                    if (std::find(cols.begin(), cols.end(), it.key()) == cols.end()) cols.push_back(it.key());
            }
            auto f = open_out(root / "replicas.csv");
            f << "seed,exit_code";
            for (const auto& c : cols) f << ',' << c;
            f << '\n';
            for (const auto& s : slots) {
                f << s.seed << ',' << s.code;
                const Json flat = s.summary.is_null() ? Json::object() : flatten_scalars(s.summary);
                for (const auto& c : cols) f << ',' << (flat.contains(c) ? cell(flat.at(c)) : std::string());
                f << '\n';
            }
            return code;
        },
        log);
}

int run_config_file(const fs::path& path, std::ostream& log) {
    int code = kExitOk;
    std::optional<ExperimentConfig> cfg;
    code = guarded(
        [&] {
            cfg = ExperimentConfig::load(path);
            return kExitOk;
        },
        log);
    if (code != kExitOk) return code;
    return run_config(*cfg, log);
}

void compare_runs(const std::vector<fs::path>& dirs, std::ostream& csv) {
    if (dirs.size() < 2) throw IncompatibleRuns("compare needs at least two runs");
    std::vector<Json> manifests, summaries;
    for (const auto& d : dirs) {
        manifests.push_back(read_json(d / "manifest.json"));
        summaries.push_back(read_json(d / "summary.json"));
        if (manifests.back().at("experiment") != "boolpoly_train")
            throw IncompatibleRuns(d.string() + " is not a boolpoly_train run");
    }
    const Json& task = manifests.front().at("config").at("task");
    for (std::size_t i = 1; i < dirs.size(); ++i)
        if (manifests[i].at("config").at("task") != task)
            throw IncompatibleRuns(dirs[i].string() + " was trained on a different task");

    const int k = task.at("k").get<int>();
    csv << "run,method,seed,steps,final_eval_loss,flops_ratio";
    for (int l = 1; l <= k; ++l) csv << ",component_error_" << l;
    for (int l = 1; l <= k; ++l) csv << ",crossing_step_" << l;
    csv << '\n';
    for (std::size_t i = 0; i < dirs.size(); ++i) {
        const Json& m = manifests[i];
        const Json& s = summaries[i];
        csv << dirs[i].filename().string() << ',' << s.at("method").get<std::string>() << ','
            << m.at("seed").get<std::uint64_t>() << ',' << m.at("config").at("train").at("steps").get<long>() << ','
            << num(s.at("final_eval_loss").get<double>()) << ',' << num(s.at("flops_ratio").get<double>());
        for (const auto& e : s.at("component_error")) csv << ',' << num(e.get<double>());
        for (const auto& c : s.at("crossing_step")) csv << ',' << c.get<long>();
        csv << '\n';
    }
}

int run_selftest(std::ostream& out) {
    bool all = true;
    auto report = [&](const std::string& name, bool ok, const std::string& detail) {
        out << (ok ? "PASS " : "FAIL ") << name << " (" << detail << ")\n";
        all = all && ok;
    };
    RngStream rng(20240601, 0);

    {
        double worst = 0.0;
        int cases = 0;
        for (int kind = 0; kind < 3; ++kind) {
            for (int head = 0; head < 3; ++head) {
                for (int variant = 0; variant < 2; ++variant) {
                    RngStream r = rng.split(static_cast<std::uint64_t>(100 + 10 * kind + 2 * head + variant));
                    const auto hk = static_cast<HeadKind>(head);
                    ResidualNet net = kind == 0   ? make_relu_mlp_net(4, 3, 6, variant == 1, hk, r)
                                      : kind == 1 ? make_linear_net(4, 3, false,
                                                                    variant == 0 ? Composition::Residual : Composition::Plain,
                                                                    hk, r)
                                                  : make_linear_net(4, 3, true,
                                                                    variant == 0 ? Composition::Residual : Composition::Plain,
                                                                    hk, r);
                    ForwardOptions opts;
                    GatePattern g;
                    g.bits = {1, 0, 1};
                    opts.scales = h_sqrt(g);
                    if (net.composition() == Composition::Plain) opts.scales = {1.0, 0.7, 1.3};
                    const Matrix x = gauss_matrix(3, 4, 1.0, r);
                    worst = std::max(worst, gradient_check(net, x, opts, r));
                    ++cases;
                }
            }
        }
        report("network gradients", worst <= 1e-5, std::to_string(cases) + " nets, max rel err " + num(worst));
    }
    {
        double worst = 0.0;
        RngStream r = rng.split(2);
        for (SinePhase ph : {SinePhase::BiasOnly, SinePhase::Layer1, SinePhase::Layer2, SinePhase::Phase2,
                             SinePhase::Full}) {
            SineParams p = SineParams::zeros(5);
            p.p0 = r.normal();
            p.b1 = r.normal();
            p.b2 = r.normal();
            for (int i = 0; i < 5; ++i) {
                p.w1[i] = r.normal();
                p.w2[i] = r.normal();
            }
            const double scale = std::max(1.0, population_grad(p, ph).flat().cwiseAbs().maxCoeff());
            worst = std::max(worst, sine_grad_check(p, ph) / scale);
        }
        report("sine gradients", worst <= 1e-5, "max rel err " + num(worst));
    }
    {
        RngStream r = rng.split(3);
        const auto cases = sharedbase_cases(20, 5, 6, 8, 3, {"relu_mlp", "linear", "linear_ln"}, r);
        double worst = 0.0;
        for (const auto& c : cases) worst = std::max(worst, c.discrepancy);
        report("shared-base equivalence", worst <= 1e-12, "max discrepancy " + num(worst));
    }
    {
        RngStream r = rng.split(4);
        bool ok = true;
        for (int trial = 0; trial < 200; ++trial) {
            const long L = 1 + static_cast<long>(r.below(16));
            const GatePattern g = random_gates(L, r);
            const ScalePattern s = h_sqrt(g);
            const auto act = g.active_indices();
            double sq = 0.0;
            for (long j = 0; j < L; ++j) {
                if (g.bits[static_cast<std::size_t>(j)] == 0) ok = ok && s[static_cast<std::size_t>(j)] == 0.0;
                else sq += s[static_cast<std::size_t>(j)] * s[static_cast<std::size_t>(j)];
            }
            ok = ok && std::abs(sq - static_cast<double>(L + 1 - act.front())) <= 1e-12;
        }
        const ScalePattern full = h_sqrt(GatePattern::all_on(7));
        ok = ok && std::all_of(full.begin(), full.end(), [](double v) { return v == 1.0; });
        report("h_sqrt invariants", ok, "200 random patterns");
    }
    return all ? kExitOk : kExitCheckFailed;
}

}  // namespace raptr
