#include "raptr/trainers.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <utility>

namespace raptr {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<std::uint8_t> tensor_mask(const ResidualNet& net, const std::vector<std::uint8_t>& block_touched) {
    std::vector<std::uint8_t> out;
    for (std::size_t i = 0; i < net.blocks().size(); ++i) {
        const std::uint8_t t = block_touched.empty() ? 1 : block_touched[i];
        out.push_back(t);
        if (net.blocks()[i].c.size() > 0) out.push_back(t);
    }
    if (net.head().trainable && net.head().v.size() > 0) out.push_back(1);
    return out;
}

std::vector<const Matrix*> const_view(const std::vector<Matrix*>& v) {
    return {v.begin(), v.end()};
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

class BaselinePlanner : public StepPlanner {
public:
    StepPlan plan(long, const ResidualNet& net, RngStream&) override {
        StepPlan p;
        p.active = static_cast<double>(net.depth());
        return p;
    }
};

class RaptrPlanner : public StepPlanner {
public:
    RaptrPlanner(const StageSchedule& s, ScaleRule r) : schedule_(s), rule_(r) {}

    StepPlan plan(long step, const ResidualNet& net, RngStream& rng) override {
        const std::size_t si = schedule_.stage_index(step);
        const Stage& st = schedule_.stages()[si];
        const GatePattern g = sample_gates(st.p, st.fixed, static_cast<int>(net.depth()), rng);
        StepPlan p;
        p.stage = static_cast<int>(si) + 1;
        if (g.active_count() == 0) p.forward.scales.assign(g.size(), 0.0);
        else p.forward.scales = rule_ == ScaleRule::HSqrt ? h_sqrt(g) : unit_scales(g);
        p.block_touched = g.bits;
        p.flops = realized_flops(g);
        p.active = g.active_count();
        return p;
    }

    std::vector<long> boundaries() const override { return schedule_.boundaries(); }

private:
    const StageSchedule& schedule_;
    ScaleRule rule_;
};

class PldPlanner : public StepPlanner {
public:
    PldPlanner(PldConfig c, long total) : cfg_(c), total_(total) {}

    StepPlan plan(long step, const ResidualNet& net, RngStream& rng) override {
        const long depth = net.depth();
        const double alpha = pld_alpha(cfg_, step, total_);
        const double pd = (1.0 - alpha) / static_cast<double>(depth);
        StepPlan p;
        p.forward.scales.assign(static_cast<std::size_t>(depth), 0.0);
        p.block_touched.assign(static_cast<std::size_t>(depth), 0);
        double keep = 1.0;
        int active = 0;
        for (long l = 0; l < depth; ++l) {
            if (rng.bernoulli(std::clamp(keep, 0.0, 1.0))) {
                p.forward.scales[static_cast<std::size_t>(l)] = 1.0 / keep;
                p.block_touched[static_cast<std::size_t>(l)] = 1;
                ++active;
            }
            keep -= pd;
        }
        p.active = active;
        p.flops = static_cast<double>(active) / static_cast<double>(depth);
        return p;
    }

private:
    PldConfig cfg_;
    long total_;
};

class FixedSizePlanner : public StepPlanner {
public:
    explicit FixedSizePlanner(int active) : active_(active) {}

    StepPlan plan(long, const ResidualNet& net, RngStream& rng) override {
        const auto depth = static_cast<std::size_t>(net.depth());
        std::vector<std::size_t> order(depth);
        for (std::size_t i = 0; i < depth; ++i) order[i] = i;
        for (std::size_t i = 0; i < static_cast<std::size_t>(active_); ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng.below(depth - i));
            std::swap(order[i], order[j]);
        }
        StepPlan p;
        p.forward.scales.assign(depth, 0.0);
        p.block_touched.assign(depth, 0);
        for (int i = 0; i < active_; ++i) {
            p.forward.scales[order[static_cast<std::size_t>(i)]] = 1.0;
            p.block_touched[order[static_cast<std::size_t>(i)]] = 1;
        }
        p.active = active_;
        p.flops = static_cast<double>(active_) / static_cast<double>(depth);
        return p;
    }

private:
    int active_;
};

class WidthPlanner : public StepPlanner {
public:
    WidthPlanner(StageSchedule s, int groups) : schedule_(std::move(s)), groups_(groups) {}

    StepPlan plan(long step, const ResidualNet& net, RngStream& rng) override {
        const std::size_t si = schedule_.stage_index(step);
        const int kept = static_cast<int>(std::lround(schedule_.expected_active(si)));
        StepPlan p;
        p.stage = static_cast<int>(si) + 1;
        const double scale = static_cast<double>(groups_) / kept;
        std::vector<int> order(static_cast<std::size_t>(groups_));
        for (const Block& b : net.blocks()) {
            const long m = b.hidden();
            const long per = m / groups_;
            for (int g = 0; g < groups_; ++g) order[static_cast<std::size_t>(g)] = g;
            for (int i = 0; i < kept; ++i) {
                const int j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(groups_ - i)));
                std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
            }
            Vector mask = Vector::Zero(m);
            for (int i = 0; i < kept; ++i)
                mask.segment(order[static_cast<std::size_t>(i)] * per, per).setConstant(scale);
            p.forward.hidden_masks.push_back(std::move(mask));
        }
        p.flops = static_cast<double>(kept) / groups_;
        p.active = static_cast<double>(net.depth()) * p.flops;
        return p;
    }

    std::vector<long> boundaries() const override { return schedule_.boundaries(); }

private:
    StageSchedule schedule_;
    int groups_;
};

class StackingPlanner : public StepPlanner {
public:
    StackingPlanner(GrowthOp op, std::vector<long> sizes, long total) : op_(op), sizes_(std::move(sizes)) {
        const long k = static_cast<long>(sizes_.size());
        for (long s = 1; s < k; ++s) bounds_.push_back(s * (total / k));
    }

    /// Grows `net` when `step` is a stage start. Returns true if the structure changed.
    bool maybe_grow(long step, ResidualNet& net) {
        for (std::size_t s = 0; s < bounds_.size(); ++s) {
            if (bounds_[s] == step) {
                net = grow(net, op_, sizes_[s + 1]);
                return true;
            }
        }
        return false;
    }

    StepPlan plan(long step, const ResidualNet& net, RngStream&) override {
        StepPlan p;
        p.stage = 1 + static_cast<int>(std::upper_bound(bounds_.begin(), bounds_.end(), step) - bounds_.begin());
        p.active = static_cast<double>(net.depth());
        p.flops = static_cast<double>(net.depth()) / static_cast<double>(sizes_.back());
        return p;
    }

    std::vector<long> boundaries() const override { return bounds_; }

private:
    GrowthOp op_;
    std::vector<long> sizes_;
    std::vector<long> bounds_;
};

RunMetrics run_loop(ResidualNet& net, const DataSource& data, StepPlanner& planner, const TrainConfig& cfg,
                    StackingPlanner* grower) {
    if (cfg.steps < 0) throw ArgumentError("steps must be >= 0");
    if (cfg.batch < 1) throw ArgumentError("batch must be >= 1");
    if (cfg.eval_every < 1) throw ArgumentError("eval_every must be >= 1");
    if (data.input_dim() != net.width()) throw ArgumentError("data dimension does not match the network width");

    RngStream root(cfg.seed, 0);
    RngStream data_rng = root.split(1);
    RngStream plan_rng = root.split(2);
    auto optimizer = std::make_unique<Optimizer>(cfg.optim, const_view(net.parameters()));

    const long T = cfg.steps;
    const auto bounds = planner.boundaries();
    const long final_start = bounds.empty() ? 0 : bounds.back();
    std::set<long> eval_points;
    for (long s = 0; s <= T; s += cfg.eval_every) eval_points.insert(s);
    eval_points.insert(T);
    for (long b : bounds) {
        eval_points.insert(b);
        if (cfg.boundary_probe > 0) {
            if (b - cfg.boundary_probe >= 0) eval_points.insert(b - cfg.boundary_probe);
            if (b + cfg.boundary_probe <= T) eval_points.insert(b + cfg.boundary_probe);
        }
    }

    RunMetrics out;
    double flops_total = 0.0;
    double window_loss = 0.0;
    double window_active = 0.0;
    long window_steps = 0;
    int stage = 1;

    auto record = [&](long done) {
        MetricRecord r;
        r.step = done;
        r.stage = stage;
        r.train_loss = window_steps > 0 ? window_loss / window_steps : kNaN;
        r.mean_active = window_steps > 0 ? window_active / window_steps : kNaN;
        r.flops_ratio = T > 0 ? flops_total / static_cast<double>(T) : 0.0;
        r.eval_loss = cfg.eval_set.x.size() > 0 ? eval_mse(net, cfg.eval_set) : kNaN;
        out.records.push_back(r);
        window_loss = window_active = 0.0;
        window_steps = 0;
        if (cfg.on_eval) cfg.on_eval(done, net);
    };

    record(0);
    for (long step = 0; step < T; ++step) {
        if (grower != nullptr && grower->maybe_grow(step, net))
            optimizer = std::make_unique<Optimizer>(cfg.optim, const_view(net.parameters()));
        StepPlan plan = planner.plan(step, net, plan_rng);
        stage = plan.stage;
        const Batch batch = data.sample(cfg.batch, data_rng);

        ForwardTape tape;
        try {
            tape = forward(net, batch.x, plan.forward);
        } catch (const NumericError& e) {
            throw DivergenceError("training diverged at step " + std::to_string(step) + ": " + e.what(), step);
        }
        const BatchLoss loss = mse_batch(tape.output, batch.y);
        if (!std::isfinite(loss.value))
            throw DivergenceError("training loss became non-finite at step " + std::to_string(step), step);
        Gradients grads = backward(net, tape, loss.upstream);
        const auto touched = tensor_mask(net, plan.block_touched);
        optimizer->step(net.parameters(), std::as_const(grads).flat(net),
                        cfg.lr.at(step, final_start, T), touched);

        flops_total += plan.flops;
        window_loss += loss.value;
        window_active += plan.active;
        ++window_steps;
        if (eval_points.count(step + 1)) record(step + 1);
    }
    out.flops_ratio = T > 0 ? flops_total / static_cast<double>(T) : 0.0;
    out.final_eval_loss = out.records.back().eval_loss;
    return out;
}

}  // namespace

void RunMetrics::write_csv(const std::filesystem::path& path) const {
    std::ofstream os(path);
    if (!os) throw ArgumentError("cannot write " + path.string());
    os << "step,stage,train_loss,eval_loss,flops_ratio,mean_active\n";
    for (const auto& r : records) {
        os << r.step << ',' << r.stage << ',' << fmt(r.train_loss) << ',' << fmt(r.eval_loss) << ','
           << fmt(r.flops_ratio) << ',' << fmt(r.mean_active) << '\n';
    }
}

const MetricRecord* RunMetrics::at_step(long step) const {
    for (const auto& r : records)
        if (r.step == step) return &r;
    return nullptr;
}

std::string to_string(ScaleRule r) {
    return r == ScaleRule::HSqrt ? "h_sqrt" : "unit";
}

ScaleRule scale_rule_from_string(const std::string& s) {
    if (s == "h_sqrt") return ScaleRule::HSqrt;
    if (s == "unit") return ScaleRule::Unit;
    throw ArgumentError("unknown scale rule '" + s + "'");
}

double eval_mse(const ResidualNet& net, const Batch& batch, const ForwardOptions& opts) {
    const ForwardTape tape = forward(net, batch.x, opts);
    return mse_batch(tape.output, batch.y).value;
}

RunMetrics train_with_planner(ResidualNet& net, const DataSource& data, StepPlanner& planner,
                              const TrainConfig& cfg) {
    return run_loop(net, data, planner, cfg, nullptr);
}

RunMetrics train_baseline(ResidualNet& net, const DataSource& data, const TrainConfig& cfg) {
    BaselinePlanner planner;
    return run_loop(net, data, planner, cfg, nullptr);
}

RunMetrics train_raptr(ResidualNet& net, const DataSource& data, const StageSchedule& schedule,
                       const TrainConfig& cfg, ScaleRule rule) {
    if (schedule.depth() != net.depth()) throw ArgumentError("schedule depth does not match the network");
    if (schedule.total_steps() != cfg.steps) throw ArgumentError("schedule length does not match steps");
    RaptrPlanner planner(schedule, rule);
    return run_loop(net, data, planner, cfg, nullptr);
}

double pld_alpha(const PldConfig& cfg, long step, long total_steps) {
    if (total_steps < 1) throw ArgumentError("pld: total steps must be >= 1");
    const double gamma = cfg.gamma_f / static_cast<double>(total_steps);
    return (1.0 - cfg.alpha_bar) * std::exp(-gamma * static_cast<double>(step)) + cfg.alpha_bar;
}

RunMetrics train_pld(ResidualNet& net, const DataSource& data, const PldConfig& pld, const TrainConfig& cfg) {
    if (!(pld.alpha_bar > 0.0 && pld.alpha_bar <= 1.0)) throw ArgumentError("pld: alpha_bar must lie in (0,1]");
    if (!(pld.gamma_f > 0.0)) throw ArgumentError("pld: gamma_f must be positive");
    PldPlanner planner(pld, cfg.steps);
    return run_loop(net, data, planner, cfg, nullptr);
}

RunMetrics train_fixed_size(ResidualNet& net, const DataSource& data, int active, const TrainConfig& cfg) {
    if (active < 0 || active > net.depth()) throw ArgumentError("fixed-size subnetwork larger than the net");
    FixedSizePlanner planner(active);
    return run_loop(net, data, planner, cfg, nullptr);
}

std::string to_string(GrowthOp g) {
    switch (g) {
    case GrowthOp::TopStack: return "topstack";
    case GrowthOp::Double: return "double";
    case GrowthOp::Interpolate: return "interpolate";
    }
    return "?";
}

GrowthOp growth_op_from_string(const std::string& s) {
    if (s == "topstack") return GrowthOp::TopStack;
    if (s == "double") return GrowthOp::Double;
    if (s == "interpolate") return GrowthOp::Interpolate;
    throw ArgumentError("unknown growth operator '" + s + "'");
}

ResidualNet grow_topstack(const ResidualNet& net, long new_depth) {
    const long L = net.depth();
    const long n = new_depth - L;
    if (n < 1) throw ArgumentError("growth target must exceed the current depth");
    if (n > L) throw ArgumentError("topstack can add at most L blocks per growth");
    std::vector<Block> blocks = net.blocks();
    for (long i = L - n; i < L; ++i) blocks.push_back(net.blocks()[static_cast<std::size_t>(i)]);
    return ResidualNet(net.width(), net.composition(), std::move(blocks), net.head());
}

ResidualNet grow_double(const ResidualNet& net) {
    std::vector<Block> blocks = net.blocks();
    for (const auto& b : net.blocks()) blocks.push_back(b);
    return ResidualNet(net.width(), net.composition(), std::move(blocks), net.head());
}

ResidualNet grow_interpolate(const ResidualNet& net, long new_depth) {
    const long L = net.depth();
    const long n = new_depth - L;
    if (n < 1) throw ArgumentError("growth target must exceed the current depth");
    if (n > L) throw ArgumentError("interpolate can add at most L blocks per growth");
    std::vector<Block> blocks;
    for (long i = 0; i < L; ++i) {
        blocks.push_back(net.blocks()[static_cast<std::size_t>(i)]);
        if (i >= L - n) blocks.push_back(net.blocks()[static_cast<std::size_t>(i)]);
    }
    return ResidualNet(net.width(), net.composition(), std::move(blocks), net.head());
}

ResidualNet grow(const ResidualNet& net, GrowthOp op, long new_depth) {
    switch (op) {
    case GrowthOp::TopStack: return grow_topstack(net, new_depth);
    case GrowthOp::Double:
        if (new_depth != 2 * net.depth()) throw ArgumentError("double growth requires new depth = 2 L");
        return grow_double(net);
    case GrowthOp::Interpolate: return grow_interpolate(net, new_depth);
    }
    throw ArgumentError("unknown growth operator");
}

RunMetrics train_stacking(ResidualNet& net, const DataSource& data, GrowthOp op, const std::vector<long>& sizes,
                          const TrainConfig& cfg) {
    if (sizes.empty()) throw ArgumentError("stacking needs at least one size");
    if (sizes.front() != net.depth()) throw ArgumentError("initial net depth must equal the first stage size");
    for (std::size_t s = 1; s < sizes.size(); ++s)
        if (sizes[s] <= sizes[s - 1]) throw ArgumentError("stacking sizes must be strictly increasing");
    if (cfg.steps < static_cast<long>(sizes.size())) throw ArgumentError("too few steps for the stage count");
    StackingPlanner planner(op, sizes, cfg.steps);
    return run_loop(net, data, planner, cfg, &planner);
}

RunMetrics train_width_raptr(ResidualNet& net, const DataSource& data, const WidthSchedule& ws,
                             const TrainConfig& cfg) {
    if (ws.groups < 1) throw ArgumentError("width groups must be >= 1");
    if (ws.kept.empty()) throw ArgumentError("width schedule needs at least one stage");
    for (const auto& b : net.blocks()) {
        if (b.kind != BlockKind::ReluMlp) throw ArgumentError("width RaPTr needs ReluMlp blocks");
        if (b.hidden() % ws.groups != 0) throw ArgumentError("hidden width not divisible by the group count");
    }
    std::vector<StageSpec> specs;
    for (std::size_t s = 0; s < ws.kept.size(); ++s) {
        if (ws.kept[s] < 1 || ws.kept[s] > ws.groups) throw ArgumentError("kept groups outside 1..G");
        if (s > 0 && ws.kept[s] < ws.kept[s - 1]) throw ArgumentError("kept groups must be nondecreasing");
        specs.push_back(StageSpec{static_cast<double>(ws.kept[s]), {}});
    }
    WidthPlanner planner(build_schedule(ws.mode, specs, ws.groups, cfg.steps), ws.groups);
    return run_loop(net, data, planner, cfg, nullptr);
}

}  // namespace raptr
