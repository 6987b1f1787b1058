#include "raptr/subnet.hpp"

#include <algorithm>
#include <cmath>

namespace raptr {

namespace {

void check_fixed(const std::vector<int>& fixed, int depth) {
    for (int i : fixed) {
        if (i < 1 || i > depth)
            throw ArgumentError("always-on layer " + std::to_string(i) + " outside 1.." + std::to_string(depth));
    }
}

std::vector<int> normalized_fixed(std::vector<int> fixed) {
    std::sort(fixed.begin(), fixed.end());
    fixed.erase(std::unique(fixed.begin(), fixed.end()), fixed.end());
    return fixed;
}

std::vector<Stage> stages_from_specs(const std::vector<StageSpec>& specs, int depth,
                                     const std::vector<long>& lengths) {
    std::vector<Stage> out;
    long start = 0;
    for (std::size_t s = 0; s < specs.size(); ++s) {
        Stage st;
        st.start = start;
        st.fixed = normalized_fixed(specs[s].fixed);
        check_fixed(st.fixed, depth);
        st.p = p_for_size(specs[s].size, st.fixed.size(), depth);
        out.push_back(std::move(st));
        start += lengths[s];
    }
    return out;
}

void check_specs(const std::vector<StageSpec>& specs, int depth, long total_steps) {
    if (specs.empty()) throw ArgumentError("schedule needs at least one stage");
    if (depth < 1) throw ArgumentError("schedule depth must be >= 1");
    if (total_steps < static_cast<long>(specs.size()))
        throw ArgumentError("total steps must be at least the number of stages");
    for (const auto& s : specs) {
        if (s.size > depth) throw ArgumentError("stage size exceeds depth");
    }
}

}  // namespace

GatePattern sample_gates(double p, const std::vector<int>& fixed, int depth, RngStream& rng) {
    if (!(p >= 0.0 && p <= 1.0)) throw ArgumentError("sample_gates: p outside [0,1]");
    if (depth < 1) throw ArgumentError("sample_gates: depth must be >= 1");
    check_fixed(fixed, depth);
    GatePattern g;
    g.bits.assign(static_cast<std::size_t>(depth), 0);
    g.fixed = normalized_fixed(fixed);
    for (int i : g.fixed) g.bits[static_cast<std::size_t>(i - 1)] = 1;
    for (int i = 0; i < depth; ++i) {
        // One draw per layer regardless of membership keeps streams aligned across I choices.
        const bool keep = rng.bernoulli(p);
        if (keep) g.bits[static_cast<std::size_t>(i)] = 1;
    }
    return g;
}

double expected_active(double p, std::size_t fixed_count, int depth) {
    return static_cast<double>(fixed_count) + (depth - static_cast<double>(fixed_count)) * p;
}

double relative_flops(double p, std::size_t fixed_count, int depth) {
    if (depth < 1) throw ArgumentError("relative_flops: depth must be >= 1");
    return expected_active(p, fixed_count, depth) / depth;
}

double realized_flops(const GatePattern& g) {
    if (g.size() == 0) return 0.0;
    return static_cast<double>(g.active_count()) / static_cast<double>(g.size());
}

double pld_long_run_flops(double alpha_bar) {
    return 1.0 - (1.0 - alpha_bar) / 2.0;
}

double pld_exact_keep_fraction(double alpha_bar, int depth) {
    return 1.0 - (1.0 - alpha_bar) * (depth - 1.0) / (2.0 * depth);
}

std::string to_string(ScheduleMode m) {
    return m == ScheduleMode::Equal ? "equal" : "proportional";
}

ScheduleMode schedule_mode_from_string(const std::string& s) {
    if (s == "equal") return ScheduleMode::Equal;
    if (s == "proportional") return ScheduleMode::Proportional;
    throw ArgumentError("unknown schedule mode '" + s + "'");
}

StageSchedule::StageSchedule(int depth, long total_steps, std::vector<Stage> stages, int warmup_stages)
    : depth_(depth), total_(total_steps), stages_(std::move(stages)), warmup_(warmup_stages) {
    if (depth_ < 1) throw ArgumentError("schedule depth must be >= 1");
    if (stages_.empty()) throw ArgumentError("schedule needs at least one stage");
    if (stages_.front().start != 0) throw ArgumentError("first stage must start at step 0");
    if (warmup_ < 0 || warmup_ >= static_cast<int>(stages_.size()))
        throw ArgumentError("warmup prefix must leave at least one regular stage");
    for (std::size_t s = 0; s < stages_.size(); ++s) {
        auto& st = stages_[s];
        st.fixed = normalized_fixed(st.fixed);
        check_fixed(st.fixed, depth_);
        if (!(st.p >= 0.0 && st.p <= 1.0)) throw ArgumentError("stage p outside [0,1]");
        if (s > 0 && st.start <= stages_[s - 1].start)
            throw ArgumentError("stage starts must be strictly increasing");
    }
    if (stages_.back().start >= total_) throw ArgumentError("last stage must start before total steps");
    for (std::size_t s = static_cast<std::size_t>(warmup_) + 1; s < stages_.size(); ++s) {
        const auto& prev = stages_[s - 1];
        const auto& cur = stages_[s];
        if (cur.p < prev.p) throw ArgumentError("stage p must be nondecreasing");
        if (!std::includes(cur.fixed.begin(), cur.fixed.end(), prev.fixed.begin(), prev.fixed.end()))
            throw ArgumentError("always-on sets must grow across stages");
    }
}

std::size_t StageSchedule::stage_index(long step) const {
    if (step < 0 || step >= total_)
        throw ArgumentError("step " + std::to_string(step) + " outside schedule range");
    auto it = std::upper_bound(stages_.begin(), stages_.end(), step,
                               [](long v, const Stage& s) { return v < s.start; });
    return static_cast<std::size_t>(std::distance(stages_.begin(), it)) - 1;
}

long StageSchedule::stage_length(std::size_t s) const {
    const long end = s + 1 < stages_.size() ? stages_[s + 1].start : total_;
    return end - stages_[s].start;
}

std::vector<long> StageSchedule::boundaries() const {
    std::vector<long> out;
    for (std::size_t s = 1; s < stages_.size(); ++s) out.push_back(stages_[s].start);
    return out;
}

double StageSchedule::expected_active(std::size_t s) const {
    return raptr::expected_active(stages_[s].p, stages_[s].fixed.size(), depth_);
}

double StageSchedule::avg_length() const {
    double acc = 0.0;
    for (std::size_t s = 0; s < stages_.size(); ++s)
        acc += static_cast<double>(stage_length(s)) * expected_active(s);
    return acc / static_cast<double>(total_);
}

double p_for_size(double size, std::size_t fixed_count, int depth) {
    const double nf = static_cast<double>(fixed_count);
    if (size > depth) throw ArgumentError("stage size exceeds depth");
    if (size < nf) throw ArgumentError("stage size smaller than its always-on set");
    if (static_cast<double>(depth) == nf) return 1.0;
    return (size - nf) / (depth - nf);
}

StageSchedule build_equal(const std::vector<StageSpec>& specs, int depth, long total_steps) {
    check_specs(specs, depth, total_steps);
    const long k = static_cast<long>(specs.size());
    std::vector<long> lengths(specs.size(), total_steps / k);
    lengths.back() += total_steps - k * (total_steps / k);
    return StageSchedule(depth, total_steps, stages_from_specs(specs, depth, lengths));
}

StageSchedule build_proportional(const std::vector<StageSpec>& specs, int depth, long total_steps) {
    check_specs(specs, depth, total_steps);
    const long k = static_cast<long>(specs.size());
    const long denom = k * (k + 1) / 2;
    std::vector<long> lengths(specs.size());
    long used = 0;
    for (long s = 0; s < k; ++s) {
        lengths[static_cast<std::size_t>(s)] = total_steps * (s + 1) / denom;
        used += lengths[static_cast<std::size_t>(s)];
    }
    lengths.back() += total_steps - used;
    for (long len : lengths)
        if (len < 1) throw ArgumentError("proportional split leaves an empty stage");
    return StageSchedule(depth, total_steps, stages_from_specs(specs, depth, lengths));
}

StageSchedule build_schedule(ScheduleMode mode, const std::vector<StageSpec>& specs, int depth,
                             long total_steps) {
    return mode == ScheduleMode::Equal ? build_equal(specs, depth, total_steps)
                                       : build_proportional(specs, depth, total_steps);
}

TargetSolve solve_target_average(const StageSchedule& schedule, double target_avg, long step_quantum) {
    if (step_quantum < 1) throw ArgumentError("step quantum must be >= 1");
    const auto& stages = schedule.stages();
    const std::size_t k = stages.size();
    const double current = schedule.avg_length();
    if (k == 1) {
        if (std::abs(current - target_avg) > 1e-12)
            throw InfeasibleSchedule("single-stage schedule cannot be shifted to the target average");
        return {0, schedule};
    }
    double head_sum = 0.0;
    double lo = schedule.expected_active(k - 1);
    double hi = lo;
    for (std::size_t s = 0; s + 1 < k; ++s) {
        head_sum += schedule.expected_active(s);
        lo = std::min(lo, schedule.expected_active(s));
        hi = std::max(hi, schedule.expected_active(s));
    }
    if (target_avg < lo || target_avg > hi)
        throw InfeasibleSchedule("target average outside the stage size range");

    const double T = static_cast<double>(schedule.total_steps());
    // avg(x) = current + x ((k-1) size_k - sum_{s<k} size_s) / T
    const double slope = ((static_cast<double>(k) - 1.0) * schedule.expected_active(k - 1) - head_sum) / T;
    long x = 0;
    if (std::abs(target_avg - current) > 1e-12) {
        if (slope == 0.0) throw InfeasibleSchedule("stage sizes make the average independent of x");
        const double exact = (target_avg - current) / slope;
        x = std::lround(exact / static_cast<double>(step_quantum)) * step_quantum;
    }

    std::vector<Stage> shifted = stages;
    long start = 0;
    for (std::size_t s = 0; s < k; ++s) {
        long len = schedule.stage_length(s);
        len += (s + 1 < k) ? -x : x * static_cast<long>(k - 1);
        if (len < 1) throw InfeasibleSchedule("solved shift leaves an empty stage");
        shifted[s].start = start;
        start += len;
    }
    return {x, StageSchedule(schedule.depth(), schedule.total_steps(), std::move(shifted),
                             schedule.warmup_stages())};
}

StageSchedule make_schedule(const ScheduleConfig& cfg, int depth, long total_steps, long* solved_x) {
    if (cfg.warmup_steps < 0 || cfg.warmup_steps >= total_steps)
        throw ArgumentError("warmup_steps must lie in [0, total_steps)");
    const long body_steps = total_steps - cfg.warmup_steps;
    StageSchedule body = build_schedule(cfg.mode, cfg.stages, depth, body_steps);
    long x = 0;
    if (cfg.target_avg > 0.0) {
        auto solved = solve_target_average(body, cfg.target_avg, cfg.target_quantum);
        x = solved.x;
        body = std::move(solved.schedule);
    }
    if (solved_x != nullptr) *solved_x = x;
    if (cfg.warmup_steps == 0) return body;

    std::vector<Stage> stages;
    stages.push_back(Stage{0, 1.0, {}});
    for (auto st : body.stages()) {
        st.start += cfg.warmup_steps;
        stages.push_back(std::move(st));
    }
    return StageSchedule(depth, total_steps, std::move(stages), 1);
}

}  // namespace raptr
