#pragma once

// (p, I)-subnetwork sampling, stage schedules and FLOPs accounting.

#include "raptr/netcore.hpp"

#include <string>
#include <vector>

namespace raptr {

/// Keep every layer in `fixed` (1-based) and each other layer independently with probability p.
GatePattern sample_gates(double p, const std::vector<int>& fixed, int depth, RngStream& rng);

/// Expected number of active layers for a (p, I) pair.
double expected_active(double p, std::size_t fixed_count, int depth);

/// FLOPs of a (p, I)-subnetwork relative to the full model: (|I| + (L - |I|) p) / L.
double relative_flops(double p, std::size_t fixed_count, int depth);

/// Relative FLOPs of one realized gate pattern.
double realized_flops(const GatePattern& g);

/// Long-run FLOPs ratio of progressive layer dropping at average keep rate alpha_bar,
/// 1 - (1 - alpha_bar) / 2 (the large-depth form).
double pld_long_run_flops(double alpha_bar);

/// Exact long-run mean keep fraction of the per-layer decrementing rule at depth L:
/// layer 1 keeps with probability 1 and each later layer loses (1 - alpha_bar) / L, so the
/// mean is 1 - (1 - alpha_bar) (L - 1) / (2 L).
double pld_exact_keep_fraction(double alpha_bar, int depth);

struct Stage {
    long start = 0;
    double p = 1.0;
    /// Always-on layers, 1-based, sorted.
    std::vector<int> fixed;
};

/// Stage request by mean subnetwork size, as in "6-8-10-12".
struct StageSpec {
    double size = 0.0;
    std::vector<int> fixed;
};

enum class ScheduleMode { Equal, Proportional };
std::string to_string(ScheduleMode m);
ScheduleMode schedule_mode_from_string(const std::string& s);

class StageSchedule {
public:
    /// `warmup_stages` leading stages are exempt from the monotonicity check.
    StageSchedule(int depth, long total_steps, std::vector<Stage> stages, int warmup_stages = 0);

    int depth() const noexcept { return depth_; }
    long total_steps() const noexcept { return total_; }
    int warmup_stages() const noexcept { return warmup_; }
    const std::vector<Stage>& stages() const noexcept { return stages_; }
    std::size_t size() const noexcept { return stages_.size(); }

    /// Stage index (0-based) containing `step`; boundaries belong to the later stage.
    std::size_t stage_index(long step) const;
    const Stage& stage_at(long step) const { return stages_[stage_index(step)]; }
    long stage_length(std::size_t s) const;
    /// Start steps of stages 2..k.
    std::vector<long> boundaries() const;

    double expected_active(std::size_t s) const;
    /// Time-weighted mean of the expected active-layer count.
    double avg_length() const;

private:
    int depth_;
    long total_;
    std::vector<Stage> stages_;
    int warmup_;
};

/// p for a requested mean size given the always-on set.
double p_for_size(double size, std::size_t fixed_count, int depth);

/// k stages of length T / k, remainder to the final stage.
StageSchedule build_equal(const std::vector<StageSpec>& specs, int depth, long total_steps);

/// Stage s gets T s / (1 + ... + k) steps, remainder to the final stage.
StageSchedule build_proportional(const std::vector<StageSpec>& specs, int depth, long total_steps);

StageSchedule build_schedule(ScheduleMode mode, const std::vector<StageSpec>& specs, int depth,
                             long total_steps);

struct TargetSolve {
    /// Steps removed from each of the first k - 1 stages (negative: added).
    long x = 0;
    StageSchedule schedule;
};

/// Move x steps out of each of the first k - 1 stages into the final stage so the
/// average subnetwork size hits `target_avg`. x is rounded to the nearest multiple of
/// `step_quantum`. Throws InfeasibleSchedule when no valid x exists.
TargetSolve solve_target_average(const StageSchedule& schedule, double target_avg, long step_quantum = 1);

class InfeasibleSchedule : public ArgumentError {
public:
    using ArgumentError::ArgumentError;
};

/// Schedule block of the experiment config.
struct ScheduleConfig {
    std::vector<StageSpec> stages;
    ScheduleMode mode = ScheduleMode::Proportional;
    /// <= 0 disables the solve.
    double target_avg = 0.0;
    long target_quantum = 1;
    /// Leading full-model stage, exempt from the monotonicity rule.
    long warmup_steps = 0;
};

/// Build the schedule described by `cfg` over `total_steps` (warmup included).
StageSchedule make_schedule(const ScheduleConfig& cfg, int depth, long total_steps, long* solved_x = nullptr);

}  // namespace raptr
