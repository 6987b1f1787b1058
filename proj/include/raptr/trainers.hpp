#pragma once

// Training loops: RaPTr, progressive layer dropping, baseline, fixed-size random
// subnetworks, gradual stacking and width-wise RaPTr.

#include "raptr/netcore.hpp"
#include "raptr/optim.hpp"
#include "raptr/subnet.hpp"

#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace raptr {

struct Batch {
    Matrix x;
    Vector y;
};

/// Supplies fresh i.i.d. labelled batches.
class DataSource {
public:
    virtual ~DataSource() = default;
    virtual long input_dim() const = 0;
    virtual Batch sample(long n, RngStream& rng) const = 0;
};

/// Raised when the training loss or an activation becomes non-finite.
class DivergenceError : public NumericError {
public:
    using NumericError::NumericError;
};

struct MetricRecord {
    long step = 0;
    /// 1-based stage index.
    int stage = 1;
    /// Mean minibatch loss over the steps since the previous record (NaN at step 0).
    double train_loss = 0.0;
    double eval_loss = 0.0;
    /// FLOPs spent so far divided by the FLOPs of T full-model steps.
    double flops_ratio = 0.0;
    /// Mean active layer count over the steps since the previous record.
    double mean_active = 0.0;
};

struct RunMetrics {
    std::vector<MetricRecord> records;
    /// Total FLOPs charged divided by T (1.0 for full-model training).
    double flops_ratio = 0.0;
    double final_eval_loss = 0.0;

    void write_csv(const std::filesystem::path& path) const;
    const MetricRecord* at_step(long step) const;
};

/// Called after each recorded evaluation with the step count and the current net.
using EvalHook = std::function<void(long step, const ResidualNet& net)>;

enum class ScaleRule { HSqrt, Unit };
std::string to_string(ScaleRule r);
ScaleRule scale_rule_from_string(const std::string& s);

struct TrainConfig {
    long steps = 1000;
    long batch = 64;
    OptimConfig optim;
    LrSchedule lr;
    /// Record an evaluation every `eval_every` steps (and at the end).
    long eval_every = 500;
    /// Extra evaluations at stage boundary +- this many steps (0 disables).
    long boundary_probe = 50;
    /// Fixed evaluation set; empty disables eval (eval_loss reported as NaN).
    Batch eval_set;
    std::uint64_t seed = 1;
    EvalHook on_eval;
};

/// Per-step choices of a training method.
struct StepPlan {
    ForwardOptions forward;
    /// Per-block flag: 0 leaves the block's parameters and optimizer state untouched.
    std::vector<std::uint8_t> block_touched;
    /// FLOPs of this step relative to one full-model step.
    double flops = 1.0;
    double active = 0.0;
    int stage = 1;
};

class StepPlanner {
public:
    virtual ~StepPlanner() = default;
    virtual StepPlan plan(long step, const ResidualNet& net, RngStream& rng) = 0;
    /// Stage start steps (after the first) used for boundary probes and LR decay.
    virtual std::vector<long> boundaries() const { return {}; }
};

/// Generic loop. Streams: data = split(1), planner = split(2) of RngStream(seed, 0).
RunMetrics train_with_planner(ResidualNet& net, const DataSource& data, StepPlanner& planner,
                              const TrainConfig& cfg);

RunMetrics train_baseline(ResidualNet& net, const DataSource& data, const TrainConfig& cfg);

/// Stagewise (p, I)-subnetwork training. An empty sampled pattern bypasses every block.
RunMetrics train_raptr(ResidualNet& net, const DataSource& data, const StageSchedule& schedule,
                       const TrainConfig& cfg, ScaleRule rule = ScaleRule::HSqrt);

struct PldConfig {
    double alpha_bar = 0.5;
    double gamma_f = 100.0;
};

/// alpha_t = (1 - alpha_bar) exp(-gamma_f t / T) + alpha_bar.
double pld_alpha(const PldConfig& cfg, long step, long total_steps);

/// Progressive layer dropping: keep-prob starts at 1 for layer 1 and drops by
/// (1 - alpha_t) / L per layer; kept layers are scaled by 1 / keep-prob.
RunMetrics train_pld(ResidualNet& net, const DataSource& data, const PldConfig& pld, const TrainConfig& cfg);

/// Each step trains a uniformly random subset of exactly `active` layers with unit scales.
RunMetrics train_fixed_size(ResidualNet& net, const DataSource& data, int active, const TrainConfig& cfg);

// Depth growth. Copies are verbatim; new_depth must exceed the current depth.
enum class GrowthOp { TopStack, Double, Interpolate };
std::string to_string(GrowthOp g);
GrowthOp growth_op_from_string(const std::string& s);

/// Copies the top (new_depth - L) blocks, in order, onto the top of the stack.
ResidualNet grow_topstack(const ResidualNet& net, long new_depth);
/// Blocks (1..L, 1..L).
ResidualNet grow_double(const ResidualNet& net);
/// Inserts a copy of each of the top (new_depth - L) blocks right after its source.
ResidualNet grow_interpolate(const ResidualNet& net, long new_depth);
ResidualNet grow(const ResidualNet& net, GrowthOp op, long new_depth);

/// Trains `net` (depth sizes[0]) and grows it at each stage boundary of the
/// equal-length schedule. FLOPs per step are current depth / final depth.
/// The optimizer state is rebuilt after every growth.
RunMetrics train_stacking(ResidualNet& net, const DataSource& data, GrowthOp op, const std::vector<long>& sizes,
                          const TrainConfig& cfg);

struct WidthSchedule {
    int groups = 4;
    /// Kept groups per stage, nondecreasing, each in 1..groups.
    std::vector<int> kept;
    ScheduleMode mode = ScheduleMode::Equal;
};

/// Hidden units of every ReluMlp block are split into `groups` contiguous groups;
/// per step and layer, `kept` groups are drawn uniformly and rescaled by groups / kept.
/// FLOPs per step are the kept fraction of block FLOPs.
RunMetrics train_width_raptr(ResidualNet& net, const DataSource& data, const WidthSchedule& ws,
                             const TrainConfig& cfg);

/// Mean squared error of the full model (all scales 1) on a batch.
double eval_mse(const ResidualNet& net, const Batch& batch, const ForwardOptions& opts = {});

}  // namespace raptr
