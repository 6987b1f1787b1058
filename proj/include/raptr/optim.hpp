#pragma once

// First-order optimizers over lists of dense tensors, and stagewise learning-rate schedules.

#include "raptr/numkit.hpp"

#include <string>
#include <vector>

namespace raptr {

enum class OptimKind { Sgd, Adam };
std::string to_string(OptimKind k);
OptimKind optim_kind_from_string(const std::string& s);

struct OptimConfig {
    OptimKind kind = OptimKind::Adam;
    double momentum = 0.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Holds per-tensor moment buffers. Tensors not marked as touched in a step keep
/// both their values and their buffers; Adam bias correction uses a per-tensor count.
class Optimizer {
public:
    Optimizer(OptimConfig cfg, const std::vector<const Matrix*>& shapes);

    const OptimConfig& config() const noexcept { return cfg_; }
    long steps(std::size_t tensor) const { return counts_.at(tensor); }
    const Matrix& first_moment(std::size_t tensor) const { return m_.at(tensor); }
    const Matrix& second_moment(std::size_t tensor) const { return v_.at(tensor); }

    /// `touched` may be empty (all tensors updated) or hold one flag per tensor.
    void step(const std::vector<Matrix*>& params, const std::vector<const Matrix*>& grads, double lr,
              const std::vector<std::uint8_t>& touched = {});

private:
    OptimConfig cfg_;
    std::vector<Matrix> m_;
    std::vector<Matrix> v_;
    std::vector<long> counts_;
};

enum class LrDecay { None, Linear, Cosine };
std::string to_string(LrDecay d);
LrDecay lr_decay_from_string(const std::string& s);

/// Linear warmup to `peak`, constant, then optional decay to zero inside the final stage.
struct LrSchedule {
    long warmup_steps = 0;
    double peak = 1e-3;
    LrDecay final_decay = LrDecay::None;

    /// `final_start` is the first step of the final stage, `total` the run length.
    double at(long step, long final_start, long total) const;
};

}  // namespace raptr
