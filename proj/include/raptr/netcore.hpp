#pragma once

// Gated residual network: y(l) = y(l-1) + s_l * f_l(y(l-1)), with output heads
// and reverse-mode gradients. Samples are stored as rows of a batch matrix.

#include "raptr/numkit.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace raptr {

enum class BlockKind { ReluMlp, Linear, LinearLn };
enum class Composition { Residual, Plain };
enum class HeadKind { ScalarReadout, NormalizedLinear, Identity };

std::string to_string(BlockKind k);
std::string to_string(Composition c);
std::string to_string(HeadKind h);
BlockKind block_kind_from_string(const std::string& s);
Composition composition_from_string(const std::string& s);
HeadKind head_kind_from_string(const std::string& s);

/// Per-layer binary inclusion plus the always-on set. Indices in `fixed` are 1-based.
struct GatePattern {
    std::vector<std::uint8_t> bits;
    std::vector<int> fixed;

    std::size_t size() const noexcept { return bits.size(); }
    int active_count() const noexcept;
    /// 1-based indices of active layers, ascending.
    std::vector<int> active_indices() const;
    static GatePattern all_on(std::size_t depth);
};

/// Per-layer nonnegative output multipliers.
using ScalePattern = std::vector<double>;

/// 1 where the gate is on, 0 elsewhere.
ScalePattern unit_scales(const GatePattern& g);

/// Square-root rescaling: an active layer j gets sqrt(next_active - j), where the
/// last active layer uses next_active = L + 1; inactive layers get 0.
/// Throws ArgumentError for an all-zero pattern.
ScalePattern h_sqrt(const GatePattern& g);

struct Block {
    BlockKind kind = BlockKind::Linear;
    /// ReluMlp: m x d input map. Linear/LinearLn: d x d.
    Matrix w;
    /// ReluMlp: d x m output map. Empty for the linear kinds.
    Matrix c;
    /// ReluMlp only: rescale the block input to norm sqrt(d) before `w`.
    bool prenorm = false;

    long hidden() const noexcept { return kind == BlockKind::ReluMlp ? w.rows() : 0; }
};

struct Head {
    HeadKind kind = HeadKind::Identity;
    /// ScalarReadout: 1 x d. NormalizedLinear: V x d. Identity: empty.
    Matrix v;
    bool trainable = true;
};

class ResidualNet {
public:
    ResidualNet(long width, Composition composition, std::vector<Block> blocks, Head head);

    long width() const noexcept { return width_; }
    long depth() const noexcept { return static_cast<long>(blocks_.size()); }
    long output_dim() const noexcept;
    Composition composition() const noexcept { return composition_; }

    const std::vector<Block>& blocks() const noexcept { return blocks_; }
    std::vector<Block>& blocks() noexcept { return blocks_; }
    const Head& head() const noexcept { return head_; }
    Head& head() noexcept { return head_; }

    /// Trainable tensors in canonical order: (w, c?) per block, then the head if trainable.
    std::vector<Matrix*> parameters();
    std::vector<const Matrix*> parameters() const;
    std::size_t parameter_count() const;

    /// Re-run the structural checks (after in-place edits such as growth).
    void validate() const;

private:
    long width_;
    Composition composition_;
    std::vector<Block> blocks_;
    Head head_;
};

struct InitConfig {
    /// Per-entry variance of ReluMlp `w` is w_var_scale / m.
    double w_var_scale = 2.0;
    /// Per-entry variance of ReluMlp `c` is c_var_scale / d.
    double c_var_scale = 1.0;
    /// Per-entry variance of Linear/LinearLn `w` is linear_var_scale / d.
    double linear_var_scale = 1.0;
    /// Readout std multiplier; readout entries ~ N(0, (readout_gain^2) / (d (L+1))).
    double readout_gain = 1.0;
};

ResidualNet make_relu_mlp_net(long d, long depth, long hidden, bool prenorm, HeadKind head,
                              RngStream& rng, const InitConfig& init = {});
ResidualNet make_linear_net(long d, long depth, bool layernorm, Composition composition,
                            HeadKind head, RngStream& rng, const InitConfig& init = {});

struct ForwardOptions {
    /// Empty means all ones.
    ScalePattern scales;
    /// Optional per-layer multipliers on ReluMlp hidden units (size m each, or empty).
    std::vector<Vector> hidden_masks;
};

struct ForwardTape {
    /// states[0] is the input; states[l] is y(l), each B x d.
    std::vector<Matrix> states;
    /// ReluMlp pre-activations (B x m); empty for other kinds or bypassed layers.
    std::vector<Matrix> pre;
    ScalePattern scales;
    std::vector<Vector> hidden_masks;
    /// Head output, B x output_dim.
    Matrix output;
    long batch() const noexcept { return states.empty() ? 0 : states.front().rows(); }
};

struct BlockGrad {
    Matrix w;
    Matrix c;
};

struct Gradients {
    std::vector<BlockGrad> blocks;
    Matrix head;
    /// Gradient with respect to the network input (B x d).
    Matrix input;

    /// Tensors in the same order as ResidualNet::parameters().
    std::vector<Matrix*> flat(const ResidualNet& net);
    std::vector<const Matrix*> flat(const ResidualNet& net) const;
    void scale(double factor);
    void add(const Gradients& other);
};

/// Batched forward over rows of `x`. Throws NumericError carrying the layer index
/// (1-based, 0 for the head) when an activation becomes non-finite.
ForwardTape forward(const ResidualNet& net, const Matrix& x, const ForwardOptions& opts = {});

/// Runs the backbone from state y(first - 1) = `y` through layers first..L (1-based),
/// bypassing `skip` (0 for none). Scales are 1 for every other layer. Returns y(L).
Matrix propagate(const ResidualNet& net, const Matrix& y, long first, long skip = 0);

/// Single-input convenience wrapper.
ForwardTape forward(const ResidualNet& net, const Vector& x, const ForwardOptions& opts = {});

/// Reverse pass. `upstream` is dLoss/dOutput with the same shape as tape.output.
/// Gradients are summed over the batch rows.
Gradients backward(const ResidualNet& net, const ForwardTape& tape, const Matrix& upstream);

/// Largest per-tensor ||analytic - central difference||_inf / ||analytic||_inf over all
/// trainable tensors and the input, for the probe loss <R, output> with a fixed Gaussian R.
double gradient_check(const ResidualNet& net, const Matrix& x, const ForwardOptions& opts, RngStream& rng,
                      double h = 1e-6);

struct LossValue {
    double value;
    double grad;
};

/// (pred - target)^2 and its derivative 2 (pred - target).
LossValue loss_squared(double pred, double target);

/// Mean squared error over a batch of scalar outputs plus dLoss/dOutput (already divided by B).
struct BatchLoss {
    double value;
    Matrix upstream;
};
BatchLoss mse_batch(const Matrix& output, const Vector& target);

/// Checkpoint: magic, u64 header length, JSON header, then little-endian fp64 payload.
void save_checkpoint(const ResidualNet& net, const std::filesystem::path& path);
ResidualNet load_checkpoint(const std::filesystem::path& path);

}  // namespace raptr
