#pragma once

// Two-block sine residual network trained with exact population gradients:
//   y1 = p0 + sin(<w1, x> + b1)
//   y2 = y1 + sin(<w2, x> + y1 + b2)        (+ p0 inside the second sine when enabled)
// against f*(x) = sqrt(3)/2 + sqrt(3)/2 x1 - x1 x2 on uniform {+-1}^d.

#include "raptr/numkit.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace raptr {

constexpr int kMaxSineDim = 14;

struct SineParams {
    double p0 = 0.0;
    Vector w1;
    Vector w2;
    double b1 = 0.0;
    double b2 = 0.0;

    static SineParams zeros(int d);
    int dim() const noexcept { return static_cast<int>(w1.size()); }
    /// Flattened (p0, w1, w2, b1, b2).
    Vector flat() const;
    static SineParams from_flat(const Vector& v, int d);
};

enum class SinePhase { BiasOnly, Layer1, Layer2, Phase2, Full };
std::string to_string(SinePhase p);

struct SineOptions {
    /// Add p0 inside the second sine.
    bool p0_in_second = false;
};

double target_fstar(const Vector& x);

/// All 2^d points of {+-1}^d as rows (d <= 14).
Matrix sine_inputs(int d);

/// Model output per phase: BiasOnly -> p0; Layer1/Layer2 -> p0 + sin(<w_l, x> + b_l);
/// Phase2/Full -> y2.
Vector sine_output(const SineParams& p, SinePhase phase, const Matrix& x, const SineOptions& opts = {});

/// E (model - f*)^2 over all of {+-1}^d.
double population_loss(const SineParams& p, SinePhase phase, const SineOptions& opts = {});

/// Exact gradient of population_loss; entries of inactive parameters are zero.
/// Active sets: BiasOnly {p0}; Layer l {w_l, b_l}; Phase2 {w2, b2}; Full all.
SineParams population_grad(const SineParams& p, SinePhase phase, const SineOptions& opts = {});

struct SineCoeffs {
    /// Coefficient on x1.
    double alpha = 0.0;
    /// Coefficient on x1 x2.
    double beta = 0.0;
    /// Constant term.
    double gamma = 0.0;
};

/// Exact Fourier projections of the model output for `phase`.
SineCoeffs extract_coeffs(const SineParams& p, SinePhase phase, const SineOptions& opts = {});

struct PhasePlan {
    double eta = 1e-3;
    long steps_bias = 5000;
    long steps_phase1 = 5000;
    long steps_phase2 = 5000;
    /// Record a trajectory row every `record_every` steps (0: every 1 / (10 eta)).
    long record_every = 0;
    SineOptions options;
    /// Phase 1 picks a random layer per step; false updates both layers every step.
    bool random_layer = true;
};

struct SineTrajectoryRow {
    long step = 0;
    std::string phase;
    SineParams params;
    /// Population loss of the phase objective at this point.
    double loss = 0.0;
    /// Full-model coefficients, used for the order-of-learning check.
    SineCoeffs coeffs;
};

struct SineRun {
    std::vector<SineTrajectoryRow> rows;
    SineParams after_bias;
    SineParams after_phase1;
    SineParams final_params;
    double final_loss = 0.0;
    /// First recorded step at which alpha >= 0.9 sqrt(3)/2, -1 if never.
    long alpha_cross = -1;
    /// First recorded step at which beta <= -0.9, -1 if never.
    long beta_cross = -1;
    /// True if every phase objective was nonincreasing step to step.
    bool monotone = true;
    /// Largest |analytic - finite difference| gradient error seen on recorded rows.
    double max_grad_error = 0.0;

    void write_csv(const std::filesystem::path& path) const;
};

SineRun train_three_phase(const PhasePlan& plan, int d, RngStream& rng);

/// Max over parameters of |analytic - central difference| for the phase objective.
double sine_grad_check(const SineParams& p, SinePhase phase, double h = 1e-6, const SineOptions& opts = {});

/// Single-layer fit E (p0 + sin(<w, x> + b) - target)^2 by multi-start gradient descent.
struct BestFitConfig {
    int restarts = 50;
    long steps = 4000;
    double lr = 0.05;
    double init_scale = 2.0;
};

/// `target_coeffs` gives (alpha on x1, beta on x1 x2, gamma constant) of the target.
struct BestFit {
    double loss = 0.0;
    int best_restart = 0;
    double p0 = 0.0;
    Vector w;
    double b = 0.0;
};

BestFit single_layer_best_fit(int d, const SineCoeffs& target, const BestFitConfig& cfg, RngStream& rng);

/// Coefficients of f*: (sqrt(3)/2, -1, sqrt(3)/2).
SineCoeffs fstar_coeffs();

}  // namespace raptr
