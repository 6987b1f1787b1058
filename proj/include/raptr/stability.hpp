#pragma once

// Drop-one stability probes, loss gaps against the relative-Lipschitz bound, and the
// linear-network experiment suite.

#include "raptr/netcore.hpp"

#include <functional>
#include <string>
#include <vector>

namespace raptr {

/// Psi and norms are measured on the backbone output y(L); the head belongs to the loss.
struct StabilityProfile {
    /// Mean ||y(l)|| over probes, l = 1..L.
    std::vector<double> norms;
    /// Mean ||F_{-l}(x) - F(x)|| over probes, l = 1..L.
    std::vector<double> psi;
    double out_norm_mean = 0.0;
    double out_norm_std = 0.0;
    long probes = 0;
};

/// Drop-one outputs of a batch: full[i] = F(x_i), dropped[l-1] = F_{-l}(x).
struct DropOneOutputs {
    Matrix full;
    std::vector<Matrix> states;
    std::vector<Matrix> dropped;
};

DropOneOutputs drop_one_outputs(const ResidualNet& net, const Matrix& probes);

StabilityProfile psi_profile(const ResidualNet& net, const Matrix& probes);
StabilityProfile psi_profile(const DropOneOutputs& outs);

/// ||y(l)|| for l = 1..L on a single input.
std::vector<double> norm_profile(const ResidualNet& net, const Vector& x);

/// Per-sample loss of a backbone output z (row vector as Vector) for probe i.
using PointLoss = std::function<double(const Vector& z, long i)>;

/// Squared error of a scalar-readout head against labels.
PointLoss readout_mse_loss(const ResidualNet& net, const Vector& labels);

/// ||z / ||z|| - r_i / ||r_i|| ||: distance of the normalized output to a reference.
PointLoss normalized_distance_loss(const Matrix& reference);

struct GapSummary {
    /// Mean L(F(x)).
    double loss_full = 0.0;
    /// Mean (1/L) sum_l L(F_{-l}(x)).
    double loss_dropone = 0.0;
    /// loss_full - loss_dropone.
    double gap = 0.0;
    /// Standard error of the per-sample gap.
    double gap_se = 0.0;
};

GapSummary loss_gap(const ResidualNet& net, const Matrix& probes, const PointLoss& loss);
GapSummary loss_gap(const DropOneOutputs& outs, const PointLoss& loss);

struct BoundValue {
    double value = 0.0;
    double se = 0.0;
};

/// (mu / L) E[ sum_l Psi_l(x) / ||F(x)|| ].
BoundValue bound_rhs(const ResidualNet& net, const Matrix& probes, double mu);
BoundValue bound_rhs(const DropOneOutputs& outs, double mu);

struct MuConfig {
    long n_perturb = 64;
    /// Perturbation radii relative to ||z||.
    std::vector<double> radius_grid{1e-4, 1e-3, 1e-2, 1e-1, 0.5, 1.0, 2.0};
    /// Directions are normalize(g + c z_hat) with g Gaussian and c ~ U[-c_max, c_max].
    double radial_mix = 3.0;
};

/// max over sampled (z_i, eta) of (L(z + eta) - L(z)) ||z|| / ||eta||.
double estimate_mu(const PointLoss& loss, const Matrix& outputs, const MuConfig& cfg, RngStream& rng);

struct BoundCheck {
    GapSummary gap;
    double mu = 0.0;
    BoundValue rhs;
    /// |gap| <= rhs + 2 gap_se.
    bool holds = false;
};

BoundCheck bound_check(const DropOneOutputs& outs, const PointLoss& loss, const MuConfig& cfg, RngStream& rng);

/// OLS slope of ys against xs.
double ols_slope(const std::vector<double>& xs, const std::vector<double>& ys);

/// Slope of log(gap) against log(L). Needs >= 3 strictly positive points.
double fit_scaling_exponent(const std::vector<double>& depths, const std::vector<double>& gaps);

enum class SharedMatrixMode { Symmetric, Svd };
std::string to_string(SharedMatrixMode m);
SharedMatrixMode shared_matrix_mode_from_string(const std::string& s);

struct SharedMatrix {
    Matrix a;
    /// Unit eigenvector for the eigenvalue 1 (or the dominant real eigenvector).
    Vector top;
};

/// ||A||_2 = 1 with second singular value 1 - delta. Symmetric mode builds Q diag(l) Q^T
/// with l = (1, 1 - delta, U(-(1-delta), 1-delta)...); Svd mode rescales the spectrum of a
/// Gaussian matrix and clips it below 1 - delta.
SharedMatrix make_shared_matrix(long d, double delta, SharedMatrixMode mode, RngStream& rng);

struct LinearNetConfig {
    long depth = 32;
    long width = 1024;
    bool residual = true;
    bool layernorm = true;
    double tau = 0.0;
    double delta = 0.2;
    SharedMatrixMode a_mode = SharedMatrixMode::Symmetric;
    /// Gaussian part has per-entry variance width^(-g_var_exponent).
    double g_var_exponent = 1.0;
};

/// W_l = sqrt(tau) A + sqrt(1 - tau) G_l with Identity head.
ResidualNet make_tau_linear_net(const LinearNetConfig& cfg, const Matrix& a, RngStream& rng);

/// Empty when d >= |S| L log(1/0.01); a warning message otherwise.
std::string random_regime_warning(const LinearNetConfig& cfg, long probe_count);

struct LinearExperimentResult {
    StabilityProfile profile;
    BoundCheck check;
    /// Mean angle (radians) between y(l) and the line through the top eigenvector, l = 1..L.
    std::vector<double> angles;
    std::string warning;
};

/// Builds the tau-interpolated net, draws `probe_count` unit-sphere probes and measures the
/// profile and the loss gap under the normalized-distance loss against F(x).
LinearExperimentResult linear_net_experiment(const LinearNetConfig& cfg, long probe_count, RngStream& rng,
                                             const MuConfig& mu = {});

/// Same with a caller-provided shared matrix and probe set (rows).
LinearExperimentResult linear_net_experiment(const LinearNetConfig& cfg, const SharedMatrix& shared,
                                             const Matrix& probes, RngStream& rng, const MuConfig& mu = {});

/// `n` rows drawn uniformly from the unit sphere.
Matrix sphere_rows(long n, long d, RngStream& rng);

}  // namespace raptr
