#pragma once

// Shared-base parameterization: each active layer of a subnetwork is a linear combination
// of all L layers' parameters, and gradients are scattered back through the transpose.

#include "raptr/netcore.hpp"

#include <vector>

namespace raptr {

/// k x L combination coefficients.
using CoeffMatrix = Matrix;

/// Row r is one-hot at the r-th active layer. Throws on an empty pattern.
CoeffMatrix coeffs_for_gates(const GatePattern& g);

/// 1-based layer indices selected by one-hot rows, in row order.
std::vector<int> active_from_coeffs(const CoeffMatrix& c);

/// theta_sh[r] = sum_j c(r, j) theta[j]. `macs` (optional) accumulates multiply-adds.
std::vector<Matrix> make_shared(const std::vector<Matrix>& layer_params, const CoeffMatrix& c,
                                long* macs = nullptr);

/// grad[j] = sum_r c(r, j) grad_sh[r]; layers outside every row get exact zeros.
std::vector<Matrix> scatter_grads(const CoeffMatrix& c, const std::vector<Matrix>& shared_grads,
                                  const std::vector<long>& rows_cols, long* macs = nullptr);

/// Coefficients for the two tensor roles of a block. The output role carries any
/// per-layer scale: c for ReluMlp blocks, w for the linear kinds.
struct SharedPlan {
    CoeffMatrix input;
    CoeffMatrix output;
};

/// Plan for a gate pattern; with `scales`, output rows are multiplied by the layer's scale.
SharedPlan plan_for_gates(const GatePattern& g, const ScalePattern* scales = nullptr);

/// The k-block network built from combined parameters (same head, all scales 1).
ResidualNet make_shared_net(const ResidualNet& net, const SharedPlan& plan);

/// Gradients of the full net obtained by scattering the shared net's gradients.
Gradients scatter_net_grads(const ResidualNet& net, const SharedPlan& plan, const Gradients& shared);

/// Runs (a) gated forward/backward and (b) shared-base forward/backward plus scatter, and
/// returns the max over tensors of max|a - b| / max|a| (0 when both are exactly zero).
/// With `fold_scales`, h_sqrt scales are folded into the plan instead of the forward pass.
double equivalence_check(const ResidualNet& net, const Matrix& x, const GatePattern& gates,
                         const Matrix& upstream, bool fold_scales = false);

/// Relative difference after one SGD step taken through each path.
double sgd_step_equivalence(const ResidualNet& net, const Matrix& x, const GatePattern& gates,
                            const Matrix& upstream, double lr);

/// 1 + 2L / (2B + 1); 1 for L = 0.
double flops_overhead(long tokens, long depth);

/// Multiply-adds of one training step of k active d x d linear blocks on B tokens:
/// forward, weight gradient, input gradient and the SGD update.
long linear_step_macs(long tokens, long active, long d);

/// Multiply-adds of make_shared + scatter_grads with a dense k x L plan over d x d blocks,
/// counted by running them.
long shared_combination_macs(long active, long depth, long d);

/// Block-sparse template: L layers in `n_groups` contiguous groups; the k shared layers
/// are split evenly over groups and each row is supported on its group only.
CoeffMatrix grouped_coeffs(long depth, long active, long n_groups);

long count_nonzeros(const CoeffMatrix& c);

}  // namespace raptr
