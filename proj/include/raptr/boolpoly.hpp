#pragma once

// Sparse boolean polynomial targets, Fourier coefficient estimators and per-degree error.

#include "raptr/netcore.hpp"
#include "raptr/trainers.hpp"

#include <functional>
#include <vector>

namespace raptr {

struct PolyTerm {
    int degree = 0;
    /// 0-based variable indices, ascending.
    std::vector<int> subset;
    double coeff = 0.0;
};

struct SparsePolynomial {
    int d = 0;
    int max_degree = 0;
    int per_degree = 0;
    int support = 0;
    std::vector<PolyTerm> terms;

    std::vector<const PolyTerm*> terms_of_degree(int degree) const;
    double coeff_norm2(int degree) const;
};

/// For each degree 1..k, `m` distinct uniform subsets of the first `t` variables with
/// N(0, 1) coefficients.
SparsePolynomial sample_target(int d, int k, int m, int t, RngStream& rng);

/// Product of x_i over the subset.
double parity(const std::vector<int>& subset, const Vector& x);

/// Throws ArgumentError when x has a non-boolean entry.
double eval_poly(const SparsePolynomial& poly, const Vector& x);
Vector eval_poly_batch(const SparsePolynomial& poly, const Matrix& x);

/// Function over rows of a batch of {+-1}^d inputs.
using BoolFn = std::function<Vector(const Matrix&)>;

/// Evaluates a network (all scales 1) with a scalar head.
BoolFn net_function(const ResidualNet& net);

constexpr int kMaxEnumerationDim = 22;

/// f at every point of {+-1}^d; entry i has x_j = -1 exactly when bit j of i is set.
Vector truth_table(const BoolFn& f, int d);

/// E_x[f(x) chi_S(x)] by full enumeration.
double fourier_coeff_exact(const BoolFn& f, const std::vector<int>& subset, int d);
double fourier_coeff_exact(const Vector& table, const std::vector<int>& subset, int d);

struct McEstimate {
    double value = 0.0;
    /// Standard error of the sample mean.
    double se = 0.0;
};

McEstimate fourier_coeff_mc(const BoolFn& f, const std::vector<int>& subset, int d, long n_samples,
                            RngStream& rng);

/// A fixed Monte-Carlo sample with cached function values; reused across subsets.
class FourierProbe {
public:
    FourierProbe(int d, long n_samples, RngStream& rng);
    void evaluate(const BoolFn& f);
    McEstimate coeff(const std::vector<int>& subset) const;
    long samples() const noexcept { return x_.rows(); }
    const Matrix& inputs() const noexcept { return x_; }

private:
    Matrix x_;
    Vector fx_;
};

using CoeffEstimator = std::function<McEstimate(const std::vector<int>&)>;

/// sum_j (c_j - c_hat_j)^2 / sum_j c_j^2 over degree-l terms. `se` is the
/// first-order propagated standard error.
McEstimate component_error(const SparsePolynomial& poly, int degree, const CoeffEstimator& estimate);

struct ComponentRow {
    int degree = 0;
    double error = 0.0;
    double se = 0.0;
};

std::vector<ComponentRow> component_errors(const SparsePolynomial& poly, const CoeffEstimator& estimate);

/// Uniform {+-1}^d inputs labelled by a polynomial.
class BoolPolySource : public DataSource {
public:
    explicit BoolPolySource(SparsePolynomial poly) : poly_(std::move(poly)) {}
    long input_dim() const override { return poly_.d; }
    Batch sample(long n, RngStream& rng) const override;
    const SparsePolynomial& poly() const noexcept { return poly_; }

private:
    SparsePolynomial poly_;
};

/// n x d matrix of i.i.d. uniform signs.
Matrix rademacher_matrix(long n, long d, RngStream& rng);

}  // namespace raptr
