#pragma once

// Seeded random streams and dense fp64 helpers shared by every module.

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace raptr {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Raised for malformed arguments (bad dimensions, out-of-range probabilities, ...).
class ArgumentError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when a computation produces a non-finite value.
class NumericError : public std::runtime_error {
public:
    NumericError(const std::string& what, long index = -1)
        : std::runtime_error(what), index_(index) {}
    /// Layer or step index at which the failure was detected, -1 if unknown.
    long index() const noexcept { return index_; }

private:
    long index_;
};

/// Deterministic random stream keyed by (seed, stream_id).
///
/// The engine is std::mt19937_64, whose raw output is fixed by the standard.
/// Distributions are implemented here (not via <random> distributions) so that
/// drawn values are identical across standard library implementations.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream_id);

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream_id() const noexcept { return stream_; }

    /// A new independent stream derived from this one's key.
    RngStream split(std::uint64_t child_id) const;

    std::uint64_t next_u64() { return engine_(); }
    /// Uniform in [0, 1) with 53 random bits.
    double uniform();
    /// Standard normal via Box-Muller (cached second variate).
    double normal();
    bool bernoulli(double p);
    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);
    /// +1 or -1 with equal probability.
    double sign();

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::mt19937_64 engine_;
    double cached_normal_ = 0.0;
    bool has_cached_ = false;
};

/// rows x cols matrix with i.i.d. N(0, std^2) entries, filled in row-major order.
Matrix gauss_matrix(long rows, long cols, double std, RngStream& rng);

/// d-vector with i.i.d. uniform {-1, +1} entries.
Vector rademacher_vector(long d, RngStream& rng);

/// Uniform sample from the unit sphere S^{d-1}.
Vector sphere_vector(long d, RngStream& rng);

// Checked arithmetic; each throws ArgumentError on a dimension mismatch.
Vector matvec(const Matrix& a, const Vector& x);
Matrix matmul(const Matrix& a, const Matrix& b);
double dot(const Vector& a, const Vector& b);
double l2norm(const Vector& x);

bool all_finite(const Matrix& m);
bool all_finite(const Vector& v);

}  // namespace raptr
