#include "raptr/numkit.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace raptr {

namespace {

std::seed_seq make_seed_seq(std::uint64_t seed, std::uint64_t stream) {
    return std::seed_seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                         static_cast<std::uint32_t>(stream),
                         static_cast<std::uint32_t>(stream >> 32), 0x52615054u};
}

std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

void require_dims(long rows, long cols) {
    if (rows < 1 || cols < 1) {
        throw ArgumentError("matrix dimensions must be positive, got " + std::to_string(rows) + "x" +
                            std::to_string(cols));
    }
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id) : seed_(seed), stream_(stream_id) {
    auto seq = make_seed_seq(seed, stream_id);
    engine_.seed(seq);
}

RngStream RngStream::split(std::uint64_t child_id) const {
    return RngStream(seed_, mix64(stream_ ^ mix64(child_id + 1)));
}

double RngStream::uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double RngStream::normal() {
    if (has_cached_) {
        has_cached_ = false;
        return cached_normal_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    cached_normal_ = r * std::sin(theta);
    has_cached_ = true;
    return r * std::cos(theta);
}

bool RngStream::bernoulli(double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw ArgumentError("bernoulli probability outside [0,1]");
    if (p == 1.0) return true;
    return uniform() < p;
}

std::uint64_t RngStream::below(std::uint64_t n) {
    if (n == 0) throw ArgumentError("below(0) is empty");
    // Lemire-style rejection keeps the draw unbiased.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t v = engine_();
    while (v >= limit) v = engine_();
    return v % n;
}

double RngStream::sign() {
    return (engine_() >> 63) ? 1.0 : -1.0;
}

Matrix gauss_matrix(long rows, long cols, double std, RngStream& rng) {
    require_dims(rows, cols);
    if (!(std > 0.0) || !std::isfinite(std)) throw ArgumentError("gauss_matrix: std must be positive");
    Matrix m(rows, cols);
    for (long i = 0; i < rows; ++i)
        for (long j = 0; j < cols; ++j) m(i, j) = std * rng.normal();
    return m;
}

Vector rademacher_vector(long d, RngStream& rng) {
    if (d < 1) throw ArgumentError("rademacher_vector: d must be >= 1");
    Vector v(d);
    for (long i = 0; i < d; ++i) v(i) = rng.sign();
    return v;
}

Vector sphere_vector(long d, RngStream& rng) {
    if (d < 1) throw ArgumentError("sphere_vector: d must be >= 1");
    Vector v(d);
    double n = 0.0;
    while (n == 0.0) {
        for (long i = 0; i < d; ++i) v(i) = rng.normal();
        n = v.norm();
    }
    return v / n;
}

Vector matvec(const Matrix& a, const Vector& x) {
    if (a.cols() != x.size()) throw ArgumentError("matvec: dimension mismatch");
    return a * x;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw ArgumentError("matmul: dimension mismatch");
    return a * b;
}

double dot(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) throw ArgumentError("dot: dimension mismatch");
    return a.dot(b);
}

double l2norm(const Vector& x) {
    return x.norm();
}

bool all_finite(const Matrix& m) {
    return m.allFinite();
}

bool all_finite(const Vector& v) {
    return v.allFinite();
}

}  // namespace raptr
