#include "raptr/boolpoly.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace raptr {

namespace {

double binomial(int n, int k) {
    if (k < 0 || k > n) return 0.0;
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

void check_subset(const std::vector<int>& subset, int d) {
    for (int i : subset)
        if (i < 0 || i >= d) throw ArgumentError("subset index outside the input dimension");
}

Vector parity_column(const std::vector<int>& subset, const Matrix& x) {
    Vector out = Vector::Ones(x.rows());
    for (int i : subset) out.array() *= x.col(i).array();
    return out;
}

void check_boolean(const Matrix& x) {
    if (!(x.array().abs() == 1.0).all()) throw ArgumentError("input has a non-boolean entry");
}

}  // namespace

std::vector<const PolyTerm*> SparsePolynomial::terms_of_degree(int degree) const {
    std::vector<const PolyTerm*> out;
    for (const auto& t : terms)
        if (t.degree == degree) out.push_back(&t);
    return out;
}

double SparsePolynomial::coeff_norm2(int degree) const {
    double s = 0.0;
    for (const auto* t : terms_of_degree(degree)) s += t->coeff * t->coeff;
    return s;
}

SparsePolynomial sample_target(int d, int k, int m, int t, RngStream& rng) {
    if (d < 1 || k < 1 || m < 1 || t < 1) throw ArgumentError("sample_target: sizes must be positive");
    if (t > d) throw ArgumentError("sample_target: support width exceeds d");
    if (k > t) throw ArgumentError("sample_target: degree exceeds support width");
    for (int l = 1; l <= k; ++l) {
        if (static_cast<double>(m) > binomial(t, l))
            throw ArgumentError("sample_target: only " + std::to_string(static_cast<long>(binomial(t, l))) +
                                " subsets of size " + std::to_string(l) + " exist");
    }
    SparsePolynomial poly;
    poly.d = d;
    poly.max_degree = k;
    poly.per_degree = m;
    poly.support = t;
    for (int l = 1; l <= k; ++l) {
        std::set<std::vector<int>> seen;
        while (static_cast<int>(seen.size()) < m) {
            // Partial Fisher-Yates gives a uniform size-l subset.
            std::vector<int> pool(static_cast<std::size_t>(t));
            for (int i = 0; i < t; ++i) pool[static_cast<std::size_t>(i)] = i;
            for (int i = 0; i < l; ++i) {
                const int j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(t - i)));
                std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
            }
            std::vector<int> s(pool.begin(), pool.begin() + l);
            std::sort(s.begin(), s.end());
            if (seen.insert(s).second) poly.terms.push_back(PolyTerm{l, s, 0.0});
        }
    }
    for (auto& term : poly.terms) term.coeff = rng.normal();
    return poly;
}

double parity(const std::vector<int>& subset, const Vector& x) {
    double p = 1.0;
    for (int i : subset) p *= x(i);
    return p;
}

double eval_poly(const SparsePolynomial& poly, const Vector& x) {
    if (x.size() != poly.d) throw ArgumentError("eval_poly: input dimension mismatch");
    check_boolean(x.transpose());
    double acc = 0.0;
    for (const auto& t : poly.terms) acc += t.coeff * parity(t.subset, x);
    return acc;
}

Vector eval_poly_batch(const SparsePolynomial& poly, const Matrix& x) {
    if (x.cols() != poly.d) throw ArgumentError("eval_poly: input dimension mismatch");
    check_boolean(x);
    Vector out = Vector::Zero(x.rows());
    for (const auto& t : poly.terms) out += t.coeff * parity_column(t.subset, x);
    return out;
}

BoolFn net_function(const ResidualNet& net) {
    if (net.output_dim() != 1) throw ArgumentError("net_function needs a scalar head");
    return [&net](const Matrix& x) -> Vector { return forward(net, x).output.col(0); };
}

Vector truth_table(const BoolFn& f, int d) {
    if (d < 1 || d > kMaxEnumerationDim) throw ArgumentError("enumeration limited to 1 <= d <= 22");
    const long n = 1L << d;
    Vector out(n);
    const long chunk = 1L << 14;
    for (long start = 0; start < n; start += chunk) {
        const long rows = std::min(chunk, n - start);
        Matrix x(rows, d);
        for (long r = 0; r < rows; ++r)
            for (int j = 0; j < d; ++j) x(r, j) = (((start + r) >> j) & 1L) ? -1.0 : 1.0;
        const Vector v = f(x);
        if (v.size() != rows) throw ArgumentError("function returned the wrong number of values");
        out.segment(start, rows) = v;
    }
    return out;
}

double fourier_coeff_exact(const Vector& table, const std::vector<int>& subset, int d) {
    if (d < 1 || d > kMaxEnumerationDim) throw ArgumentError("enumeration limited to 1 <= d <= 22");
    if (table.size() != (1L << d)) throw ArgumentError("truth table size must be 2^d");
    check_subset(subset, d);
    long mask = 0;
    for (int i : subset) mask |= 1L << i;
    double acc = 0.0;
    for (long i = 0; i < table.size(); ++i) acc += (__builtin_popcountl(i & mask) & 1) ? -table(i) : table(i);
    return acc / static_cast<double>(table.size());
}

double fourier_coeff_exact(const BoolFn& f, const std::vector<int>& subset, int d) {
    return fourier_coeff_exact(truth_table(f, d), subset, d);
}

Matrix rademacher_matrix(long n, long d, RngStream& rng) {
    if (n < 1 || d < 1) throw ArgumentError("rademacher_matrix: sizes must be positive");
    Matrix x(n, d);
    for (long i = 0; i < n; ++i)
        for (long j = 0; j < d; ++j) x(i, j) = rng.sign();
    return x;
}

McEstimate fourier_coeff_mc(const BoolFn& f, const std::vector<int>& subset, int d, long n_samples,
                            RngStream& rng) {
    if (n_samples < 2) throw ArgumentError("fourier_coeff_mc needs at least 2 samples");
    FourierProbe probe(d, n_samples, rng);
    probe.evaluate(f);
    return probe.coeff(subset);
}

FourierProbe::FourierProbe(int d, long n_samples, RngStream& rng) {
    if (n_samples < 2) throw ArgumentError("FourierProbe needs at least 2 samples");
    x_ = rademacher_matrix(n_samples, d, rng);
}

void FourierProbe::evaluate(const BoolFn& f) {
    const long n = x_.rows();
    fx_.resize(n);
    const long chunk = 8192;
    for (long start = 0; start < n; start += chunk) {
        const long rows = std::min(chunk, n - start);
        const Vector v = f(x_.middleRows(start, rows));
        if (v.size() != rows) throw ArgumentError("function returned the wrong number of values");
        fx_.segment(start, rows) = v;
    }
}

McEstimate FourierProbe::coeff(const std::vector<int>& subset) const {
    if (fx_.size() != x_.rows()) throw ArgumentError("FourierProbe::coeff called before evaluate");
    check_subset(subset, static_cast<int>(x_.cols()));
    const Vector z = fx_.cwiseProduct(parity_column(subset, x_));
    const double n = static_cast<double>(z.size());
    const double mean = z.mean();
    const double var = (z.array() - mean).square().sum() / (n - 1.0);
    return {mean, std::sqrt(var / n)};
}

McEstimate component_error(const SparsePolynomial& poly, int degree, const CoeffEstimator& estimate) {
    const auto terms = poly.terms_of_degree(degree);
    const double denom = poly.coeff_norm2(degree);
    if (terms.empty() || !(denom > 0.0)) throw ArgumentError("component_error: degree has no weight");
    double num = 0.0;
    double var = 0.0;
    for (const auto* t : terms) {
        const McEstimate e = estimate(t->subset);
        const double r = t->coeff - e.value;
        num += r * r;
        var += 4.0 * r * r * e.se * e.se;
    }
    return {num / denom, std::sqrt(var) / denom};
}

std::vector<ComponentRow> component_errors(const SparsePolynomial& poly, const CoeffEstimator& estimate) {
    std::vector<ComponentRow> out;
    for (int l = 1; l <= poly.max_degree; ++l) {
        if (poly.terms_of_degree(l).empty()) continue;
        const McEstimate e = component_error(poly, l, estimate);
        out.push_back({l, e.value, e.se});
    }
    return out;
}

Batch BoolPolySource::sample(long n, RngStream& rng) const {
    Batch b;
    b.x = rademacher_matrix(n, poly_.d, rng);
    b.y = eval_poly_batch(poly_, b.x);
    return b;
}

}  // namespace raptr
