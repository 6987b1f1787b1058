#include "doctest.h"

#include "raptr/boolpoly.hpp"

#include <cmath>
#include <set>

using namespace raptr;

namespace {

BoolFn poly_fn(const SparsePolynomial& p) {
    return [&p](const Matrix& x) { return eval_poly_batch(p, x); };
}

// A nonlinear function whose spectrum is spread over every degree.
BoolFn squashed(const SparsePolynomial& p) {
    return [&p](const Matrix& x) { return Vector(eval_poly_batch(p, x).array().tanh()); };
}

}  // namespace

TEST_CASE("sampled targets have distinct subsets inside the support") {
    RngStream rng(1, 0);
    const auto p = sample_target(30, 5, 10, 10, rng);
    CHECK(p.terms.size() == 50);
    for (int deg = 1; deg <= 5; ++deg) {
        const auto terms = p.terms_of_degree(deg);
        REQUIRE(terms.size() == 10);
        std::set<std::vector<int>> seen;
        for (const auto* t : terms) {
            CHECK(static_cast<int>(t->subset.size()) == deg);
            for (std::size_t i = 0; i < t->subset.size(); ++i) {
                CHECK(t->subset[i] >= 0);
                CHECK(t->subset[i] < 10);
                if (i > 0) CHECK(t->subset[i] > t->subset[i - 1]);
            }
            seen.insert(t->subset);
        }
        CHECK(seen.size() == 10);
    }
    // Degree 1 over 3 variables can hold at most 3 subsets.
    CHECK_THROWS_AS(sample_target(10, 1, 4, 3, rng), ArgumentError);

    RngStream a(4, 1), b(4, 1);
    const auto pa = sample_target(12, 3, 4, 8, a), pb = sample_target(12, 3, 4, 8, b);
    for (std::size_t i = 0; i < pa.terms.size(); ++i) {
        CHECK(pa.terms[i].subset == pb.terms[i].subset);
        CHECK(pa.terms[i].coeff == pb.terms[i].coeff);
    }
}

TEST_CASE("parity and evaluation") {
    Vector x(4);
    x << 1, -1, -1, 1;
    CHECK(parity({}, x) == 1.0);
    CHECK(parity({1}, x) == -1.0);
    CHECK(parity({1, 2}, x) == 1.0);
    CHECK(parity({0, 1, 3}, x) == -1.0);

    SparsePolynomial p;
    p.d = 4;
    p.terms = {{1, {0}, 2.0}, {2, {1, 2}, -0.5}};
    CHECK(eval_poly(p, x) == 1.5);
    x[3] = 0.3;
    CHECK_THROWS_AS(eval_poly(p, x), ArgumentError);
}

TEST_CASE("exact Fourier coefficients recover the target and satisfy Parseval") {
    RngStream rng(2, 0);
    const auto p = sample_target(10, 4, 3, 10, rng);
    const Vector table = truth_table(poly_fn(p), 10);
    REQUIRE(table.size() == 1024);

    double parseval = 0.0;
    for (const auto& t : p.terms) {
        const double c = fourier_coeff_exact(table, t.subset, 10);
        CHECK(std::abs(c - t.coeff) <= 1e-12);
        parseval += c * c;
    }
    CHECK(std::abs(parseval - table.squaredNorm() / 1024.0) <= 1e-10);
    // Subsets outside the support have zero weight.
    CHECK(std::abs(fourier_coeff_exact(table, {0, 1, 2, 3, 4, 5}, 10)) <= 1e-12);

    const CoeffEstimator exact = [&](const std::vector<int>& s) { return McEstimate{fourier_coeff_exact(table, s, 10), 0.0}; };
    for (const auto& row : component_errors(p, exact)) CHECK(row.error <= 1e-20);
    const CoeffEstimator zero = [](const std::vector<int>&) { return McEstimate{}; };
    for (const auto& row : component_errors(p, zero)) CHECK(row.error == doctest::Approx(1.0));
}

TEST_CASE("Parseval holds for a nonlinear function over the full spectrum") {
    RngStream rng(3, 0);
    const auto p = sample_target(10, 3, 3, 10, rng);
    const Vector table = truth_table(squashed(p), 10);
    double total = 0.0;
    for (int mask = 0; mask < 1024; ++mask) {
        std::vector<int> s;
        for (int j = 0; j < 10; ++j)
            if (mask & (1 << j)) s.push_back(j);
        const double c = fourier_coeff_exact(table, s, 10);
        total += c * c;
    }
    CHECK(std::abs(total - table.squaredNorm() / 1024.0) <= 1e-10);
}

TEST_CASE("Monte-Carlo coefficients are unbiased within their standard error") {
    RngStream rng(4, 0);
    const auto p = sample_target(8, 3, 2, 8, rng);
    const BoolFn f = squashed(p);
    const Vector table = truth_table(f, 8);
    const std::vector<int> subset = p.terms_of_degree(2).front()->subset;
    const double exact = fourier_coeff_exact(table, subset, 8);

    const int trials = 500;
    int inside = 0;
    for (int i = 0; i < trials; ++i) {
        const auto est = fourier_coeff_mc(f, subset, 8, 2000, rng);
        REQUIRE(est.se > 0.0);
        if (std::abs(est.value - exact) <= 4.0 * est.se) ++inside;
    }
    CHECK(inside >= 495);

    FourierProbe probe(8, 20000, rng);
    probe.evaluate(f);
    for (const auto& t : p.terms) {
        const auto est = probe.coeff(t.subset);
        CHECK(std::abs(est.value - fourier_coeff_exact(table, t.subset, 8)) <= 5.0 * est.se);
    }
}

TEST_CASE("network functions and data sources") {
    RngStream rng(5, 0);
    const auto p = sample_target(6, 2, 2, 6, rng);
    const BoolPolySource src(p);
    const Batch b = src.sample(200, rng);
    CHECK((b.x.array().abs() == 1.0).all());
    CHECK((b.y - eval_poly_batch(p, b.x)).norm() == 0.0);

    const ResidualNet net = make_relu_mlp_net(6, 2, 8, false, HeadKind::ScalarReadout, rng);
    const BoolFn f = net_function(net);
    const Vector table = truth_table(f, 6);
    CHECK(table.size() == 64);
    CHECK(all_finite(table));
    CHECK_THROWS_AS(truth_table(f, kMaxEnumerationDim + 1), ArgumentError);

    const Matrix r = rademacher_matrix(1000, 3, rng);
    CHECK((r.array().abs() == 1.0).all());
    CHECK(std::abs(r.mean()) < 0.1);
}
