#include "raptr/sinelab.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>

namespace raptr {

namespace {

const double kSqrt3Half = std::sqrt(3.0) / 2.0;

void check_dim(int d) {
    if (d < 2 || d > kMaxSineDim) throw ArgumentError("sine network needs 2 <= d <= 14");
}

Vector target_values(const Matrix& x) {
    Vector t(x.rows());
    for (long i = 0; i < x.rows(); ++i) t(i) = kSqrt3Half + kSqrt3Half * x(i, 0) - x(i, 0) * x(i, 1);
    return t;
}

struct Cache {
    int d = 0;
    Matrix x;
    Vector t;
};

const Cache& cache_for(int d) {
    thread_local Cache c;
    if (c.d != d) {
        c.d = d;
        c.x = sine_inputs(d);
        c.t = target_values(c.x);
    }
    return c;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

}  // namespace

SineParams SineParams::zeros(int d) {
    check_dim(d);
    SineParams p;
    p.w1 = Vector::Zero(d);
    p.w2 = Vector::Zero(d);
    return p;
}

Vector SineParams::flat() const {
    const long d = w1.size();
    Vector v(2 * d + 3);
    v(0) = p0;
    v.segment(1, d) = w1;
    v.segment(1 + d, d) = w2;
    v(1 + 2 * d) = b1;
    v(2 + 2 * d) = b2;
    return v;
}

SineParams SineParams::from_flat(const Vector& v, int d) {
    if (v.size() != 2 * d + 3) throw ArgumentError("flat sine parameter vector has the wrong size");
    SineParams p;
    p.p0 = v(0);
    p.w1 = v.segment(1, d);
    p.w2 = v.segment(1 + d, d);
    p.b1 = v(1 + 2 * d);
    p.b2 = v(2 + 2 * d);
    return p;
}

std::string to_string(SinePhase p) {
    switch (p) {
    case SinePhase::BiasOnly: return "bias";
    case SinePhase::Layer1: return "phase1_layer1";
    case SinePhase::Layer2: return "phase1_layer2";
    case SinePhase::Phase2: return "phase2";
    case SinePhase::Full: return "full";
    }
    return "?";
}

double target_fstar(const Vector& x) {
    if (x.size() < 2) throw ArgumentError("target_fstar needs d >= 2");
    return kSqrt3Half + kSqrt3Half * x(0) - x(0) * x(1);
}

Matrix sine_inputs(int d) {
    check_dim(d);
    const long n = 1L << d;
    Matrix x(n, d);
    for (long i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) x(i, j) = ((i >> j) & 1L) ? -1.0 : 1.0;
    return x;
}

Vector sine_output(const SineParams& p, SinePhase phase, const Matrix& x, const SineOptions& opts) {
    const long n = x.rows();
    switch (phase) {
    case SinePhase::BiasOnly: return Vector::Constant(n, p.p0);
    case SinePhase::Layer1: return (Vector::Constant(n, p.p0).array() + ((x * p.w1).array() + p.b1).sin()).matrix();
    case SinePhase::Layer2: return (Vector::Constant(n, p.p0).array() + ((x * p.w2).array() + p.b2).sin()).matrix();
    case SinePhase::Phase2:
    case SinePhase::Full: {
        const Vector y1 = (Vector::Constant(n, p.p0).array() + ((x * p.w1).array() + p.b1).sin()).matrix();
        const double shift = p.b2 + (opts.p0_in_second ? p.p0 : 0.0);
        const Vector a2 = ((x * p.w2).array() + y1.array() + shift).matrix();
        return (y1.array() + a2.array().sin()).matrix();
    }
    }
    throw ArgumentError("unknown sine phase");
}

double population_loss(const SineParams& p, SinePhase phase, const SineOptions& opts) {
    const Cache& c = cache_for(p.dim());
    return (sine_output(p, phase, c.x, opts) - c.t).squaredNorm() / static_cast<double>(c.x.rows());
}

SineParams population_grad(const SineParams& p, SinePhase phase, const SineOptions& opts) {
    const int d = p.dim();
    const Cache& c = cache_for(d);
    const Matrix& x = c.x;
    const double n = static_cast<double>(x.rows());
    SineParams g = SineParams::zeros(d);
    const Vector r2 = 2.0 * (sine_output(p, phase, x, opts) - c.t);

    switch (phase) {
    case SinePhase::BiasOnly:
        g.p0 = r2.mean();
        return g;
    case SinePhase::Layer1:
    case SinePhase::Layer2: {
        const bool first = phase == SinePhase::Layer1;
        const Vector& w = first ? p.w1 : p.w2;
        const double b = first ? p.b1 : p.b2;
        const Vector gc = r2.cwiseProduct(((x * w).array() + b).cos().matrix());
        (first ? g.w1 : g.w2) = x.transpose() * gc / n;
        (first ? g.b1 : g.b2) = gc.mean();
        return g;
    }
    case SinePhase::Phase2:
    case SinePhase::Full: {
        const Vector a1 = ((x * p.w1).array() + p.b1).matrix();
        const Vector y1 = (p.p0 + a1.array().sin()).matrix();
        const double shift = p.b2 + (opts.p0_in_second ? p.p0 : 0.0);
        const Vector cos2 = ((x * p.w2).array() + y1.array() + shift).cos().matrix();
        const Vector g2 = r2.cwiseProduct(cos2);
        g.w2 = x.transpose() * g2 / n;
        g.b2 = g2.mean();
        if (phase == SinePhase::Full) {
            const Vector dy1 = r2.array() * (1.0 + cos2.array());
            const Vector g1 = dy1.cwiseProduct(a1.array().cos().matrix());
            g.w1 = x.transpose() * g1 / n;
            g.b1 = g1.mean();
            g.p0 = dy1.mean() + (opts.p0_in_second ? g2.mean() : 0.0);
        }
        return g;
    }
    }
    throw ArgumentError("unknown sine phase");
}

SineCoeffs extract_coeffs(const SineParams& p, SinePhase phase, const SineOptions& opts) {
    const Cache& c = cache_for(p.dim());
    const Vector y = sine_output(p, phase, c.x, opts);
    SineCoeffs k;
    k.gamma = y.mean();
    k.alpha = y.dot(c.x.col(0)) / static_cast<double>(y.size());
    k.beta = y.dot(c.x.col(0).cwiseProduct(c.x.col(1))) / static_cast<double>(y.size());
    return k;
}

SineCoeffs fstar_coeffs() {
    return {kSqrt3Half, -1.0, kSqrt3Half};
}

double sine_grad_check(const SineParams& p, SinePhase phase, double h, const SineOptions& opts) {
    const int d = p.dim();
    const Vector analytic = population_grad(p, phase, opts).flat();
    const Vector base = p.flat();
    // Parameters outside the phase's active set are held fixed, so compare only active entries.
    auto active = [&](long i) {
        if (phase == SinePhase::Full) return true;
        if (i == 0) return phase == SinePhase::BiasOnly;
        if (i <= d) return phase == SinePhase::Layer1;
        if (i <= 2 * d) return phase == SinePhase::Layer2 || phase == SinePhase::Phase2;
        if (i == 2 * d + 1) return phase == SinePhase::Layer1;
        return phase == SinePhase::Layer2 || phase == SinePhase::Phase2;
    };
    double worst = 0.0;
    for (long i = 0; i < base.size(); ++i) {
        double fd = 0.0;
        if (active(i)) {
            Vector plus = base, minus = base;
            plus(i) += h;
            minus(i) -= h;
            fd = (population_loss(SineParams::from_flat(plus, d), phase, opts) -
                  population_loss(SineParams::from_flat(minus, d), phase, opts)) /
                 (2.0 * h);
        }
        worst = std::max(worst, std::abs(fd - analytic(i)));
    }
    return worst;
}

SineRun train_three_phase(const PhasePlan& plan, int d, RngStream& rng) {
    check_dim(d);
    if (!(plan.eta > 0.0) || plan.eta > 1e-2) throw ArgumentError("sine learning rate must lie in (0, 1e-2]");
    if (plan.steps_bias < 0 || plan.steps_phase1 < 0 || plan.steps_phase2 < 0)
        throw ArgumentError("phase lengths must be >= 0");
    const long every = plan.record_every > 0 ? plan.record_every
                                             : std::max(1L, static_cast<long>(std::lround(0.1 / plan.eta)));
    const SineOptions& opts = plan.options;
    SineRun run;
    SineParams p = SineParams::zeros(d);
    long step = 0;

    auto record = [&](const char* phase_name, SinePhase objective, SinePhase model) {
        SineTrajectoryRow row;
        row.step = step;
        row.phase = phase_name;
        row.params = p;
        row.loss = population_loss(p, objective, opts);
        row.coeffs = extract_coeffs(p, model, opts);
        run.max_grad_error = std::max(run.max_grad_error, sine_grad_check(p, objective, 1e-6, opts));
        if (run.alpha_cross < 0 && row.coeffs.alpha >= 0.9 * kSqrt3Half) run.alpha_cross = step;
        if (run.beta_cross < 0 && row.coeffs.beta <= -0.9) run.beta_cross = step;
        run.rows.push_back(std::move(row));
    };

    auto descend = [&](SinePhase phase) {
        const SineParams g = population_grad(p, phase, opts);
        p.p0 -= plan.eta * g.p0;
        p.w1 -= plan.eta * g.w1;
        p.w2 -= plan.eta * g.w2;
        p.b1 -= plan.eta * g.b1;
        p.b2 -= plan.eta * g.b2;
        if (!std::isfinite(p.flat().sum())) throw NumericError("sine training diverged", step);
    };

    auto check_monotone = [&](SinePhase phase, double& prev) {
        const double cur = population_loss(p, phase, opts);
        if (cur > prev + 1e-14 * std::max(1.0, prev)) run.monotone = false;
        prev = cur;
    };

    record("bias", SinePhase::BiasOnly, SinePhase::BiasOnly);
    double prev_bias = population_loss(p, SinePhase::BiasOnly, opts);
    for (long i = 0; i < plan.steps_bias; ++i) {
        descend(SinePhase::BiasOnly);
        ++step;
        check_monotone(SinePhase::BiasOnly, prev_bias);
        if (step % every == 0 || i + 1 == plan.steps_bias) record("bias", SinePhase::BiasOnly, SinePhase::BiasOnly);
    }
    run.after_bias = p;

    double prev1 = population_loss(p, SinePhase::Layer1, opts);
    double prev2 = population_loss(p, SinePhase::Layer2, opts);
    for (long i = 0; i < plan.steps_phase1; ++i) {
        if (plan.random_layer) {
            descend(rng.below(2) == 0 ? SinePhase::Layer1 : SinePhase::Layer2);
        } else {
            descend(SinePhase::Layer1);
            descend(SinePhase::Layer2);
        }
        ++step;
        check_monotone(SinePhase::Layer1, prev1);
        check_monotone(SinePhase::Layer2, prev2);
        if (step % every == 0 || i + 1 == plan.steps_phase1) record("phase1", SinePhase::Layer1, SinePhase::Layer1);
    }
    run.after_phase1 = p;

    double prev_p2 = population_loss(p, SinePhase::Phase2, opts);
    for (long i = 0; i < plan.steps_phase2; ++i) {
        descend(SinePhase::Phase2);
        ++step;
        check_monotone(SinePhase::Phase2, prev_p2);
        if (step % every == 0 || i + 1 == plan.steps_phase2) record("phase2", SinePhase::Phase2, SinePhase::Full);
    }
    run.final_params = p;
    run.final_loss = population_loss(p, SinePhase::Full, opts);
    return run;
}

void SineRun::write_csv(const std::filesystem::path& path) const {
    std::ofstream os(path);
    if (!os) throw ArgumentError("cannot write " + path.string());
    os << "step,phase,p0,w11,w21,w22,b1,b2,loss\n";
    for (const auto& r : rows) {
        os << r.step << ',' << r.phase << ',' << fmt(r.params.p0) << ',' << fmt(r.params.w1(0)) << ','
           << fmt(r.params.w2(0)) << ',' << fmt(r.params.w2(1)) << ',' << fmt(r.params.b1) << ','
           << fmt(r.params.b2) << ',' << fmt(r.loss) << '\n';
    }
}

BestFit single_layer_best_fit(int d, const SineCoeffs& target, const BestFitConfig& cfg, RngStream& rng) {
    check_dim(d);
    if (cfg.restarts < 1 || cfg.steps < 0 || !(cfg.lr > 0.0)) throw ArgumentError("invalid best-fit budget");
    const Matrix x = sine_inputs(d);
    const double n = static_cast<double>(x.rows());
    const Vector t = (target.gamma + target.alpha * x.col(0).array() +
                      target.beta * x.col(0).array() * x.col(1).array()).matrix();
    auto loss_of = [&](double p0, const Vector& w, double b) {
        return ((p0 + ((x * w).array() + b).sin()).matrix() - t).squaredNorm() / n;
    };
    BestFit best;
    best.loss = std::numeric_limits<double>::infinity();
    for (int r = 0; r < cfg.restarts; ++r) {
        RngStream rr = rng.split(static_cast<std::uint64_t>(r));
        double p0 = target.gamma;
        Vector w(d);
        for (int j = 0; j < d; ++j) w(j) = (2.0 * rr.uniform() - 1.0) * cfg.init_scale;
        double b = (2.0 * rr.uniform() - 1.0) * std::numbers::pi;
        for (long s = 0; s < cfg.steps; ++s) {
            const Vector a = ((x * w).array() + b).matrix();
            const Vector r2 = 2.0 * ((p0 + a.array().sin()).matrix() - t);
            const Vector gc = r2.cwiseProduct(a.array().cos().matrix());
            p0 -= cfg.lr * r2.mean();
            w -= cfg.lr * (x.transpose() * gc / n);
            b -= cfg.lr * gc.mean();
        }
        const double l = loss_of(p0, w, b);
        if (l < best.loss) {
            best = BestFit{l, r, p0, w, b};
        }
    }
    return best;
}

}  // namespace raptr
