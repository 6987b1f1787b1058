#include "raptr/stability.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace raptr {

namespace {

double mean_of(const Vector& v) {
    return v.size() > 0 ? v.mean() : 0.0;
}

double se_of(const Vector& v) {
    const long n = v.size();
    if (n < 2) return 0.0;
    const double m = v.mean();
    return std::sqrt((v.array() - m).square().sum() / (n - 1.0) / n);
}

}  // namespace

DropOneOutputs drop_one_outputs(const ResidualNet& net, const Matrix& probes) {
    ForwardOptions opts;
    opts.scales.assign(static_cast<std::size_t>(net.depth()), 1.0);
    const ForwardTape tape = forward(net, probes, opts);
    DropOneOutputs out;
    out.states.assign(tape.states.begin() + 1, tape.states.end());
    out.full = tape.states.back();
    for (long l = 1; l <= net.depth(); ++l)
        out.dropped.push_back(propagate(net, tape.states[static_cast<std::size_t>(l - 1)], l + 1));
    return out;
}

StabilityProfile psi_profile(const DropOneOutputs& outs) {
    StabilityProfile p;
    p.probes = outs.full.rows();
    for (const auto& s : outs.states) p.norms.push_back(s.rowwise().norm().mean());
    for (const auto& d : outs.dropped) p.psi.push_back((d - outs.full).rowwise().norm().mean());
    const Vector n = outs.full.rowwise().norm();
    p.out_norm_mean = n.mean();
    p.out_norm_std = p.probes > 1 ? std::sqrt((n.array() - n.mean()).square().sum() / (p.probes - 1.0)) : 0.0;
    return p;
}

StabilityProfile psi_profile(const ResidualNet& net, const Matrix& probes) {
    return psi_profile(drop_one_outputs(net, probes));
}

std::vector<double> norm_profile(const ResidualNet& net, const Vector& x) {
    const ForwardTape tape = forward(net, x);
    std::vector<double> out;
    for (std::size_t l = 1; l < tape.states.size(); ++l) out.push_back(tape.states[l].row(0).norm());
    return out;
}

PointLoss readout_mse_loss(const ResidualNet& net, const Vector& labels) {
    if (net.head().kind != HeadKind::ScalarReadout) throw ArgumentError("readout_mse_loss needs a scalar readout");
    const Vector v = net.head().v.row(0).transpose();
    return [v, labels](const Vector& z, long i) {
        const double r = v.dot(z) - labels(i);
        return r * r;
    };
}

PointLoss normalized_distance_loss(const Matrix& reference) {
    Matrix ref = reference;
    for (long i = 0; i < ref.rows(); ++i) {
        const double n = ref.row(i).norm();
        if (!(n > 0.0)) throw NumericError("zero reference output", i);
        ref.row(i) /= n;
    }
    return [ref](const Vector& z, long i) {
        const double n = z.norm();
        if (!(n > 0.0)) throw NumericError("zero output in normalized loss", i);
        return (z / n - ref.row(i).transpose()).norm();
    };
}

GapSummary loss_gap(const DropOneOutputs& outs, const PointLoss& loss) {
    const long n = outs.full.rows();
    const double L = static_cast<double>(outs.dropped.size());
    Vector full(n), drop(n);
    for (long i = 0; i < n; ++i) {
        full(i) = loss(outs.full.row(i).transpose(), i);
        double acc = 0.0;
        for (const auto& d : outs.dropped) acc += loss(d.row(i).transpose(), i);
        drop(i) = acc / L;
    }
    GapSummary g;
    g.loss_full = mean_of(full);
    g.loss_dropone = mean_of(drop);
    g.gap = g.loss_full - g.loss_dropone;
    g.gap_se = se_of(full - drop);
    return g;
}

GapSummary loss_gap(const ResidualNet& net, const Matrix& probes, const PointLoss& loss) {
    return loss_gap(drop_one_outputs(net, probes), loss);
}

BoundValue bound_rhs(const DropOneOutputs& outs, double mu) {
    if (!(mu > 0.0)) throw ArgumentError("bound_rhs: mu must be positive");
    const long n = outs.full.rows();
    const double L = static_cast<double>(outs.dropped.size());
    const Vector fn = outs.full.rowwise().norm();
    Vector per(n);
    for (long i = 0; i < n; ++i) {
        if (!(fn(i) > 0.0)) throw NumericError("bound_rhs: zero-norm output", i);
        double acc = 0.0;
        for (const auto& d : outs.dropped) acc += (d.row(i) - outs.full.row(i)).norm();
        per(i) = mu / L * acc / fn(i);
    }
    return {mean_of(per), se_of(per)};
}

BoundValue bound_rhs(const ResidualNet& net, const Matrix& probes, double mu) {
    return bound_rhs(drop_one_outputs(net, probes), mu);
}

double estimate_mu(const PointLoss& loss, const Matrix& outputs, const MuConfig& cfg, RngStream& rng) {
    if (cfg.n_perturb < 1 || cfg.radius_grid.empty()) throw ArgumentError("estimate_mu: empty perturbation set");
    double best = 0.0;
    for (long i = 0; i < outputs.rows(); ++i) {
        const Vector z = outputs.row(i).transpose();
        const double zn = z.norm();
        if (!(zn > 0.0)) continue;
        const double base = loss(z, i);
        for (long k = 0; k < cfg.n_perturb; ++k) {
            Vector u(z.size());
            for (long j = 0; j < u.size(); ++j) u(j) = rng.normal();
            // Mix a radial component so scale changes are probed alongside rotations.
            const double c = (2.0 * rng.uniform() - 1.0) * cfg.radial_mix;
            u = u / u.norm() + c * (z / zn);
            const double un = u.norm();
            if (!(un > 0.0)) continue;
            u /= un;
            for (double r : cfg.radius_grid) {
                const double eta_norm = r * zn;
                const double ratio = (loss(z + eta_norm * u, i) - base) * zn / eta_norm;
                if (std::isfinite(ratio)) best = std::max(best, ratio);
            }
        }
    }
    return best;
}

BoundCheck bound_check(const DropOneOutputs& outs, const PointLoss& loss, const MuConfig& cfg, RngStream& rng) {
    BoundCheck t;
    t.gap = loss_gap(outs, loss);
    t.mu = estimate_mu(loss, outs.full, cfg, rng);
    t.rhs = t.mu > 0.0 ? bound_rhs(outs, t.mu) : BoundValue{};
    t.holds = std::abs(t.gap.gap) <= t.rhs.value + 2.0 * t.gap.gap_se;
    return t;
}

double ols_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size() || xs.size() < 2) throw ArgumentError("ols_slope: need >= 2 paired points");
    const double n = static_cast<double>(xs.size());
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    if (sxx == 0.0) throw ArgumentError("ols_slope: xs are constant");
    return sxy / sxx;
}

double fit_scaling_exponent(const std::vector<double>& depths, const std::vector<double>& gaps) {
    if (depths.size() != gaps.size() || depths.size() < 3) throw ArgumentError("need >= 3 (L, gap) points");
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < depths.size(); ++i) {
        if (!(depths[i] > 0.0) || !(gaps[i] > 0.0)) throw ArgumentError("exponent fit needs positive values");
        lx.push_back(std::log(depths[i]));
        ly.push_back(std::log(gaps[i]));
    }
    return ols_slope(lx, ly);
}

std::string to_string(SharedMatrixMode m) {
    return m == SharedMatrixMode::Symmetric ? "symmetric" : "svd";
}

SharedMatrixMode shared_matrix_mode_from_string(const std::string& s) {
    if (s == "symmetric") return SharedMatrixMode::Symmetric;
    if (s == "svd") return SharedMatrixMode::Svd;
    throw ArgumentError("unknown shared matrix mode '" + s + "'");
}

SharedMatrix make_shared_matrix(long d, double delta, SharedMatrixMode mode, RngStream& rng) {
    if (d < 2) throw ArgumentError("shared matrix needs d >= 2");
    if (!(delta > 0.0 && delta < 1.0)) throw ArgumentError("spectral gap delta must lie in (0,1)");
    SharedMatrix out;
    if (mode == SharedMatrixMode::Symmetric) {
        const Eigen::MatrixXd g = gauss_matrix(d, d, 1.0, rng);
        const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
        Vector lam(d);
        lam(0) = 1.0;
        lam(1) = 1.0 - delta;
        for (long i = 2; i < d; ++i) lam(i) = (2.0 * rng.uniform() - 1.0) * (1.0 - delta);
        out.a = q * lam.asDiagonal() * q.transpose();
        out.top = q.col(0);
        return out;
    }
    const Eigen::MatrixXd g = gauss_matrix(d, d, 1.0 / std::sqrt(static_cast<double>(d)), rng);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(g, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Vector s = svd.singularValues() / svd.singularValues()(0);
    s(0) = 1.0;
    s(1) = 1.0 - delta;
    for (long i = 2; i < d; ++i) s(i) = std::min(s(i), 1.0 - delta);
    out.a = svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
    Eigen::EigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(out.a));
    long best = 0;
    for (long i = 1; i < d; ++i)
        if (es.eigenvalues()(i).real() > es.eigenvalues()(best).real()) best = i;
    out.top = es.eigenvectors().col(best).real().normalized();
    return out;
}

ResidualNet make_tau_linear_net(const LinearNetConfig& cfg, const Matrix& a, RngStream& rng) {
    if (cfg.depth < 1 || cfg.width < 1) throw ArgumentError("linear net needs positive depth and width");
    if (!(cfg.tau >= 0.0 && cfg.tau <= 1.0)) throw ArgumentError("tau must lie in [0,1]");
    if (a.rows() != cfg.width || a.cols() != cfg.width) throw ArgumentError("shared matrix must be d x d");
    const double g_std = std::pow(static_cast<double>(cfg.width), -0.5 * cfg.g_var_exponent);
    std::vector<Block> blocks;
    for (long l = 0; l < cfg.depth; ++l) {
        Block b;
        b.kind = cfg.layernorm ? BlockKind::LinearLn : BlockKind::Linear;
        b.w = std::sqrt(cfg.tau) * a;
        if (cfg.tau < 1.0) b.w += std::sqrt(1.0 - cfg.tau) * gauss_matrix(cfg.width, cfg.width, g_std, rng);
        blocks.push_back(std::move(b));
    }
    Head head;
    head.kind = HeadKind::Identity;
    head.trainable = false;
    return ResidualNet(cfg.width, cfg.residual ? Composition::Residual : Composition::Plain, std::move(blocks),
                       std::move(head));
}

std::string random_regime_warning(const LinearNetConfig& cfg, long probe_count) {
    const double need = static_cast<double>(probe_count) * static_cast<double>(cfg.depth) * std::log(100.0);
    if (static_cast<double>(cfg.width) >= need) return {};
    return "width " + std::to_string(cfg.width) + " is below |S| L log(1/0.01) = " +
           std::to_string(static_cast<long>(need)) + "; concentration bounds may not apply";
}

Matrix sphere_rows(long n, long d, RngStream& rng) {
    if (n < 1) throw ArgumentError("sphere_rows: n must be >= 1");
    Matrix x(n, d);
    for (long i = 0; i < n; ++i) x.row(i) = sphere_vector(d, rng).transpose();
    return x;
}

LinearExperimentResult linear_net_experiment(const LinearNetConfig& cfg, const SharedMatrix& shared,
                                             const Matrix& probes, RngStream& rng, const MuConfig& mu) {
    RngStream net_rng = rng.split(1);
    RngStream mu_rng = rng.split(2);
    const ResidualNet net = make_tau_linear_net(cfg, shared.a, net_rng);
    const DropOneOutputs outs = drop_one_outputs(net, probes);
    LinearExperimentResult r;
    r.warning = random_regime_warning(cfg, probes.rows());
    r.profile = psi_profile(outs);
    r.check = bound_check(outs, normalized_distance_loss(outs.full), mu, mu_rng);
    for (const auto& s : outs.states) {
        double acc = 0.0;
        for (long i = 0; i < s.rows(); ++i) {
            const double c = std::abs(s.row(i).dot(shared.top.transpose())) / s.row(i).norm();
            acc += std::acos(std::min(1.0, c));
        }
        r.angles.push_back(acc / static_cast<double>(s.rows()));
    }
    return r;
}

LinearExperimentResult linear_net_experiment(const LinearNetConfig& cfg, long probe_count, RngStream& rng,
                                             const MuConfig& mu) {
    RngStream a_rng = rng.split(10);
    RngStream probe_rng = rng.split(11);
    RngStream run_rng = rng.split(12);
    const SharedMatrix shared = make_shared_matrix(cfg.width, cfg.delta, cfg.a_mode, a_rng);
    const Matrix probes = sphere_rows(probe_count, cfg.width, probe_rng);
    return linear_net_experiment(cfg, shared, probes, run_rng, mu);
}

}  // namespace raptr
