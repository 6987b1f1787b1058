#include "raptr/sharedbase.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace raptr {

namespace {

double tensor_rel_diff(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw ArgumentError("gradient shape mismatch");
    if (a.size() == 0) return 0.0;
    const double diff = (a - b).cwiseAbs().maxCoeff();
    const double scale = std::max(a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff());
    if (diff == 0.0) return 0.0;
    return diff / scale;
}

bool output_role_is_c(const Block& b) {
    return b.kind == BlockKind::ReluMlp;
}

}  // namespace

CoeffMatrix coeffs_for_gates(const GatePattern& g) {
    const auto active = g.active_indices();
    if (active.empty()) throw ArgumentError("coeffs_for_gates: empty gate pattern");
    CoeffMatrix c = CoeffMatrix::Zero(static_cast<long>(active.size()), static_cast<long>(g.size()));
    for (std::size_t r = 0; r < active.size(); ++r) c(static_cast<long>(r), active[r] - 1) = 1.0;
    return c;
}

std::vector<int> active_from_coeffs(const CoeffMatrix& c) {
    std::vector<int> out;
    for (long r = 0; r < c.rows(); ++r) {
        long hit = -1;
        for (long j = 0; j < c.cols(); ++j) {
            if (c(r, j) == 0.0) continue;
            if (hit >= 0) throw ArgumentError("active_from_coeffs: row is not one-hot");
            hit = j;
        }
        if (hit < 0) throw ArgumentError("active_from_coeffs: empty row");
        if (!out.empty() && hit + 1 <= out.back()) throw ArgumentError("active_from_coeffs: rows not increasing");
        out.push_back(static_cast<int>(hit) + 1);
    }
    return out;
}

std::vector<Matrix> make_shared(const std::vector<Matrix>& layer_params, const CoeffMatrix& c, long* macs) {
    if (static_cast<long>(layer_params.size()) != c.cols())
        throw ArgumentError("make_shared: coefficient columns must equal the layer count");
    if (layer_params.empty()) return {};
    const long rows = layer_params.front().rows(), cols = layer_params.front().cols();
    for (const auto& p : layer_params)
        if (p.rows() != rows || p.cols() != cols) throw ArgumentError("make_shared: layer shapes differ");
    std::vector<Matrix> out;
    for (long r = 0; r < c.rows(); ++r) {
        Matrix acc = Matrix::Zero(rows, cols);
        for (long j = 0; j < c.cols(); ++j) {
            acc += c(r, j) * layer_params[static_cast<std::size_t>(j)];
            if (macs != nullptr) *macs += rows * cols;
        }
        out.push_back(std::move(acc));
    }
    return out;
}

std::vector<Matrix> scatter_grads(const CoeffMatrix& c, const std::vector<Matrix>& shared_grads,
                                  const std::vector<long>& rows_cols, long* macs) {
    if (static_cast<long>(shared_grads.size()) != c.rows())
        throw ArgumentError("scatter_grads: coefficient rows must equal the shared layer count");
    if (rows_cols.size() != 2) throw ArgumentError("scatter_grads: expected {rows, cols}");
    const long rows = rows_cols[0], cols = rows_cols[1];
    for (const auto& g : shared_grads)
        if (g.rows() != rows || g.cols() != cols) throw ArgumentError("scatter_grads: gradient shape mismatch");
    std::vector<Matrix> out;
    for (long j = 0; j < c.cols(); ++j) {
        Matrix acc = Matrix::Zero(rows, cols);
        for (long r = 0; r < c.rows(); ++r) {
            acc += c(r, j) * shared_grads[static_cast<std::size_t>(r)];
            if (macs != nullptr) *macs += rows * cols;
        }
        out.push_back(std::move(acc));
    }
    return out;
}

SharedPlan plan_for_gates(const GatePattern& g, const ScalePattern* scales) {
    SharedPlan plan;
    plan.input = coeffs_for_gates(g);
    plan.output = plan.input;
    if (scales != nullptr) {
        if (scales->size() != g.size()) throw ArgumentError("plan_for_gates: scale length mismatch");
        const auto active = g.active_indices();
        for (std::size_t r = 0; r < active.size(); ++r)
            plan.output.row(static_cast<long>(r)) *= (*scales)[static_cast<std::size_t>(active[r] - 1)];
    }
    return plan;
}

ResidualNet make_shared_net(const ResidualNet& net, const SharedPlan& plan) {
    const long L = net.depth();
    if (plan.input.cols() != L || plan.output.cols() != L || plan.input.rows() != plan.output.rows())
        throw ArgumentError("make_shared_net: plan does not match the network depth");
    const auto& blocks = net.blocks();
    for (const auto& b : blocks) {
        if (b.kind != blocks.front().kind || b.w.rows() != blocks.front().w.rows() || b.prenorm != blocks.front().prenorm)
            throw ArgumentError("make_shared_net: layers must share one structure");
    }
    std::vector<Matrix> ws, cs;
    for (const auto& b : blocks) {
        ws.push_back(b.w);
        if (b.c.size() > 0) cs.push_back(b.c);
    }
    const bool relu = output_role_is_c(blocks.front());
    const auto shared_w = make_shared(ws, relu ? plan.input : plan.output);
    std::vector<Matrix> shared_c;
    if (relu) shared_c = make_shared(cs, plan.output);
    std::vector<Block> out;
    for (std::size_t r = 0; r < shared_w.size(); ++r) {
        Block b;
        b.kind = blocks.front().kind;
        b.prenorm = blocks.front().prenorm;
        b.w = shared_w[r];
        if (relu) b.c = shared_c[r];
        out.push_back(std::move(b));
    }
    return ResidualNet(net.width(), net.composition(), std::move(out), net.head());
}

Gradients scatter_net_grads(const ResidualNet& net, const SharedPlan& plan, const Gradients& shared) {
    const auto& blocks = net.blocks();
    const bool relu = output_role_is_c(blocks.front());
    std::vector<Matrix> gw, gc;
    for (const auto& bg : shared.blocks) {
        gw.push_back(bg.w);
        if (relu) gc.push_back(bg.c);
    }
    const Block& b0 = blocks.front();
    Gradients out;
    const auto full_w = scatter_grads(relu ? plan.input : plan.output, gw, {b0.w.rows(), b0.w.cols()});
    std::vector<Matrix> full_c;
    if (relu) full_c = scatter_grads(plan.output, gc, {b0.c.rows(), b0.c.cols()});
    for (std::size_t j = 0; j < blocks.size(); ++j) {
        BlockGrad bg;
        bg.w = full_w[j];
        if (relu) bg.c = full_c[j];
        out.blocks.push_back(std::move(bg));
    }
    out.head = shared.head;
    out.input = shared.input;
    return out;
}

double equivalence_check(const ResidualNet& net, const Matrix& x, const GatePattern& gates, const Matrix& upstream,
                         bool fold_scales) {
    if (static_cast<long>(gates.size()) != net.depth()) throw ArgumentError("gate pattern length mismatch");
    const ScalePattern scales = fold_scales ? h_sqrt(gates) : unit_scales(gates);

    ForwardOptions gated_opts;
    gated_opts.scales = scales;
    const ForwardTape gated_tape = forward(net, x, gated_opts);
    const Gradients gated = backward(net, gated_tape, upstream);

    const SharedPlan plan = plan_for_gates(gates, fold_scales ? &scales : nullptr);
    const ResidualNet shared_net = make_shared_net(net, plan);
    const ForwardTape shared_tape = forward(shared_net, x);
    const Gradients shared = scatter_net_grads(net, plan, backward(shared_net, shared_tape, upstream));

    double worst = tensor_rel_diff(gated_tape.output, shared_tape.output);
    const auto a = gated.flat(net);
    const auto b = shared.flat(net);
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, tensor_rel_diff(*a[i], *b[i]));
    return worst;
}

double sgd_step_equivalence(const ResidualNet& net, const Matrix& x, const GatePattern& gates, const Matrix& upstream,
                            double lr) {
    ResidualNet a = net;
    ForwardOptions opts;
    opts.scales = unit_scales(gates);
    const Gradients ga = backward(a, forward(a, x, opts), upstream);
    {
        auto params = a.parameters();
        const auto grads = ga.flat(a);
        for (std::size_t i = 0; i < params.size(); ++i) *params[i] -= lr * *grads[i];
    }

    ResidualNet b = net;
    const SharedPlan plan = plan_for_gates(gates);
    const ResidualNet shared_net = make_shared_net(b, plan);
    const Gradients gb = scatter_net_grads(b, plan, backward(shared_net, forward(shared_net, x), upstream));
    {
        auto params = b.parameters();
        const auto grads = gb.flat(b);
        for (std::size_t i = 0; i < params.size(); ++i) *params[i] -= lr * *grads[i];
    }

    double worst = 0.0;
    const auto pa = std::as_const(a).parameters();
    const auto pb = std::as_const(b).parameters();
    for (std::size_t i = 0; i < pa.size(); ++i) worst = std::max(worst, tensor_rel_diff(*pa[i], *pb[i]));
    return worst;
}

double flops_overhead(long tokens, long depth) {
    if (tokens < 1) throw ArgumentError("flops_overhead: tokens must be >= 1");
    if (depth < 0) throw ArgumentError("flops_overhead: depth must be >= 0");
    return 1.0 + 2.0 * static_cast<double>(depth) / (2.0 * static_cast<double>(tokens) + 1.0);
}

long linear_step_macs(long tokens, long active, long d) {
    const long per_layer = tokens * d * d      // forward
                           + d * d * tokens    // weight gradient
                           + tokens * d * d    // input gradient
                           + d * d;            // update
    return active * per_layer;
}

long shared_combination_macs(long active, long depth, long d) {
    std::vector<Matrix> layers(static_cast<std::size_t>(depth), Matrix::Zero(d, d));
    const CoeffMatrix c = CoeffMatrix::Constant(active, depth, 1.0);
    long macs = 0;
    const auto shared = make_shared(layers, c, &macs);
    scatter_grads(c, shared, {d, d}, &macs);
    return macs;
}

CoeffMatrix grouped_coeffs(long depth, long active, long n_groups) {
    if (depth < 1 || active < 1 || n_groups < 1) throw ArgumentError("grouped_coeffs: sizes must be positive");
    if (depth % n_groups != 0) throw ArgumentError("grouped_coeffs: depth must be divisible by the group count");
    if (active % n_groups != 0) throw ArgumentError("grouped_coeffs: active layers must split evenly over groups");
    const long group = depth / n_groups;
    const long per = active / n_groups;
    if (per > group) throw ArgumentError("grouped_coeffs: more active layers than a group holds");
    CoeffMatrix c = CoeffMatrix::Zero(active, depth);
    for (long r = 0; r < active; ++r) {
        const long g = r / per;
        c.block(r, g * group, 1, group).setConstant(1.0);
    }
    return c;
}

long count_nonzeros(const CoeffMatrix& c) {
    return static_cast<long>((c.array() != 0.0).count());
}

}  // namespace raptr
