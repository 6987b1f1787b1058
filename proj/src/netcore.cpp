#include "raptr/netcore.hpp"

#include "json.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>

namespace raptr {

using nlohmann::json;

namespace {

constexpr char kCheckpointMagic[8] = {'R', 'P', 'T', 'R', 'C', 'K', 'P', '1'};

// Row norms of y, rejecting zero rows (normalization is undefined there).
Vector row_norms(const Matrix& y, long layer) {
    Vector n = y.rowwise().norm();
    for (long i = 0; i < n.size(); ++i) {
        if (!(n(i) > 0.0)) throw NumericError("zero-norm activation at a normalized layer", layer);
    }
    return n;
}

// d(u)/d(y)^T g for u = y / |y|, applied row-wise.
Matrix normalize_backward(const Matrix& y, const Vector& norms, const Matrix& grad_u) {
    Matrix out(y.rows(), y.cols());
    for (long i = 0; i < y.rows(); ++i) {
        const double n = norms(i);
        const auto u = y.row(i) / n;
        const double proj = grad_u.row(i).dot(u);
        out.row(i) = (grad_u.row(i) - proj * u) / n;
    }
    return out;
}

Matrix block_apply(const Block& b, const Matrix& y, const Vector* mask, Matrix* pre_out, long layer) {
    switch (b.kind) {
    case BlockKind::Linear:
        return y * b.w.transpose();
    case BlockKind::LinearLn: {
        const Vector n = row_norms(y, layer);
        return n.cwiseInverse().asDiagonal() * (y * b.w.transpose());
    }
    case BlockKind::ReluMlp: {
        Matrix h;
        if (b.prenorm) {
            const Vector n = row_norms(y, layer);
            const double s = std::sqrt(static_cast<double>(y.cols()));
            h = (s * n.cwiseInverse()).asDiagonal() * (y * b.w.transpose());
        } else {
            h = y * b.w.transpose();
        }
        Matrix a = h.cwiseMax(0.0);
        if (mask != nullptr) a = a * mask->asDiagonal();
        Matrix f = a * b.c.transpose();
        if (pre_out != nullptr) *pre_out = std::move(h);
        return f;
    }
    }
    throw ArgumentError("unknown block kind");
}

// Backward through one block given G = dLoss/dF (already multiplied by the layer scale).
// Writes parameter gradients into `grad` and returns dLoss/dy.
Matrix block_backward(const Block& b, const Matrix& y, const Matrix& pre, const Vector* mask,
                      const Matrix& g, BlockGrad& grad, long layer) {
    switch (b.kind) {
    case BlockKind::Linear:
        grad.w = g.transpose() * y;
        return g * b.w;
    case BlockKind::LinearLn: {
        const Vector n = row_norms(y, layer);
        const Matrix u = n.cwiseInverse().asDiagonal() * y;
        grad.w = g.transpose() * u;
        return normalize_backward(y, n, g * b.w);
    }
    case BlockKind::ReluMlp: {
        Matrix a = pre.cwiseMax(0.0);
        if (mask != nullptr) a = a * mask->asDiagonal();
        grad.c = g.transpose() * a;
        Matrix dh = g * b.c;
        if (mask != nullptr) dh = dh * mask->asDiagonal();
        dh = dh.cwiseProduct((pre.array() > 0.0).cast<double>().matrix());
        if (b.prenorm) {
            const Vector n = row_norms(y, layer);
            const double s = std::sqrt(static_cast<double>(y.cols()));
            const Matrix z = (s * n.cwiseInverse()).asDiagonal() * y;
            grad.w = dh.transpose() * z;
            // z = s * y / |y|  =>  dy = s * P_perp(dz) / |y|
            return s * normalize_backward(y, n, dh * b.w);
        }
        grad.w = dh.transpose() * y;
        return dh * b.w;
    }
    }
    throw ArgumentError("unknown block kind");
}

BlockGrad zero_grad(const Block& b) {
    BlockGrad g;
    g.w = Matrix::Zero(b.w.rows(), b.w.cols());
    if (b.c.size() > 0) g.c = Matrix::Zero(b.c.rows(), b.c.cols());
    return g;
}

void put_u64(std::ostream& os, std::uint64_t v) {
    char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(buf, 8);
}

std::uint64_t get_u64(std::istream& is) {
    unsigned char buf[8];
    is.read(reinterpret_cast<char*>(buf), 8);
    if (!is) throw ArgumentError("checkpoint truncated");
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | buf[i];
    return v;
}

}  // namespace

std::string to_string(BlockKind k) {
    switch (k) {
    case BlockKind::ReluMlp: return "relu_mlp";
    case BlockKind::Linear: return "linear";
    case BlockKind::LinearLn: return "linear_ln";
    }
    return "?";
}

std::string to_string(Composition c) {
    return c == Composition::Residual ? "residual" : "plain";
}

std::string to_string(HeadKind h) {
    switch (h) {
    case HeadKind::ScalarReadout: return "scalar_readout";
    case HeadKind::NormalizedLinear: return "normalized_linear";
    case HeadKind::Identity: return "identity";
    }
    return "?";
}

BlockKind block_kind_from_string(const std::string& s) {
    if (s == "relu_mlp") return BlockKind::ReluMlp;
    if (s == "linear") return BlockKind::Linear;
    if (s == "linear_ln") return BlockKind::LinearLn;
    throw ArgumentError("unknown block kind '" + s + "'");
}

Composition composition_from_string(const std::string& s) {
    if (s == "residual") return Composition::Residual;
    if (s == "plain") return Composition::Plain;
    throw ArgumentError("unknown composition '" + s + "'");
}

HeadKind head_kind_from_string(const std::string& s) {
    if (s == "scalar_readout") return HeadKind::ScalarReadout;
    if (s == "normalized_linear") return HeadKind::NormalizedLinear;
    if (s == "identity") return HeadKind::Identity;
    throw ArgumentError("unknown head kind '" + s + "'");
}

int GatePattern::active_count() const noexcept {
    int n = 0;
    for (auto b : bits) n += b ? 1 : 0;
    return n;
}

std::vector<int> GatePattern::active_indices() const {
    std::vector<int> out;
    for (std::size_t i = 0; i < bits.size(); ++i)
        if (bits[i]) out.push_back(static_cast<int>(i) + 1);
    return out;
}

GatePattern GatePattern::all_on(std::size_t depth) {
    GatePattern g;
    g.bits.assign(depth, 1);
    return g;
}

ScalePattern unit_scales(const GatePattern& g) {
    ScalePattern s(g.size(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) s[i] = g.bits[i] ? 1.0 : 0.0;
    return s;
}

ScalePattern h_sqrt(const GatePattern& g) {
    const auto active = g.active_indices();
    if (active.empty()) throw ArgumentError("h_sqrt: gate pattern has no active layer");
    ScalePattern s(g.size(), 0.0);
    const int past_end = static_cast<int>(g.size()) + 1;
    for (std::size_t k = 0; k < active.size(); ++k) {
        const int j = active[k];
        const int next = k + 1 < active.size() ? active[k + 1] : past_end;
        s[static_cast<std::size_t>(j - 1)] = std::sqrt(static_cast<double>(next - j));
    }
    return s;
}

ResidualNet::ResidualNet(long width, Composition composition, std::vector<Block> blocks, Head head)
    : width_(width), composition_(composition), blocks_(std::move(blocks)), head_(std::move(head)) {
    validate();
}

long ResidualNet::output_dim() const noexcept {
    switch (head_.kind) {
    case HeadKind::ScalarReadout: return 1;
    case HeadKind::NormalizedLinear: return head_.v.rows();
    case HeadKind::Identity: return width_;
    }
    return width_;
}

void ResidualNet::validate() const {
    if (width_ < 1) throw ArgumentError("network width must be >= 1");
    if (blocks_.empty()) throw ArgumentError("network needs at least one block");
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        const Block& b = blocks_[i];
        const std::string where = "block " + std::to_string(i + 1) + ": ";
        if (b.kind == BlockKind::ReluMlp) {
            if (composition_ == Composition::Plain)
                throw ArgumentError(where + "plain composition only supports linear blocks");
            if (b.w.cols() != width_ || b.w.rows() < 1 || b.c.rows() != width_ || b.c.cols() != b.w.rows())
                throw ArgumentError(where + "relu_mlp shapes must be w: m x d, c: d x m");
        } else {
            if (b.w.rows() != width_ || b.w.cols() != width_)
                throw ArgumentError(where + "linear block weight must be d x d");
            if (b.c.size() != 0) throw ArgumentError(where + "linear block has no output map");
        }
        if (!all_finite(b.w) || !all_finite(b.c)) throw ArgumentError(where + "non-finite parameter");
    }
    switch (head_.kind) {
    case HeadKind::ScalarReadout:
        if (head_.v.rows() != 1 || head_.v.cols() != width_)
            throw ArgumentError("scalar readout must be 1 x d");
        break;
    case HeadKind::NormalizedLinear:
        if (head_.v.rows() < 1 || head_.v.cols() != width_)
            throw ArgumentError("normalized linear head must be V x d");
        break;
    case HeadKind::Identity:
        if (head_.v.size() != 0) throw ArgumentError("identity head has no parameters");
        break;
    }
}

std::vector<Matrix*> ResidualNet::parameters() {
    std::vector<Matrix*> out;
    for (auto& b : blocks_) {
        out.push_back(&b.w);
        if (b.c.size() > 0) out.push_back(&b.c);
    }
    if (head_.trainable && head_.v.size() > 0) out.push_back(&head_.v);
    return out;
}

std::vector<const Matrix*> ResidualNet::parameters() const {
    std::vector<const Matrix*> out;
    for (const auto& b : blocks_) {
        out.push_back(&b.w);
        if (b.c.size() > 0) out.push_back(&b.c);
    }
    if (head_.trainable && head_.v.size() > 0) out.push_back(&head_.v);
    return out;
}

std::size_t ResidualNet::parameter_count() const {
    std::size_t n = 0;
    for (const auto* p : parameters()) n += static_cast<std::size_t>(p->size());
    return n;
}

namespace {

Head make_head(HeadKind kind, long d, long depth, RngStream& rng, const InitConfig& init) {
    Head h;
    h.kind = kind;
    switch (kind) {
    case HeadKind::ScalarReadout:
        h.v = gauss_matrix(1, d, init.readout_gain / std::sqrt(static_cast<double>(d * (depth + 1))), rng);
        break;
    case HeadKind::NormalizedLinear:
        h.v = Matrix::Identity(d, d);
        break;
    case HeadKind::Identity:
        h.trainable = false;
        break;
    }
    return h;
}

}  // namespace

ResidualNet make_relu_mlp_net(long d, long depth, long hidden, bool prenorm, HeadKind head,
                              RngStream& rng, const InitConfig& init) {
    if (d < 1 || depth < 1 || hidden < 1) throw ArgumentError("make_relu_mlp_net: bad dimensions");
    std::vector<Block> blocks;
    blocks.reserve(static_cast<std::size_t>(depth));
    for (long l = 0; l < depth; ++l) {
        Block b;
        b.kind = BlockKind::ReluMlp;
        b.prenorm = prenorm;
        b.w = gauss_matrix(hidden, d, std::sqrt(init.w_var_scale / static_cast<double>(hidden)), rng);
        b.c = gauss_matrix(d, hidden, std::sqrt(init.c_var_scale / static_cast<double>(d)), rng);
        blocks.push_back(std::move(b));
    }
    return ResidualNet(d, Composition::Residual, std::move(blocks), make_head(head, d, depth, rng, init));
}

ResidualNet make_linear_net(long d, long depth, bool layernorm, Composition composition,
                            HeadKind head, RngStream& rng, const InitConfig& init) {
    if (d < 1 || depth < 1) throw ArgumentError("make_linear_net: bad dimensions");
    std::vector<Block> blocks;
    blocks.reserve(static_cast<std::size_t>(depth));
    for (long l = 0; l < depth; ++l) {
        Block b;
        b.kind = layernorm ? BlockKind::LinearLn : BlockKind::Linear;
        b.w = gauss_matrix(d, d, std::sqrt(init.linear_var_scale / static_cast<double>(d)), rng);
        blocks.push_back(std::move(b));
    }
    return ResidualNet(d, composition, std::move(blocks), make_head(head, d, depth, rng, init));
}

std::vector<Matrix*> Gradients::flat(const ResidualNet& net) {
    std::vector<Matrix*> out;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        out.push_back(&blocks[i].w);
        if (net.blocks()[i].c.size() > 0) out.push_back(&blocks[i].c);
    }
    if (net.head().trainable && net.head().v.size() > 0) out.push_back(&head);
    return out;
}

std::vector<const Matrix*> Gradients::flat(const ResidualNet& net) const {
    std::vector<const Matrix*> out;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        out.push_back(&blocks[i].w);
        if (net.blocks()[i].c.size() > 0) out.push_back(&blocks[i].c);
    }
    if (net.head().trainable && net.head().v.size() > 0) out.push_back(&head);
    return out;
}

void Gradients::scale(double factor) {
    for (auto& b : blocks) {
        b.w *= factor;
        if (b.c.size() > 0) b.c *= factor;
    }
    if (head.size() > 0) head *= factor;
    if (input.size() > 0) input *= factor;
}

void Gradients::add(const Gradients& other) {
    if (other.blocks.size() != blocks.size()) throw ArgumentError("Gradients::add: depth mismatch");
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        blocks[i].w += other.blocks[i].w;
        if (blocks[i].c.size() > 0) blocks[i].c += other.blocks[i].c;
    }
    if (head.size() > 0) head += other.head;
}

ForwardTape forward(const ResidualNet& net, const Matrix& x, const ForwardOptions& opts) {
    const long depth = net.depth();
    if (x.cols() != net.width()) throw ArgumentError("forward: input width mismatch");
    if (!opts.scales.empty() && static_cast<long>(opts.scales.size()) != depth)
        throw ArgumentError("forward: scale pattern length must equal depth");
    if (!opts.hidden_masks.empty() && static_cast<long>(opts.hidden_masks.size()) != depth)
        throw ArgumentError("forward: hidden mask list length must equal depth");

    ForwardTape tape;
    tape.scales = opts.scales.empty() ? ScalePattern(static_cast<std::size_t>(depth), 1.0) : opts.scales;
    tape.hidden_masks = opts.hidden_masks;
    for (double s : tape.scales)
        if (!(s >= 0.0) || !std::isfinite(s)) throw ArgumentError("forward: scales must be finite and >= 0");

    tape.states.reserve(static_cast<std::size_t>(depth + 1));
    tape.pre.resize(static_cast<std::size_t>(depth));
    tape.states.push_back(x);
    for (long l = 0; l < depth; ++l) {
        const auto li = static_cast<std::size_t>(l);
        const Block& b = net.blocks()[li];
        const double s = tape.scales[li];
        const Matrix& y = tape.states.back();
        if (s == 0.0) {
            tape.states.push_back(y);
            continue;
        }
        const Vector* mask = nullptr;
        if (!tape.hidden_masks.empty() && tape.hidden_masks[li].size() > 0) {
            if (tape.hidden_masks[li].size() != b.hidden())
                throw ArgumentError("forward: hidden mask size must equal block hidden width");
            mask = &tape.hidden_masks[li];
        }
        Matrix f = block_apply(b, y, mask, &tape.pre[li], l + 1);
        Matrix next = net.composition() == Composition::Residual ? Matrix(y + s * f) : Matrix(s * f);
        if (!all_finite(next)) throw NumericError("non-finite activation", l + 1);
        tape.states.push_back(std::move(next));
    }

    const Matrix& top = tape.states.back();
    const Head& h = net.head();
    switch (h.kind) {
    case HeadKind::ScalarReadout:
        tape.output = top * h.v.transpose();
        break;
    case HeadKind::NormalizedLinear: {
        const Vector n = row_norms(top, 0);
        tape.output = n.cwiseInverse().asDiagonal() * (top * h.v.transpose());
        break;
    }
    case HeadKind::Identity:
        tape.output = top;
        break;
    }
    if (!all_finite(tape.output)) throw NumericError("non-finite head output", 0);
    return tape;
}

Matrix propagate(const ResidualNet& net, const Matrix& y, long first, long skip) {
    if (y.cols() != net.width()) throw ArgumentError("propagate: state width mismatch");
    if (first < 1 || first > net.depth() + 1) throw ArgumentError("propagate: first layer out of range");
    Matrix cur = y;
    for (long l = first; l <= net.depth(); ++l) {
        if (l == skip) continue;
        const Block& b = net.blocks()[static_cast<std::size_t>(l - 1)];
        Matrix f = block_apply(b, cur, nullptr, nullptr, l);
        if (net.composition() == Composition::Residual) cur += f;
        else cur = std::move(f);
        if (!all_finite(cur)) throw NumericError("non-finite activation", l);
    }
    return cur;
}

ForwardTape forward(const ResidualNet& net, const Vector& x, const ForwardOptions& opts) {
    Matrix row = x.transpose();
    return forward(net, row, opts);
}

Gradients backward(const ResidualNet& net, const ForwardTape& tape, const Matrix& upstream) {
    const long depth = net.depth();
    if (static_cast<long>(tape.states.size()) != depth + 1 || tape.states.front().cols() != net.width())
        throw ArgumentError("backward: tape does not belong to this network");
    if (upstream.rows() != tape.output.rows() || upstream.cols() != tape.output.cols())
        throw ArgumentError("backward: upstream gradient shape mismatch");

    Gradients grads;
    grads.blocks.resize(static_cast<std::size_t>(depth));

    const Matrix& top = tape.states.back();
    const Head& h = net.head();
    Matrix dy;
    switch (h.kind) {
    case HeadKind::ScalarReadout:
        grads.head = upstream.transpose() * top;
        dy = upstream * h.v;
        break;
    case HeadKind::NormalizedLinear: {
        const Vector n = row_norms(top, 0);
        const Matrix u = n.cwiseInverse().asDiagonal() * top;
        grads.head = upstream.transpose() * u;
        dy = normalize_backward(top, n, upstream * h.v);
        break;
    }
    case HeadKind::Identity:
        dy = upstream;
        break;
    }
    if (!h.trainable) grads.head = Matrix();

    for (long l = depth - 1; l >= 0; --l) {
        const auto li = static_cast<std::size_t>(l);
        const Block& b = net.blocks()[li];
        const double s = tape.scales[li];
        if (s == 0.0) {
            grads.blocks[li] = zero_grad(b);
            continue;  // bypassed layer: identity in both compositions
        }
        const Vector* mask = nullptr;
        if (!tape.hidden_masks.empty() && tape.hidden_masks[li].size() > 0) mask = &tape.hidden_masks[li];
        const Matrix g = s * dy;
        Matrix dprev = block_backward(b, tape.states[li], tape.pre[li], mask, g, grads.blocks[li], l + 1);
        if (b.c.size() == 0) grads.blocks[li].c = Matrix();
        if (net.composition() == Composition::Residual) dy += dprev;
        else dy = std::move(dprev);
    }
    grads.input = std::move(dy);
    return grads;
}

double gradient_check(const ResidualNet& net, const Matrix& x, const ForwardOptions& opts, RngStream& rng,
                      double h) {
    ResidualNet probe = net;
    const ForwardTape tape = forward(probe, x, opts);
    const Matrix r = gauss_matrix(tape.output.rows(), tape.output.cols(), 1.0, rng);
    const Gradients g = backward(probe, tape, r);
    auto objective = [&](const ResidualNet& n, const Matrix& in) {
        return forward(n, in, opts).output.cwiseProduct(r).sum();
    };
    auto rel = [](const Matrix& a, const Matrix& fd) {
        const double scale = a.cwiseAbs().maxCoeff();
        const double diff = (a - fd).cwiseAbs().maxCoeff();
        return diff == 0.0 ? 0.0 : diff / std::max(scale, 1e-300);
    };

    double worst = 0.0;
    auto params = probe.parameters();
    const auto grads = g.flat(probe);
    for (std::size_t t = 0; t < params.size(); ++t) {
        Matrix& p = *params[t];
        Matrix fd(p.rows(), p.cols());
        for (long i = 0; i < p.size(); ++i) {
            const double keep = p.data()[i];
            p.data()[i] = keep + h;
            const double up = objective(probe, x);
            p.data()[i] = keep - h;
            const double down = objective(probe, x);
            p.data()[i] = keep;
            fd.data()[i] = (up - down) / (2.0 * h);
        }
        worst = std::max(worst, rel(*grads[t], fd));
    }
    Matrix xin = x;
    Matrix fd(x.rows(), x.cols());
    for (long i = 0; i < xin.size(); ++i) {
        const double keep = xin.data()[i];
        xin.data()[i] = keep + h;
        const double up = objective(probe, xin);
        xin.data()[i] = keep - h;
        const double down = objective(probe, xin);
        xin.data()[i] = keep;
        fd.data()[i] = (up - down) / (2.0 * h);
    }
    return std::max(worst, rel(g.input, fd));
}

LossValue loss_squared(double pred, double target) {
    const double r = pred - target;
    return {r * r, 2.0 * r};
}

BatchLoss mse_batch(const Matrix& output, const Vector& target) {
    if (output.cols() != 1 || output.rows() != target.size())
        throw ArgumentError("mse_batch: expects B x 1 output and B targets");
    const long n = target.size();
    BatchLoss out{0.0, Matrix(n, 1)};
    for (long i = 0; i < n; ++i) {
        const auto lv = loss_squared(output(i, 0), target(i));
        out.value += lv.value;
        out.upstream(i, 0) = lv.grad / static_cast<double>(n);
    }
    out.value /= static_cast<double>(n);
    return out;
}

void save_checkpoint(const ResidualNet& net, const std::filesystem::path& path) {
    json header;
    header["format"] = "raptr-lab-checkpoint";
    header["version"] = 1;
    header["width"] = net.width();
    header["composition"] = to_string(net.composition());
    json blocks = json::array();
    std::size_t payload = 0;
    for (const auto& b : net.blocks()) {
        json jb;
        jb["kind"] = to_string(b.kind);
        jb["hidden"] = b.hidden();
        jb["prenorm"] = b.prenorm;
        blocks.push_back(jb);
        payload += static_cast<std::size_t>(b.w.size() + b.c.size());
    }
    header["blocks"] = blocks;
    header["head"] = {{"kind", to_string(net.head().kind)},
                      {"rows", net.head().v.rows()},
                      {"trainable", net.head().trainable}};
    payload += static_cast<std::size_t>(net.head().v.size());
    header["payload_doubles"] = payload;

    const std::string text = header.dump();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ArgumentError("cannot open checkpoint for writing: " + path.string());
    os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    put_u64(os, text.size());
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    auto write_matrix = [&](const Matrix& m) {
        for (long i = 0; i < m.rows(); ++i)
            for (long j = 0; j < m.cols(); ++j) put_u64(os, std::bit_cast<std::uint64_t>(m(i, j)));
    };
    for (const auto& b : net.blocks()) {
        write_matrix(b.w);
        write_matrix(b.c);
    }
    write_matrix(net.head().v);
    if (!os) throw ArgumentError("failed writing checkpoint: " + path.string());
}

ResidualNet load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ArgumentError("cannot open checkpoint: " + path.string());
    char magic[8];
    is.read(magic, 8);
    if (!is || !std::equal(magic, magic + 8, kCheckpointMagic)) throw ArgumentError("not a checkpoint file");
    const std::uint64_t len = get_u64(is);
    std::string text(len, '\0');
    is.read(text.data(), static_cast<std::streamsize>(len));
    if (!is) throw ArgumentError("checkpoint header truncated");
    const json header = json::parse(text);

    const long d = header.at("width").get<long>();
    auto read_matrix = [&](long rows, long cols) {
        Matrix m(rows, cols);
        for (long i = 0; i < rows; ++i)
            for (long j = 0; j < cols; ++j) m(i, j) = std::bit_cast<double>(get_u64(is));
        return m;
    };
    std::vector<Block> blocks;
    for (const auto& jb : header.at("blocks")) {
        Block b;
        b.kind = block_kind_from_string(jb.at("kind").get<std::string>());
        b.prenorm = jb.value("prenorm", false);
        if (b.kind == BlockKind::ReluMlp) {
            const long m = jb.at("hidden").get<long>();
            b.w = read_matrix(m, d);
            b.c = read_matrix(d, m);
        } else {
            b.w = read_matrix(d, d);
        }
        blocks.push_back(std::move(b));
    }
    Head head;
    head.kind = head_kind_from_string(header.at("head").at("kind").get<std::string>());
    head.trainable = header.at("head").value("trainable", true);
    const long rows = header.at("head").at("rows").get<long>();
    if (head.kind != HeadKind::Identity) head.v = read_matrix(rows, d);
    return ResidualNet(d, composition_from_string(header.at("composition").get<std::string>()),
                       std::move(blocks), std::move(head));
}

}  // namespace raptr
