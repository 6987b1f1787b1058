#include "raptr/optim.hpp"

#include <cmath>
#include <numbers>

namespace raptr {

std::string to_string(OptimKind k) {
    return k == OptimKind::Sgd ? "sgd" : "adam";
}

OptimKind optim_kind_from_string(const std::string& s) {
    if (s == "sgd") return OptimKind::Sgd;
    if (s == "adam") return OptimKind::Adam;
    throw ArgumentError("unknown optimizer '" + s + "'");
}

Optimizer::Optimizer(OptimConfig cfg, const std::vector<const Matrix*>& shapes) : cfg_(cfg) {
    if (cfg_.momentum < 0.0 || cfg_.momentum >= 1.0) throw ArgumentError("momentum must lie in [0,1)");
    if (!(cfg_.beta1 >= 0.0 && cfg_.beta1 < 1.0) || !(cfg_.beta2 >= 0.0 && cfg_.beta2 < 1.0))
        throw ArgumentError("Adam betas must lie in [0,1)");
    for (const Matrix* p : shapes) {
        m_.push_back(Matrix::Zero(p->rows(), p->cols()));
        if (cfg_.kind == OptimKind::Adam) v_.push_back(Matrix::Zero(p->rows(), p->cols()));
        counts_.push_back(0);
    }
}

void Optimizer::step(const std::vector<Matrix*>& params, const std::vector<const Matrix*>& grads, double lr,
                     const std::vector<std::uint8_t>& touched) {
    if (params.size() != m_.size() || grads.size() != m_.size())
        throw ArgumentError("optimizer: tensor count mismatch");
    if (!touched.empty() && touched.size() != m_.size())
        throw ArgumentError("optimizer: touched mask length mismatch");
    if (!(lr >= 0.0)) throw ArgumentError("optimizer: learning rate must be >= 0");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!touched.empty() && !touched[i]) continue;
        Matrix& p = *params[i];
        const Matrix& g = *grads[i];
        if (p.rows() != g.rows() || p.cols() != g.cols() || p.rows() != m_[i].rows() || p.cols() != m_[i].cols())
            throw ArgumentError("optimizer: tensor shape mismatch");
        ++counts_[i];
        if (cfg_.kind == OptimKind::Sgd) {
            if (cfg_.momentum > 0.0) {
                m_[i] = cfg_.momentum * m_[i] + g;
                p -= lr * m_[i];
            } else {
                p -= lr * g;
            }
            continue;
        }
        m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
        v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
        const double t = static_cast<double>(counts_[i]);
        const double c1 = 1.0 - std::pow(cfg_.beta1, t);
        const double c2 = 1.0 - std::pow(cfg_.beta2, t);
        p.array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + cfg_.eps);
    }
}

std::string to_string(LrDecay d) {
    switch (d) {
    case LrDecay::None: return "none";
    case LrDecay::Linear: return "linear";
    case LrDecay::Cosine: return "cosine";
    }
    return "?";
}

LrDecay lr_decay_from_string(const std::string& s) {
    if (s == "none") return LrDecay::None;
    if (s == "linear") return LrDecay::Linear;
    if (s == "cosine") return LrDecay::Cosine;
    throw ArgumentError("unknown lr decay '" + s + "'");
}

double LrSchedule::at(long step, long final_start, long total) const {
    double lr = peak;
    if (warmup_steps > 0 && step < warmup_steps)
        lr = peak * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
    if (final_decay == LrDecay::None || step < final_start || total <= final_start) return lr;
    const double frac = static_cast<double>(step - final_start) / static_cast<double>(total - final_start);
    if (final_decay == LrDecay::Linear) return lr * (1.0 - frac);
    return lr * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

}  // namespace raptr
