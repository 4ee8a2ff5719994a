#include "tridiff/params.hpp"

#include <cmath>

namespace tridiff {

void Adam::step(ParamStore& params, const AdamConfig& cfg, const Filter& trainable) {
    params.clamp_frozen_grads();
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t_));
    for (auto& e : params.entries()) {
        if (e.frozen) continue;
        if (trainable && !trainable(e)) continue;
        auto& data = e.tensor.data();
        auto& grad = e.tensor.grad();
        auto mit = m_.find(e.name);
        if (mit == m_.end()) {
            m_[e.name] = std::vector<double>(data.size(), 0.0);
            v_[e.name] = std::vector<double>(data.size(), 0.0);
            order_.push_back(e.name);
            mit = m_.find(e.name);
        }
        auto& m = mit->second;
        auto& v = v_[e.name];

        // row-frozen entries keep zero grads (clamped above), so their moments
        // and values stay put except for weight decay, which we also skip
        std::vector<uint8_t> row_frozen;
        if (!e.frozen_rows.empty()) {
            row_frozen.assign(data.size(), 0);
            const int64_t cols = e.tensor.shape().back();
            for (int64_t r : e.frozen_rows)
                for (int64_t c = 0; c < cols; ++c) row_frozen[r * cols + c] = 1;
        }

        for (size_t i = 0; i < data.size(); ++i) {
            if (!row_frozen.empty() && row_frozen[i]) continue;
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            data[i] -= cfg.lr * (mhat / (std::sqrt(vhat) + cfg.eps) +
                                 cfg.weight_decay * data[i]);
        }
    }
}

Adam::State Adam::state() const {
    State s;
    s.t = t_;
    for (const auto& name : order_) {
        s.m.emplace_back(name, m_.at(name));
        s.v.emplace_back(name, v_.at(name));
    }
    return s;
}

void Adam::restore(const State& s) {
    t_ = s.t;
    m_.clear();
    v_.clear();
    order_.clear();
    for (const auto& [name, vals] : s.m) {
        m_[name] = vals;
        order_.push_back(name);
    }
    for (const auto& [name, vals] : s.v) v_[name] = vals;
}

}  // namespace tridiff
