#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "tolerantecg/nn/param.hpp"

namespace tecg::nn {

struct AdamWConfig {
    double lr = 3e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.04;
    double clip_norm = 3.0;  // global gradient norm; <= 0 disables clipping
};

// Decoupled-weight-decay Adam over a named parameter list. Moment state is
// keyed by name so checkpoints restore it exactly.
class AdamW {
public:
    explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

    const AdamWConfig& config() const { return cfg_; }
    std::int64_t step_count() const { return t_; }

    double global_grad_norm(const std::vector<std::pair<std::string, Param*>>& params) const {
        double sq = 0.0;
        for (const auto& [name, p] : params) sq += p->grad.squaredNorm();
        return std::sqrt(sq);
    }

    void step(const std::vector<std::pair<std::string, Param*>>& params) {
        double scale = 1.0;
        if (cfg_.clip_norm > 0.0) {
            const double norm = global_grad_norm(params);
            if (!std::isfinite(norm)) fail(errc::non_finite, "adamw: non-finite gradient norm");
            if (norm > cfg_.clip_norm) scale = cfg_.clip_norm / norm;
        }
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (const auto& [name, p] : params) {
            auto& st = state_[name];
            if (st.m.size() == 0) {
                st.m = Mat::Zero(p->value.rows(), p->value.cols());
                st.v = Mat::Zero(p->value.rows(), p->value.cols());
            }
            const Mat g = scale * p->grad;
            st.m = cfg_.beta1 * st.m + (1.0 - cfg_.beta1) * g;
            st.v = cfg_.beta2 * st.v + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
            const Mat m_hat = st.m / bc1;
            const Mat v_hat = st.v / bc2;
            p->value -=
                cfg_.lr * (m_hat.array() / (v_hat.array().sqrt() + cfg_.eps)).matrix();
            if (cfg_.weight_decay > 0.0) p->value *= (1.0 - cfg_.lr * cfg_.weight_decay);
        }
    }

    // Checkpoint access.
    struct Slot {
        Mat m, v;
    };
    std::map<std::string, Slot>& state() { return state_; }
    const std::map<std::string, Slot>& state() const { return state_; }
    void set_step_count(std::int64_t t) { t_ = t; }

private:
    AdamWConfig cfg_;
    std::int64_t t_ = 0;
    std::map<std::string, Slot> state_;
};

}  // namespace tecg::nn
