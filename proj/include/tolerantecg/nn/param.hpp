#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "tolerantecg/error.hpp"
#include "tolerantecg/rng.hpp"

namespace tecg::nn {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// One trainable tensor plus its gradient accumulator.
struct Param {
    Mat value;
    Mat grad;

    void init_normal(int rows, int cols, double std_dev, Rng& rng) {
        value.resize(rows, cols);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j) value(i, j) = std_dev * rng.gaussian();
        grad = Mat::Zero(rows, cols);
    }

    void init_constant(int rows, int cols, double v) {
        value = Mat::Constant(rows, cols, v);
        grad = Mat::Zero(rows, cols);
    }

    void zero_grad() { grad.setZero(); }
};

using ParamVisitor = std::function<void(const std::string& name, Param& p)>;

// Flat named view over a module tree's parameters. Order is deterministic and
// identical for identically-shaped modules, which the EMA update relies on.
template <typename Module>
std::vector<std::pair<std::string, Param*>> named_params(Module& m) {
    std::vector<std::pair<std::string, Param*>> out;
    m.visit("", [&](const std::string& name, Param& p) { out.emplace_back(name, &p); });
    return out;
}

template <typename Module>
void zero_grads(Module& m) {
    m.visit("", [](const std::string&, Param& p) { p.zero_grad(); });
}

template <typename ModuleA, typename ModuleB>
bool params_equal(ModuleA& a, ModuleB& b) {
    auto pa = named_params(a);
    auto pb = named_params(b);
    if (pa.size() != pb.size()) return false;
    for (size_t i = 0; i < pa.size(); ++i) {
        if (pa[i].second->value.rows() != pb[i].second->value.rows() ||
            pa[i].second->value.cols() != pb[i].second->value.cols())
            return false;
        if (pa[i].second->value != pb[i].second->value) return false;
    }
    return true;
}

// t' = m*t + (1-m)*s, tensor by tensor.
template <typename ModuleT, typename ModuleS>
void ema_update(ModuleT& teacher, ModuleS& student, double momentum) {
    if (momentum < 0.0 || momentum > 1.0) fail(errc::invalid_config, "ema momentum out of [0,1]");
    auto pt = named_params(teacher);
    auto ps = named_params(student);
    if (pt.size() != ps.size()) fail(errc::dimension_mismatch, "ema_update: parameter count mismatch");
    for (size_t i = 0; i < pt.size(); ++i) {
        Param& t = *pt[i].second;
        Param& s = *ps[i].second;
        if (t.value.rows() != s.value.rows() || t.value.cols() != s.value.cols())
            fail(errc::dimension_mismatch, "ema_update: shape mismatch at " + pt[i].first);
        t.value = momentum * t.value + (1.0 - momentum) * s.value;
    }
}

}  // namespace tecg::nn
