#pragma once
/// Named parameter collections, the Adam optimizer, and a central-difference
/// gradient oracle used by the verification suites.

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tgphy/tensor.hpp"

namespace tgphy {

/// Insertion-ordered map from parameter name to tensor. Iteration order is
/// the registration order, which fixes the update and serialization order.
class ParamSet {
  public:
    void add(const std::string& name, Tensor t) {
        if (contains(name)) throw std::invalid_argument("ParamSet: duplicate name " + name);
        items_.emplace_back(name, std::move(t));
    }
    bool contains(const std::string& name) const {
        for (const auto& [k, v] : items_)
            if (k == name) return true;
        return false;
    }
    Tensor& at(const std::string& name) {
        for (auto& [k, v] : items_)
            if (k == name) return v;
        throw std::out_of_range("ParamSet: no parameter named " + name);
    }
    const Tensor& at(const std::string& name) const {
        for (const auto& [k, v] : items_)
            if (k == name) return v;
        throw std::out_of_range("ParamSet: no parameter named " + name);
    }
    std::size_t size() const { return items_.size(); }
    auto begin() { return items_.begin(); }
    auto end() { return items_.end(); }
    auto begin() const { return items_.begin(); }
    auto end() const { return items_.end(); }

  private:
    std::vector<std::pair<std::string, Tensor>> items_;
};

inline void zero_grads(ParamSet& params) {
    for (auto& [name, t] : params) t.zero_grad();
}

/// First/second moment buffers plus the step counter for Adam with bias
/// correction. Buffers are keyed by parameter order and sized on first use.
struct AdamState {
    double learning_rate = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    long long step = 0;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;

    explicit AdamState(double lr = 0.001) : learning_rate(lr) {}
};

/// One Adam update in place. Grads are left untouched; zeroing is explicit.
inline void adam_step(ParamSet& params, AdamState& state) {
    if (state.m.empty()) {
        state.m.resize(params.size());
        state.v.resize(params.size());
        std::size_t idx = 0;
        for (auto& [name, t] : params) {
            state.m[idx].assign(t.numel(), 0.0);
            state.v[idx].assign(t.numel(), 0.0);
            ++idx;
        }
    }
    for (auto& [name, t] : params) {
        if (!t.has_grad()) throw std::runtime_error("adam_step: parameter '" + name +
                                                    "' has no gradient");
    }
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    std::size_t idx = 0;
    for (auto& [name, t] : params) {
        auto& m = state.m[idx];
        auto& v = state.v[idx];
        const auto& g = t.grad();
        auto& w = t.mutable_values();
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            w[i] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
            if (!std::isfinite(w[i]))
                throw std::runtime_error("adam_step: parameter '" + name +
                                         "' became non-finite at index " + std::to_string(i));
        }
        ++idx;
    }
}

/// Central-difference gradient of `loss_fn` (evaluated at the current values
/// of `params`) for every parameter entry: (L(w+eps) - L(w-eps)) / (2 eps).
/// Independent of the tape; used to verify analytic gradients.
inline std::vector<std::pair<std::string, std::vector<double>>> fd_gradient(
    const std::function<double()>& loss_fn, ParamSet& params, double eps) {
    if (!(eps > 0.0)) throw std::invalid_argument("fd_gradient: eps must be positive");
    std::vector<std::pair<std::string, std::vector<double>>> out;
    for (auto& [name, t] : params) {
        std::vector<double> g(t.numel());
        auto& w = t.mutable_values();
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double saved = w[i];
            w[i] = saved + eps;
            const double up = loss_fn();
            w[i] = saved - eps;
            const double down = loss_fn();
            w[i] = saved;
            if (!std::isfinite(up) || !std::isfinite(down))
                throw std::runtime_error("fd_gradient: non-finite loss perturbing '" + name +
                                         "' at index " + std::to_string(i));
            g[i] = (up - down) / (2.0 * eps);
        }
        out.emplace_back(name, std::move(g));
    }
    return out;
}

}  // namespace tgphy
