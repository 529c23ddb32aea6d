#pragma once
/// Governing-equation residuals evaluated on observed values and the two
/// model predictions of the two-step strategy.
///
/// Lienard oscillator (per node, no spatial coupling):
///   xddot + alpha * x * xdot + gamma * x + beta * x^3 = 0
/// discretized at the middle point with
///   xdot  = (pred_t2 - x_t) / (2 dt)            central difference
///   xddot = (pred_t2 - 2 pred_t1 + x_t) / dt^2  3-point stencil
///
/// LWR conservation on a graph, with flux q = p * v(p), v = v_max(1 - p/p_max):
///   (pred_t2 - pred_t1) / dt + (1/N_i) sum_j (q_i - q_j) / d_ij = 0
/// The forward time difference makes the residual vanish identically on a
/// forward-Euler trajectory of the same discretization.

#include <cmath>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "tgphy/graph.hpp"
#include "tgphy/tensor.hpp"

namespace tgphy {

enum class Equation { lienard, lwr };

inline const char* equation_name(Equation e) { return e == Equation::lienard ? "lienard" : "lwr"; }

inline Equation equation_from_name(const std::string& s) {
    if (s == "lienard") return Equation::lienard;
    if (s == "lwr") return Equation::lwr;
    throw std::invalid_argument("unknown equation: " + s);
}

struct LienardParams {
    double alpha = 0.45;
    double beta = 0.5;
    double gamma = -0.5;
};

struct LWRParams {
    double v_max = 1.0;
    double p_max = 1.0;  // must be positive
};

/// Selected governing equation, its parameters, and the snapshot period.
/// p_max may be left unresolved ("auto") until a dataset is bound.
struct PhysicsSpec {
    Equation equation = Equation::lienard;
    LienardParams lienard;
    LWRParams lwr;
    bool p_max_auto = true;
    double dt = 1.0;

    void validate() const {
        if (!(dt > 0.0)) throw std::invalid_argument("physics: dt must be positive");
        if (!p_max_auto && !(lwr.p_max > 0.0))
            throw std::invalid_argument("physics: p_max must be positive");
    }
};

inline PhysicsSpec physics_from_json(const nlohmann::json& j) {
    PhysicsSpec s;
    if (j.contains("equation")) s.equation = equation_from_name(j.at("equation").get<std::string>());
    if (j.contains("alpha")) s.lienard.alpha = j.at("alpha").get<double>();
    if (j.contains("beta")) s.lienard.beta = j.at("beta").get<double>();
    if (j.contains("gamma")) s.lienard.gamma = j.at("gamma").get<double>();
    if (j.contains("v_max")) s.lwr.v_max = j.at("v_max").get<double>();
    if (j.contains("p_max")) {
        if (j.at("p_max").is_string()) {
            if (j.at("p_max").get<std::string>() != "auto")
                throw std::invalid_argument("physics: p_max must be a number or \"auto\"");
            s.p_max_auto = true;
        } else {
            s.p_max_auto = false;
            s.lwr.p_max = j.at("p_max").get<double>();
        }
    }
    if (j.contains("dt")) s.dt = j.at("dt").get<double>();
    s.validate();
    return s;
}

inline nlohmann::json physics_to_json(const PhysicsSpec& s) {
    nlohmann::json j;
    j["equation"] = equation_name(s.equation);
    j["alpha"] = s.lienard.alpha;
    j["beta"] = s.lienard.beta;
    j["gamma"] = s.lienard.gamma;
    j["v_max"] = s.lwr.v_max;
    if (s.p_max_auto)
        j["p_max"] = "auto";
    else
        j["p_max"] = s.lwr.p_max;
    j["dt"] = s.dt;
    return j;
}

/// Observed values at t plus the two differentiable predictions. All three
/// vectors are length N; the neighbor index belongs to the snapshot on which
/// the residual is evaluated.
struct ResidualInputs {
    Tensor x_t;      // constant
    Tensor pred_t1;  // model output for t+1
    Tensor pred_t2;  // model output for t+2
    const NeighborIndex* nbr = nullptr;
};

inline void require_residual_shapes(const ResidualInputs& in) {
    if (in.x_t.shape().size() != 1 || in.x_t.shape() != in.pred_t1.shape() ||
        in.x_t.shape() != in.pred_t2.shape())
        throw std::invalid_argument("residual: value lengths differ, x_t " +
                                    shape_str(in.x_t.shape()) + ", pred_t1 " +
                                    shape_str(in.pred_t1.shape()) + ", pred_t2 " +
                                    shape_str(in.pred_t2.shape()));
}

/// Elementwise v_max * (1 - p / p_max); no clamping.
inline Tensor velocity(const Tensor& p, const LWRParams& params) {
    return scalar_mul(scalar_add(scalar_mul(p, -1.0 / params.p_max), 1.0), params.v_max);
}

inline std::vector<double> velocity(const std::vector<double>& p, const LWRParams& params) {
    std::vector<double> v(p.size());
    for (std::size_t i = 0; i < p.size(); ++i)
        v[i] = params.v_max * (1.0 - p[i] / params.p_max);
    return v;
}

/// Distance-weighted neighbor divergence as a differentiable linear op:
/// out_i = (1/N_i) sum_j (f_i - f_j) / d_ij, 0 for isolated nodes.
/// Applied per edge, so cost is proportional to the neighbor-list size.
inline Tensor flux_divergence(const Tensor& f, const NeighborIndex& idx) {
    if (f.shape().size() != 1 || f.dim(0) != idx.node_count())
        throw std::invalid_argument("flux_divergence: " + shape_str(f.shape()) + " values for " +
                                    std::to_string(idx.node_count()) + " nodes");
    std::vector<double> out = weighted_divergence(f.values(), idx);
    auto* pf = f.handle().get();
    // owned copy so the backward rule cannot outlive the caller's index
    auto nb = std::make_shared<const NeighborIndex>(idx);
    return make_op("flux_divergence", f.shape(), std::move(out), {f.handle()},
                   [pf, nb](detail::TapeNode& n) {
                       for (std::size_t i = 0; i < n.numel(); ++i) {
                           const auto& lst = nb->neighbors[i];
                           if (lst.empty()) continue;
                           const double a = n.adjoint[i] / static_cast<double>(lst.size());
                           for (const auto& jd : lst) {
                               detail::accum(pf, i, a / jd.second);
                               detail::accum(pf, jd.first, -a / jd.second);
                           }
                       }
                   });
}

/// LWR residual; gradients flow through both predictions.
inline Tensor lwr_residual(const ResidualInputs& in, const LWRParams& params, double dt) {
    require_residual_shapes(in);
    if (!in.nbr) throw std::invalid_argument("lwr_residual: neighbor index required");
    if (in.nbr->node_count() != in.pred_t1.dim(0))
        throw std::invalid_argument("lwr_residual: neighbor index covers " +
                                    std::to_string(in.nbr->node_count()) + " nodes, values have " +
                                    std::to_string(in.pred_t1.dim(0)));
    Tensor temporal = scalar_mul(sub(in.pred_t2, in.pred_t1), 1.0 / dt);
    Tensor flux = mul(in.pred_t1, velocity(in.pred_t1, params));
    return add(temporal, flux_divergence(flux, *in.nbr));
}

/// Lienard residual; per node, no spatial coupling. x_t enters as a constant.
inline Tensor lienard_residual(const ResidualInputs& in, const LienardParams& params, double dt) {
    require_residual_shapes(in);
    Tensor xdot = scalar_mul(sub(in.pred_t2, in.x_t), 1.0 / (2.0 * dt));
    Tensor xddot =
        scalar_mul(add(sub(in.pred_t2, scalar_mul(in.pred_t1, 2.0)), in.x_t), 1.0 / (dt * dt));
    Tensor damping = mul(scalar_mul(in.pred_t1, params.alpha), xdot);
    Tensor restoring =
        add(scalar_mul(in.pred_t1, params.gamma), scalar_mul(pow(in.pred_t1, 3.0), params.beta));
    return add(add(xddot, damping), restoring);
}

/// Residual for the configured equation. p_max must already be resolved.
inline Tensor residual(const PhysicsSpec& spec, const ResidualInputs& in) {
    return spec.equation == Equation::lienard ? lienard_residual(in, spec.lienard, spec.dt)
                                              : lwr_residual(in, spec.lwr, spec.dt);
}

/// Node-mean of squared residual entries for one snapshot pair.
inline Tensor physics_loss(const Tensor& residual_values) {
    return mean(square(residual_values));
}

/// One forward-Euler step of the discretized LWR equation:
/// p(t+1) = p(t) - dt * divergence(q(p(t))). The residual of (p, step(p)) is
/// zero by construction.
inline std::vector<double> lwr_euler_step(const std::vector<double>& p, const LWRParams& params,
                                          double dt, const NeighborIndex& idx) {
    auto v = velocity(p, params);
    std::vector<double> q(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) q[i] = p[i] * v[i];
    auto divq = weighted_divergence(q, idx);
    std::vector<double> next(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) next[i] = p[i] - dt * divq[i];
    return next;
}

}  // namespace tgphy
