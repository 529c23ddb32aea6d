#pragma once
/// Graph forecasters behind one interface: given a snapshot's lag features
/// and topology, predict the next per-node value.
///
///   gcn        two propagation layers with a scalar head
///   gat        single-head attention over N(i) plus self, then a scalar head
///   graph_gru  lag columns consumed as a sequence; gates are graph
///              convolutions of [x_k || h]
///   graph_lstm same recurrence with input/forget/output/cell gates
///
/// All parameters are Glorot-uniform with zero biases, reproducible from the
/// seed. Predictions are differentiable through the shared ParamSet.

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "tgphy/dataset.hpp"
#include "tgphy/optim.hpp"
#include "tgphy/tensor.hpp"

namespace tgphy {

enum class ModelKind { gcn, gat, graph_gru, graph_lstm };

inline const char* model_kind_name(ModelKind k) {
    switch (k) {
        case ModelKind::gcn: return "gcn";
        case ModelKind::gat: return "gat";
        case ModelKind::graph_gru: return "graph_gru";
        case ModelKind::graph_lstm: return "graph_lstm";
    }
    return "?";
}

inline ModelKind model_kind_from_name(const std::string& s) {
    if (s == "gcn") return ModelKind::gcn;
    if (s == "gat") return ModelKind::gat;
    if (s == "graph_gru") return ModelKind::graph_gru;
    if (s == "graph_lstm") return ModelKind::graph_lstm;
    throw std::invalid_argument("unknown model kind: " + s);
}

namespace detail {

class GlorotInit {
  public:
    explicit GlorotInit(std::uint64_t seed) : rng_(make_rng(seed)) {}

    Tensor matrix(std::size_t fan_in, std::size_t fan_out) {
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        std::uniform_real_distribution<double> unif(-limit, limit);
        std::vector<double> v(fan_in * fan_out);
        for (auto& x : v) x = unif(rng_);
        return Tensor::parameter({fan_in, fan_out}, std::move(v));
    }
    Tensor zeros(std::size_t n) { return Tensor::parameter({n}, std::vector<double>(n, 0.0)); }

  private:
    std::mt19937_64 rng_;
};

}  // namespace detail

class Forecaster {
  public:
    Forecaster(ModelKind kind, std::size_t features, std::size_t hidden, std::uint64_t seed)
        : kind_(kind), features_(features), hidden_(hidden), seed_(seed) {
        if (features_ == 0 || hidden_ == 0)
            throw std::invalid_argument("forecaster: features and hidden must be at least 1");
        detail::GlorotInit init(seed);
        switch (kind_) {
            case ModelKind::gcn:
                params_.add("w1", init.matrix(features_, hidden_));
                params_.add("b1", init.zeros(hidden_));
                params_.add("w2", init.matrix(hidden_, 1));
                params_.add("b2", init.zeros(1));
                break;
            case ModelKind::gat:
                params_.add("w", init.matrix(features_, hidden_));
                params_.add("a_src", init.matrix(hidden_, 1));
                params_.add("a_dst", init.matrix(hidden_, 1));
                params_.add("w_out", init.matrix(hidden_, 1));
                params_.add("b_out", init.zeros(1));
                break;
            case ModelKind::graph_gru:
                for (const char* g : {"z", "r", "c"}) {
                    params_.add(std::string("w_") + g, init.matrix(1 + hidden_, hidden_));
                    params_.add(std::string("b_") + g, init.zeros(hidden_));
                }
                params_.add("w_out", init.matrix(hidden_, 1));
                params_.add("b_out", init.zeros(1));
                break;
            case ModelKind::graph_lstm:
                for (const char* g : {"i", "f", "o", "g"}) {
                    params_.add(std::string("w_") + g, init.matrix(1 + hidden_, hidden_));
                    params_.add(std::string("b_") + g, init.zeros(hidden_));
                }
                params_.add("w_out", init.matrix(hidden_, 1));
                params_.add("b_out", init.zeros(1));
                break;
        }
    }

    ModelKind kind() const { return kind_; }
    std::size_t feature_count() const { return features_; }
    std::size_t hidden_size() const { return hidden_; }
    std::uint64_t seed() const { return seed_; }
    ParamSet& params() { return params_; }
    const ParamSet& params() const { return params_; }

    Tensor predict(const GraphSnapshot& snap) const;

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["kind"] = model_kind_name(kind_);
        j["features"] = features_;
        j["hidden"] = hidden_;
        j["seed"] = seed_;
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& [name, t] : params_) {
            nlohmann::json p;
            p["name"] = name;
            p["shape"] = t.shape();
            p["values"] = t.values();
            arr.push_back(p);
        }
        j["params"] = arr;
        return j;
    }

    static Forecaster from_json(const nlohmann::json& j) {
        Forecaster f(model_kind_from_name(j.at("kind").get<std::string>()),
                     j.at("features").get<std::size_t>(), j.at("hidden").get<std::size_t>(),
                     j.at("seed").get<std::uint64_t>());
        for (const auto& p : j.at("params")) {
            auto name = p.at("name").get<std::string>();
            auto shape = p.at("shape").get<std::vector<std::size_t>>();
            auto values = p.at("values").get<std::vector<double>>();
            auto& t = f.params_.at(name);
            if (t.shape() != shape)
                throw std::runtime_error("forecaster load: parameter '" + name + "' has shape " +
                                         shape_str(shape) + ", expected " + shape_str(t.shape()));
            if (values.size() != t.numel())
                throw std::runtime_error("forecaster load: parameter '" + name +
                                         "' value count mismatch");
            t.mutable_values() = std::move(values);
        }
        return f;
    }

  private:
    ModelKind kind_;
    std::size_t features_;
    std::size_t hidden_;
    std::uint64_t seed_;
    ParamSet params_;
};

inline Forecaster init_forecaster(ModelKind kind, std::size_t features, std::size_t hidden,
                                  std::uint64_t seed) {
    return Forecaster(kind, features, hidden, seed);
}

namespace detail {

inline void require_feature_width(const Forecaster& f, const GraphSnapshot& snap) {
    if (snap.lag_count() != f.feature_count())
        throw std::invalid_argument(std::string("predict: snapshot has ") +
                                    std::to_string(snap.lag_count()) + " lag columns, model " +
                                    model_kind_name(f.kind()) + " was built for " +
                                    std::to_string(f.feature_count()));
}

inline Tensor predict_gcn(const GraphSnapshot& snap, const ParamSet& p) {
    const auto& adj = snap.ctx->adj_norm;
    Tensor h = relu(bias_add(matmul(matmul(adj, snap.features), p.at("w1")), p.at("b1")));
    Tensor y = bias_add(matmul(matmul(adj, h), p.at("w2")), p.at("b2"));
    return reshape(y, {snap.node_count()});
}

/// Masked single-head attention weights; rows sum to one over N(i) plus self.
inline Tensor gat_attention(const GraphSnapshot& snap, const ParamSet& p, const Tensor& z) {
    const std::size_t n = snap.node_count();
    Tensor f = matmul(z, p.at("a_src"));  // {n,1}
    Tensor g = matmul(z, p.at("a_dst"));  // {n,1}
    Tensor ones_row = Tensor::full({1, n}, 1.0);
    Tensor ones_col = Tensor::full({n, 1}, 1.0);
    Tensor logits =
        leaky_relu(add(matmul(f, ones_row), matmul(ones_col, reshape(g, {1, n}))), 0.2);

    // softmax is shift invariant, so the per-row masked max is a constant
    const auto& mask = snap.ctx->attn_mask;
    std::vector<double> shift(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j)
            if (mask.values()[i * n + j] != 0.0)
                m = std::max(m, logits.values()[i * n + j]);
        for (std::size_t j = 0; j < n; ++j) shift[i * n + j] = m;
    }
    Tensor numer = mul(exp(sub(logits, Tensor::constant({n, n}, std::move(shift)))), mask);
    Tensor denom = matmul(numer, ones_col);  // {n,1}, at least the self term
    Tensor inv = div(ones_col, denom);
    return mul(numer, matmul(inv, ones_row));
}

inline Tensor predict_gat(const GraphSnapshot& snap, const ParamSet& p) {
    Tensor z = matmul(snap.features, p.at("w"));
    Tensor attn = gat_attention(snap, p, z);
    Tensor h = relu(matmul(attn, z));
    Tensor y = bias_add(matmul(h, p.at("w_out")), p.at("b_out"));
    return reshape(y, {snap.node_count()});
}

inline Tensor predict_recurrent(const GraphSnapshot& snap, const ParamSet& p, ModelKind kind) {
    const auto& adj = snap.ctx->adj_norm;
    const std::size_t n = snap.node_count();
    const std::size_t F = snap.lag_count();
    const std::size_t h = p.at("w_out").dim(0);
    Tensor hidden = Tensor::zeros({n, h});
    Tensor cell = Tensor::zeros({n, h});
    auto gate = [&](const Tensor& pre, const char* w, const char* b) {
        return bias_add(matmul(pre, p.at(w)), p.at(b));
    };
    for (std::size_t k = 0; k < F; ++k) {
        Tensor xk = slice_cols(snap.features, k, k + 1);
        Tensor prop = matmul(adj, concat(xk, hidden, 1));
        if (kind == ModelKind::graph_gru) {
            Tensor z = sigmoid(gate(prop, "w_z", "b_z"));
            Tensor r = sigmoid(gate(prop, "w_r", "b_r"));
            Tensor cand_in = matmul(adj, concat(xk, mul(r, hidden), 1));
            Tensor cand = tanh(gate(cand_in, "w_c", "b_c"));
            Tensor keep = scalar_add(scalar_mul(z, -1.0), 1.0);
            hidden = add(mul(z, hidden), mul(keep, cand));
        } else {
            Tensor i = sigmoid(gate(prop, "w_i", "b_i"));
            Tensor f = sigmoid(gate(prop, "w_f", "b_f"));
            Tensor o = sigmoid(gate(prop, "w_o", "b_o"));
            Tensor g = tanh(gate(prop, "w_g", "b_g"));
            cell = add(mul(f, cell), mul(i, g));
            hidden = mul(o, tanh(cell));
        }
    }
    Tensor y = bias_add(matmul(hidden, p.at("w_out")), p.at("b_out"));
    return reshape(y, {n});
}

}  // namespace detail

inline Tensor Forecaster::predict(const GraphSnapshot& snap) const {
    detail::require_feature_width(*this, snap);
    switch (kind_) {
        case ModelKind::gcn: return detail::predict_gcn(snap, params_);
        case ModelKind::gat: return detail::predict_gat(snap, params_);
        case ModelKind::graph_gru:
        case ModelKind::graph_lstm: return detail::predict_recurrent(snap, params_, kind_);
    }
    throw std::logic_error("predict: unhandled model kind");
}

}  // namespace tgphy
