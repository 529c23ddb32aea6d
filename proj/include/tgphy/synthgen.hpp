#pragma once
/// Synthetic temporal-graph datasets generated directly from the governing
/// equations. The clean LWR series is a forward-Euler trajectory of the same
/// discretization the residual uses, so feeding it back as predictions gives
/// a zero physics loss. Lienard trajectories are RK4-integrated with 100x
/// substepping, then sampled at the snapshot period.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tgphy/common.hpp"
#include "tgphy/dataset.hpp"
#include "tgphy/graph.hpp"
#include "tgphy/physics.hpp"

namespace tgphy {

enum class TopologyKind { path, ring, random_regular, er };

inline const char* topology_kind_name(TopologyKind k) {
    switch (k) {
        case TopologyKind::path: return "path";
        case TopologyKind::ring: return "ring";
        case TopologyKind::random_regular: return "random_regular";
        case TopologyKind::er: return "er";
    }
    return "?";
}

inline TopologyKind topology_kind_from_name(const std::string& s) {
    if (s == "path") return TopologyKind::path;
    if (s == "ring") return TopologyKind::ring;
    if (s == "random_regular") return TopologyKind::random_regular;
    if (s == "er") return TopologyKind::er;
    throw std::invalid_argument("unknown topology kind: " + s);
}

struct SynthSpec {
    std::string name = "synthetic";
    TopologyKind topology = TopologyKind::ring;
    std::size_t nodes = 20;
    std::size_t timesteps = 200;
    std::size_t degree = 4;     // random_regular only
    double edge_prob = 0.3;     // er only
    std::size_t lags = 4;
    double noise_std = 0.0;
    std::uint64_t seed = 0;
    PhysicsSpec physics;

    void validate() const {
        if (nodes == 0) throw std::invalid_argument("synth: need at least one node");
        if (timesteps < lags + 4)
            throw std::invalid_argument("synth: timesteps " + std::to_string(timesteps) +
                                        " below lags + 4");
        if (noise_std < 0.0) throw std::invalid_argument("synth: negative noise_std");
        if (physics.equation == Equation::lwr && physics.p_max_auto)
            throw std::invalid_argument("synth: generation needs an explicit p_max");
        physics.validate();
    }
};

struct SynthResult {
    DatasetFile clean;
    DatasetFile noisy;
    Topology topology;
};

inline Topology make_topology(const SynthSpec& spec, std::mt19937_64& rng) {
    const std::size_t n = spec.nodes;
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    switch (spec.topology) {
        case TopologyKind::path:
            for (std::size_t i = 0; i + 1 < n; ++i) edges.emplace_back(i, i + 1);
            break;
        case TopologyKind::ring:
            for (std::size_t i = 0; i + 1 < n; ++i) edges.emplace_back(i, i + 1);
            if (n > 2) edges.emplace_back(n - 1, 0);
            break;
        case TopologyKind::random_regular: {
            const std::size_t k = spec.degree;
            if (k >= n || (k * n) % 2 != 0)
                throw std::invalid_argument("synth: cannot build a " + std::to_string(k) +
                                            "-regular graph on " + std::to_string(n) + " nodes");
            // configuration model with rejection of self/multi edges
            for (int attempt = 0; attempt < 500; ++attempt) {
                std::vector<std::size_t> stubs;
                stubs.reserve(n * k);
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t c = 0; c < k; ++c) stubs.push_back(i);
                std::shuffle(stubs.begin(), stubs.end(), rng);
                std::set<std::pair<std::size_t, std::size_t>> seen;
                bool ok = true;
                for (std::size_t m = 0; m < stubs.size(); m += 2) {
                    auto e = std::minmax(stubs[m], stubs[m + 1]);
                    if (e.first == e.second || !seen.insert(e).second) {
                        ok = false;
                        break;
                    }
                }
                if (ok) {
                    edges.assign(seen.begin(), seen.end());
                    break;
                }
            }
            if (edges.empty())
                throw std::runtime_error("synth: regular graph sampling did not converge");
            break;
        }
        case TopologyKind::er: {
            std::uniform_real_distribution<double> unif(0.0, 1.0);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = i + 1; j < n; ++j)
                    if (unif(rng) < spec.edge_prob) edges.emplace_back(i, j);
            break;
        }
    }
    return Topology(n, false, std::move(edges));
}

namespace detail {

inline DatasetFile series_to_file(const SynthSpec& spec, const Topology& topo,
                                  std::vector<std::vector<double>> series,
                                  const std::string& suffix) {
    DatasetFile f;
    f.name = spec.name + suffix;
    f.directed = false;
    f.node_count = spec.nodes;
    f.edges = topo.edges;
    f.edge_attrs = topo.edge_attrs;
    f.series = std::move(series);
    return f;
}

inline std::vector<std::vector<double>> add_noise(const std::vector<std::vector<double>>& clean,
                                                  double noise_std, std::mt19937_64& rng) {
    if (noise_std == 0.0) return clean;
    std::normal_distribution<double> gauss(0.0, noise_std);
    auto noisy = clean;
    for (auto& row : noisy)
        for (auto& v : row) v += gauss(rng);
    return noisy;
}

}  // namespace detail

/// Forward-Euler LWR series. Initial densities are drawn in
/// [0.2, 0.5] * p_max, which keeps the explicit scheme stable at dt = 1 on
/// unit-distance graphs.
inline SynthResult gen_lwr_series(const SynthSpec& spec) {
    spec.validate();
    if (spec.physics.equation != Equation::lwr)
        throw std::invalid_argument("gen_lwr_series: spec is not bound to lwr");
    auto rng = make_rng(spec.seed);
    Topology topo = make_topology(spec, rng);
    auto idx = build_neighbor_index(topo);
    const auto& params = spec.physics.lwr;

    std::uniform_real_distribution<double> init(0.2 * params.p_max, 0.5 * params.p_max);
    std::vector<double> p(spec.nodes);
    for (auto& v : p) v = init(rng);

    std::vector<std::vector<double>> series;
    series.reserve(spec.timesteps);
    series.push_back(p);
    for (std::size_t t = 1; t < spec.timesteps; ++t) {
        p = lwr_euler_step(p, params, spec.physics.dt, idx);
        for (double v : p)
            if (!std::isfinite(v) || v < -params.p_max || v > 2.0 * params.p_max)
                throw std::runtime_error(
                    "gen_lwr_series: density left [-p_max, 2 p_max] at step " +
                    std::to_string(t) + "; use a smaller dt");
        series.push_back(p);
    }

    SynthResult out;
    out.clean = detail::series_to_file(spec, topo, series, "_clean");
    out.noisy = detail::series_to_file(spec, topo,
                                       detail::add_noise(series, spec.noise_std, rng), "_noisy");
    out.topology = std::move(topo);
    return out;
}

namespace detail {

struct LienardState {
    double x;
    double u;
};

inline LienardState lienard_rhs(const LienardState& s, const LienardParams& p) {
    return {s.u, -p.alpha * s.x * s.u - p.gamma * s.x - p.beta * s.x * s.x * s.x};
}

inline LienardState rk4_step(const LienardState& s, double h, const LienardParams& p) {
    auto k1 = lienard_rhs(s, p);
    auto k2 = lienard_rhs({s.x + 0.5 * h * k1.x, s.u + 0.5 * h * k1.u}, p);
    auto k3 = lienard_rhs({s.x + 0.5 * h * k2.x, s.u + 0.5 * h * k2.u}, p);
    auto k4 = lienard_rhs({s.x + h * k3.x, s.u + h * k3.u}, p);
    return {s.x + h / 6.0 * (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x),
            s.u + h / 6.0 * (k1.u + 2.0 * k2.u + 2.0 * k3.u + k4.u)};
}

}  // namespace detail

/// RK4-integrated Lienard trajectories sampled every dt (internal step
/// dt/100). Each node gets its own initial condition in [-1,1]^2.
inline SynthResult gen_lienard_series(const SynthSpec& spec) {
    spec.validate();
    if (spec.physics.equation != Equation::lienard)
        throw std::invalid_argument("gen_lienard_series: spec is not bound to lienard");
    auto rng = make_rng(spec.seed);
    Topology topo = make_topology(spec, rng);
    const auto& params = spec.physics.lienard;

    std::uniform_real_distribution<double> init(-1.0, 1.0);
    std::vector<detail::LienardState> state(spec.nodes);
    for (auto& s : state) {
        s.x = init(rng);
        s.u = init(rng);
    }

    const int substeps = 100;
    const double h = spec.physics.dt / substeps;
    std::vector<std::vector<double>> series;
    series.reserve(spec.timesteps);
    auto sample = [&] {
        std::vector<double> row(spec.nodes);
        for (std::size_t i = 0; i < spec.nodes; ++i) row[i] = state[i].x;
        return row;
    };
    series.push_back(sample());
    for (std::size_t t = 1; t < spec.timesteps; ++t) {
        for (auto& s : state) {
            for (int m = 0; m < substeps; ++m) s = detail::rk4_step(s, h, params);
            if (!std::isfinite(s.x) || !std::isfinite(s.u))
                throw std::runtime_error("gen_lienard_series: non-finite state at step " +
                                         std::to_string(t));
        }
        series.push_back(sample());
    }

    SynthResult out;
    out.clean = detail::series_to_file(spec, topo, series, "_clean");
    out.noisy = detail::series_to_file(spec, topo,
                                       detail::add_noise(series, spec.noise_std, rng), "_noisy");
    out.topology = std::move(topo);
    return out;
}

inline SynthResult generate(const SynthSpec& spec) {
    return spec.physics.equation == Equation::lwr ? gen_lwr_series(spec)
                                                  : gen_lienard_series(spec);
}

// ---------------------------------------------------------------------------
// Spec JSON and presets
// ---------------------------------------------------------------------------

inline SynthSpec synth_spec_from_json(const nlohmann::json& j) {
    SynthSpec s;
    if (j.contains("name")) s.name = j.at("name").get<std::string>();
    if (j.contains("topology"))
        s.topology = topology_kind_from_name(j.at("topology").get<std::string>());
    if (j.contains("nodes")) s.nodes = j.at("nodes").get<std::size_t>();
    if (j.contains("timesteps")) s.timesteps = j.at("timesteps").get<std::size_t>();
    if (j.contains("degree")) s.degree = j.at("degree").get<std::size_t>();
    if (j.contains("edge_prob")) s.edge_prob = j.at("edge_prob").get<double>();
    if (j.contains("lags")) s.lags = j.at("lags").get<std::size_t>();
    if (j.contains("noise_std")) s.noise_std = j.at("noise_std").get<double>();
    if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("physics")) s.physics = physics_from_json(j.at("physics"));
    s.validate();
    return s;
}

inline nlohmann::json synth_spec_to_json(const SynthSpec& s) {
    nlohmann::json j;
    j["name"] = s.name;
    j["topology"] = topology_kind_name(s.topology);
    j["nodes"] = s.nodes;
    j["timesteps"] = s.timesteps;
    j["degree"] = s.degree;
    j["edge_prob"] = s.edge_prob;
    j["lags"] = s.lags;
    j["noise_std"] = s.noise_std;
    j["seed"] = s.seed;
    j["physics"] = physics_to_json(s.physics);
    return j;
}

/// Shape presets mirroring the benchmark dataset families: node count,
/// series length, lag window, and the usual equation binding.
inline SynthSpec synth_preset(const std::string& family) {
    SynthSpec s;
    s.name = family;
    if (family == "pedalme") {
        s.topology = TopologyKind::ring;
        s.nodes = 15;
        s.timesteps = 30;
        s.lags = 4;
        s.physics.equation = Equation::lwr;
        s.physics.p_max_auto = false;
        s.physics.lwr.p_max = 1.0;
    } else if (family == "england_covid") {
        s.topology = TopologyKind::er;
        s.nodes = 129;
        s.edge_prob = 0.13;
        s.timesteps = 52;
        s.lags = 8;
        s.physics.equation = Equation::lienard;
    } else if (family == "chickenpox") {
        s.topology = TopologyKind::random_regular;
        s.degree = 5;
        s.nodes = 20;
        s.timesteps = 516;
        s.lags = 4;
        s.physics.equation = Equation::lienard;
    } else {
        throw std::invalid_argument("unknown preset family: " + family);
    }
    return s;
}

}  // namespace tgphy
