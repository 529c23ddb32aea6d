#pragma once
/// Graph topology plus the pure node-signal operators: neighbor indexing,
/// the neighbor-mean difference derivative, and GCN-style normalized
/// adjacency with self-loops.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tgphy/common.hpp"

namespace tgphy {

/// Edge list with positive per-edge distances. Validated on construction.
struct Topology {
    std::size_t node_count = 0;
    bool directed = false;
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    std::vector<double> edge_attrs;  // aligned with edges, all > 0

    Topology() = default;
    Topology(std::size_t n, bool dir, std::vector<std::pair<std::size_t, std::size_t>> e,
             std::vector<double> attrs = {})
        : node_count(n), directed(dir), edges(std::move(e)), edge_attrs(std::move(attrs)) {
        if (edge_attrs.empty()) edge_attrs.assign(edges.size(), 1.0);
        validate();
    }

    void validate() const {
        if (edge_attrs.size() != edges.size())
            throw std::invalid_argument("topology: " + std::to_string(edges.size()) +
                                        " edges but " + std::to_string(edge_attrs.size()) +
                                        " edge_attrs");
        std::set<std::pair<std::size_t, std::size_t>> seen;
        for (std::size_t k = 0; k < edges.size(); ++k) {
            auto [s, d] = edges[k];
            if (s >= node_count || d >= node_count)
                throw std::invalid_argument("topology: edge " + std::to_string(k) + " (" +
                                            std::to_string(s) + "," + std::to_string(d) +
                                            ") out of range for " + std::to_string(node_count) +
                                            " nodes");
            if (!(edge_attrs[k] > 0.0))
                throw std::invalid_argument("topology: edge " + std::to_string(k) +
                                            " has non-positive distance " +
                                            std::to_string(edge_attrs[k]));
            auto key = directed ? std::make_pair(s, d) : std::make_pair(std::min(s, d), std::max(s, d));
            if (!seen.insert(key).second)
                throw std::invalid_argument("topology: duplicate edge (" + std::to_string(s) +
                                            "," + std::to_string(d) + ")");
        }
    }
};

/// Per-node neighbor lists with distances, sorted by neighbor id. Directed
/// edges contribute the union of in- and out-neighbors; when both (i,j) and
/// (j,i) exist the attribute of the edge leaving i wins for i's entry.
/// Self-edges never appear in a node's own list.
struct NeighborIndex {
    std::vector<std::vector<std::pair<std::size_t, double>>> neighbors;

    std::size_t node_count() const { return neighbors.size(); }
    std::size_t cardinality(std::size_t i) const { return neighbors[i].size(); }
};

inline NeighborIndex build_neighbor_index(const Topology& topo) {
    std::map<std::pair<std::size_t, std::size_t>, double> out_attr;
    for (std::size_t k = 0; k < topo.edges.size(); ++k) {
        auto [s, d] = topo.edges[k];
        if (s == d) continue;
        out_attr[{s, d}] = topo.edge_attrs[k];
        if (!topo.directed) out_attr[{d, s}] = topo.edge_attrs[k];
    }
    NeighborIndex idx;
    idx.neighbors.assign(topo.node_count, {});
    std::vector<std::set<std::size_t>> nbr(topo.node_count);
    for (const auto& [key, attr] : out_attr) {
        nbr[key.first].insert(key.second);
        nbr[key.second].insert(key.first);
    }
    for (std::size_t i = 0; i < topo.node_count; ++i) {
        for (std::size_t j : nbr[i]) {
            auto it = out_attr.find({i, j});
            double d = it != out_attr.end() ? it->second : out_attr.at({j, i});
            idx.neighbors[i].emplace_back(j, d);
        }
    }
    return idx;
}

/// Neighbor-mean difference: per node, (1/N_i) * sum_j (f(i) - f(j)).
/// Isolated nodes map to 0. Distances are not used here.
inline std::vector<double> spatial_derivative(const std::vector<double>& f,
                                              const NeighborIndex& idx) {
    if (f.size() != idx.node_count())
        throw std::invalid_argument("spatial_derivative: " + std::to_string(f.size()) +
                                    " values for " + std::to_string(idx.node_count()) + " nodes");
    std::vector<double> out(f.size(), 0.0);
    for (std::size_t i = 0; i < f.size(); ++i) {
        const auto& nb = idx.neighbors[i];
        if (nb.empty()) continue;
        double s = 0.0;
        for (const auto& jd : nb) s += f[i] - f[jd.first];
        out[i] = s / static_cast<double>(nb.size());
    }
    return out;
}

/// Distance-weighted divergence: per node, (1/N_i) * sum_j (f(i) - f(j)) / d_ij.
/// Isolated nodes map to 0.
inline std::vector<double> weighted_divergence(const std::vector<double>& f,
                                               const NeighborIndex& idx) {
    if (f.size() != idx.node_count())
        throw std::invalid_argument("weighted_divergence: " + std::to_string(f.size()) +
                                    " values for " + std::to_string(idx.node_count()) + " nodes");
    std::vector<double> out(f.size(), 0.0);
    for (std::size_t i = 0; i < f.size(); ++i) {
        const auto& nb = idx.neighbors[i];
        if (nb.empty()) continue;
        double s = 0.0;
        for (const auto& jd : nb) s += (f[i] - f[jd.first]) / jd.second;
        out[i] = s / static_cast<double>(nb.size());
    }
    return out;
}

/// Dense row-major A_hat = D^{-1/2} (A + I) D^{-1/2}. Directed inputs are
/// symmetrized first; self-edges in the input are ignored (I is added once).
struct NormalizedAdjacency {
    std::size_t node_count = 0;
    std::vector<double> values;  // node_count x node_count, row-major
};

inline NormalizedAdjacency normalized_adjacency(const Topology& topo) {
    const std::size_t n = topo.node_count;
    std::vector<double> a(n * n, 0.0);
    for (auto [s, d] : topo.edges) {
        if (s == d) continue;
        a[s * n + d] = 1.0;
        a[d * n + s] = 1.0;
    }
    for (std::size_t i = 0; i < n; ++i) a[i * n + i] = 1.0;
    std::vector<double> dinv(n);
    for (std::size_t i = 0; i < n; ++i) {
        double deg = 0.0;
        for (std::size_t j = 0; j < n; ++j) deg += a[i * n + j];
        dinv[i] = 1.0 / std::sqrt(deg);
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) a[i * n + j] *= dinv[i] * dinv[j];
    return {n, std::move(a)};
}

}  // namespace tgphy
