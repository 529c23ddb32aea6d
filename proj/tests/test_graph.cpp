#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "tgphy/graph.hpp"

using namespace tgphy;

namespace {

// Independent oracle: adjacency-matrix double loop over the union relation,
// ascending neighbor ids, self excluded.
std::vector<double> derivative_oracle(const std::vector<double>& f, const Topology& topo) {
    const std::size_t n = topo.node_count;
    std::vector<std::vector<bool>> adj(n, std::vector<bool>(n, false));
    for (auto [s, d] : topo.edges) {
        if (s == d) continue;
        adj[s][d] = true;
        adj[d][s] = true;
    }
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        std::size_t cnt = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (adj[i][j]) {
                s += f[i] - f[j];
                ++cnt;
            }
        }
        out[i] = cnt ? s / static_cast<double>(cnt) : 0.0;
    }
    return out;
}

Topology random_topology(std::mt19937_64& rng, std::size_t max_nodes) {
    std::uniform_int_distribution<std::size_t> nd(1, max_nodes);
    std::uniform_real_distribution<double> pd(0.0, 1.0);
    std::size_t n = nd(rng);
    bool directed = pd(rng) < 0.5;
    double p = pd(rng) * 0.3;
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    std::vector<double> attrs;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = directed ? 0 : i + 1; j < n; ++j) {
            if (i == j) continue;
            if (pd(rng) < p) {
                edges.emplace_back(i, j);
                attrs.push_back(0.5 + pd(rng));
            }
        }
    return Topology(n, directed, std::move(edges), std::move(attrs));
}

}  // namespace

TEST_CASE("topology validation", "[graph]") {
    CHECK_THROWS_WITH(Topology(2, false, {{0, 2}}), Catch::Matchers::ContainsSubstring("range"));
    CHECK_THROWS_WITH(Topology(2, false, {{0, 1}}, {-1.0}),
                      Catch::Matchers::ContainsSubstring("distance"));
    CHECK_THROWS_WITH(Topology(2, false, {{0, 1}, {1, 0}}),
                      Catch::Matchers::ContainsSubstring("duplicate"));
    CHECK_NOTHROW(Topology(2, true, {{0, 1}, {1, 0}}));
    CHECK_THROWS_WITH(Topology(2, false, {{0, 1}}, {1.0, 2.0}),
                      Catch::Matchers::ContainsSubstring("edge_attrs"));
}

TEST_CASE("neighbor index on a path", "[graph]") {
    Topology path(3, false, {{0, 1}, {1, 2}});
    auto idx = build_neighbor_index(path);
    REQUIRE(idx.node_count() == 3);
    CHECK(idx.cardinality(0) == 1);
    CHECK(idx.cardinality(1) == 2);
    CHECK(idx.cardinality(2) == 1);
    CHECK(idx.neighbors[1][0].first == 0);
    CHECK(idx.neighbors[1][1].first == 2);
}

TEST_CASE("isolated node has empty neighbor list", "[graph]") {
    Topology t(3, false, {{0, 1}});
    auto idx = build_neighbor_index(t);
    CHECK(idx.cardinality(2) == 0);
    CHECK(spatial_derivative({1.0, 2.0, 5.0}, idx)[2] == 0.0);
}

TEST_CASE("directed edges use the in/out union", "[graph]") {
    Topology t(2, true, {{0, 1}});
    auto idx = build_neighbor_index(t);
    REQUIRE(idx.cardinality(0) == 1);
    REQUIRE(idx.cardinality(1) == 1);
    CHECK(idx.neighbors[0][0].first == 1);
    CHECK(idx.neighbors[1][0].first == 0);

    // attr of the edge leaving the node wins when both orientations exist
    Topology both(2, true, {{0, 1}, {1, 0}}, {2.0, 3.0});
    auto idx2 = build_neighbor_index(both);
    CHECK(idx2.neighbors[0][0].second == 2.0);
    CHECK(idx2.neighbors[1][0].second == 3.0);
}

TEST_CASE("self edges are dropped from neighbor lists", "[graph]") {
    Topology t(2, true, {{0, 0}, {0, 1}});
    auto idx = build_neighbor_index(t);
    CHECK(idx.cardinality(0) == 1);
    CHECK(idx.neighbors[0][0].first == 1);
}

TEST_CASE("spatial derivative hand values on a path", "[graph]") {
    Topology path(3, false, {{0, 1}, {1, 2}});
    auto idx = build_neighbor_index(path);
    auto d = spatial_derivative({1, 2, 3}, idx);
    CHECK(d[0] == Catch::Approx(-1.0));
    CHECK(d[1] == Catch::Approx(0.0).margin(1e-15));
    CHECK(d[2] == Catch::Approx(1.0));
}

TEST_CASE("spatial derivative of a constant field is zero", "[graph]") {
    std::mt19937_64 rng(11);
    for (int rep = 0; rep < 20; ++rep) {
        auto topo = random_topology(rng, 12);
        auto idx = build_neighbor_index(topo);
        auto d = spatial_derivative(std::vector<double>(topo.node_count, 3.7), idx);
        for (double v : d) CHECK(v == 0.0);
    }
}

TEST_CASE("spatial derivative is linear", "[graph]") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> unif(-2.0, 2.0);
    for (int rep = 0; rep < 10; ++rep) {
        auto topo = random_topology(rng, 10);
        auto idx = build_neighbor_index(topo);
        std::vector<double> f(topo.node_count), g(topo.node_count);
        for (auto& v : f) v = unif(rng);
        for (auto& v : g) v = unif(rng);
        const double a = 1.3, b = -0.7;
        std::vector<double> combo(topo.node_count);
        for (std::size_t i = 0; i < combo.size(); ++i) combo[i] = a * f[i] + b * g[i];
        auto lhs = spatial_derivative(combo, idx);
        auto df = spatial_derivative(f, idx);
        auto dg = spatial_derivative(g, idx);
        for (std::size_t i = 0; i < lhs.size(); ++i)
            CHECK(lhs[i] == Catch::Approx(a * df[i] + b * dg[i]).margin(1e-12));
    }
}

TEST_CASE("spatial derivative equals brute-force oracle exactly", "[graph]") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> unif(-2.0, 2.0);
    for (int rep = 0; rep < 200; ++rep) {
        auto topo = random_topology(rng, 20);
        auto idx = build_neighbor_index(topo);
        std::vector<double> f(topo.node_count);
        for (auto& v : f) v = unif(rng);
        auto got = spatial_derivative(f, idx);
        auto want = derivative_oracle(f, topo);
        for (std::size_t i = 0; i < f.size(); ++i) CHECK(got[i] == want[i]);
    }
}

TEST_CASE("weighted divergence uses distances", "[graph]") {
    Topology t(2, false, {{0, 1}}, {2.0});
    auto idx = build_neighbor_index(t);
    auto d = weighted_divergence({3.0, 1.0}, idx);
    CHECK(d[0] == Catch::Approx(1.0));  // (3-1)/2, one neighbor
    CHECK(d[1] == Catch::Approx(-1.0));
}

TEST_CASE("normalized adjacency base cases", "[graph]") {
    auto single = normalized_adjacency(Topology(1, false, {}));
    CHECK(single.values == std::vector<double>{1.0});

    auto pair = normalized_adjacency(Topology(2, false, {{0, 1}}));
    for (double v : pair.values) CHECK(v == Catch::Approx(0.5));
}

TEST_CASE("normalized adjacency is permutation equivariant", "[graph]") {
    std::mt19937_64 rng(21);
    for (int rep = 0; rep < 10; ++rep) {
        auto topo = random_topology(rng, 8);
        const std::size_t n = topo.node_count;
        std::vector<std::size_t> perm(n);
        for (std::size_t i = 0; i < n; ++i) perm[i] = i;
        std::shuffle(perm.begin(), perm.end(), rng);

        auto relabeled = topo;
        for (auto& e : relabeled.edges) e = {perm[e.first], perm[e.second]};
        auto a = normalized_adjacency(topo);
        auto b = normalized_adjacency(relabeled);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                CHECK(b.values[perm[i] * n + perm[j]] ==
                      Catch::Approx(a.values[i * n + j]).margin(1e-14));
    }
}
