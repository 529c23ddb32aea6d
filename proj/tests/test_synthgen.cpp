#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "tgphy/physics.hpp"
#include "tgphy/synthgen.hpp"

using namespace tgphy;

namespace {

SynthSpec lwr_spec(std::size_t n = 8, std::size_t T = 40, std::uint64_t seed = 1) {
    SynthSpec s;
    s.name = "lwr_test";
    s.topology = TopologyKind::ring;
    s.nodes = n;
    s.timesteps = T;
    s.lags = 4;
    s.seed = seed;
    s.physics.equation = Equation::lwr;
    s.physics.p_max_auto = false;
    s.physics.lwr.p_max = 1.0;
    return s;
}

}  // namespace

TEST_CASE("uniform initial density stays constant", "[synthgen]") {
    auto spec = lwr_spec(6, 12);
    auto rng = make_rng(spec.seed);
    auto topo = make_topology(spec, rng);
    auto idx = build_neighbor_index(topo);
    std::vector<double> p(6, 0.4);
    for (int t = 0; t < 10; ++t) {
        p = lwr_euler_step(p, spec.physics.lwr, 1.0, idx);
        for (double v : p) CHECK(v == Catch::Approx(0.4).margin(1e-15));
    }
}

TEST_CASE("two-node hand step matches the residual example", "[synthgen]") {
    Topology t(2, false, {{0, 1}});
    auto idx = build_neighbor_index(t);
    LWRParams lwr{1.0, 1.0};
    auto next = lwr_euler_step({0.5, 0.0}, lwr, 1.0, idx);
    CHECK(next[0] == Catch::Approx(0.25));
    CHECK(next[1] == Catch::Approx(0.25));
}

TEST_CASE("clean lwr series closes the residual", "[synthgen]") {
    auto res = gen_lwr_series(lwr_spec(10, 60, 5));
    auto idx = build_neighbor_index(res.topology);
    const auto& s = res.clean.series;
    LWRParams lwr{1.0, 1.0};
    for (std::size_t t = 0; t + 2 < s.size(); ++t) {
        ResidualInputs in;
        in.x_t = Tensor::constant({s[t].size()}, s[t]);
        in.pred_t1 = Tensor::constant({s[t + 1].size()}, s[t + 1]);
        in.pred_t2 = Tensor::constant({s[t + 2].size()}, s[t + 2]);
        in.nbr = &idx;
        auto lp = physics_loss(lwr_residual(in, lwr, 1.0)).scalar_value();
        CHECK(lp <= 1e-12);
    }
}

TEST_CASE("lwr blow-up is reported with a dt hint", "[synthgen]") {
    auto spec = lwr_spec(8, 60);
    spec.physics.dt = 25.0;  // far beyond the stable step
    CHECK_THROWS_WITH(gen_lwr_series(spec), Catch::Matchers::ContainsSubstring("smaller dt"));
}

TEST_CASE("generation is deterministic per seed", "[synthgen]") {
    auto a = gen_lwr_series(lwr_spec(8, 30, 42));
    auto b = gen_lwr_series(lwr_spec(8, 30, 42));
    CHECK(a.clean.series == b.clean.series);
    CHECK(a.noisy.series == b.noisy.series);
    auto c = gen_lwr_series(lwr_spec(8, 30, 43));
    CHECK(a.clean.series != c.clean.series);
}

TEST_CASE("lienard fixed point at the origin", "[synthgen]") {
    // force zero initial conditions by integrating by hand
    detail::LienardState s{0.0, 0.0};
    LienardParams lp;
    for (int m = 0; m < 1000; ++m) s = detail::rk4_step(s, 0.01, lp);
    CHECK(s.x == 0.0);
    CHECK(s.u == 0.0);
}

TEST_CASE("lienard equilibrium at x=1 persists", "[synthgen]") {
    detail::LienardState s{1.0, 0.0};
    LienardParams lp;
    double drift = 0.0;
    for (int sample = 0; sample < 100; ++sample) {
        for (int m = 0; m < 100; ++m) s = detail::rk4_step(s, 0.01, lp);
        drift = std::max(drift, std::abs(s.x - 1.0));
    }
    CHECK(drift < 1e-8);
}

TEST_CASE("noise layering has the configured stddev", "[synthgen]") {
    auto spec = lwr_spec(50, 200, 9);  // 10^4 samples
    spec.noise_std = 0.1;
    auto res = gen_lwr_series(spec);
    double sq = 0.0;
    std::size_t n = 0;
    for (std::size_t t = 0; t < res.clean.series.size(); ++t)
        for (std::size_t i = 0; i < res.clean.series[t].size(); ++i) {
            double d = res.noisy.series[t][i] - res.clean.series[t][i];
            sq += d * d;
            ++n;
        }
    double sd = std::sqrt(sq / static_cast<double>(n));
    CHECK(sd > 0.09);
    CHECK(sd < 0.11);
}

TEST_CASE("noiseless spec emits identical clean and noisy series", "[synthgen]") {
    auto res = gen_lwr_series(lwr_spec());
    CHECK(res.clean.series == res.noisy.series);
}

TEST_CASE("generated files load as datasets", "[synthgen]") {
    auto spec = lwr_spec(10, 50, 2);
    spec.noise_std = 0.05;
    auto res = gen_lwr_series(spec);
    auto ds = TemporalDataset::from_file(res.noisy, spec.lags);
    CHECK(ds.snapshot_count() == 50 - 4);
    CHECK(ds.node_count() == 10);
}

TEST_CASE("topology generators produce valid graphs", "[synthgen]") {
    auto check_kind = [](TopologyKind k, std::size_t n) {
        SynthSpec s;
        s.topology = k;
        s.nodes = n;
        s.degree = 4;
        s.edge_prob = 0.3;
        auto rng = make_rng(7);
        auto topo = make_topology(s, rng);
        CHECK(topo.node_count == n);
        topo.validate();
        return topo;
    };
    auto path = check_kind(TopologyKind::path, 6);
    CHECK(path.edges.size() == 5);
    auto ring = check_kind(TopologyKind::ring, 6);
    CHECK(ring.edges.size() == 6);
    auto rr = check_kind(TopologyKind::random_regular, 10);
    auto idx = build_neighbor_index(rr);
    for (std::size_t i = 0; i < 10; ++i) CHECK(idx.cardinality(i) == 4);
    check_kind(TopologyKind::er, 12);
}

TEST_CASE("synth spec json round trip", "[synthgen]") {
    auto spec = lwr_spec(7, 33, 19);
    spec.noise_std = 0.25;
    auto j = synth_spec_to_json(spec);
    auto back = synth_spec_from_json(j);
    CHECK(back.nodes == 7);
    CHECK(back.timesteps == 33);
    CHECK(back.seed == 19);
    CHECK(back.noise_std == 0.25);
    CHECK(back.physics.equation == Equation::lwr);
    CHECK(back.physics.lwr.p_max == 1.0);
}

TEST_CASE("presets mirror the benchmark dataset shapes", "[synthgen]") {
    auto pm = synth_preset("pedalme");
    CHECK(pm.nodes == 15);
    CHECK(pm.timesteps == 30);
    CHECK(pm.lags == 4);
    CHECK(pm.physics.equation == Equation::lwr);
    auto cov = synth_preset("england_covid");
    CHECK(cov.nodes == 129);
    CHECK(cov.timesteps == 52);
    CHECK(cov.lags == 8);
    auto cp = synth_preset("chickenpox");
    CHECK(cp.nodes == 20);
    CHECK(cp.timesteps == 516);
    CHECK(cp.lags == 4);
    CHECK_THROWS(synth_preset("nope"));
}

TEST_CASE("spec validation catches bad shapes", "[synthgen]") {
    auto s = lwr_spec();
    s.timesteps = 6;
    CHECK_THROWS(s.validate());
    auto a = lwr_spec();
    a.noise_std = -0.1;
    CHECK_THROWS(a.validate());
    auto p = lwr_spec();
    p.physics.p_max_auto = true;
    CHECK_THROWS_WITH(p.validate(), Catch::Matchers::ContainsSubstring("p_max"));
}
