#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>

#include "tgphy/synthgen.hpp"
#include "tgphy/trainer.hpp"

using namespace tgphy;

namespace {

TemporalDataset small_lwr_dataset(std::uint64_t seed = 1, std::size_t n = 6, std::size_t T = 30,
                                  double noise = 0.05) {
    SynthSpec s;
    s.name = "trainer_lwr";
    s.topology = TopologyKind::ring;
    s.nodes = n;
    s.timesteps = T;
    s.lags = 4;
    s.seed = seed;
    s.noise_std = noise;
    s.physics.equation = Equation::lwr;
    s.physics.p_max_auto = false;
    s.physics.lwr.p_max = 1.0;
    return TemporalDataset::from_file(gen_lwr_series(s).noisy, s.lags);
}

TrainConfig small_config(std::size_t epochs = 3) {
    TrainConfig cfg;
    cfg.model = ModelKind::gcn;
    cfg.hidden = 6;
    cfg.lags = 4;
    cfg.epochs = epochs;
    cfg.seed = 5;
    cfg.physics.equation = Equation::lwr;
    cfg.physics.p_max_auto = true;
    return cfg;
}

}  // namespace

TEST_CASE("mae and mse hand example and jensen property", "[trainer]") {
    auto [mae, mse] = mae_mse({1.0, 2.0}, {2.0, 4.0});
    CHECK(mae == Catch::Approx(1.5));
    CHECK(mse == Catch::Approx(2.5));

    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> unif(-3.0, 3.0);
    for (int rep = 0; rep < 1000; ++rep) {
        std::vector<double> y(8), yh(8);
        for (auto& v : y) v = unif(rng);
        for (auto& v : yh) v = unif(rng);
        auto [a, s] = mae_mse(y, yh);
        CHECK(a * a <= s + 1e-15);
    }
}

TEST_CASE("one epoch performs one optimizer step per pair", "[trainer]") {
    auto ds = small_lwr_dataset();
    auto cfg = small_config(1);
    auto [model, report] = train(ds, cfg);
    CHECK(report.optimizer_steps == ds.train_count() - 1);
    CHECK(report.epochs.size() == 1);
}

TEST_CASE("loss composition identity holds for every logged epoch", "[trainer]") {
    auto ds = small_lwr_dataset();
    auto cfg = small_config(4);
    cfg.lambda1 = 0.7;
    cfg.lambda2 = 0.3;
    auto [model, report] = train(ds, cfg);
    for (const auto& e : report.epochs) {
        CHECK(std::abs(e.total_loss - (cfg.lambda1 * e.data_loss + cfg.lambda2 * e.phy_loss)) <
              1e-12);
    }
}

TEST_CASE("training is bitwise deterministic", "[trainer]") {
    auto ds = small_lwr_dataset();
    auto cfg = small_config(3);
    auto [m1, r1] = train(ds, cfg);
    auto [m2, r2] = train(ds, cfg);
    CHECK(r1.test.mae == r2.test.mae);
    CHECK(r1.test.mse == r2.test.mse);
    CHECK(r1.test.phy_residual == r2.test.phy_residual);
    REQUIRE(r1.epochs.size() == r2.epochs.size());
    for (std::size_t i = 0; i < r1.epochs.size(); ++i)
        CHECK(r1.epochs[i].total_loss == r2.epochs[i].total_loss);
    auto it = m2.params().begin();
    for (const auto& [name, t] : m1.params()) {
        CHECK(t.values() == it->second.values());
        ++it;
    }
}

TEST_CASE("lambda2=0 training matches a physics-free loop bitwise", "[trainer]") {
    auto ds = small_lwr_dataset();
    auto cfg = small_config(3);
    cfg.lambda2 = 0.0;
    auto [model, report] = train(ds, cfg);

    // hand-rolled loop without any physics term
    Forecaster bare = init_forecaster(cfg.model, ds.lag_count(), cfg.hidden, cfg.seed);
    AdamState opt(cfg.learning_rate);
    auto pairs = snapshot_pairs(ds, Partition::train);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (const auto& [a, b] : pairs) {
            zero_grads(bare.params());
            Tensor pred1 = bare.predict(ds.snapshot(a));
            Tensor loss =
                scalar_mul(mean(square(sub(pred1, ds.snapshot(a).target))), cfg.lambda1);
            backward(loss);
            adam_step(bare.params(), opt);
        }
    }
    auto it = bare.params().begin();
    for (const auto& [name, t] : model.params()) {
        CHECK(t.values() == it->second.values());
        ++it;
    }
}

TEST_CASE("with lambda2=0 gradients through the second prediction vanish", "[trainer]") {
    auto ds = small_lwr_dataset();
    auto cfg = small_config(1);
    cfg.lambda2 = 0.0;
    auto physics = resolve_physics(cfg.physics, ds);
    Forecaster model = init_forecaster(cfg.model, ds.lag_count(), cfg.hidden, cfg.seed);
    auto pairs = snapshot_pairs(ds, Partition::train);
    for (const auto& [a, b] : pairs) {
        const auto& s0 = ds.snapshot(a);
        const auto& s1 = ds.snapshot(b);
        zero_grads(model.params());
        Tensor pred1 = model.predict(s0);
        Tensor pred2 = model.predict(s1);
        ResidualInputs in;
        in.x_t = s0.last_column();
        in.pred_t1 = pred1;
        in.pred_t2 = pred2;
        in.nbr = &s1.ctx->nbr;
        Tensor total = add(scalar_mul(mean(square(sub(pred1, s0.target))), cfg.lambda1),
                           scalar_mul(physics_loss(residual(physics, in)), 0.0));
        backward(total);
        for (double g : pred2.grad()) CHECK(g == 0.0);
    }
}

TEST_CASE("training touches only train snapshots before evaluation", "[trainer]") {
    auto ds = small_lwr_dataset();
    auto cfg = small_config(2);
    std::vector<std::size_t> accesses;
    ds.set_access_probe([&](std::size_t i) { accesses.push_back(i); });
    auto [model, report] = train(ds, cfg);
    ds.set_access_probe(nullptr);

    const std::size_t train_accesses = cfg.epochs * (ds.train_count() - 1) * 2;
    REQUIRE(accesses.size() >= train_accesses);
    for (std::size_t i = 0; i < train_accesses; ++i) CHECK(accesses[i] < ds.split_index());
    // the trailing accesses belong to the test-partition evaluation
    bool saw_test = false;
    for (std::size_t i = train_accesses; i < accesses.size(); ++i)
        saw_test = saw_test || accesses[i] >= ds.split_index();
    CHECK(saw_test);
}

TEST_CASE("non-finite losses abort with epoch and pair context", "[trainer]") {
    auto ds = small_lwr_dataset();
    auto cfg = small_config(2);
    cfg.physics.dt = 1e-300;  // squaring the temporal term overflows
    CHECK_THROWS_WITH(train(ds, cfg), Catch::Matchers::ContainsSubstring("epoch") &&
                                          Catch::Matchers::ContainsSubstring("pair"));
}

TEST_CASE("config lag mismatch is rejected", "[trainer]") {
    auto ds = small_lwr_dataset();
    auto cfg = small_config(1);
    cfg.lags = 6;
    CHECK_THROWS_WITH(train(ds, cfg), Catch::Matchers::ContainsSubstring("lags"));
}

TEST_CASE("train loss decreases over epochs on clean dynamics", "[trainer]") {
    auto ds = small_lwr_dataset(3, 8, 40, 0.0);
    auto cfg = small_config(30);
    auto [model, report] = train(ds, cfg);
    CHECK(report.epochs.back().total_loss < report.epochs.front().total_loss);
}

TEST_CASE("run report json and loss csv carry the expected fields", "[trainer]") {
    auto ds = small_lwr_dataset();
    auto cfg = small_config(2);
    auto [model, report] = train(ds, cfg);
    auto j = report.to_json();
    CHECK(j["config"]["model"] == "gcn");
    CHECK(j["config"]["lambda2"] == 0.1);
    CHECK(j["dataset"] == "trainer_lwr_noisy");
    CHECK(j["epochs"].size() == 2);
    CHECK(j["final"].contains("mae"));
    CHECK(j["final"].contains("mse"));
    CHECK(j["final"].contains("phy_residual"));
    CHECK(j["timing"]["train_seconds"].get<double>() >= 0.0);

    auto csv = report.loss_curve_csv();
    CHECK(csv.rfind("epoch,data_loss,phy_loss,total\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
}

TEST_CASE("evaluate is consistent on both partitions", "[trainer]") {
    auto ds = small_lwr_dataset();
    auto cfg = small_config(1);
    auto physics = resolve_physics(cfg.physics, ds);
    auto model = init_forecaster(cfg.model, ds.lag_count(), cfg.hidden, cfg.seed);
    for (auto part : {Partition::train, Partition::test}) {
        auto r = evaluate(model, ds, part, physics);
        CHECK(r.mae >= 0.0);
        CHECK(r.mae * r.mae <= r.mse + 1e-15);
        CHECK(r.phy_residual >= 0.0);
    }
}

TEST_CASE("lambda search basics", "[trainer]") {
    auto ds = small_lwr_dataset(7, 6, 40, 0.05);
    auto cfg = small_config(2);

    auto single = lambda_search(ds, cfg, {{1.0, 0.1}});
    CHECK(single.first == 1.0);
    CHECK(single.second == 0.1);

    CHECK_THROWS(lambda_search(ds, cfg, {}));

    auto grid = default_lambda_grid();
    REQUIRE(grid.size() == 4);
    CHECK(grid[0] == std::make_pair(1.0, 0.0));
    CHECK(grid[2] == std::make_pair(1.0, 0.1));

    DatasetFile f;  // 7 rows -> 3 snapshots, split 2, holdout leaves 1
    f.name = "tiny";
    f.directed = false;
    f.node_count = 2;
    f.edges = {{0, 1}};
    for (int t = 0; t < 7; ++t)
        f.series.push_back({0.1 * t, std::cos(0.7 * t)});
    auto tiny = TemporalDataset::from_file(f, 4);
    CHECK_THROWS_WITH(lambda_search(tiny, cfg, grid),
                      Catch::Matchers::ContainsSubstring("holdout"));
}

TEST_CASE("lambda search prefers zero weight when the physics is unrelated", "[trainer]") {
    // predictable per-node sinusoids whose evolution has nothing to do with
    // the conservation law; the physics term only biases the fit here
    std::vector<double> chosen;
    for (std::uint64_t seed : {11, 12, 13, 14, 15}) {
        DatasetFile f;
        f.name = "sine";
        f.directed = false;
        f.node_count = 6;
        for (std::size_t i = 0; i + 1 < 6; ++i) f.edges.emplace_back(i, i + 1);
        f.edges.emplace_back(5, 0);
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> ph(0.0, 6.28), nz(-0.02, 0.02);
        std::vector<double> phase(6);
        for (auto& p : phase) p = ph(rng);
        for (int t = 0; t < 40; ++t) {
            std::vector<double> row(6);
            for (int i = 0; i < 6; ++i)
                row[i] = std::sin(0.4 * static_cast<double>(t) + phase[i]) + nz(rng);
            f.series.push_back(row);
        }
        auto ds = TemporalDataset::from_file(f, 4);

        auto cfg = small_config(60);
        cfg.seed = seed;
        auto best = lambda_search(ds, cfg, {{1.0, 0.0}, {1.0, 0.1}, {1.0, 1.0}});
        chosen.push_back(best.second);
    }
    std::sort(chosen.begin(), chosen.end());
    CHECK(chosen[2] == 0.0);  // median selection over the five seeds
}
