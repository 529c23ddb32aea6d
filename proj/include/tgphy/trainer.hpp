#pragma once
/// Two-step training loop, composite loss, evaluation metrics, and the
/// lambda grid search.
///
/// Per epoch and per consecutive train pair (s_t, s_{t+1}), in order:
/// gradients are zeroed, the model predicts t+1 from s_t and t+2 from
/// s_{t+1}, the data loss compares pred_{t+1} with the observed y_{t+1}, the
/// physics loss is the node-mean squared residual of the configured
/// equation, and one Adam step follows backward(lambda1 L_data +
/// lambda2 L_phy). The physics branch is always constructed; lambda2 = 0
/// leaves the arithmetic of the data path bitwise untouched.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tgphy/dataset.hpp"
#include "tgphy/models.hpp"
#include "tgphy/optim.hpp"
#include "tgphy/physics.hpp"
#include "tgphy/tensor.hpp"

namespace tgphy {

struct TrainConfig {
    ModelKind model = ModelKind::gcn;
    std::size_t hidden = 32;
    std::size_t lags = 4;
    double lambda1 = 1.0;
    double lambda2 = 0.1;
    double learning_rate = 0.001;
    std::size_t epochs = 100;
    std::uint64_t seed = 0;
    double split_fraction = 0.8;
    bool supervise_second_step = false;
    PhysicsSpec physics;

    void validate() const {
        if (lambda1 < 0.0 || lambda2 < 0.0)
            throw std::invalid_argument("config: lambda weights must be nonnegative");
        if (!(learning_rate > 0.0)) throw std::invalid_argument("config: lr must be positive");
        if (epochs == 0) throw std::invalid_argument("config: epochs must be positive");
        if (!(split_fraction > 0.0) || !(split_fraction < 1.0))
            throw std::invalid_argument("config: split must be in (0,1)");
        physics.validate();
    }
};

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    if (j.contains("model")) c.model = model_kind_from_name(j.at("model").get<std::string>());
    if (j.contains("hidden")) c.hidden = j.at("hidden").get<std::size_t>();
    if (j.contains("lags")) c.lags = j.at("lags").get<std::size_t>();
    if (j.contains("lambda1")) c.lambda1 = j.at("lambda1").get<double>();
    if (j.contains("lambda2")) c.lambda2 = j.at("lambda2").get<double>();
    if (j.contains("lr")) c.learning_rate = j.at("lr").get<double>();
    if (j.contains("epochs")) c.epochs = j.at("epochs").get<std::size_t>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("split")) c.split_fraction = j.at("split").get<double>();
    if (j.contains("supervise_second_step"))
        c.supervise_second_step = j.at("supervise_second_step").get<bool>();
    if (j.contains("physics")) c.physics = physics_from_json(j.at("physics"));
    c.validate();
    return c;
}

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
    nlohmann::json j;
    j["model"] = model_kind_name(c.model);
    j["hidden"] = c.hidden;
    j["lags"] = c.lags;
    j["lambda1"] = c.lambda1;
    j["lambda2"] = c.lambda2;
    j["lr"] = c.learning_rate;
    j["epochs"] = c.epochs;
    j["seed"] = c.seed;
    j["split"] = c.split_fraction;
    j["supervise_second_step"] = c.supervise_second_step;
    j["physics"] = physics_to_json(c.physics);
    return j;
}

/// Resolves an "auto" p_max against the dataset's training partition.
inline PhysicsSpec resolve_physics(PhysicsSpec spec, const TemporalDataset& ds) {
    if (spec.equation == Equation::lwr && spec.p_max_auto) {
        spec.lwr.p_max = ds.p_max();
        spec.p_max_auto = false;
        if (!(spec.lwr.p_max > 0.0))
            throw std::runtime_error("physics: auto p_max resolved to " +
                                     std::to_string(spec.lwr.p_max) +
                                     "; training maximum must be positive");
    }
    return spec;
}

struct EpochStats {
    std::size_t epoch = 0;
    double data_loss = 0.0;
    double phy_loss = 0.0;
    double total_loss = 0.0;
};

struct EvalResult {
    double mae = 0.0;
    double mse = 0.0;
    double phy_residual = 0.0;  // RMS of residual entries over partition pairs
};

struct RunReport {
    TrainConfig config;
    std::string dataset;
    std::vector<EpochStats> epochs;
    EvalResult test;
    std::size_t optimizer_steps = 0;
    double train_seconds = 0.0;
    double eval_seconds = 0.0;

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["config"] = train_config_to_json(config);
        j["dataset"] = dataset;
        nlohmann::json curve = nlohmann::json::array();
        for (const auto& e : epochs)
            curve.push_back({{"epoch", e.epoch},
                             {"data_loss", e.data_loss},
                             {"phy_loss", e.phy_loss},
                             {"total_loss", e.total_loss}});
        j["epochs"] = curve;
        j["final"] = {{"mae", test.mae}, {"mse", test.mse}, {"phy_residual", test.phy_residual}};
        j["optimizer_steps"] = optimizer_steps;
        j["timing"] = {{"train_seconds", train_seconds}, {"eval_seconds", eval_seconds}};
        return j;
    }

    std::string loss_curve_csv() const {
        std::ostringstream os;
        os.precision(17);
        os << "epoch,data_loss,phy_loss,total\n";
        for (const auto& e : epochs)
            os << e.epoch << ',' << e.data_loss << ',' << e.phy_loss << ',' << e.total_loss
               << '\n';
        return os.str();
    }
};

/// MAE and MSE of predictions against targets, averaged over all entries.
inline std::pair<double, double> mae_mse(const std::vector<double>& y,
                                         const std::vector<double>& yhat) {
    if (y.size() != yhat.size() || y.empty())
        throw std::invalid_argument("mae_mse: " + std::to_string(y.size()) + " targets vs " +
                                    std::to_string(yhat.size()) + " predictions");
    double abs_sum = 0.0, sq_sum = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double err = y[i] - yhat[i];
        abs_sum += std::abs(err);
        sq_sum += err * err;
    }
    const double n = static_cast<double>(y.size());
    return {abs_sum / n, sq_sum / n};
}

namespace detail {

inline Tensor mse_loss(const Tensor& pred, const Tensor& target) {
    return mean(square(sub(pred, target)));
}

inline ResidualInputs pair_inputs(const GraphSnapshot& s0, const GraphSnapshot& s1,
                                  const Tensor& pred1, const Tensor& pred2) {
    ResidualInputs in;
    in.x_t = s0.last_column();
    in.pred_t1 = pred1;
    in.pred_t2 = pred2;
    in.nbr = &s1.ctx->nbr;  // topology in force at the evaluated timestep
    return in;
}

}  // namespace detail

/// Scores a partition: MAE and MSE of next-step predictions on the
/// standardized scale, plus the RMS physics residual of the predictions over
/// consecutive pairs. Records no gradients. Partitions with fewer than two
/// snapshots have no pairs and report a zero residual norm.
inline EvalResult evaluate(const Forecaster& model, const TemporalDataset& ds, Partition part,
                           const PhysicsSpec& physics) {
    const std::size_t begin = part == Partition::train ? 0 : ds.split_index();
    const std::size_t end = part == Partition::train ? ds.split_index() : ds.snapshot_count();
    if (begin == end)
        throw std::runtime_error(std::string("evaluate: ") + partition_name(part) +
                                 " partition is empty");
    NoGradGuard guard;
    std::vector<Tensor> preds;
    preds.reserve(end - begin);
    std::vector<double> all_y, all_pred;
    for (std::size_t k = begin; k < end; ++k) {
        const auto& snap = ds.snapshot(k);
        Tensor pred = model.predict(snap);
        preds.push_back(pred);
        all_y.insert(all_y.end(), snap.target.values().begin(), snap.target.values().end());
        all_pred.insert(all_pred.end(), pred.values().begin(), pred.values().end());
    }
    EvalResult out;
    std::tie(out.mae, out.mse) = mae_mse(all_y, all_pred);

    double res_sq = 0.0;
    std::size_t res_count = 0;
    for (std::size_t k = begin; k + 1 < end; ++k) {
        const auto& s0 = ds.snapshot(k);
        const auto& s1 = ds.snapshot(k + 1);
        auto in = detail::pair_inputs(s0, s1, preds[k - begin], preds[k + 1 - begin]);
        Tensor r = residual(physics, in);
        for (double v : r.values()) {
            res_sq += v * v;
            ++res_count;
        }
    }
    out.phy_residual = res_count ? std::sqrt(res_sq / static_cast<double>(res_count)) : 0.0;
    return out;
}

/// Runs the full training loop and scores the test partition.
inline std::pair<Forecaster, RunReport> train(const TemporalDataset& ds, const TrainConfig& cfg) {
    cfg.validate();
    if (cfg.lags != ds.lag_count())
        throw std::invalid_argument("train: config lags " + std::to_string(cfg.lags) +
                                    " but dataset was windowed with " +
                                    std::to_string(ds.lag_count()));
    auto pairs = snapshot_pairs(ds, Partition::train);
    const PhysicsSpec physics = resolve_physics(cfg.physics, ds);

    Forecaster model = init_forecaster(cfg.model, ds.lag_count(), cfg.hidden, cfg.seed);
    AdamState opt(cfg.learning_rate);

    RunReport report;
    report.config = cfg;
    report.dataset = ds.name();
    report.epochs.reserve(cfg.epochs);

    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        double data_sum = 0.0, phy_sum = 0.0, total_sum = 0.0;
        for (std::size_t pi = 0; pi < pairs.size(); ++pi) {
            try {
                const auto& s0 = ds.snapshot(pairs[pi].first);
                const auto& s1 = ds.snapshot(pairs[pi].second);
                zero_grads(model.params());

                Tensor pred1 = model.predict(s0);
                Tensor pred2 = model.predict(s1);

                Tensor data_loss = detail::mse_loss(pred1, s0.target);
                if (cfg.supervise_second_step)
                    data_loss = scalar_mul(
                        add(data_loss, detail::mse_loss(pred2, s1.target)), 0.5);
                Tensor phy_loss =
                    physics_loss(residual(physics, detail::pair_inputs(s0, s1, pred1, pred2)));
                Tensor total =
                    add(scalar_mul(data_loss, cfg.lambda1), scalar_mul(phy_loss, cfg.lambda2));

                backward(total);
                adam_step(model.params(), opt);
                report.optimizer_steps += 1;

                data_sum += data_loss.scalar_value();
                phy_sum += phy_loss.scalar_value();
                total_sum += total.scalar_value();
            } catch (const std::runtime_error& e) {
                throw std::runtime_error("train: epoch " + std::to_string(epoch) + ", pair " +
                                         std::to_string(pi) + ": " + e.what());
            }
        }
        const double np = static_cast<double>(pairs.size());
        report.epochs.push_back({epoch, data_sum / np, phy_sum / np, total_sum / np});
    }
    report.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                               .count();

    const auto t1 = std::chrono::steady_clock::now();
    report.test = evaluate(model, ds, Partition::test, physics);
    report.eval_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t1)
                              .count();
    return {std::move(model), std::move(report)};
}

/// Temporal-holdout selection of (lambda1, lambda2): the last 20% of the
/// train partition becomes validation, each grid point trains on the rest,
/// and the lowest validation MSE wins. Ties prefer smaller lambda2, then
/// smaller lambda1.
inline std::pair<double, double> lambda_search(
    const TemporalDataset& ds, const TrainConfig& base,
    const std::vector<std::pair<double, double>>& grid) {
    if (grid.empty()) throw std::invalid_argument("lambda_search: empty grid");
    const std::size_t train_count = ds.train_count();
    const std::size_t val_count =
        std::max<std::size_t>(1, static_cast<std::size_t>(
                                     std::floor(0.2 * static_cast<double>(train_count))));
    if (train_count < val_count + 2)
        throw std::runtime_error("lambda_search: " + std::to_string(train_count - val_count) +
                                 " training snapshots left after holdout, need at least 2");
    auto holdout = ds.head(train_count, train_count - val_count);

    bool have_best = false;
    double best_mse = 0.0;
    std::pair<double, double> best{0.0, 0.0};
    for (const auto& [l1, l2] : grid) {
        TrainConfig cfg = base;
        cfg.lambda1 = l1;
        cfg.lambda2 = l2;
        auto [model, report] = train(holdout, cfg);
        const double mse = report.test.mse;
        const bool better =
            !have_best || mse < best_mse ||
            (mse == best_mse && (l2 < best.second || (l2 == best.second && l1 < best.first)));
        if (better) {
            have_best = true;
            best_mse = mse;
            best = {l1, l2};
        }
    }
    return best;
}

/// Default grid: the anchor weights plus a bracketing sweep of lambda2.
inline std::vector<std::pair<double, double>> default_lambda_grid() {
    return {{1.0, 0.0}, {1.0, 0.01}, {1.0, 0.1}, {1.0, 1.0}};
}

}  // namespace tgphy
