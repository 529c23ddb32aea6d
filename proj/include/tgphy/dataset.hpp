#pragma once
/// Temporal graph datasets: on-disk JSON schema, lag windowing into
/// snapshots, train-split standardization, and chronological splitting.
///
/// File schema (UTF-8 JSON):
///   { "name": str, "directed": bool, "node_count": int,
///     "edges": [[int,int],...], "edge_attrs": [float,...] (optional),
///     "dynamic_edges": [[[int,int],...] per timestep] (replaces "edges"),
///     "dynamic_edge_attrs": [[float,...] per timestep] (optional),
///     "series": [[float per node] per timestep] }
///
/// A snapshot built from series rows t..t+F-1 predicts row t+F and, for
/// dynamic files, carries the topology of timestep t+F-1 (the time of its
/// most recent observation).

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tgphy/common.hpp"
#include "tgphy/graph.hpp"
#include "tgphy/tensor.hpp"

namespace tgphy {

/// In-memory mirror of the dataset file schema.
struct DatasetFile {
    std::string name;
    bool directed = false;
    std::size_t node_count = 0;
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    std::vector<double> edge_attrs;  // empty means unit distances
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> dynamic_edges;
    std::vector<std::vector<double>> dynamic_edge_attrs;
    std::vector<std::vector<double>> series;  // T rows x node_count cols

    bool dynamic() const { return !dynamic_edges.empty(); }
    std::size_t timesteps() const { return series.size(); }
};

/// Immutable per-topology context shared by snapshots: neighbor index plus
/// the dense constants the models consume.
struct TopologyCtx {
    Topology topo;
    NeighborIndex nbr;
    Tensor adj_norm;   // {N,N}
    Tensor attn_mask;  // {N,N}, 1 where j is in N(i) or j == i

    explicit TopologyCtx(Topology t) : topo(std::move(t)), nbr(build_neighbor_index(topo)) {
        const std::size_t n = topo.node_count;
        adj_norm = Tensor::constant({n, n}, normalized_adjacency(topo).values);
        std::vector<double> mask(n * n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            mask[i * n + i] = 1.0;
            for (const auto& jd : nbr.neighbors[i]) mask[i * n + jd.first] = 1.0;
        }
        attn_mask = Tensor::constant({n, n}, std::move(mask));
    }
};

/// One timestep's view: standardized lag features {N,F}, standardized
/// next-step target {N}, and the topology in force.
struct GraphSnapshot {
    Tensor features;
    Tensor target;
    std::shared_ptr<const TopologyCtx> ctx;

    std::size_t node_count() const { return features.dim(0); }
    std::size_t lag_count() const { return features.dim(1); }

    /// Most recent observation column as a flat {N} tensor.
    Tensor last_column() const {
        const std::size_t f = lag_count();
        return reshape(slice_cols(features, f - 1, f), {node_count()});
    }
};

struct StandardizeResult {
    std::vector<std::vector<double>> values;
    double mu = 0.0;
    double sigma = 1.0;
};

/// Z-scores all rows using the global mean/stddev (population form) of the
/// first `train_rows` rows only.
inline StandardizeResult standardize_rows(const std::vector<std::vector<double>>& raw,
                                          std::size_t train_rows) {
    if (raw.empty() || train_rows == 0 || train_rows > raw.size())
        throw std::invalid_argument("standardize: bad training row count " +
                                    std::to_string(train_rows) + " for " +
                                    std::to_string(raw.size()) + " rows");
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t t = 0; t < train_rows; ++t)
        for (double v : raw[t]) {
            sum += v;
            ++n;
        }
    const double mu = sum / static_cast<double>(n);
    double sq = 0.0;
    for (std::size_t t = 0; t < train_rows; ++t)
        for (double v : raw[t]) sq += (v - mu) * (v - mu);
    const double sigma = std::sqrt(sq / static_cast<double>(n));
    if (!(sigma > 0.0))
        throw std::runtime_error("standardize: zero variance in training rows");
    StandardizeResult out;
    out.mu = mu;
    out.sigma = sigma;
    out.values.resize(raw.size());
    for (std::size_t t = 0; t < raw.size(); ++t) {
        out.values[t].resize(raw[t].size());
        for (std::size_t i = 0; i < raw[t].size(); ++i)
            out.values[t][i] = (raw[t][i] - mu) / sigma;
    }
    return out;
}

/// Fraction-of-rows variant: the training region is floor(train_fraction * T)
/// rows, at least one.
inline StandardizeResult standardize(const std::vector<std::vector<double>>& raw,
                                     double train_fraction) {
    if (!(train_fraction > 0.0) || train_fraction > 1.0)
        throw std::invalid_argument("standardize: train_fraction must be in (0,1], got " +
                                    std::to_string(train_fraction));
    auto rows = static_cast<std::size_t>(
        std::floor(train_fraction * static_cast<double>(raw.size())));
    return standardize_rows(raw, std::max<std::size_t>(1, rows));
}

enum class Partition { train, test };

inline const char* partition_name(Partition p) {
    return p == Partition::train ? "train" : "test";
}

/// Ordered snapshots with normalization stats and a chronological 80/20
/// split. Immutable after construction; safe to share across runs.
class TemporalDataset {
  public:
    static TemporalDataset from_file(DatasetFile file, std::size_t lags,
                                     double split_fraction = 0.8);
    static TemporalDataset load(const std::string& path, std::size_t lags,
                                double split_fraction = 0.8);

    const std::string& name() const { return name_; }
    std::size_t node_count() const { return node_count_; }
    std::size_t lag_count() const { return lags_; }
    double mu() const { return mu_; }
    double sigma() const { return sigma_; }
    std::size_t snapshot_count() const { return snapshots_.size(); }
    std::size_t split_index() const { return split_; }
    std::size_t train_count() const { return split_; }
    std::size_t test_count() const { return snapshots_.size() - split_; }
    const DatasetFile& file() const { return file_; }
    const std::string& physics_id() const { return physics_id_; }
    void set_physics_id(std::string id) { physics_id_ = std::move(id); }

    const GraphSnapshot& snapshot(std::size_t i) const {
        if (access_probe_) access_probe_(i);
        return snapshots_.at(i);
    }

    /// Test-only hook: observes every snapshot access.
    void set_access_probe(std::function<void(std::size_t)> probe) const {
        access_probe_ = std::move(probe);
    }

    /// Maximum over all training-partition feature and target values, on the
    /// standardized scale.
    double p_max() const {
        if (train_count() == 0) throw std::runtime_error("p_max: empty training partition");
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < train_count(); ++k) {
            for (double v : snapshots_[k].features.values()) m = std::max(m, v);
            for (double v : snapshots_[k].target.values()) m = std::max(m, v);
        }
        return m;
    }

    /// First `count` snapshots with a new split index; normalization stats
    /// are inherited. Used for temporal holdout validation.
    TemporalDataset head(std::size_t count, std::size_t new_split) const {
        if (count > snapshots_.size() || new_split == 0 || new_split >= count)
            throw std::invalid_argument("head: bad view bounds");
        TemporalDataset v(*this);
        v.snapshots_.assign(snapshots_.begin(), snapshots_.begin() + count);
        v.split_ = new_split;
        v.access_probe_ = nullptr;
        return v;
    }

  private:
    std::string name_;
    std::size_t node_count_ = 0;
    std::size_t lags_ = 0;
    double mu_ = 0.0;
    double sigma_ = 1.0;
    std::size_t split_ = 0;
    std::vector<GraphSnapshot> snapshots_;
    DatasetFile file_;
    std::string physics_id_;
    mutable std::function<void(std::size_t)> access_probe_;
};

/// Consecutive in-partition snapshot index pairs, chronological.
inline std::vector<std::pair<std::size_t, std::size_t>> snapshot_pairs(
    const TemporalDataset& ds, Partition part) {
    const std::size_t begin = part == Partition::train ? 0 : ds.split_index();
    const std::size_t end = part == Partition::train ? ds.split_index() : ds.snapshot_count();
    if (end - begin < 2)
        throw std::runtime_error(std::string("snapshot_pairs: ") + partition_name(part) +
                                 " partition has " + std::to_string(end - begin) +
                                 " snapshots, need at least 2");
    std::vector<std::pair<std::size_t, std::size_t>> out;
    out.reserve(end - begin - 1);
    for (std::size_t k = begin; k + 1 < end; ++k) out.emplace_back(k, k + 1);
    return out;
}

// ---------------------------------------------------------------------------
// JSON parse / serialize
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::pair<std::size_t, std::size_t>> parse_edge_list(
    const nlohmann::json& j, const std::string& where) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    if (!j.is_array()) throw std::runtime_error(where + ": expected an array of [src,dst] pairs");
    out.reserve(j.size());
    for (std::size_t k = 0; k < j.size(); ++k) {
        const auto& e = j[k];
        if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() ||
            !e[1].is_number_integer())
            throw std::runtime_error(where + "[" + std::to_string(k) +
                                     "]: expected [src,dst] integers");
        long long s = e[0].get<long long>(), d = e[1].get<long long>();
        if (s < 0 || d < 0)
            throw std::runtime_error(where + "[" + std::to_string(k) + "]: negative node id");
        out.emplace_back(static_cast<std::size_t>(s), static_cast<std::size_t>(d));
    }
    return out;
}

}  // namespace detail

inline DatasetFile parse_dataset_json(const std::string& text, const std::string& context) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error(context + ": malformed JSON: " + e.what());
    }
    try {
        DatasetFile f;
        if (!j.contains("name") || !j["name"].is_string())
            throw std::runtime_error("field 'name' missing or not a string");
        f.name = j["name"].get<std::string>();
        if (!j.contains("directed") || !j["directed"].is_boolean())
            throw std::runtime_error("field 'directed' missing or not a bool");
        f.directed = j["directed"].get<bool>();
        if (!j.contains("node_count") || !j["node_count"].is_number_integer() ||
            j["node_count"].get<long long>() <= 0)
            throw std::runtime_error("field 'node_count' missing or not a positive integer");
        f.node_count = j["node_count"].get<std::size_t>();

        const bool has_static = j.contains("edges");
        const bool has_dynamic = j.contains("dynamic_edges");
        if (has_static == has_dynamic)
            throw std::runtime_error("exactly one of 'edges' or 'dynamic_edges' is required");
        if (has_static) {
            f.edges = detail::parse_edge_list(j["edges"], "edges");
            if (j.contains("edge_attrs")) {
                f.edge_attrs = j["edge_attrs"].get<std::vector<double>>();
                if (f.edge_attrs.size() != f.edges.size())
                    throw std::runtime_error("'edge_attrs' length " +
                                             std::to_string(f.edge_attrs.size()) +
                                             " does not match 'edges' length " +
                                             std::to_string(f.edges.size()));
                for (std::size_t k = 0; k < f.edge_attrs.size(); ++k)
                    if (!(f.edge_attrs[k] > 0.0))
                        throw std::runtime_error("edge_attrs[" + std::to_string(k) +
                                                 "]: distance must be positive, got " +
                                                 std::to_string(f.edge_attrs[k]));
            }
        } else {
            for (std::size_t t = 0; t < j["dynamic_edges"].size(); ++t)
                f.dynamic_edges.push_back(detail::parse_edge_list(
                    j["dynamic_edges"][t], "dynamic_edges[" + std::to_string(t) + "]"));
            if (j.contains("dynamic_edge_attrs")) {
                f.dynamic_edge_attrs =
                    j["dynamic_edge_attrs"].get<std::vector<std::vector<double>>>();
                if (f.dynamic_edge_attrs.size() != f.dynamic_edges.size())
                    throw std::runtime_error("'dynamic_edge_attrs' length mismatch");
                for (std::size_t t = 0; t < f.dynamic_edge_attrs.size(); ++t)
                    for (std::size_t k = 0; k < f.dynamic_edge_attrs[t].size(); ++k)
                        if (!(f.dynamic_edge_attrs[t][k] > 0.0))
                            throw std::runtime_error(
                                "dynamic_edge_attrs[" + std::to_string(t) + "][" +
                                std::to_string(k) + "]: distance must be positive");
            }
        }

        if (!j.contains("series") || !j["series"].is_array() || j["series"].empty())
            throw std::runtime_error("field 'series' missing or empty");
        f.series.reserve(j["series"].size());
        for (std::size_t t = 0; t < j["series"].size(); ++t) {
            auto row = j["series"][t].get<std::vector<double>>();
            if (row.size() != f.node_count)
                throw std::runtime_error("series[" + std::to_string(t) + "] has " +
                                         std::to_string(row.size()) + " values, expected " +
                                         std::to_string(f.node_count));
            for (std::size_t i = 0; i < row.size(); ++i)
                if (!std::isfinite(row[i]))
                    throw std::runtime_error("series[" + std::to_string(t) + "][" +
                                             std::to_string(i) + "] is not finite");
            f.series.push_back(std::move(row));
        }
        if (f.dynamic() && f.dynamic_edges.size() != f.series.size())
            throw std::runtime_error("'dynamic_edges' has " +
                                     std::to_string(f.dynamic_edges.size()) +
                                     " entries but 'series' has " +
                                     std::to_string(f.series.size()) + " timesteps");
        return f;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(context + ": " + e.what());
    } catch (const std::runtime_error& e) {
        throw std::runtime_error(context + ": " + e.what());
    }
}

inline nlohmann::json dataset_to_json(const DatasetFile& f) {
    nlohmann::json j;
    j["name"] = f.name;
    j["directed"] = f.directed;
    j["node_count"] = f.node_count;
    auto edges_json = [](const std::vector<std::pair<std::size_t, std::size_t>>& es) {
        nlohmann::json a = nlohmann::json::array();
        for (auto [s, d] : es) a.push_back({s, d});
        return a;
    };
    if (f.dynamic()) {
        nlohmann::json de = nlohmann::json::array();
        for (const auto& es : f.dynamic_edges) de.push_back(edges_json(es));
        j["dynamic_edges"] = de;
        if (!f.dynamic_edge_attrs.empty()) j["dynamic_edge_attrs"] = f.dynamic_edge_attrs;
    } else {
        j["edges"] = edges_json(f.edges);
        if (!f.edge_attrs.empty()) j["edge_attrs"] = f.edge_attrs;
    }
    j["series"] = f.series;
    return j;
}

inline void save_dataset_file(const DatasetFile& f, const std::string& path) {
    write_text_file(path, dataset_to_json(f).dump(1));
}

inline TemporalDataset TemporalDataset::from_file(DatasetFile file, std::size_t lags,
                                                  double split_fraction) {
    if (lags == 0) throw std::invalid_argument(file.name + ": lags must be positive");
    if (!(split_fraction > 0.0) || !(split_fraction < 1.0))
        throw std::invalid_argument(file.name + ": split fraction must be in (0,1)");
    const std::size_t T = file.timesteps();
    if (T <= lags + 2)
        throw std::runtime_error(file.name + ": series length " + std::to_string(T) +
                                 " too short for lags " + std::to_string(lags) +
                                 " (need more than lags + 2 rows)");
    if (file.dynamic() && file.dynamic_edges.size() != T)
        throw std::runtime_error(file.name + ": 'dynamic_edges' has " +
                                 std::to_string(file.dynamic_edges.size()) +
                                 " entries for " + std::to_string(T) + " timesteps");

    const std::size_t snapshot_count = T - lags;
    const std::size_t split = static_cast<std::size_t>(
        std::floor(split_fraction * static_cast<double>(snapshot_count)));
    if (split == 0 || split >= snapshot_count)
        throw std::runtime_error(file.name + ": split leaves an empty partition");

    // Standardize over exactly the rows the training snapshots touch:
    // features of snapshots 0..split-1 plus their targets.
    auto std_res = standardize_rows(file.series, split + lags);

    TemporalDataset ds;
    ds.name_ = file.name;
    ds.node_count_ = file.node_count;
    ds.lags_ = lags;
    ds.mu_ = std_res.mu;
    ds.sigma_ = std_res.sigma;
    ds.split_ = split;

    std::shared_ptr<const TopologyCtx> static_ctx;
    auto ctx_for_timestep = [&](std::size_t t) -> std::shared_ptr<const TopologyCtx> {
        try {
            if (!file.dynamic()) {
                if (!static_ctx)
                    static_ctx = std::make_shared<const TopologyCtx>(
                        Topology(file.node_count, file.directed, file.edges, file.edge_attrs));
                return static_ctx;
            }
            auto attrs = file.dynamic_edge_attrs.empty() ? std::vector<double>{}
                                                         : file.dynamic_edge_attrs.at(t);
            return std::make_shared<const TopologyCtx>(
                Topology(file.node_count, file.directed, file.dynamic_edges.at(t), attrs));
        } catch (const std::invalid_argument& e) {
            throw std::runtime_error(file.name + ": " + e.what());
        }
    };

    const std::size_t N = file.node_count;
    ds.snapshots_.reserve(snapshot_count);
    for (std::size_t k = 0; k < snapshot_count; ++k) {
        std::vector<double> x(N * lags);
        for (std::size_t i = 0; i < N; ++i)
            for (std::size_t c = 0; c < lags; ++c) x[i * lags + c] = std_res.values[k + c][i];
        GraphSnapshot snap;
        snap.features = Tensor::constant({N, lags}, std::move(x));
        snap.target = Tensor::constant({N}, std_res.values[k + lags]);
        snap.ctx = ctx_for_timestep(k + lags - 1);
        ds.snapshots_.push_back(std::move(snap));
    }
    ds.file_ = std::move(file);
    return ds;
}

inline TemporalDataset TemporalDataset::load(const std::string& path, std::size_t lags,
                                             double split_fraction) {
    return from_file(parse_dataset_json(read_text_file(path), path), lags, split_fraction);
}

/// Table-style lag presets for the dataset families the schema mimics.
inline std::size_t preset_lags(const std::string& dataset_family) {
    if (dataset_family == "pedalme") return 4;
    if (dataset_family == "chickenpox") return 4;
    if (dataset_family == "england_covid") return 8;
    throw std::invalid_argument("unknown dataset family: " + dataset_family);
}

}  // namespace tgphy
