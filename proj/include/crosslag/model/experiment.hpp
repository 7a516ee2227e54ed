#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "crosslag/model/evaluation.hpp"

namespace crosslag {

// Dataset split, normalized with training statistics and cut into windows.
struct PreparedData {
    std::vector<std::string> features;
    DatasetSplits raw;
    NormStats stats;
    std::vector<WindowSample> train, val, test;
};

// `features` empty keeps every column. Throws ConfigError naming the minimum
// split length when a split cannot hold one window.
PreparedData prepare_data(const TimeSeriesDataset& ds, const std::vector<std::string>& features,
                          const WindowSpec& windows, const SplitRatios& ratios = {});

// Windows over one split of `ds` normalized with existing statistics.
std::vector<WindowSample> windows_for(const TimeSeriesDataset& split, const NormStats& stats, const WindowSpec& spec);

struct RunSummary {
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    Metrics test;
    std::optional<Metrics> spike_window;
    std::size_t best_epoch = 0;
};

struct MultiRunReport {
    std::vector<RunSummary> runs;
    RunStats mse, mae;
    std::optional<RunStats> spike_mse, spike_mae;
    bool complete = true;

    nlohmann::ordered_json to_json() const;
};

MultiRunReport aggregate_runs(std::vector<RunSummary> runs);

// Trains and evaluates n_runs models with seeds base_seed .. base_seed + n - 1
// (model init and training both use the run seed). A failing run is recorded
// and marks the report incomplete.
MultiRunReport multi_run(const PreparedData& data, const ModelConfig& config, const TrainConfig& tc,
                         std::size_t n_runs = 10, std::uint64_t base_seed = 0,
                         std::optional<WindowRange> spike_window = std::nullopt);

}  // namespace crosslag
