#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "crosslag/data/dataset.hpp"
#include "crosslag/model/training.hpp"

namespace crosslag {

struct WindowMetrics {
    std::size_t window = 0;
    double mse = 0.0;
    double mae = 0.0;
};

struct Metrics {
    double mse = 0.0;
    double mae = 0.0;
    std::size_t points = 0;
    std::vector<WindowMetrics> per_window;

    nlohmann::ordered_json to_json() const;
};

// Half-open range of window indices to score.
struct WindowRange {
    std::size_t begin = 0;
    std::size_t end = 0;
};

// Errors pooled over every (window, horizon step).
Metrics compute_metrics(const std::vector<std::vector<double>>& predictions,
                        const std::vector<std::vector<double>>& truth, std::size_t first_window_index = 0);

// Forecasts in original target units for every window (eval mode).
std::vector<std::vector<double>> predict_denormalized(const ModelParams& params,
                                                      const std::vector<WindowSample>& windows,
                                                      const ModelConfig& config, const ColumnStats& target_stats);

// MSE/MAE on denormalized values. `range` restricts scoring to a window subset.
Metrics evaluate(const ModelParams& params, const std::vector<WindowSample>& windows, const ModelConfig& config,
                 const NormStats& stats, const std::string& target_name,
                 std::optional<WindowRange> range = std::nullopt);

struct RunStats {
    double mean = 0.0;
    double std = 0.0;  // sample (n - 1)
};
RunStats run_stats(std::span<const double> values);

// --- spike detection --------------------------------------------------------

struct SpikeCase {
    double last_input = 0.0;  // last observed target value of the history
    std::vector<double> prediction;
    std::vector<double> truth;
};

struct SpikeCaseResult {
    bool truth_spike = false;  // max(truth) >= ratio * last_input
    bool flagged = false;      // max(prediction) >= ratio * last_input
    std::optional<std::size_t> peak_timing_error;  // weeks, for true positives
};

struct SpikeReport {
    double threshold_ratio = 1.5;
    std::size_t true_positives = 0;
    std::size_t false_negatives = 0;
    std::size_t false_positives = 0;
    std::size_t true_negatives = 0;
    std::optional<double> mean_peak_timing_error;
    std::vector<SpikeCaseResult> cases;

    nlohmann::ordered_json to_json() const;
};

SpikeReport spike_score(std::span<const SpikeCase> cases, double threshold_ratio = 1.5);

// Window (index into make_windows output for `split`) whose history ends at
// the onset of the largest spike: the last row before the split's maximum
// whose value is at or below the split median, subject to the maximum lying
// inside the horizon.
std::size_t largest_spike_window(const TimeSeriesDataset& split, const WindowSpec& spec);

}  // namespace crosslag
