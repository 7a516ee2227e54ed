#include "crosslag/model/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "crosslag/errors.hpp"

namespace crosslag {

nlohmann::ordered_json Metrics::to_json() const {
    nlohmann::ordered_json j;
    j["mse"] = mse;
    j["mae"] = mae;
    j["points"] = points;
    auto& rows = j["per_window"] = nlohmann::ordered_json::array();
    for (const auto& w : per_window) rows.push_back({{"window", w.window}, {"mse", w.mse}, {"mae", w.mae}});
    return j;
}

Metrics compute_metrics(const std::vector<std::vector<double>>& predictions,
                        const std::vector<std::vector<double>>& truth, std::size_t first_window_index) {
    if (predictions.size() != truth.size()) throw DimensionError("compute_metrics: prediction/truth count mismatch");
    if (predictions.empty()) throw ConfigError("compute_metrics: no windows");
    Metrics m;
    double se = 0.0, ae = 0.0;
    for (std::size_t w = 0; w < predictions.size(); ++w) {
        if (predictions[w].size() != truth[w].size() || truth[w].empty()) {
            throw DimensionError("compute_metrics: horizon mismatch in window " + std::to_string(w));
        }
        double wse = 0.0, wae = 0.0;
        for (std::size_t h = 0; h < truth[w].size(); ++h) {
            const double d = predictions[w][h] - truth[w][h];
            wse += d * d;
            wae += std::abs(d);
        }
        const auto n = static_cast<double>(truth[w].size());
        m.per_window.push_back({first_window_index + w, wse / n, wae / n});
        se += wse;
        ae += wae;
        m.points += truth[w].size();
    }
    m.mse = se / static_cast<double>(m.points);
    m.mae = ae / static_cast<double>(m.points);
    return m;
}

std::vector<std::vector<double>> predict_denormalized(const ModelParams& params,
                                                      const std::vector<WindowSample>& windows,
                                                      const ModelConfig& config, const ColumnStats& target_stats) {
    std::vector<std::vector<double>> out;
    out.reserve(windows.size());
    for (const auto& w : windows) out.push_back(denormalize(predict(params, w, config), target_stats));
    return out;
}

Metrics evaluate(const ModelParams& params, const std::vector<WindowSample>& windows, const ModelConfig& config,
                 const NormStats& stats, const std::string& target_name, std::optional<WindowRange> range) {
    if (windows.empty()) throw ConfigError("evaluate: no windows");
    if (!stats.contains(target_name)) throw ConfigError("evaluate: normalization statistics missing for target");
    const ColumnStats& ts = stats.at(target_name);
    WindowRange r = range.value_or(WindowRange{0, windows.size()});
    if (r.begin >= r.end || r.end > windows.size()) {
        throw ConfigError("evaluate: window range [" + std::to_string(r.begin) + ", " + std::to_string(r.end) +
                          ") outside [0, " + std::to_string(windows.size()) + ")");
    }
    const std::vector<WindowSample> subset(windows.begin() + static_cast<std::ptrdiff_t>(r.begin),
                                           windows.begin() + static_cast<std::ptrdiff_t>(r.end));
    std::vector<std::vector<double>> truth;
    for (const auto& w : subset) truth.push_back(denormalize(w.x_future.storage(), ts));
    return compute_metrics(predict_denormalized(params, subset, config, ts), truth, r.begin);
}

RunStats run_stats(std::span<const double> values) {
    if (values.empty()) return {};
    const auto n = static_cast<double>(values.size());
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    if (values.size() < 2) return {mean, 0.0};
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    return {mean, std::sqrt(var / (n - 1.0))};
}

nlohmann::ordered_json SpikeReport::to_json() const {
    nlohmann::ordered_json j;
    j["threshold_ratio"] = threshold_ratio;
    j["true_positives"] = true_positives;
    j["false_negatives"] = false_negatives;
    j["false_positives"] = false_positives;
    j["true_negatives"] = true_negatives;
    j["mean_peak_timing_error"] = mean_peak_timing_error ? nlohmann::ordered_json(*mean_peak_timing_error)
                                                         : nlohmann::ordered_json(nullptr);
    return j;
}

SpikeReport spike_score(std::span<const SpikeCase> cases, double threshold_ratio) {
    SpikeReport r;
    r.threshold_ratio = threshold_ratio;
    double timing_sum = 0.0;
    for (const auto& c : cases) {
        if (c.prediction.size() != c.truth.size() || c.truth.empty()) {
            throw DimensionError("spike_score: prediction and truth must be aligned and non-empty");
        }
        const double bar = threshold_ratio * c.last_input;
        const auto pmax = std::max_element(c.prediction.begin(), c.prediction.end());
        const auto tmax = std::max_element(c.truth.begin(), c.truth.end());
        SpikeCaseResult res;
        res.truth_spike = *tmax >= bar;
        res.flagged = *pmax >= bar;
        if (res.truth_spike && res.flagged) {
            const auto dp = pmax - c.prediction.begin();
            const auto dt = tmax - c.truth.begin();
            res.peak_timing_error = static_cast<std::size_t>(std::abs(dp - dt));
            timing_sum += static_cast<double>(*res.peak_timing_error);
            ++r.true_positives;
        } else if (res.truth_spike) {
            ++r.false_negatives;
        } else if (res.flagged) {
            ++r.false_positives;
        } else {
            ++r.true_negatives;
        }
        r.cases.push_back(res);
    }
    if (r.true_positives > 0) r.mean_peak_timing_error = timing_sum / static_cast<double>(r.true_positives);
    return r;
}

std::size_t largest_spike_window(const TimeSeriesDataset& split, const WindowSpec& spec) {
    const std::size_t count = window_count(split.rows(), spec);
    const auto& y = split.target;
    // Peaks must sit inside some window's horizon.
    const std::size_t lo = spec.seq_len;
    const auto peak_it = std::max_element(y.begin() + static_cast<std::ptrdiff_t>(lo), y.end());
    const auto peak = static_cast<std::size_t>(peak_it - y.begin());

    std::vector<double> sorted = y;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2), sorted.end());
    const double median = sorted[sorted.size() / 2];

    // History end e satisfies peak - pred_len <= e <= peak - 1 and e >= seq_len - 1.
    const std::size_t earliest = std::max(peak >= spec.pred_len ? peak - spec.pred_len : 0, spec.seq_len - 1);
    std::size_t end = earliest;
    for (std::size_t e = peak - 1; e + 1 > earliest; --e) {
        if (y[e] <= median) {
            end = e;
            break;
        }
        if (e == 0) break;
    }
    const std::size_t window = end + 1 - spec.seq_len;
    return std::min(window, count - 1);
}

}  // namespace crosslag
