#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "crosslag/data/dataset.hpp"

namespace crosslag {

// An exogenous driver: AR(1) process plus an annual sinusoid.
struct DriverSpec {
    std::string name;
    double ar_coef = 0.8;
    double noise_std = 1.0;
    double seasonal_amplitude = 1.0;
    double seasonal_period = 52.0;
    double seasonal_phase = 0.0;  // radians
};

// Outbreak episodes. Each episode adds a Gaussian bump to every weighted
// driver, centred `lag_f` weeks before the episode peak, so all lagged
// bumps line up at the peak.
//
// mode "additive": bump heights are chosen so the linear weights alone raise
// the target by `target_gain` at the peak.
// mode "coincidence": every driver bump has height `bump_amplitude` and the
// target additionally rises by target_gain * prod_f b_f(t - lag_f), where
// b_f is driver f's unit bump profile. A rise therefore needs all lagged
// drivers at once. Decoy episodes bump a single driver and leave the
// outbreak term at zero.
struct SpikeSpec {
    std::size_t count = 0;
    double width = 2.0;         // bump standard deviation, weeks
    double target_gain = 400.0; // rise of the target at the peak
    double jitter = 0.25;       // peak position jitter, fraction of the episode spacing
    std::string mode = "additive";
    double bump_amplitude = 4.0;  // coincidence mode only
    std::size_t decoys = 0;       // coincidence mode only
};

struct SynthSpec {
    std::vector<DriverSpec> drivers;
    std::vector<int> lags;        // true lag per driver, weeks
    std::vector<double> weights;  // 0 makes an independent (uninformative) column
    double noise_std = 0.0;
    double baseline = 200.0;
    std::size_t length = 1000;
    std::uint64_t seed = 0;
    int start_year = 2000;
    std::string target_name = "cases";
    SpikeSpec spikes;

    void validate() const;
    nlohmann::ordered_json to_json() const;
    static SynthSpec from_json(const nlohmann::json& j);
};

// Ground truth recorded alongside a generated dataset.
struct SynthMetadata {
    std::vector<std::string> drivers;
    std::vector<int> lags;
    std::vector<double> weights;
    std::vector<std::size_t> spike_peaks;  // row indices
    std::vector<std::size_t> decoy_peaks;
    std::uint64_t seed = 0;

    nlohmann::ordered_json to_json() const;
};

struct SynthResult {
    TimeSeriesDataset dataset;
    SynthMetadata metadata;
};

// target_t = max(0, baseline + sum_f w_f * driver_f[t - lag_f] + noise_t).
// Driver history before row 0 comes from a burn-in, so the relation holds for
// every row. 52 weeks per year.
SynthResult generate_synthetic(const SynthSpec& spec);

// Two weighted drivers at lags {4, 8}, baseline 200 and coincidence-mode
// outbreak episodes peaking near 600, 1000 rows.
SynthSpec default_outbreak_spec(std::uint64_t seed = 7);

}  // namespace crosslag
