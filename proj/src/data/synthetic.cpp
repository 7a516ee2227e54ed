#include "crosslag/data/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "crosslag/core/rng.hpp"
#include "crosslag/errors.hpp"

namespace crosslag {

void SynthSpec::validate() const {
    if (drivers.empty()) throw ConfigError("synthetic spec: at least one driver required");
    if (lags.size() != drivers.size() || weights.size() != drivers.size()) {
        throw ConfigError("synthetic spec: drivers, lags and weights must have equal length");
    }
    for (int l : lags) {
        if (l < 0) throw ConfigError("synthetic spec: negative lag " + std::to_string(l));
    }
    for (const auto& d : drivers) {
        if (d.name.empty()) throw ConfigError("synthetic spec: driver without a name");
        if (d.name == target_name || d.name == "week" || d.name == "year") {
            throw ConfigError("synthetic spec: driver name '" + d.name + "' collides with a reserved column");
        }
        if (std::abs(d.ar_coef) >= 1.0) throw ConfigError("synthetic spec: |ar_coef| must be < 1 for " + d.name);
        if (d.noise_std < 0 || d.seasonal_period <= 0) throw ConfigError("synthetic spec: bad driver " + d.name);
    }
    if (length == 0) throw ConfigError("synthetic spec: length must be >= 1");
    if (noise_std < 0) throw ConfigError("synthetic spec: noise_std must be >= 0");
    if (spikes.count > 0 && spikes.width <= 0) throw ConfigError("synthetic spec: spike width must be > 0");
    if (spikes.mode != "additive" && spikes.mode != "coincidence") {
        throw ConfigError("synthetic spec: spike mode must be 'additive' or 'coincidence', got '" + spikes.mode + "'");
    }
    if (spikes.mode == "additive" && spikes.decoys > 0) {
        throw ConfigError("synthetic spec: decoys require coincidence mode");
    }
    if (spikes.count > 0 && std::all_of(weights.begin(), weights.end(), [](double w) { return w == 0.0; })) {
        throw ConfigError("synthetic spec: spikes need at least one weighted driver");
    }
}

nlohmann::ordered_json SynthSpec::to_json() const {
    nlohmann::ordered_json j;
    j["drivers"] = nlohmann::ordered_json::array();
    for (const auto& d : drivers) {
        j["drivers"].push_back({{"name", d.name},
                                {"ar_coef", d.ar_coef},
                                {"noise_std", d.noise_std},
                                {"seasonal_amplitude", d.seasonal_amplitude},
                                {"seasonal_period", d.seasonal_period},
                                {"seasonal_phase", d.seasonal_phase}});
    }
    j["lags"] = lags;
    j["weights"] = weights;
    j["noise_std"] = noise_std;
    j["baseline"] = baseline;
    j["length"] = length;
    j["seed"] = seed;
    j["start_year"] = start_year;
    j["target_name"] = target_name;
    j["spikes"] = {{"count", spikes.count},
                   {"width", spikes.width},
                   {"target_gain", spikes.target_gain},
                   {"jitter", spikes.jitter},
                   {"mode", spikes.mode},
                   {"bump_amplitude", spikes.bump_amplitude},
                   {"decoys", spikes.decoys}};
    return j;
}

SynthSpec SynthSpec::from_json(const nlohmann::json& j) {
    SynthSpec s;
    try {
        for (const auto& d : j.at("drivers")) {
            DriverSpec ds;
            ds.name = d.at("name").get<std::string>();
            ds.ar_coef = d.value("ar_coef", ds.ar_coef);
            ds.noise_std = d.value("noise_std", ds.noise_std);
            ds.seasonal_amplitude = d.value("seasonal_amplitude", ds.seasonal_amplitude);
            ds.seasonal_period = d.value("seasonal_period", ds.seasonal_period);
            ds.seasonal_phase = d.value("seasonal_phase", ds.seasonal_phase);
            s.drivers.push_back(std::move(ds));
        }
        s.lags = j.at("lags").get<std::vector<int>>();
        s.weights = j.at("weights").get<std::vector<double>>();
        s.noise_std = j.value("noise_std", s.noise_std);
        s.baseline = j.value("baseline", s.baseline);
        s.length = j.value("length", s.length);
        s.seed = j.value("seed", s.seed);
        s.start_year = j.value("start_year", s.start_year);
        s.target_name = j.value("target_name", s.target_name);
        if (j.contains("spikes")) {
            const auto& sp = j.at("spikes");
            s.spikes.count = sp.value("count", s.spikes.count);
            s.spikes.width = sp.value("width", s.spikes.width);
            s.spikes.target_gain = sp.value("target_gain", s.spikes.target_gain);
            s.spikes.jitter = sp.value("jitter", s.spikes.jitter);
            s.spikes.mode = sp.value("mode", s.spikes.mode);
            s.spikes.bump_amplitude = sp.value("bump_amplitude", s.spikes.bump_amplitude);
            s.spikes.decoys = sp.value("decoys", s.spikes.decoys);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("synthetic spec: ") + e.what());
    }
    s.validate();
    return s;
}

nlohmann::ordered_json SynthMetadata::to_json() const {
    nlohmann::ordered_json j;
    j["drivers"] = drivers;
    j["true_lags"] = lags;
    j["weights"] = weights;
    j["spike_peaks"] = spike_peaks;
    j["decoy_peaks"] = decoy_peaks;
    j["seed"] = seed;
    return j;
}

namespace {

// `count` positions spread evenly over [0, length) with the k-th centred at
// (k + shift) * spacing, jittered.
std::vector<std::size_t> episode_positions(std::size_t count, std::size_t length, double shift, double jitter,
                                           Rng& rng) {
    std::vector<std::size_t> out;
    if (count == 0) return out;
    const double spacing = static_cast<double>(length) / static_cast<double>(count);
    for (std::size_t k = 0; k < count; ++k) {
        const double centre = (static_cast<double>(k) + shift) * spacing;
        const double offset = rng.uniform(-jitter, jitter) * spacing;
        const double p = std::clamp(std::round(centre + offset), 0.0, static_cast<double>(length - 1));
        out.push_back(static_cast<std::size_t>(p));
    }
    return out;
}

}  // namespace

SynthResult generate_synthetic(const SynthSpec& spec) {
    spec.validate();
    const std::size_t nf = spec.drivers.size();
    const std::size_t burn = static_cast<std::size_t>(*std::max_element(spec.lags.begin(), spec.lags.end())) + 100;
    const std::size_t total = burn + spec.length;
    const bool coincidence = spec.spikes.mode == "coincidence";

    Rng spike_rng(mix_seed(spec.seed, 1000));
    const std::vector<std::size_t> peaks =
        episode_positions(spec.spikes.count, spec.length, 0.5, spec.spikes.jitter, spike_rng);
    // Decoys sit between episodes; each one bumps a single weighted driver.
    const std::vector<std::size_t> decoys =
        episode_positions(spec.spikes.decoys, spec.length, 1.0, spec.spikes.jitter * 0.5, spike_rng);

    std::vector<std::size_t> weighted;
    for (std::size_t f = 0; f < nf; ++f) {
        if (spec.weights[f] != 0.0) weighted.push_back(f);
    }
    const auto active = static_cast<double>(weighted.size());

    const auto bump = [&](std::size_t t, std::size_t peak, std::size_t f) {
        const double centre = static_cast<double>(burn + peak) - spec.lags[f];
        const double z = (static_cast<double>(t) - centre) / spec.spikes.width;
        return std::exp(-0.5 * z * z);
    };

    // Unit bump profile per driver, and the driver series.
    std::vector<std::vector<double>> profile(nf, std::vector<double>(total, 0.0));
    std::vector<std::vector<double>> drivers(nf, std::vector<double>(total, 0.0));
    for (std::size_t f = 0; f < nf; ++f) {
        const DriverSpec& d = spec.drivers[f];
        Rng rng(mix_seed(spec.seed, f));
        double ar = 0.0;
        double amp = 0.0;
        if (spec.weights[f] != 0.0) {
            amp = coincidence ? spec.spikes.bump_amplitude : spec.spikes.target_gain / (active * spec.weights[f]);
        }
        for (std::size_t t = 0; t < total; ++t) {
            ar = d.ar_coef * ar + d.noise_std * rng.normal();
            const double phase = 2.0 * std::numbers::pi * static_cast<double>(t) / d.seasonal_period + d.seasonal_phase;
            double b = 0.0;
            if (amp != 0.0) {
                for (std::size_t p : peaks) b += bump(t, p, f);
                for (std::size_t k = 0; k < decoys.size(); ++k) {
                    if (weighted[k % weighted.size()] == f) b += bump(t, decoys[k], f);
                }
            }
            profile[f][t] = b;
            drivers[f][t] = ar + d.seasonal_amplitude * std::sin(phase) + amp * b;
        }
    }

    SynthResult result;
    TimeSeriesDataset& ds = result.dataset;
    ds.target_name = spec.target_name;
    Rng noise_rng(mix_seed(spec.seed, 2000));
    for (std::size_t i = 0; i < spec.length; ++i) {
        const std::size_t t = burn + i;
        double v = spec.baseline;
        for (std::size_t f = 0; f < nf; ++f) v += spec.weights[f] * drivers[f][t - static_cast<std::size_t>(spec.lags[f])];
        if (coincidence && !peaks.empty()) {
            double prod = 1.0;
            for (std::size_t f : weighted) prod *= profile[f][t - static_cast<std::size_t>(spec.lags[f])];
            v += spec.spikes.target_gain * prod;
        }
        if (spec.noise_std > 0) v += noise_rng.normal(0.0, spec.noise_std);
        ds.target.push_back(std::max(0.0, v));
        ds.week.push_back(static_cast<int>(i % 52) + 1);
        ds.year.push_back(spec.start_year + static_cast<int>(i / 52));
    }
    for (std::size_t f = 0; f < nf; ++f) {
        ds.feature_names.push_back(spec.drivers[f].name);
        ds.features.emplace_back(drivers[f].begin() + static_cast<std::ptrdiff_t>(burn), drivers[f].end());
    }
    ds.validate();

    SynthMetadata& meta = result.metadata;
    for (const auto& d : spec.drivers) meta.drivers.push_back(d.name);
    meta.lags = spec.lags;
    meta.weights = spec.weights;
    meta.spike_peaks = peaks;
    meta.decoy_peaks = decoys;
    meta.seed = spec.seed;
    return result;
}

SynthSpec default_outbreak_spec(std::uint64_t seed) {
    SynthSpec s;
    s.drivers = {
        {"sst_anomaly", 0.9, 0.4, 1.0, 52.0, 0.0},
        {"rainfall", 0.7, 0.6, 0.8, 52.0, 1.3},
    };
    s.lags = {4, 8};
    s.weights = {15.0, 10.0};
    s.noise_std = 10.0;
    s.baseline = 200.0;
    s.length = 1000;
    s.seed = seed;
    s.spikes.count = 12;
    s.spikes.width = 2.0;
    s.spikes.target_gain = 400.0;
    s.spikes.jitter = 0.25;
    s.spikes.mode = "coincidence";
    s.spikes.bump_amplitude = 4.0;
    s.spikes.decoys = 12;
    return s;
}

}  // namespace crosslag
