#include "crosslag/model/experiment.hpp"

#include "crosslag/errors.hpp"

namespace crosslag {

std::vector<WindowSample> windows_for(const TimeSeriesDataset& split, const NormStats& stats, const WindowSpec& spec) {
    const TimeSeriesDataset norm = apply_normalizer(split, stats);
    return make_windows(norm, encode_timestamps(split, stats), spec);
}

PreparedData prepare_data(const TimeSeriesDataset& ds, const std::vector<std::string>& features,
                          const WindowSpec& windows, const SplitRatios& ratios) {
    PreparedData p;
    const TimeSeriesDataset selected = features.empty() ? ds : ds.select(features);
    p.features = selected.feature_names;
    p.raw = chronological_split(selected, ratios);
    p.stats = fit_normalizer(p.raw.train);
    const auto build = [&](const TimeSeriesDataset& split, const char* name) {
        try {
            return windows_for(split, p.stats, windows);
        } catch (const ConfigError& e) {
            throw ConfigError(std::string(name) + " split: " + e.what());
        }
    };
    p.train = build(p.raw.train, "train");
    p.val = build(p.raw.val, "val");
    p.test = build(p.raw.test, "test");
    return p;
}

nlohmann::ordered_json MultiRunReport::to_json() const {
    nlohmann::ordered_json j;
    j["complete"] = complete;
    auto& rows = j["runs"] = nlohmann::ordered_json::array();
    for (const auto& r : runs) {
        nlohmann::ordered_json row;
        row["seed"] = r.seed;
        row["ok"] = r.ok;
        if (!r.ok) row["error"] = r.error;
        if (r.ok) {
            row["mse"] = r.test.mse;
            row["mae"] = r.test.mae;
            row["best_epoch"] = r.best_epoch;
            if (r.spike_window) {
                row["spike_mse"] = r.spike_window->mse;
                row["spike_mae"] = r.spike_window->mae;
            }
        }
        rows.push_back(std::move(row));
    }
    j["aggregate"] = {{"mse_mean", mse.mean}, {"mse_std", mse.std}, {"mae_mean", mae.mean}, {"mae_std", mae.std}};
    if (spike_mse && spike_mae) {
        j["aggregate"]["spike_mse_mean"] = spike_mse->mean;
        j["aggregate"]["spike_mse_std"] = spike_mse->std;
        j["aggregate"]["spike_mae_mean"] = spike_mae->mean;
        j["aggregate"]["spike_mae_std"] = spike_mae->std;
    }
    return j;
}

MultiRunReport aggregate_runs(std::vector<RunSummary> runs) {
    MultiRunReport report;
    std::vector<double> mses, maes, smses, smaes;
    for (const auto& r : runs) {
        if (!r.ok) {
            report.complete = false;
            continue;
        }
        mses.push_back(r.test.mse);
        maes.push_back(r.test.mae);
        if (r.spike_window) {
            smses.push_back(r.spike_window->mse);
            smaes.push_back(r.spike_window->mae);
        }
    }
    report.mse = run_stats(mses);
    report.mae = run_stats(maes);
    if (!smses.empty()) {
        report.spike_mse = run_stats(smses);
        report.spike_mae = run_stats(smaes);
    }
    report.runs = std::move(runs);
    return report;
}

MultiRunReport multi_run(const PreparedData& data, const ModelConfig& config, const TrainConfig& tc,
                         std::size_t n_runs, std::uint64_t base_seed, std::optional<WindowRange> spike_window) {
    if (n_runs < 2) throw ConfigError("multi_run: n_runs must be >= 2");
    std::vector<RunSummary> runs;
    for (std::size_t i = 0; i < n_runs; ++i) {
        RunSummary r;
        r.seed = base_seed + i;
        try {
            TrainConfig run_tc = tc;
            run_tc.seed = r.seed;
            const TrainResult trained = train(init_model(config, r.seed), data.train, data.val, config, run_tc);
            r.test = evaluate(trained.best, data.test, config, data.stats, data.raw.test.target_name);
            if (spike_window) {
                r.spike_window =
                    evaluate(trained.best, data.test, config, data.stats, data.raw.test.target_name, spike_window);
            }
            r.best_epoch = trained.best_epoch;
            r.ok = true;
        } catch (const Error& e) {
            r.error = e.what();
        }
        runs.push_back(std::move(r));
    }
    return aggregate_runs(std::move(runs));
}

}  // namespace crosslag
