#include "crosslag/cli/cli.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "crosslag/data/dataset.hpp"
#include "crosslag/data/mutual_info.hpp"
#include "crosslag/data/synthetic.hpp"
#include "crosslag/errors.hpp"
#include "crosslag/io/checkpoint.hpp"
#include "crosslag/io/svg_chart.hpp"
#include "crosslag/model/experiment.hpp"
#include "crosslag/version.hpp"

namespace crosslag::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

struct Failure : std::runtime_error {
    int code;
    Failure(int c, const std::string& msg) : std::runtime_error(msg), code(c) {}
};

[[noreturn]] void fail(int code, const std::string& msg) { throw Failure(code, msg); }

std::string fixed(double v, int prec) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(prec) << v;
    return os.str();
}

std::uint64_t parse_seed(const std::string& text, const std::string& what) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size()) fail(kUsage, what + ": not a seed: '" + text + "'");
    return v;
}

std::optional<std::uint64_t> env_seed() {
    const char* s = std::getenv("CROSSLAG_SEED");
    if (s == nullptr || *s == '\0') return std::nullopt;
    return parse_seed(s, "CROSSLAG_SEED");
}

nlohmann::json read_json(const std::string& path, const std::string& what) {
    std::ifstream in(path);
    if (!in) fail(kUsage, "cannot open " + what + " '" + path + "'");
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        fail(kUsage, what + " '" + path + "' is not valid JSON: " + e.what());
    }
}

void write_file(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(kFailure, "cannot write '" + path.string() + "'");
    out << text;
}

std::string timestamp_utc() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

TimeSeriesDataset load_data(const std::string& path, const std::string& target) {
    DatasetSchema schema;
    schema.target_column = target;
    try {
        return load_dataset(path, schema);
    } catch (const LoadError& e) {
        fail(kUsage, e.what());
    }
}

std::vector<std::string> split_list(const std::vector<std::string>& items) {
    std::vector<std::string> out;
    for (const auto& item : items) {
        std::stringstream ss(item);
        std::string part;
        while (std::getline(ss, part, ',')) {
            if (!part.empty()) out.push_back(part);
        }
    }
    return out;
}

std::vector<int> parse_int_list(const std::string& text) {
    std::vector<int> out;
    for (const auto& part : split_list({text})) {
        int v = 0;
        const auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
        if (ec != std::errc() || ptr != part.data() + part.size()) fail(kUsage, "not an integer list: '" + text + "'");
        out.push_back(v);
    }
    return out;
}

// ---------------------------------------------------------------- select-features

struct SelectOpts {
    std::string data, target = "cases", json;
    int k = 3;
    std::size_t top_k = 0;
    double min_mi = 0.0;
    std::vector<std::string> pinned;
    std::string seed;
    CLI::Option *top_k_opt = nullptr, *min_mi_opt = nullptr, *seed_opt = nullptr;
};

int cmd_select(const SelectOpts& o, std::ostream& out) {
    if (o.k < 1) fail(kUsage, "--k-neighbors must be >= 1");
    const std::uint64_t seed = o.seed_opt->count() ? parse_seed(o.seed, "--seed") : env_seed().value_or(0);
    const TimeSeriesDataset ds = load_data(o.data, o.target);
    if (ds.num_features() == 0) fail(kUsage, "'" + o.data + "' has no exogenous feature columns");
    const MIResult mi = compute_feature_mi(ds, o.k, seed);

    SelectionCriteria crit;
    if (o.top_k_opt->count()) crit.top_k = o.top_k;
    if (o.min_mi_opt->count()) crit.min_mi = o.min_mi;
    crit.pinned = split_list(o.pinned);
    std::vector<std::string> selected;
    try {
        selected = select_features(mi, crit);
    } catch (const ConfigError& e) {
        fail(kUsage, e.what());
    }

    std::size_t width = 7;
    for (const auto& f : mi.features) width = std::max(width, f.name.size());
    out << std::left << std::setw(6) << "rank" << std::setw(static_cast<int>(width) + 2) << "feature"
        << "MI (nats)\n";
    for (const auto& name : mi.ranking()) {
        const auto& f = mi.features[ds.feature_index(name)];
        out << std::left << std::setw(6) << f.rank << std::setw(static_cast<int>(width) + 2) << f.name
            << fixed(f.mi, 2) << '\n';
    }
    out << "selected:";
    for (const auto& s : selected) out << ' ' << s;
    out << '\n';

    if (!o.json.empty()) {
        ojson j = mi.to_json();
        j["target"] = o.target;
        j["seed"] = seed;
        j["selected"] = selected;
        write_file(o.json, j.dump(2) + "\n");
    }
    return kOk;
}

// ---------------------------------------------------------------- synth

struct SynthOpts {
    std::string spec, out, meta, seed;
    CLI::Option* seed_opt = nullptr;
};

constexpr double kSpikeRatio = 2.5;

int cmd_synth(const SynthOpts& o, std::ostream& out) {
    SynthSpec spec;
    bool spec_has_seed = false;
    if (o.spec.empty()) {
        spec = default_outbreak_spec();
    } else {
        const nlohmann::json j = read_json(o.spec, "synthetic spec");
        try {
            spec = SynthSpec::from_json(j);
        } catch (const ConfigError& e) {
            fail(kUsage, e.what());
        }
        spec_has_seed = j.contains("seed");
    }
    if (o.seed_opt->count()) {
        spec.seed = parse_seed(o.seed, "--seed");
    } else if (!spec_has_seed) {
        if (const auto s = env_seed()) spec.seed = *s;
    }

    SynthResult r;
    try {
        r = generate_synthetic(spec);
    } catch (const ConfigError& e) {
        fail(kUsage, e.what());
    }
    const fs::path csv = o.out;
    if (csv.has_parent_path()) fs::create_directories(csv.parent_path());
    save_dataset(csv, r.dataset);

    ojson meta;
    meta["spec"] = spec.to_json();
    meta["rows"] = r.dataset.rows();
    meta["metadata"] = r.metadata.to_json();

    // Re-read what was written and check the outbreak magnitude.
    const TimeSeriesDataset back = load_dataset(csv, DatasetSchema{"week", "year", spec.target_name});
    std::vector<double> sorted = back.target;
    std::sort(sorted.begin(), sorted.end());
    const double median = sorted.size() % 2 ? sorted[sorted.size() / 2]
                                            : 0.5 * (sorted[sorted.size() / 2 - 1] + sorted[sorted.size() / 2]);
    const double ratio = median > 0 ? sorted.back() / median : std::numeric_limits<double>::infinity();
    meta["max_over_median"] = ratio;
    const fs::path meta_path = o.meta.empty() ? fs::path(o.out + ".meta.json") : fs::path(o.meta);
    write_file(meta_path, meta.dump(2) + "\n");

    out << "wrote " << back.rows() << " rows to " << csv.string() << " (metadata " << meta_path.string() << ")\n";
    out << "max/median target ratio " << fixed(ratio, 3) << '\n';
    if (spec.spikes.count > 0 && !(ratio >= kSpikeRatio)) {
        fail(kUsage, "spike check failed: max/median target ratio " + fixed(ratio, 3) + " < " + fixed(kSpikeRatio, 1));
    }
    return kOk;
}

// ---------------------------------------------------------------- train

struct TrainOpts {
    std::string data, config, train_config, out_dir, manifest, target = "cases", lags, seed;
    std::vector<std::string> features;
    std::size_t epochs = 0, patience = 0, batch_size = 0, d_model = 0, d_ff = 0;
    int max_lag = 0;
    double lr = 0, dropout = 0;
    CLI::Option *epochs_opt = nullptr, *patience_opt = nullptr, *batch_opt = nullptr, *d_model_opt = nullptr,
                *d_ff_opt = nullptr, *max_lag_opt = nullptr, *lr_opt = nullptr, *dropout_opt = nullptr,
                *seed_opt = nullptr, *lags_opt = nullptr;
    std::vector<std::string> argv;
};

struct ResolvedRun {
    std::string data, target;
    std::vector<std::string> features;
    ModelConfig model;
    TrainConfig train;
};

ResolvedRun resolve_from_manifest(const TrainOpts& o) {
    const nlohmann::json m = read_json(o.manifest, "manifest");
    ResolvedRun r;
    try {
        if (m.at("tool").get<std::string>() != "crosslag") fail(kUsage, "'" + o.manifest + "' is not a crosslag manifest");
        r.data = m.at("inputs").at("data").at("path").get<std::string>();
        r.target = m.at("target").get<std::string>();
        r.features = m.at("features").get<std::vector<std::string>>();
        r.model = ModelConfig::from_json(m.at("model_config"));
        r.train = TrainConfig::from_json(m.at("train_config"));
        const std::string digest = m.at("inputs").at("data").at("sha256").get<std::string>();
        if (!fs::exists(r.data)) fail(kUsage, "manifest data file '" + r.data + "' not found");
        if (sha256_file(r.data) != digest) {
            fail(kIncompatible, "data file '" + r.data + "' does not match the manifest digest");
        }
    } catch (const nlohmann::json::exception& e) {
        fail(kUsage, std::string("malformed manifest: ") + e.what());
    } catch (const ConfigError& e) {
        fail(kUsage, std::string("manifest: ") + e.what());
    }
    return r;
}

ResolvedRun resolve_from_flags(const TrainOpts& o) {
    if (o.data.empty()) fail(kUsage, "train: --data is required (or --manifest)");
    ResolvedRun r;
    r.data = o.data;
    r.target = o.target;
    r.features = split_list(o.features);
    bool patience_given = false, seed_given = false;
    try {
        if (!o.config.empty()) r.model = ModelConfig::from_json(read_json(o.config, "model config"));
        if (!o.train_config.empty()) {
            const nlohmann::json tj = read_json(o.train_config, "train config");
            r.train = TrainConfig::from_json(tj);
            patience_given = tj.contains("patience");
            seed_given = tj.contains("seed");
        }
        if (o.d_model_opt->count()) r.model.d_model = o.d_model;
        if (o.d_ff_opt->count()) r.model.d_ff = o.d_ff;
        if (o.dropout_opt->count()) r.model.dropout = o.dropout;
        if (o.max_lag_opt->count()) r.model.lags = LagSpec::from_max_lag(o.max_lag);
        if (o.lags_opt->count()) r.model.lags = LagSpec::from_list(parse_int_list(o.lags));
        if (o.epochs_opt->count()) r.train.epochs = o.epochs;
        if (o.batch_opt->count()) r.train.batch_size = o.batch_size;
        if (o.lr_opt->count()) r.train.lr0 = o.lr;
        if (o.patience_opt->count()) {
            r.train.patience = o.patience;
            patience_given = true;
        }
    } catch (const ConfigError& e) {
        fail(kUsage, e.what());
    } catch (const nlohmann::json::exception& e) {
        fail(kUsage, std::string("config: ") + e.what());
    }
    if (!patience_given) r.train.patience = std::min(r.train.patience, r.train.epochs);
    if (o.seed_opt->count()) {
        r.train.seed = parse_seed(o.seed, "--seed");
    } else if (!seed_given) {
        r.train.seed = env_seed().value_or(0);
    }
    return r;
}

int cmd_train(const TrainOpts& o, std::ostream& out) {
    const ResolvedRun run = o.manifest.empty() ? resolve_from_flags(o) : resolve_from_manifest(o);
    try {
        run.model.validate();
        run.train.validate();
    } catch (const ConfigError& e) {
        fail(kUsage, e.what());
    }

    const TimeSeriesDataset ds = load_data(run.data, run.target);
    std::vector<std::string> features = run.features.empty() ? ds.feature_names : run.features;
    for (const auto& f : features) {
        if (std::find(ds.feature_names.begin(), ds.feature_names.end(), f) == ds.feature_names.end()) {
            fail(kUsage, "unknown feature '" + f + "' in '" + run.data + "'");
        }
    }
    if (features.empty()) fail(kIncompatible, "'" + run.data + "' has no exogenous feature columns");

    PreparedData data;
    try {
        data = prepare_data(ds, features, run.model.windows());
    } catch (const ConfigError& e) {
        fail(kIncompatible, std::string("insufficient data: ") + e.what());
    }

    const fs::path dir = o.out_dir;
    fs::create_directories(dir);
    ojson manifest;
    manifest["tool"] = "crosslag";
    manifest["version"] = kVersion;
    manifest["command_line"] = o.argv;
    manifest["created_at"] = timestamp_utc();
    manifest["seed"] = run.train.seed;
    manifest["inputs"]["data"] = {{"path", fs::absolute(run.data).lexically_normal().string()},
                                  {"sha256", sha256_file(run.data)}};
    manifest["target"] = run.target;
    manifest["features"] = features;
    manifest["model_config"] = run.model.to_json();
    manifest["train_config"] = run.train.to_json();
    manifest["splits"] = {{"train_rows", data.raw.train.rows()},
                          {"val_rows", data.raw.val.rows()},
                          {"test_rows", data.raw.test.rows()},
                          {"train_windows", data.train.size()},
                          {"val_windows", data.val.size()},
                          {"test_windows", data.test.size()}};
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");

    const TrainResult result = train(init_model(run.model, run.train.seed), data.train, data.val, run.model, run.train);

    Checkpoint ckpt;
    ckpt.config = run.model;
    ckpt.target_name = run.target;
    ckpt.features = features;
    ckpt.stats = data.stats;
    ckpt.params = result.best;
    save_checkpoint(dir / "checkpoint.json", ckpt);
    std::ostringstream hist;
    write_history_csv(hist, result.history);
    write_file(dir / "history.csv", hist.str());

    out << "epochs run " << result.history.size() << ", best epoch " << result.best_epoch
        << (result.stopped_early ? " (early stop)" : "") << '\n';
    out << "final val MSE " << format_double(result.best_val_mse) << " (normalized)\n";
    out << "checkpoint sha256 " << sha256_file(dir / "checkpoint.json") << '\n';
    return kOk;
}

// ---------------------------------------------------------------- shared by evaluate / predict

struct Loaded {
    Checkpoint ckpt;
    TimeSeriesDataset split;  // raw rows of the requested split
    std::vector<WindowSample> windows;
};

Loaded load_for_inference(const std::string& ckpt_path, const std::string& data_path, const std::string& split) {
    if (split != "train" && split != "val" && split != "test") fail(kUsage, "--split must be train, val or test");
    Loaded l;
    try {
        l.ckpt = load_checkpoint(ckpt_path);
    } catch (const ConfigError& e) {
        fail(kIncompatible, e.what());
    }
    const TimeSeriesDataset ds = load_data(data_path, l.ckpt.target_name);
    for (const auto& f : l.ckpt.features) {
        if (std::find(ds.feature_names.begin(), ds.feature_names.end(), f) == ds.feature_names.end()) {
            fail(kIncompatible, "checkpoint expects feature '" + f + "' which '" + data_path + "' does not have");
        }
    }
    try {
        const DatasetSplits splits = chronological_split(ds.select(l.ckpt.features));
        l.split = split == "train" ? splits.train : split == "val" ? splits.val : splits.test;
        l.windows = windows_for(l.split, l.ckpt.stats, l.ckpt.config.windows());
    } catch (const ConfigError& e) {
        fail(kIncompatible, std::string(split) + " split: " + e.what());
    }
    return l;
}

std::pair<std::size_t, std::size_t> parse_range(const std::string& text) {
    const auto colon = text.find(':');
    if (colon == std::string::npos) fail(kUsage, "--spike-window expects a:b, got '" + text + "'");
    const auto a = parse_int_list(text.substr(0, colon)), b = parse_int_list(text.substr(colon + 1));
    if (a.size() != 1 || b.size() != 1 || a[0] < 0 || b[0] < 0) fail(kUsage, "--spike-window expects a:b, got '" + text + "'");
    return {static_cast<std::size_t>(a[0]), static_cast<std::size_t>(b[0])};
}

// ---------------------------------------------------------------- evaluate

struct EvalOpts {
    std::string checkpoint, data, split = "test", spike_window, metrics, train_config, seed;
    double spike_ratio = 1.5;
    std::size_t runs = 0, epochs = 0;
    CLI::Option *runs_opt = nullptr, *epochs_opt = nullptr, *seed_opt = nullptr;
};

int cmd_evaluate(const EvalOpts& o, std::ostream& out) {
    const Loaded l = load_for_inference(o.checkpoint, o.data, o.split);
    const ModelConfig& cfg = l.ckpt.config;
    const ColumnStats& ts = l.ckpt.stats.at(l.ckpt.target_name);

    std::optional<WindowRange> range;
    if (!o.spike_window.empty()) {
        const auto [a, b] = parse_range(o.spike_window);
        if (a >= b || b > l.windows.size()) {
            fail(kUsage, "--spike-window " + o.spike_window + " outside the valid window range 0:" +
                             std::to_string(l.windows.size()));
        }
        range = WindowRange{a, b};
    }
    if (o.runs_opt->count() && o.runs < 2) fail(kUsage, "--runs must be >= 2");

    ojson j;
    j["checkpoint"] = o.checkpoint;
    j["split"] = o.split;
    j["windows"] = l.windows.size();
    const Metrics all = evaluate(l.ckpt.params, l.windows, cfg, l.ckpt.stats, l.ckpt.target_name);
    j["metrics"] = all.to_json();
    out << std::left << std::setw(14) << "scope" << std::setw(10) << "windows" << std::setw(14) << "MSE"
        << "MAE\n";
    out << std::left << std::setw(14) << o.split << std::setw(10) << l.windows.size() << std::setw(14)
        << fixed(all.mse, 2) << fixed(all.mae, 2) << '\n';

    if (range) {
        const Metrics sub = evaluate(l.ckpt.params, l.windows, cfg, l.ckpt.stats, l.ckpt.target_name, range);
        std::vector<SpikeCase> cases;
        for (std::size_t w = range->begin; w < range->end; ++w) {
            const auto& s = l.windows[w];
            cases.push_back({denormalize(s.x_hist.storage().back(), ts), denormalize(predict(l.ckpt.params, s, cfg), ts),
                             denormalize(s.x_future.storage(), ts)});
        }
        const SpikeReport rep = spike_score(cases, o.spike_ratio);
        j["spike_window"] = {{"begin", range->begin}, {"end", range->end}, {"metrics", sub.to_json()}};
        j["spike_report"] = rep.to_json();
        out << std::left << std::setw(14) << ("spike " + o.spike_window) << std::setw(10) << (range->end - range->begin)
            << std::setw(14) << fixed(sub.mse, 2) << fixed(sub.mae, 2) << '\n';
        out << "spike detection (ratio " << fixed(o.spike_ratio, 2) << "): TP " << rep.true_positives << "  FN "
            << rep.false_negatives << "  FP " << rep.false_positives << "  TN " << rep.true_negatives;
        if (rep.mean_peak_timing_error) out << "  mean peak timing error " << fixed(*rep.mean_peak_timing_error, 2) << " weeks";
        out << '\n';
    }

    if (o.runs_opt->count()) {
        TrainConfig tc;
        bool patience_given = false;
        if (!o.train_config.empty()) {
            const nlohmann::json tj = read_json(o.train_config, "train config");
            try {
                tc = TrainConfig::from_json(tj);
            } catch (const ConfigError& e) {
                fail(kUsage, e.what());
            }
            patience_given = tj.contains("patience");
        }
        if (o.epochs_opt->count()) tc.epochs = o.epochs;
        if (!patience_given) tc.patience = std::min(tc.patience, tc.epochs);
        try {
            tc.validate();
        } catch (const ConfigError& e) {
            fail(kUsage, e.what());
        }
        const std::uint64_t base = o.seed_opt->count() ? parse_seed(o.seed, "--seed") : env_seed().value_or(0);
        const TimeSeriesDataset ds = load_data(o.data, l.ckpt.target_name);
        PreparedData data;
        try {
            data = prepare_data(ds, l.ckpt.features, cfg.windows());
        } catch (const ConfigError& e) {
            fail(kIncompatible, std::string("insufficient data: ") + e.what());
        }
        if (o.split != "test") {
            data.test = o.split == "val" ? data.val : data.train;
        }
        const MultiRunReport rep = multi_run(data, cfg, tc, o.runs, base, range);
        j["multi_run"] = rep.to_json();
        out << "over " << o.runs << " runs (seeds " << base << ".." << base + o.runs - 1 << ")"
            << (rep.complete ? "" : ", INCOMPLETE") << ":\n";
        out << "  MSE " << fixed(rep.mse.mean, 2) << " ± " << fixed(rep.mse.std, 2) << '\n';
        out << "  MAE " << fixed(rep.mae.mean, 2) << " ± " << fixed(rep.mae.std, 2) << '\n';
        if (rep.spike_mse) {
            out << "  spike MSE " << fixed(rep.spike_mse->mean, 2) << " ± " << fixed(rep.spike_mse->std, 2) << '\n';
            out << "  spike MAE " << fixed(rep.spike_mae->mean, 2) << " ± " << fixed(rep.spike_mae->std, 2) << '\n';
        }
    }

    if (!o.metrics.empty()) write_file(o.metrics, j.dump(2) + "\n");
    return kOk;
}

// ---------------------------------------------------------------- predict

struct PredictOpts {
    std::string checkpoint, data, split = "test", out, plot, dump_attention;
    long long index = 0;
};

std::string cell(double v) { return std::isnan(v) ? std::string() : format_double(v); }

int cmd_predict(const PredictOpts& o, std::ostream& out) {
    const Loaded l = load_for_inference(o.checkpoint, o.data, o.split);
    if (o.index < 0 || static_cast<std::size_t>(o.index) >= l.windows.size()) {
        fail(kUsage, "--index " + std::to_string(o.index) + " out of range; valid windows are 0.." +
                         std::to_string(l.windows.size() - 1));
    }
    const auto idx = static_cast<std::size_t>(o.index);
    const WindowSample& s = l.windows[idx];
    const ModelConfig& cfg = l.ckpt.config;
    const ColumnStats& ts = l.ckpt.stats.at(l.ckpt.target_name);
    ForwardTrace trace;
    const std::vector<double> pred = denormalize(predict(l.ckpt.params, s, cfg, &trace), ts);
    const std::vector<double> hist = denormalize(s.x_hist.storage(), ts);
    const std::vector<double> truth = denormalize(s.x_future.storage(), ts);
    const std::string label = "Truth " + std::to_string(idx);

    std::ostringstream csv;
    csv << "# label: " << label << '\n';
    csv << "week_offset,history,truth,prediction\n";
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t t = 0; t < hist.size(); ++t) csv << t << ',' << cell(hist[t]) << ",,\n";
    for (std::size_t h = 0; h < pred.size(); ++h) {
        csv << hist.size() + h << ',' << cell(nan) << ',' << cell(truth[h]) << ',' << cell(pred[h]) << '\n';
    }
    if (o.out.empty()) {
        out << csv.str();
    } else {
        write_file(o.out, csv.str());
        out << label << ": wrote " << hist.size() + pred.size() << " rows to " << o.out << '\n';
    }

    if (!o.plot.empty()) {
        ChartSeries h{"history", {}, hist, "#000000", false};
        ChartSeries t{label, {}, truth, "#1f77b4", false};
        ChartSeries p{"prediction", {}, pred, "#ff7f0e", true};
        for (std::size_t i = 0; i < hist.size(); ++i) h.x.push_back(static_cast<double>(i));
        for (std::size_t i = 0; i < pred.size(); ++i) {
            t.x.push_back(static_cast<double>(hist.size() + i));
            p.x.push_back(static_cast<double>(hist.size() + i));
        }
        ChartOptions opts;
        opts.title = label;
        opts.y_label = l.ckpt.target_name;
        write_file(o.plot, render_line_chart({h, t, p}, opts));
    }

    if (!o.dump_attention.empty()) {
        ojson j;
        j["window"] = idx;
        j["label"] = label;
        j["split"] = o.split;
        j["cross_attention"] = trace.cross.to_json(l.ckpt.features);
        write_file(o.dump_attention, j.dump(2) + "\n");
    }
    return kOk;
}

}  // namespace

PredictionTable parse_prediction_csv(std::istream& in) {
    PredictionTable t;
    std::string line;
    bool header = false;
    const auto parse_cell = [](const std::string& c) {
        if (c.empty()) return std::numeric_limits<double>::quiet_NaN();
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(c.data(), c.data() + c.size(), v);
        if (ec != std::errc() || ptr != c.data() + c.size()) throw LoadError("prediction CSV: bad value '" + c + "'");
        return v;
    };
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            const std::string key = "# label: ";
            if (line.rfind(key, 0) == 0) t.label = line.substr(key.size());
            continue;
        }
        if (!header) {
            if (line != "week_offset,history,truth,prediction") throw LoadError("prediction CSV: unexpected header");
            header = true;
            continue;
        }
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string c;
        while (std::getline(ss, c, ',')) cells.push_back(c);
        while (cells.size() < 4) cells.emplace_back();
        t.week_offset.push_back(static_cast<int>(parse_cell(cells[0])));
        t.history.push_back(parse_cell(cells[1]));
        t.truth.push_back(parse_cell(cells[2]));
        t.prediction.push_back(parse_cell(cells[3]));
    }
    if (!header) throw LoadError("prediction CSV: missing header");
    return t;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Lagged cross-attention forecaster for outbreak-prone series", "crosslag"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    SelectOpts so;
    auto* sel = app.add_subcommand("select-features", "Rank exogenous features by mutual information with the target");
    sel->add_option("--data", so.data, "Input CSV")->required();
    sel->add_option("--target", so.target, "Target column")->capture_default_str();
    sel->add_option("--k-neighbors", so.k, "KSG neighbour count")->capture_default_str();
    so.top_k_opt = sel->add_option("--top-k", so.top_k, "Keep the k highest-MI features");
    so.min_mi_opt = sel->add_option("--min-mi", so.min_mi, "Keep features with MI >= this (nats)");
    sel->add_option("--pin", so.pinned, "Features always kept (comma separated)");
    sel->add_option("--json", so.json, "Write the MI table as JSON");
    so.seed_opt = sel->add_option("--seed", so.seed, "Tie-breaking jitter seed");

    SynthOpts sy;
    auto* syn = app.add_subcommand("synth", "Generate a synthetic dataset with known lags");
    syn->add_option("--spec", sy.spec, "Synthetic spec JSON (default: built-in outbreak spec)");
    syn->add_option("--out", sy.out, "Output CSV")->required();
    syn->add_option("--meta", sy.meta, "Metadata JSON (default: <out>.meta.json)");
    sy.seed_opt = syn->add_option("--seed", sy.seed, "Generator seed");

    TrainOpts tr;
    auto* trn = app.add_subcommand("train", "Train a model and write checkpoint, history and manifest");
    auto* data_opt = trn->add_option("--data", tr.data, "Input CSV");
    auto* target_opt = trn->add_option("--target", tr.target, "Target column")->capture_default_str();
    auto* feat_opt = trn->add_option("--features", tr.features, "Exogenous columns to use (default: all)");
    auto* cfg_opt = trn->add_option("--config", tr.config, "Model config JSON");
    auto* tcfg_opt = trn->add_option("--train-config", tr.train_config, "Training config JSON");
    trn->add_option("--out-dir", tr.out_dir, "Output directory")->required();
    auto* man_opt = trn->add_option("--manifest", tr.manifest, "Re-run exactly from a manifest");
    tr.seed_opt = trn->add_option("--seed", tr.seed, "Initialization, shuffling and dropout seed");
    tr.epochs_opt = trn->add_option("--epochs", tr.epochs);
    tr.patience_opt = trn->add_option("--patience", tr.patience);
    tr.batch_opt = trn->add_option("--batch-size", tr.batch_size);
    tr.lr_opt = trn->add_option("--lr", tr.lr, "Initial learning rate");
    tr.d_model_opt = trn->add_option("--d-model", tr.d_model);
    tr.d_ff_opt = trn->add_option("--d-ff", tr.d_ff);
    tr.dropout_opt = trn->add_option("--dropout", tr.dropout);
    tr.max_lag_opt = trn->add_option("--max-lag", tr.max_lag, "Lags 0, 2, ..., max_lag");
    tr.lags_opt = trn->add_option("--lags", tr.lags, "Explicit lag list, e.g. 0,4,8");
    for (CLI::Option* opt : {data_opt, target_opt, feat_opt, cfg_opt, tcfg_opt, tr.seed_opt, tr.epochs_opt,
                             tr.patience_opt, tr.batch_opt, tr.lr_opt, tr.d_model_opt, tr.d_ff_opt, tr.dropout_opt,
                             tr.max_lag_opt, tr.lags_opt}) {
        man_opt->excludes(opt);
    }
    tr.max_lag_opt->excludes(tr.lags_opt);

    EvalOpts ev;
    auto* evl = app.add_subcommand("evaluate", "Score a checkpoint on a data split");
    evl->add_option("--checkpoint", ev.checkpoint)->required();
    evl->add_option("--data", ev.data)->required();
    evl->add_option("--split", ev.split)->capture_default_str();
    evl->add_option("--spike-window", ev.spike_window, "Window range a:b (half-open) for spike metrics");
    evl->add_option("--spike-ratio", ev.spike_ratio, "Spike flag threshold ratio")->capture_default_str();
    ev.runs_opt = evl->add_option("--runs", ev.runs, "Retrain n times with seeds seed..seed+n-1 and aggregate");
    evl->add_option("--train-config", ev.train_config, "Training config for --runs");
    ev.epochs_opt = evl->add_option("--epochs", ev.epochs, "Epochs for --runs");
    ev.seed_opt = evl->add_option("--seed", ev.seed, "Base seed for --runs");
    evl->add_option("--metrics", ev.metrics, "Write metrics JSON");

    PredictOpts pr;
    auto* prd = app.add_subcommand("predict", "Forecast one window; optional chart and attention dump");
    prd->add_option("--checkpoint", pr.checkpoint)->required();
    prd->add_option("--data", pr.data)->required();
    prd->add_option("--split", pr.split)->capture_default_str();
    prd->add_option("--index", pr.index, "Window index within the split")->required();
    prd->add_option("--out", pr.out, "Prediction CSV (default: stdout)");
    prd->add_option("--plot", pr.plot, "Write an SVG chart");
    prd->add_option("--dump-attention", pr.dump_attention, "Write cross-attention weights as JSON");

    std::vector<std::string> rev(args.size() > 1 ? args.begin() + 1 : args.end(), args.end());
    std::reverse(rev.begin(), rev.end());
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForVersion& e) {
        out << kVersion << '\n';
        return kOk;
    } catch (const CLI::ParseError& e) {
        // Subcommand help requests surface here as well.
        if (e.get_exit_code() == 0) {
            out << app.help();
            return kOk;
        }
        err << "crosslag: " << e.what() << '\n';
        return kUsage;
    }

    try {
        if (sel->parsed()) return cmd_select(so, out);
        if (syn->parsed()) return cmd_synth(sy, out);
        if (trn->parsed()) {
            tr.argv = args;
            return cmd_train(tr, out);
        }
        if (evl->parsed()) return cmd_evaluate(ev, out);
        if (prd->parsed()) return cmd_predict(pr, out);
    } catch (const Failure& f) {
        err << "crosslag: " << f.what() << '\n';
        return f.code;
    } catch (const CompatibilityError& e) {
        err << "crosslag: " << e.what() << '\n';
        return kIncompatible;
    } catch (const ConfigError& e) {
        err << "crosslag: " << e.what() << '\n';
        return kUsage;
    } catch (const LoadError& e) {
        err << "crosslag: " << e.what() << '\n';
        return kUsage;
    } catch (const std::exception& e) {
        err << "crosslag: " << e.what() << '\n';
        return kFailure;
    }
    return kUsage;
}

}  // namespace crosslag::cli
