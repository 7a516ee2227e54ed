#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "crosslag/core/tensor.hpp"

namespace crosslag {

// Column names the loader looks for. Every other column is a candidate feature.
struct DatasetSchema {
    std::string week_column = "week";
    std::string year_column = "year";
    std::string target_column = "cases";
};

// Aligned weekly multivariate series: timestamps, the endogenous target and F
// exogenous feature columns, all of equal length and in chronological order.
struct TimeSeriesDataset {
    std::vector<int> week;
    std::vector<int> year;
    std::string target_name = "cases";
    std::vector<double> target;
    std::vector<std::string> feature_names;
    std::vector<std::vector<double>> features;  // one vector per feature column

    std::size_t rows() const { return target.size(); }
    std::size_t num_features() const { return features.size(); }

    std::size_t feature_index(const std::string& name) const;
    const std::vector<double>& feature(const std::string& name) const;

    // Rows [begin, end).
    TimeSeriesDataset slice(std::size_t begin, std::size_t end) const;
    // Same rows, only the named feature columns in the given order.
    TimeSeriesDataset select(const std::vector<std::string>& names) const;

    // Throws LoadError if lengths disagree, rows are not chronological, a week
    // is outside [1, 53] or a value is non-finite.
    void validate() const;

    bool operator==(const TimeSeriesDataset&) const = default;
};

TimeSeriesDataset load_dataset(const std::filesystem::path& path, const DatasetSchema& schema = {});
TimeSeriesDataset parse_dataset(std::istream& in, const DatasetSchema& schema = {},
                                const std::string& source = "<stream>");
// Writes the loader's schema: week, year, target, features. Values use the
// shortest round-trip decimal form.
void write_dataset(std::ostream& out, const TimeSeriesDataset& ds);
void save_dataset(const std::filesystem::path& path, const TimeSeriesDataset& ds);

// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);

struct SplitRatios {
    double train = 0.6;
    double val = 0.2;
    double test = 0.2;
};

struct DatasetSplits {
    TimeSeriesDataset train;
    TimeSeriesDataset val;
    TimeSeriesDataset test;
};

struct SplitSizes {
    std::size_t train = 0;
    std::size_t val = 0;
    std::size_t test = 0;
};

// floor(r * n) rows for val and test (at least one each), the rest to train.
SplitSizes split_sizes(std::size_t rows, const SplitRatios& ratios);
DatasetSplits chronological_split(const TimeSeriesDataset& ds, const SplitRatios& ratios = {});

struct ColumnStats {
    std::string name;
    double mean = 0.0;
    double std = 1.0;  // population (1/n)

    bool operator==(const ColumnStats&) const = default;
};

// Per-column training-split statistics for the target, each feature and the
// year stamp.
struct NormStats {
    std::vector<ColumnStats> columns;

    const ColumnStats& at(const std::string& name) const;
    bool contains(const std::string& name) const;

    nlohmann::ordered_json to_json() const;
    static NormStats from_json(const nlohmann::json& j);

    bool operator==(const NormStats&) const = default;
};

inline constexpr const char* kYearColumn = "year";

NormStats fit_normalizer(const TimeSeriesDataset& train);
// Z-scores the target and every feature with the stored statistics.
TimeSeriesDataset apply_normalizer(const TimeSeriesDataset& ds, const NormStats& stats);
double denormalize(double value, const ColumnStats& stats);
std::vector<double> denormalize(const std::vector<double>& values, const ColumnStats& stats);

// Week stamps scaled into [-0.5, 0.5]; year stamps standardized with the
// training split's year mean/std.
struct EncodedTimestamps {
    std::vector<double> w;
    std::vector<double> y;
};

double encode_week(int week);
EncodedTimestamps encode_timestamps(const TimeSeriesDataset& ds, const NormStats& stats);

struct WindowSpec {
    std::size_t seq_len = 16;
    std::size_t label_len = 12;  // recorded, not consumed by the model
    std::size_t pred_len = 24;
    std::size_t stride = 1;
};

// One supervised example: seq_len rows of history and the pred_len target
// values that immediately follow them.
struct WindowSample {
    std::size_t start = 0;  // first history row, relative to the split
    std::size_t label_len = 0;
    Tensor x_hist;    // [seq_len]
    Tensor z_hist;    // [seq_len x F]
    Tensor w_hist;    // [seq_len]
    Tensor y_hist;    // [seq_len]
    Tensor x_future;  // [pred_len]

    std::size_t seq_len() const { return x_hist.size(); }
    std::size_t pred_len() const { return x_future.size(); }
    std::size_t num_features() const { return z_hist.dim(1); }
};

std::size_t window_count(std::size_t split_length, const WindowSpec& spec);
// `ds` is expected to be normalized already; `ts` must have ds.rows() entries.
std::vector<WindowSample> make_windows(const TimeSeriesDataset& ds, const EncodedTimestamps& ts,
                                       const WindowSpec& spec);

}  // namespace crosslag
