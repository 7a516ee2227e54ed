#include "crosslag/data/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "crosslag/errors.hpp"

namespace crosslag {

namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        cells.push_back(trim(std::string_view(line).substr(start, comma - start)));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return cells;
}

std::string cell_location(const std::string& source, std::size_t line_no, const std::string& column) {
    return source + ": row " + std::to_string(line_no) + ", column '" + column + "'";
}

double parse_double(const std::string& cell, const std::string& where) {
    if (cell.empty()) throw LoadError(where + ": missing value");
    double v = 0.0;
    const char* end = cell.data() + cell.size();
    auto [ptr, ec] = std::from_chars(cell.data(), end, v);
    if (ec != std::errc() || ptr != end) throw LoadError(where + ": non-numeric value '" + cell + "'");
    if (!std::isfinite(v)) throw LoadError(where + ": non-finite value '" + cell + "'");
    return v;
}

int parse_int(const std::string& cell, const std::string& where) {
    const double v = parse_double(cell, where);
    if (v != std::floor(v) || std::abs(v) > 1e9) throw LoadError(where + ": expected an integer, got '" + cell + "'");
    return static_cast<int>(v);
}

ColumnStats column_stats(const std::string& name, const std::vector<double>& values) {
    if (values.empty()) throw ConfigError("cannot fit statistics on an empty column '" + name + "'");
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(values.size());
    const double sd = std::sqrt(var);
    if (!(sd > 0.0)) throw ConfigError("column '" + name + "' is constant on the training split (std = 0)");
    return {name, mean, sd};
}

std::vector<double> normalize_column(const std::vector<double>& values, const ColumnStats& s) {
    std::vector<double> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - s.mean) / s.std;
    return out;
}

}  // namespace

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

std::size_t TimeSeriesDataset::feature_index(const std::string& name) const {
    const auto it = std::find(feature_names.begin(), feature_names.end(), name);
    if (it == feature_names.end()) throw ConfigError("unknown feature column '" + name + "'");
    return static_cast<std::size_t>(it - feature_names.begin());
}

const std::vector<double>& TimeSeriesDataset::feature(const std::string& name) const {
    return features[feature_index(name)];
}

TimeSeriesDataset TimeSeriesDataset::slice(std::size_t begin, std::size_t end) const {
    if (begin > end || end > rows()) {
        throw ConfigError("slice [" + std::to_string(begin) + ", " + std::to_string(end) + ") out of " +
                          std::to_string(rows()) + " rows");
    }
    const auto range = [&](const auto& v) { return std::decay_t<decltype(v)>(v.begin() + begin, v.begin() + end); };
    TimeSeriesDataset out;
    out.week = range(week);
    out.year = range(year);
    out.target_name = target_name;
    out.target = range(target);
    out.feature_names = feature_names;
    for (const auto& f : features) out.features.push_back(range(f));
    return out;
}

TimeSeriesDataset TimeSeriesDataset::select(const std::vector<std::string>& names) const {
    TimeSeriesDataset out;
    out.week = week;
    out.year = year;
    out.target_name = target_name;
    out.target = target;
    for (const auto& n : names) {
        out.feature_names.push_back(n);
        out.features.push_back(feature(n));
    }
    return out;
}

void TimeSeriesDataset::validate() const {
    const std::size_t n = rows();
    if (week.size() != n || year.size() != n) throw LoadError("timestamp columns differ in length from target");
    if (features.size() != feature_names.size()) throw LoadError("feature names and columns differ in count");
    for (std::size_t f = 0; f < features.size(); ++f) {
        if (features[f].size() != n) throw LoadError("feature '" + feature_names[f] + "' has wrong length");
        for (std::size_t i = 0; i < n; ++i) {
            if (!std::isfinite(features[f][i])) {
                throw LoadError("row " + std::to_string(i + 1) + ", column '" + feature_names[f] + "': non-finite");
            }
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (week[i] < 1 || week[i] > 53) {
            throw LoadError("row " + std::to_string(i + 1) + ": week " + std::to_string(week[i]) +
                            " outside [1, 53]");
        }
        if (!std::isfinite(target[i])) throw LoadError("row " + std::to_string(i + 1) + ": non-finite target");
        if (i > 0 && std::pair(year[i], week[i]) <= std::pair(year[i - 1], week[i - 1])) {
            throw LoadError("row " + std::to_string(i + 1) + ": non-chronological timestamp (" +
                            std::to_string(year[i]) + "/" + std::to_string(week[i]) + " after " +
                            std::to_string(year[i - 1]) + "/" + std::to_string(week[i - 1]) + ")");
        }
    }
}

TimeSeriesDataset parse_dataset(std::istream& in, const DatasetSchema& schema, const std::string& source) {
    std::string line;
    if (!std::getline(in, line)) throw LoadError(source + ": empty file (header row required)");
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // UTF-8 BOM
    const auto header = split_csv_line(line);

    const auto find_col = [&](const std::string& name) -> std::size_t {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw LoadError(source + ": missing required column '" + name + "'");
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t week_col = find_col(schema.week_column);
    const std::size_t year_col = find_col(schema.year_column);
    const std::size_t target_col = find_col(schema.target_column);

    TimeSeriesDataset ds;
    ds.target_name = schema.target_column;
    std::vector<std::size_t> feature_cols;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (c == week_col || c == year_col || c == target_col) continue;
        if (header[c].empty()) throw LoadError(source + ": empty column name at position " + std::to_string(c + 1));
        feature_cols.push_back(c);
        ds.feature_names.push_back(header[c]);
    }
    ds.features.resize(feature_cols.size());

    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size()) {
            throw LoadError(source + ": row " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                            " cells, header has " + std::to_string(header.size()));
        }
        ds.week.push_back(parse_int(cells[week_col], cell_location(source, line_no, header[week_col])));
        ds.year.push_back(parse_int(cells[year_col], cell_location(source, line_no, header[year_col])));
        ds.target.push_back(parse_double(cells[target_col], cell_location(source, line_no, header[target_col])));
        for (std::size_t f = 0; f < feature_cols.size(); ++f) {
            const std::size_t c = feature_cols[f];
            ds.features[f].push_back(parse_double(cells[c], cell_location(source, line_no, header[c])));
        }
    }
    try {
        ds.validate();
    } catch (const LoadError& e) {
        throw LoadError(source + ": " + e.what());
    }
    return ds;
}

TimeSeriesDataset load_dataset(const std::filesystem::path& path, const DatasetSchema& schema) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open '" + path.string() + "'");
    return parse_dataset(in, schema, path.string());
}

void write_dataset(std::ostream& out, const TimeSeriesDataset& ds) {
    out << "week,year," << ds.target_name;
    for (const auto& n : ds.feature_names) out << ',' << n;
    out << '\n';
    for (std::size_t i = 0; i < ds.rows(); ++i) {
        out << ds.week[i] << ',' << ds.year[i] << ',' << format_double(ds.target[i]);
        for (const auto& f : ds.features) out << ',' << format_double(f[i]);
        out << '\n';
    }
}

void save_dataset(const std::filesystem::path& path, const TimeSeriesDataset& ds) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError("cannot write '" + path.string() + "'");
    write_dataset(out, ds);
}

SplitSizes split_sizes(std::size_t rows, const SplitRatios& r) {
    if (!(r.train > 0 && r.val > 0 && r.test > 0)) throw ConfigError("split ratios must all be positive");
    if (std::abs(r.train + r.val + r.test - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
    const auto floor_of = [rows](double ratio) {
        // guard against 0.6 * 10 = 5.999999...
        return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(rows) + 1e-9));
    };
    // val and test keep at least one row when the series is long enough to
    // allow it; everything not claimed by them goes to train.
    SplitSizes s{0, std::max<std::size_t>(1, floor_of(r.val)), std::max<std::size_t>(1, floor_of(r.test))};
    if (s.val + s.test < rows) s.train = rows - s.val - s.test;
    if (s.train == 0) {
        throw ConfigError("split of " + std::to_string(rows) + " rows leaves an empty partition (" +
                          std::to_string(s.train) + "/" + std::to_string(s.val) + "/" + std::to_string(s.test) + ")");
    }
    return s;
}

DatasetSplits chronological_split(const TimeSeriesDataset& ds, const SplitRatios& ratios) {
    const SplitSizes s = split_sizes(ds.rows(), ratios);
    return {ds.slice(0, s.train), ds.slice(s.train, s.train + s.val), ds.slice(s.train + s.val, ds.rows())};
}

const ColumnStats& NormStats::at(const std::string& name) const {
    for (const auto& c : columns) {
        if (c.name == name) return c;
    }
    throw ConfigError("normalization statistics missing for column '" + name + "'");
}

bool NormStats::contains(const std::string& name) const {
    return std::any_of(columns.begin(), columns.end(), [&](const auto& c) { return c.name == name; });
}

nlohmann::ordered_json NormStats::to_json() const {
    nlohmann::ordered_json j = nlohmann::ordered_json::array();
    for (const auto& c : columns) j.push_back({{"name", c.name}, {"mean", c.mean}, {"std", c.std}});
    return j;
}

NormStats NormStats::from_json(const nlohmann::json& j) {
    NormStats s;
    for (const auto& c : j) {
        s.columns.push_back({c.at("name").get<std::string>(), c.at("mean").get<double>(), c.at("std").get<double>()});
    }
    return s;
}

NormStats fit_normalizer(const TimeSeriesDataset& train) {
    if (train.rows() == 0) throw ConfigError("cannot fit normalizer on an empty training split");
    NormStats s;
    s.columns.push_back(column_stats(train.target_name, train.target));
    for (std::size_t f = 0; f < train.num_features(); ++f) {
        s.columns.push_back(column_stats(train.feature_names[f], train.features[f]));
    }
    // year stamp statistics, consumed by encode_timestamps
    std::vector<double> years(train.year.begin(), train.year.end());
    s.columns.push_back(column_stats(kYearColumn, years));
    return s;
}

TimeSeriesDataset apply_normalizer(const TimeSeriesDataset& ds, const NormStats& stats) {
    TimeSeriesDataset out = ds;
    out.target = normalize_column(ds.target, stats.at(ds.target_name));
    for (std::size_t f = 0; f < ds.num_features(); ++f) {
        out.features[f] = normalize_column(ds.features[f], stats.at(ds.feature_names[f]));
    }
    return out;
}

double denormalize(double value, const ColumnStats& stats) { return value * stats.std + stats.mean; }

std::vector<double> denormalize(const std::vector<double>& values, const ColumnStats& stats) {
    std::vector<double> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = denormalize(values[i], stats);
    return out;
}

double encode_week(int week) {
    if (week < 1 || week > 53) throw LoadError("week " + std::to_string(week) + " outside [1, 53]");
    return std::min((week - 1) / 52.0 - 0.5, 0.5);
}

EncodedTimestamps encode_timestamps(const TimeSeriesDataset& ds, const NormStats& stats) {
    const ColumnStats& ys = stats.at(kYearColumn);
    EncodedTimestamps ts;
    ts.w.reserve(ds.rows());
    ts.y.reserve(ds.rows());
    for (std::size_t i = 0; i < ds.rows(); ++i) {
        ts.w.push_back(encode_week(ds.week[i]));
        ts.y.push_back((ds.year[i] - ys.mean) / ys.std);
    }
    return ts;
}

std::size_t window_count(std::size_t split_length, const WindowSpec& spec) {
    if (spec.seq_len == 0 || spec.pred_len == 0) throw ConfigError("seq_len and pred_len must be >= 1");
    if (spec.stride == 0) throw ConfigError("stride must be >= 1");
    const std::size_t need = spec.seq_len + spec.pred_len;
    if (split_length < need) {
        throw ConfigError("split of " + std::to_string(split_length) + " rows is too short: seq_len + pred_len = " +
                          std::to_string(need) + " rows required");
    }
    return (split_length - need) / spec.stride + 1;
}

std::vector<WindowSample> make_windows(const TimeSeriesDataset& ds, const EncodedTimestamps& ts,
                                       const WindowSpec& spec) {
    const std::size_t count = window_count(ds.rows(), spec);
    if (ts.w.size() != ds.rows() || ts.y.size() != ds.rows()) {
        throw DimensionError("timestamp encoding length does not match dataset rows");
    }
    if (ds.num_features() == 0) throw ConfigError("dataset has no exogenous features");
    const std::size_t seq = spec.seq_len, pred = spec.pred_len, nf = ds.num_features();
    std::vector<WindowSample> out;
    out.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        const std::size_t s = k * spec.stride;
        WindowSample w;
        w.start = s;
        w.label_len = spec.label_len;
        w.x_hist = Tensor({seq});
        w.z_hist = Tensor({seq, nf});
        w.w_hist = Tensor({seq});
        w.y_hist = Tensor({seq});
        w.x_future = Tensor({pred});
        for (std::size_t t = 0; t < seq; ++t) {
            w.x_hist[t] = ds.target[s + t];
            w.w_hist[t] = ts.w[s + t];
            w.y_hist[t] = ts.y[s + t];
            for (std::size_t f = 0; f < nf; ++f) w.z_hist.at(t, f) = ds.features[f][s + t];
        }
        for (std::size_t h = 0; h < pred; ++h) w.x_future[h] = ds.target[s + seq + h];
        out.push_back(std::move(w));
    }
    return out;
}

}  // namespace crosslag
