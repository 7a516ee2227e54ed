#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "crosslag/data/dataset.hpp"

namespace crosslag {

// Kraskov-Stoegbauer-Grassberger estimator (variant 1, Chebyshev metric),
// in nats. Ties are broken by adding 1e-10 * std jitter drawn from a stream
// seeded by `seed` and the series contents, so MI(x, y) == MI(y, x).
// The raw form may be slightly negative.
double estimate_mi_raw(std::span<const double> x, std::span<const double> y, int k = 3,
                       std::uint64_t seed = 0);
// max(0, estimate_mi_raw(...))
double estimate_mi(std::span<const double> x, std::span<const double> y, int k = 3, std::uint64_t seed = 0);

struct FeatureMI {
    std::string name;
    double mi = 0.0;
    std::size_t rank = 0;  // 1 = highest MI
};

struct MIResult {
    std::vector<FeatureMI> features;  // column order
    int k = 3;

    // Names by MI descending; ties keep column order.
    std::vector<std::string> ranking() const;
    nlohmann::ordered_json to_json() const;
};

// Assigns ranks to (name, mi) pairs given in column order.
MIResult rank_features(std::vector<std::pair<std::string, double>> values, int k = 3);
// MI of every feature column against the target on raw values.
MIResult compute_feature_mi(const TimeSeriesDataset& ds, int k = 3, std::uint64_t seed = 0);

struct SelectionCriteria {
    std::optional<std::size_t> top_k;  // among non-pinned candidates
    std::optional<double> min_mi;
    std::vector<std::string> pinned;   // always kept
};

// Ranked winners first, then any pinned columns that did not rank in.
std::vector<std::string> select_features(const MIResult& mi, const SelectionCriteria& criteria);
std::vector<std::string> select_features(const TimeSeriesDataset& ds, const SelectionCriteria& criteria,
                                         int k = 3, std::uint64_t seed = 0);

}  // namespace crosslag
