#include "crosslag/data/mutual_info.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include <boost/math/special_functions/digamma.hpp>

#include "crosslag/core/rng.hpp"
#include "crosslag/errors.hpp"

namespace crosslag {

namespace {

std::uint64_t content_hash(std::span<const double> v) {
    std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
    for (double d : v) {
        std::uint64_t bits;
        std::memcpy(&bits, &d, sizeof bits);
        for (int b = 0; b < 8; ++b) {
            h ^= (bits >> (8 * b)) & 0xFF;
            h *= 1099511628211ULL;
        }
    }
    return h;
}

std::vector<double> jittered(std::span<const double> v, std::uint64_t seed) {
    const double n = static_cast<double>(v.size());
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double var = 0.0;
    for (double d : v) var += (d - mean) * (d - mean);
    const double sd = std::sqrt(var / n);
    const double amp = 1e-10 * (sd > 0 ? sd : 1.0);
    Rng rng(mix_seed(seed, content_hash(v)));
    std::vector<double> out(v.begin(), v.end());
    for (auto& d : out) d += amp * rng.normal();
    return out;
}

// Number of points strictly within `radius` of `centre` in sorted data, excluding the point itself.
std::size_t count_within(const std::vector<double>& sorted, double centre, double radius) {
    const auto lo = std::upper_bound(sorted.begin(), sorted.end(), centre - radius);
    const auto hi = std::lower_bound(sorted.begin(), sorted.end(), centre + radius);
    const auto n = static_cast<std::size_t>(hi - lo);
    return n > 0 ? n - 1 : 0;
}

}  // namespace

double estimate_mi_raw(std::span<const double> x_in, std::span<const double> y_in, int k, std::uint64_t seed) {
    if (x_in.size() != y_in.size()) throw ConfigError("estimate_mi: series lengths differ");
    if (k < 1) throw ConfigError("estimate_mi: k must be >= 1");
    const std::size_t n = x_in.size();
    if (n < static_cast<std::size_t>(k) + 2) {
        throw ConfigError("estimate_mi: need at least k + 2 = " + std::to_string(k + 2) + " samples, got " +
                          std::to_string(n));
    }
    const std::vector<double> x = jittered(x_in, seed);
    const std::vector<double> y = jittered(y_in, seed);

    std::vector<double> xs = x, ys = y;
    std::sort(xs.begin(), xs.end());
    std::sort(ys.begin(), ys.end());

    const auto kk = static_cast<std::size_t>(k);
    std::vector<double> nearest(kk);  // k smallest joint distances, ascending
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        std::fill(nearest.begin(), nearest.end(), std::numeric_limits<double>::infinity());
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const double d = std::max(std::abs(x[i] - x[j]), std::abs(y[i] - y[j]));
            if (d >= nearest[kk - 1]) continue;
            std::size_t pos = kk - 1;
            while (pos > 0 && nearest[pos - 1] > d) {
                nearest[pos] = nearest[pos - 1];
                --pos;
            }
            nearest[pos] = d;
        }
        const double eps = nearest[kk - 1];
        const auto nx = count_within(xs, x[i], eps);
        const auto ny = count_within(ys, y[i], eps);
        acc += boost::math::digamma(static_cast<double>(nx) + 1.0) + boost::math::digamma(static_cast<double>(ny) + 1.0);
    }
    return boost::math::digamma(static_cast<double>(k)) + boost::math::digamma(static_cast<double>(n)) -
           acc / static_cast<double>(n);
}

double estimate_mi(std::span<const double> x, std::span<const double> y, int k, std::uint64_t seed) {
    return std::max(0.0, estimate_mi_raw(x, y, k, seed));
}

std::vector<std::string> MIResult::ranking() const {
    std::vector<const FeatureMI*> order;
    for (const auto& f : features) order.push_back(&f);
    std::stable_sort(order.begin(), order.end(), [](const auto* a, const auto* b) { return a->mi > b->mi; });
    std::vector<std::string> names;
    for (const auto* f : order) names.push_back(f->name);
    return names;
}

nlohmann::ordered_json MIResult::to_json() const {
    nlohmann::ordered_json j;
    j["k_neighbors"] = k;
    nlohmann::ordered_json cols = nlohmann::ordered_json::object();
    for (const auto& f : features) cols[f.name] = {{"mi", f.mi}, {"rank", f.rank}};
    j["features"] = cols;
    return j;
}

MIResult rank_features(std::vector<std::pair<std::string, double>> values, int k) {
    MIResult r;
    r.k = k;
    for (auto& [name, mi] : values) r.features.push_back({std::move(name), mi, 0});
    const auto order = r.ranking();
    for (auto& f : r.features) {
        f.rank = static_cast<std::size_t>(std::find(order.begin(), order.end(), f.name) - order.begin()) + 1;
    }
    return r;
}

MIResult compute_feature_mi(const TimeSeriesDataset& ds, int k, std::uint64_t seed) {
    std::vector<std::pair<std::string, double>> values;
    for (std::size_t f = 0; f < ds.num_features(); ++f) {
        values.emplace_back(ds.feature_names[f], estimate_mi(ds.features[f], ds.target, k, seed));
    }
    return rank_features(std::move(values), k);
}

std::vector<std::string> select_features(const MIResult& mi, const SelectionCriteria& criteria) {
    const auto is_pinned = [&](const std::string& name) {
        return std::find(criteria.pinned.begin(), criteria.pinned.end(), name) != criteria.pinned.end();
    };
    for (const auto& p : criteria.pinned) {
        if (std::none_of(mi.features.begin(), mi.features.end(), [&](const auto& f) { return f.name == p; })) {
            throw ConfigError("pinned feature '" + p + "' is not a candidate column");
        }
    }
    const std::size_t candidates = mi.features.size() - criteria.pinned.size();
    if (criteria.top_k) {
        if (*criteria.top_k == 0) throw ConfigError("top_k must be >= 1");
        if (*criteria.top_k > candidates) {
            throw ConfigError("top_k = " + std::to_string(*criteria.top_k) + " exceeds the " +
                              std::to_string(candidates) + " candidate features");
        }
    }

    std::vector<std::string> selected;
    for (const auto& name : mi.ranking()) {
        if (is_pinned(name)) continue;
        if (criteria.top_k && selected.size() >= *criteria.top_k) break;
        if (criteria.min_mi) {
            const auto& f = *std::find_if(mi.features.begin(), mi.features.end(), [&](const auto& e) { return e.name == name; });
            if (f.mi < *criteria.min_mi) continue;
        }
        selected.push_back(name);
    }
    for (const auto& p : criteria.pinned) selected.push_back(p);
    return selected;
}

std::vector<std::string> select_features(const TimeSeriesDataset& ds, const SelectionCriteria& criteria, int k,
                                         std::uint64_t seed) {
    return select_features(compute_feature_mi(ds, k, seed), criteria);
}

}  // namespace crosslag
