#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "crosslag/core/rng.hpp"
#include "crosslag/data/dataset.hpp"
#include "crosslag/data/mutual_info.hpp"
#include "crosslag/data/synthetic.hpp"
#include "crosslag/errors.hpp"
#include "oracles.hpp"

using namespace crosslag;

namespace {

// Weekly rows starting at week 1 of 2000.
std::string csv_rows(std::size_t n, std::size_t features) {
    std::ostringstream os;
    os << "week,year,cases";
    for (std::size_t f = 0; f < features; ++f) os << ",f" << f;
    os << '\n';
    for (std::size_t i = 0; i < n; ++i) {
        os << (i % 52) + 1 << ',' << 2000 + i / 52 << ',' << 100 + static_cast<double>(i);
        for (std::size_t f = 0; f < features; ++f) os << ',' << std::sin(0.1 * static_cast<double>(i * (f + 1)));
        os << '\n';
    }
    return os.str();
}

TimeSeriesDataset parse(const std::string& text) {
    std::istringstream in(text);
    return parse_dataset(in);
}

std::string load_error(const std::string& text) {
    try {
        parse(text);
    } catch (const LoadError& e) {
        return e.what();
    }
    return {};
}

TimeSeriesDataset ramp(std::size_t n, std::size_t features = 1) { return parse(csv_rows(n, features)); }

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

double pop_std(const std::vector<double>& v) {
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / v.size());
}

}  // namespace

TEST_CASE("load: 1000 rows with a target and 15 feature columns give F = 15") {
    const TimeSeriesDataset ds = parse(csv_rows(1000, 15));
    CHECK(ds.rows() == 1000);
    CHECK(ds.num_features() == 15);
    CHECK(ds.feature_names.front() == "f0");
    CHECK(ds.feature_names.back() == "f14");
}

TEST_CASE("load: a single row is a valid dataset") {
    const TimeSeriesDataset ds = ramp(1, 2);
    CHECK(ds.rows() == 1);
}

TEST_CASE("load: shuffled weeks are rejected as non-chronological") {
    std::string text = "week,year,cases,a\n";
    const int weeks[] = {3, 1, 2, 4, 5, 6, 7, 8, 9, 10};
    for (int w : weeks) text += std::to_string(w) + ",2001,1,2\n";
    CHECK(load_error(text).find("non-chronological") != std::string::npos);
}

TEST_CASE("load: diagnostics name the row and column") {
    CHECK(load_error("week,cases,a\n1,2,3\n").find("missing required column 'year'") != std::string::npos);
    const std::string bad = load_error("week,year,cases,a\n1,2000,5,x\n");
    CHECK(bad.find("row 2") != std::string::npos);
    CHECK(bad.find("'a'") != std::string::npos);
    CHECK(bad.find("non-numeric") != std::string::npos);
    CHECK(load_error("week,year,cases,a\n1,2000,,1\n").find("missing value") != std::string::npos);
    CHECK(load_error("week,year,cases,a\n54,2000,1,1\n").find("week") != std::string::npos);
}

TEST_CASE("write/parse round trip is exact") {
    const TimeSeriesDataset ds = generate_synthetic(default_outbreak_spec(3)).dataset;
    std::ostringstream out;
    write_dataset(out, ds);
    CHECK(parse(out.str()) == ds);
}

TEST_CASE("split sizes follow floor plus remainder-to-train") {
    const SplitSizes a = split_sizes(1000, {});
    CHECK((a.train == 600 && a.val == 200 && a.test == 200));
    const SplitSizes b = split_sizes(10, {});
    CHECK((b.train == 6 && b.val == 2 && b.test == 2));
    const SplitSizes c = split_sizes(4, {});
    CHECK((c.train == 2 && c.val == 1 && c.test == 1));
    CHECK_THROWS_AS(split_sizes(2, {}), ConfigError);
    CHECK_THROWS_AS(split_sizes(100, {0.5, 0.5, 0.1}), ConfigError);
}

TEST_CASE("chronological split concatenates back to the original") {
    const TimeSeriesDataset ds = ramp(97, 2);
    const DatasetSplits s = chronological_split(ds);
    CHECK(s.train.rows() + s.val.rows() + s.test.rows() == 97);
    std::vector<double> joined = s.train.target;
    joined.insert(joined.end(), s.val.target.begin(), s.val.target.end());
    joined.insert(joined.end(), s.test.target.begin(), s.test.target.end());
    CHECK(joined == ds.target);
    CHECK(s.val.week.front() == ds.week[s.train.rows()]);
}

TEST_CASE("normalizer: train split standardized, population std") {
    const TimeSeriesDataset ds = ramp(200, 3);
    const DatasetSplits s = chronological_split(ds);
    const NormStats st = fit_normalizer(s.train);
    const TimeSeriesDataset n = apply_normalizer(s.train, st);
    CHECK(std::abs(mean_of(n.target)) < 1e-9);
    CHECK(std::abs(pop_std(n.target) - 1.0) < 1e-9);
    for (const auto& f : n.features) {
        CHECK(std::abs(mean_of(f)) < 1e-9);
        CHECK(std::abs(pop_std(f) - 1.0) < 1e-9);
    }
    const TimeSeriesDataset back = apply_normalizer(s.test, st);
    for (std::size_t i = 0; i < back.rows(); ++i) {
        CHECK(std::abs(denormalize(back.target[i], st.at("cases")) - s.test.target[i]) < 1e-12);
    }
}

TEST_CASE("normalizer examples") {
    TimeSeriesDataset d;
    d.week = {1, 2, 3};
    d.year = {2000, 2001, 2002};
    d.target = {2, 4, 6};
    d.feature_names = {"a"};
    d.features = {{0, 1, 5}};
    const NormStats st = fit_normalizer(d);
    CHECK(st.at("cases").mean == doctest::Approx(4.0));
    CHECK(st.at("cases").std == doctest::Approx(std::sqrt(8.0 / 3.0)));

    TimeSeriesDataset two;
    two.week = {1, 2};
    two.year = {2000, 2001};
    two.target = {0, 2};
    two.feature_names = {"a"};
    two.features = {{1, 2}};
    const NormStats s2 = fit_normalizer(two);
    TimeSeriesDataset one = two.slice(0, 1);
    one.target = {4};
    CHECK(apply_normalizer(one, s2).target[0] == doctest::Approx(3.0));

    TimeSeriesDataset flat = d;
    flat.features = {{7, 7, 7}};
    CHECK_THROWS_WITH_AS(fit_normalizer(flat), doctest::Contains("'a'"), ConfigError);
}

TEST_CASE("normalization statistics serialize") {
    const NormStats st = fit_normalizer(ramp(120, 2));
    CHECK(NormStats::from_json(nlohmann::json::parse(st.to_json().dump())) == st);
}

TEST_CASE("timestamp encoding") {
    CHECK(encode_week(1) == -0.5);
    CHECK(encode_week(53) == 0.5);
    CHECK(encode_week(27) == doctest::Approx(0.0));
    CHECK_THROWS_AS(encode_week(0), LoadError);
    const TimeSeriesDataset ds = ramp(300, 1);
    const DatasetSplits s = chronological_split(ds);
    const NormStats st = fit_normalizer(s.train);
    const EncodedTimestamps ts = encode_timestamps(s.train, st);
    CHECK(*std::min_element(ts.w.begin(), ts.w.end()) >= -0.5);
    CHECK(*std::max_element(ts.w.begin(), ts.w.end()) <= 0.5);
    CHECK(std::abs(mean_of(ts.y)) < 1e-9);
    CHECK(std::abs(pop_std(ts.y) - 1.0) < 1e-9);

    TimeSeriesDataset one_year = ramp(20, 1);
    CHECK_THROWS_AS(fit_normalizer(one_year), ConfigError);
}

TEST_CASE("window counts and boundaries") {
    const WindowSpec spec;
    CHECK(window_count(200, spec) == 161);
    CHECK(window_count(40, spec) == 1);
    CHECK_THROWS_WITH_AS(window_count(39, spec), doctest::Contains("40"), ConfigError);
}

TEST_CASE("windows: future strictly after history, contents aligned") {
    const TimeSeriesDataset ds = ramp(200, 2);
    const NormStats st = fit_normalizer(ds);
    const TimeSeriesDataset n = apply_normalizer(ds, st);
    const auto ws = make_windows(n, encode_timestamps(ds, st), WindowSpec{});
    REQUIRE(ws.size() == 161);
    for (std::size_t i = 0; i < ws.size(); i += 17) {
        const auto& w = ws[i];
        CHECK(w.start == i);
        CHECK(w.label_len == 12);
        for (std::size_t t = 0; t < 16; ++t) {
            CHECK(w.x_hist[t] == n.target[i + t]);
            CHECK(w.z_hist.at(t, 1) == n.features[1][i + t]);
        }
        for (std::size_t h = 0; h < 24; ++h) CHECK(w.x_future[h] == n.target[i + 16 + h]);
    }
}

TEST_CASE("MI: correlated Gaussian oracle and independence") {
    Rng rng(21);
    for (double rho : {0.5, 0.9}) {
        std::vector<double> x(2000), y(2000);
        for (std::size_t i = 0; i < x.size(); ++i) {
            x[i] = rng.normal();
            y[i] = rho * x[i] + std::sqrt(1 - rho * rho) * rng.normal();
        }
        CHECK(std::abs(estimate_mi(x, y, 3) - oracle::gaussian_mi(rho)) < 0.1);
    }
    std::vector<double> u(2000), v(2000);
    for (std::size_t i = 0; i < u.size(); ++i) {
        u[i] = rng.uniform();
        v[i] = rng.uniform();
    }
    const double raw = estimate_mi_raw(u, v, 3);
    CHECK(std::abs(raw) <= 0.05);
    const double clamped = estimate_mi(u, v, 3);
    CHECK(clamped >= 0.0);
    CHECK(clamped <= 0.05);
}

TEST_CASE("MI: identical series carry more than 2 nats") {
    Rng rng(2);
    std::vector<double> x(2000);
    for (auto& v : x) v = rng.normal();
    CHECK(estimate_mi(x, x, 3) > 2.0);
}

TEST_CASE("MI: symmetric and deterministic") {
    Rng rng(8);
    std::vector<double> x(500), y(500);
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = std::round(rng.normal() * 3);  // ties on purpose
        y[i] = x[i] + std::round(rng.normal());
    }
    CHECK(std::abs(estimate_mi_raw(x, y, 3, 5) - estimate_mi_raw(y, x, 3, 5)) < 1e-9);
    CHECK(estimate_mi_raw(x, y, 3, 5) == estimate_mi_raw(x, y, 3, 5));
}

TEST_CASE("MI: argument validation") {
    const std::vector<double> a{1, 2, 3, 4}, b{1, 2, 3};
    CHECK_THROWS_AS(estimate_mi(a, b, 1), ConfigError);
    CHECK_THROWS_AS(estimate_mi(a, a, 3), ConfigError);
}

TEST_CASE("feature selection ranking, ties and pins") {
    const MIResult table = rank_features({{"ONI Anomaly", 0.37},
                                          {"NINO4 Anomaly", 0.48},
                                          {"NINO3.4", 0.43},
                                          {"IOD East", 0.44},
                                          {"SOI", 0.28}});
    SelectionCriteria top3;
    top3.top_k = 3;
    CHECK(select_features(table, top3) == std::vector<std::string>{"NINO4 Anomaly", "IOD East", "NINO3.4"});

    const MIResult tied = rank_features({{"a", 0.2}, {"b", 0.3}, {"c", 0.2}});
    SelectionCriteria all;
    all.top_k = 3;
    CHECK(select_features(tied, all) == std::vector<std::string>{"b", "a", "c"});
    CHECK(tied.ranking() == std::vector<std::string>{"b", "a", "c"});

    SelectionCriteria pinned;
    pinned.top_k = 1;
    pinned.pinned = {"c"};
    CHECK(select_features(tied, pinned) == std::vector<std::string>{"b", "c"});

    SelectionCriteria too_many;
    too_many.top_k = 4;
    CHECK_THROWS_AS(select_features(tied, too_many), ConfigError);
    SelectionCriteria zero;
    zero.top_k = 0;
    CHECK_THROWS_AS(select_features(tied, zero), ConfigError);
}

TEST_CASE("MI ranks an informative driver above an independent one") {
    SynthSpec spec;
    spec.drivers = {{"noise"}, {"driver"}};
    spec.lags = {0, 0};
    spec.weights = {0.0, 10.0};
    spec.noise_std = 1.0;
    spec.seed = 4;
    const TimeSeriesDataset ds = generate_synthetic(spec).dataset;
    const MIResult mi = compute_feature_mi(ds, 3);
    CHECK(mi.ranking().front() == "driver");
    CHECK(mi.features[1].mi > mi.features[0].mi);
}

TEST_CASE("synthetic: noise-free single driver is an exact shifted copy") {
    SynthSpec spec;
    spec.drivers = {{"d"}};
    spec.lags = {4};
    spec.weights = {1.0};
    spec.noise_std = 0.0;
    spec.baseline = 200.0;
    spec.length = 300;
    spec.seed = 9;
    const SynthResult r = generate_synthetic(spec);
    const auto& d = r.dataset.features[0];
    for (std::size_t t = 4; t < 300; ++t) CHECK(r.dataset.target[t] == d[t - 4] + 200.0);
    CHECK(r.metadata.lags == std::vector<int>{4});
}

TEST_CASE("synthetic: deterministic, sized and validated") {
    const SynthSpec spec = default_outbreak_spec(7);
    const SynthResult a = generate_synthetic(spec), b = generate_synthetic(spec);
    CHECK(a.dataset == b.dataset);
    CHECK(a.dataset.rows() == 1000);
    SynthSpec other = spec;
    other.seed = 8;
    CHECK_FALSE(generate_synthetic(other).dataset == a.dataset);

    SynthSpec neg = spec;
    neg.lags = {-1, 8};
    CHECK_THROWS_AS(generate_synthetic(neg), ConfigError);
    CHECK(SynthSpec::from_json(nlohmann::json::parse(spec.to_json().dump())).to_json() == spec.to_json());
}

TEST_CASE("synthetic: outbreak episodes lift max/median to at least 2.5") {
    for (const char* mode : {"additive", "coincidence"}) {
        SynthSpec spec = default_outbreak_spec(7);
        spec.spikes.mode = mode;
        if (spec.spikes.mode == "additive") spec.spikes.decoys = 0;
        std::vector<double> y = generate_synthetic(spec).dataset.target;
        std::sort(y.begin(), y.end());
        const double median = 0.5 * (y[499] + y[500]);
        INFO(mode);
        CHECK(median == doctest::Approx(200).epsilon(0.1));
        CHECK(y.back() / median >= 2.5);
        CHECK(y.back() < 900);
    }
}
