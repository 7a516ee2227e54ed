#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <sstream>
#include <vector>

#include "crosslag/core/gradcheck.hpp"
#include "crosslag/data/synthetic.hpp"
#include "crosslag/errors.hpp"
#include "crosslag/io/checkpoint.hpp"
#include "crosslag/model/evaluation.hpp"
#include "crosslag/model/experiment.hpp"
#include "oracles.hpp"

using namespace crosslag;

namespace {

ModelConfig tiny_config() {
    ModelConfig c;
    c.seq_len = 8;
    c.label_len = 4;
    c.pred_len = 4;
    c.d_model = 8;
    c.d_ff = 4;
    c.dropout = 0.0;
    c.lags = LagSpec::from_list({0, 2});
    return c;
}

// Two drivers with a known lag, long enough for every split.
TimeSeriesDataset small_series(std::size_t length, double noise, std::uint64_t seed = 5) {
    SynthSpec s;
    s.drivers = {{"a", 0.8, 0.5, 1.0, 26.0, 0.0}, {"b", 0.5, 0.5, 0.5, 52.0, 1.0}};
    s.lags = {2, 0};
    s.weights = {10.0, 5.0};
    s.noise_std = noise;
    s.baseline = 100.0;
    s.length = length;
    s.seed = seed;
    return generate_synthetic(s).dataset;
}

PreparedData tiny_data(std::size_t length = 200, double noise = 1.0) {
    return prepare_data(small_series(length, noise), {}, tiny_config().windows());
}

TrainConfig quick_train(std::size_t epochs) {
    TrainConfig tc;
    tc.epochs = epochs;
    tc.patience = epochs;
    tc.batch_size = 8;
    return tc;
}

}  // namespace

TEST_CASE("model config validation and serialization") {
    ModelConfig c;
    CHECK_NOTHROW(c.validate());
    CHECK(ModelConfig::from_json(nlohmann::json::parse(c.to_json().dump())).to_json() == c.to_json());
    ModelConfig heads = c;
    heads.n_heads = 3;
    CHECK_THROWS_AS(heads.validate(), ConfigError);
    ModelConfig zero = c;
    zero.d_model = 0;
    CHECK_THROWS_AS(zero.validate(), ConfigError);
    CHECK(ModelConfig::from_json(nlohmann::json::parse(R"({"d_model": 32})")).d_model == 32);
}

TEST_CASE("init is deterministic in the seed") {
    const ModelConfig c = tiny_config();
    const ModelParams a = init_model(c, 3), b = init_model(c, 3), other = init_model(c, 4);
    const auto na = a.named(), nb = b.named(), no = other.named();
    REQUIRE(na.size() == nb.size());
    bool any_diff = false;
    for (std::size_t i = 0; i < na.size(); ++i) {
        CHECK(na[i].name == nb[i].name);
        CHECK(na[i].var.value().storage() == nb[i].var.value().storage());
        any_diff = any_diff || na[i].var.value().storage() != no[i].var.value().storage();
    }
    CHECK(any_diff);
    CHECK(a.gate_self.value()[0] == 0.0);
    CHECK(a.gate_cross.value()[0] == 0.0);
    CHECK(a.gate_mlp.value()[0] == 0.0);
}

TEST_CASE("parameter census and the reference stack") {
    const ModelParams p = init_model(ModelConfig{}, 0);
    // Regression value for the default configuration.
    CHECK(p.parameter_count() == 138421);
    CHECK(p.parameter_count() < 500000);

    const ReferenceStack ref;
    const std::size_t census = reference_stack_census(ref);
    CHECK(census == oracle::timexer_census(512, 2048, 2, 16, 24, 16, 5));
    CHECK(p.parameter_count() < census);

    std::size_t manual = 0;
    for (const auto& np : p.named()) manual += np.var.size();
    CHECK(manual == p.parameter_count());
}

TEST_CASE("forward output, eval determinism and a zero head") {
    const ModelConfig c;
    const PreparedData data = prepare_data(generate_synthetic(default_outbreak_spec(1)).dataset, {}, c.windows());
    ModelParams p = init_model(c, 1);
    const WindowSample& w = data.test.front();
    const std::vector<double> a = predict(p, w, c), b = predict(p, w, c);
    CHECK(a.size() == 24);
    CHECK(a == b);

    p.head.weight = Var(Tensor(p.head.weight.shape()), true);
    p.head.bias = Var(Tensor(p.head.bias.shape()), true);
    for (double v : predict(p, data.test[7], c)) CHECK(v == 0.0);

    WindowSample bad = w;
    bad.x_hist = Tensor({c.seq_len - 1});
    CHECK_THROWS_WITH_AS(predict(p, bad, c), doctest::Contains("forward[input]"), DimensionError);
}

TEST_CASE("train mode dropout is driven by the stream") {
    ModelConfig c = tiny_config();
    c.dropout = 0.3;
    const PreparedData data = tiny_data();
    const ModelParams p = init_model(c, 2);
    Rng r1(9), r2(9), r3(10);
    const Tensor a = forward(p, data.train[0], c, Mode::train, &r1).value();
    const Tensor b = forward(p, data.train[0], c, Mode::train, &r2).value();
    const Tensor d = forward(p, data.train[0], c, Mode::train, &r3).value();
    CHECK(a == b);
    CHECK_FALSE(a == d);
    CHECK(forward(p, data.train[0], c, Mode::eval, &r3).value() == forward(p, data.train[0], c, Mode::eval).value());
}

TEST_CASE("end-to-end gradients match finite differences") {
    ModelConfig c = tiny_config();
    const PreparedData data = tiny_data();
    const ModelParams p = init_model(c, 6);
    const WindowSample& w = data.train[3];
    const GradReport r =
        check_gradients([&] { return mse_loss(forward(p, w, c, Mode::eval), w.x_future); }, p.named());
    CHECK(r.max_rel_diff < 1e-4);
}

TEST_CASE("predictions ignore everything after the input window") {
    const ModelConfig c = tiny_config();
    const PreparedData data = tiny_data();
    const ModelParams p = init_model(c, 8);
    WindowSample w = data.val[2];
    const std::vector<double> base = predict(p, w, c);
    for (auto& v : w.x_future.values()) v += 100.0;
    CHECK(predict(p, w, c) == base);

    // Rebuild windows from a dataset whose rows after the window are altered.
    TimeSeriesDataset raw = data.raw.test;
    const auto before = windows_for(raw, data.stats, c.windows());
    for (std::size_t i = c.seq_len; i < raw.rows(); ++i) {
        raw.target[i] *= 3.0;
        for (auto& f : raw.features) f[i] += 50.0;
    }
    const auto after = windows_for(raw, data.stats, c.windows());
    CHECK(predict(p, before[0], c) == predict(p, after[0], c));
}

TEST_CASE("learning-rate schedule") {
    const TrainConfig tc;
    CHECK(lr_schedule(0, tc) == doctest::Approx(1e-4).epsilon(1e-12));
    CHECK(lr_schedule(1, tc) == doctest::Approx(9e-5).epsilon(1e-12));
    CHECK(lr_schedule(30, tc) == 5e-5);
    double prev = lr_schedule(0, tc);
    for (std::size_t e = 1; e < 100; ++e) {
        const double lr = lr_schedule(e, tc);
        CHECK(lr <= prev);
        CHECK(lr >= tc.lr_floor);
        prev = lr;
    }
}

TEST_CASE("train config validation") {
    TrainConfig tc;
    CHECK_NOTHROW(tc.validate());
    tc.patience = 40;
    CHECK_THROWS_AS(tc.validate(), ConfigError);
    tc = TrainConfig{};
    tc.lr_floor = 1.0;
    CHECK_THROWS_AS(tc.validate(), ConfigError);
    CHECK(TrainConfig::from_json(nlohmann::json::parse(TrainConfig{}.to_json().dump())).to_json() ==
          TrainConfig{}.to_json());
}

TEST_CASE("early stopping contract") {
    EarlyStopping es(3);
    CHECK(es.update(5.0).improved);
    CHECK(es.update(4.0).improved);
    const double worse[] = {4.0, 4.5, 6.0};
    for (std::size_t i = 0; i < 3; ++i) {
        const auto s = es.update(worse[i]);
        CHECK_FALSE(s.improved);
        CHECK(s.stop == (i == 2));
    }
    CHECK(es.best_epoch() == 2);
    CHECK(es.best_loss() == 4.0);
}

TEST_CASE("patience 1 with an immediately worsening val loss stops at epoch 2") {
    const ModelConfig c = tiny_config();
    const PreparedData data = tiny_data();
    TrainConfig tc = quick_train(10);
    tc.patience = 1;
    const ModelParams init = init_model(c, 1);
    const TrainResult r = train(init, data.train, data.val, c, tc,
                                [](std::size_t epoch, double) { return static_cast<double>(epoch); });
    CHECK(r.history.size() == 2);
    CHECK(r.stopped_early);
    CHECK(r.best_epoch == 1);

    // The returned parameters are those after epoch 1.
    TrainConfig one = tc;
    one.epochs = 1;
    const TrainResult first = train(init, data.train, data.val, c, one);
    const auto a = r.best.named(), b = first.best.named();
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].var.value().storage() == b[i].var.value().storage());
}

TEST_CASE("training is deterministic for a fixed seed") {
    const ModelConfig c = tiny_config();
    const PreparedData data = tiny_data();
    TrainConfig tc = quick_train(3);
    tc.seed = 12;
    const TrainResult a = train(init_model(c, 12), data.train, data.val, c, tc);
    const TrainResult b = train(init_model(c, 12), data.train, data.val, c, tc);
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) {
        CHECK(a.history[i].train_mse == b.history[i].train_mse);
        CHECK(a.history[i].val_mse == b.history[i].val_mse);
        CHECK(a.history[i].lr == b.history[i].lr);
    }
    const auto na = a.best.named(), nb = b.best.named();
    for (std::size_t i = 0; i < na.size(); ++i) CHECK(na[i].var.value().storage() == nb[i].var.value().storage());

    std::ostringstream csv;
    write_history_csv(csv, a.history);
    CHECK(csv.str().rfind("epoch,train_mse,val_mse,lr\n", 0) == 0);
}

TEST_CASE("one noise-free batch can be memorized") {
    ModelConfig c = tiny_config();
    c.d_model = 16;
    c.d_ff = 8;
    const PreparedData data = prepare_data(small_series(160, 0.0), {}, c.windows());
    const std::vector<WindowSample> batch(data.train.begin(), data.train.begin() + 8);
    TrainConfig tc = quick_train(200);
    tc.lr0 = 3e-3;
    tc.lr_floor = 1e-3;
    tc.weight_decay = 0.0;
    const TrainResult r = train(init_model(c, 0), batch, batch, c, tc);
    CHECK(mean_squared_error(r.best, batch, c) < 0.05);
}

TEST_CASE("metrics closed forms") {
    const std::vector<std::vector<double>> truth{{1, 2, 3}, {4, 5, 6}};
    const Metrics exact = compute_metrics(truth, truth);
    CHECK(exact.mse == 0.0);
    CHECK(exact.mae == 0.0);
    auto shifted = truth;
    for (auto& row : shifted)
        for (auto& v : row) v -= 2.5;
    const Metrics off = compute_metrics(shifted, truth);
    CHECK(off.mse == doctest::Approx(6.25));
    CHECK(off.mae == doctest::Approx(2.5));
    CHECK(off.per_window.size() == 2);

    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<std::vector<double>> p(4, std::vector<double>(6)), t = p;
        for (auto& row : p)
            for (auto& v : row) v = rng.normal(0, 50);
        const Metrics m = compute_metrics(p, t);
        CHECK(m.mae * m.mae <= m.mse + 1e-9);
    }
    CHECK_THROWS_AS(compute_metrics({{1.0}}, {{1.0, 2.0}}), DimensionError);
}

TEST_CASE("run statistics use the sample standard deviation") {
    const double two[] = {1.0, 3.0};
    const RunStats s = run_stats(two);
    CHECK(s.mean == 2.0);
    CHECK(s.std == doctest::Approx(std::sqrt(2.0)));
    const double same[] = {4.0, 4.0, 4.0};
    CHECK(run_stats(same).std == 0.0);
}

TEST_CASE("multi_run reports every seed") {
    const ModelConfig c = tiny_config();
    const PreparedData data = tiny_data();
    CHECK_THROWS_AS(multi_run(data, c, quick_train(1), 1), ConfigError);
    const MultiRunReport r = multi_run(data, c, quick_train(1), 3, 10, WindowRange{0, 5});
    REQUIRE(r.runs.size() == 3);
    CHECK(r.complete);
    CHECK(r.runs[0].seed == 10);
    CHECK(r.runs[2].seed == 12);
    CHECK(r.spike_mse.has_value());
    std::vector<double> mses;
    for (const auto& run : r.runs) mses.push_back(run.test.mse);
    CHECK(r.mse.mean == doctest::Approx(run_stats(mses).mean));

    std::vector<RunSummary> forced(3, r.runs[0]);
    CHECK(aggregate_runs(forced).mse.std == 0.0);
    RunSummary failed;
    failed.error = "diverged";
    forced.push_back(failed);
    CHECK_FALSE(aggregate_runs(forced).complete);
}

TEST_CASE("spike scoring") {
    const std::vector<double> flat(24, 200.0);
    std::vector<double> jump(24, 200.0), half(24, 200.0);
    for (std::size_t h = 12; h < 24; ++h) {
        jump[h] = 600.0;
        half[h] = 450.0;
    }
    const SpikeCase cases[] = {{200.0, flat, flat}, {200.0, half, jump}, {200.0, flat, jump}};
    const SpikeReport r = spike_score(cases, 1.5);
    CHECK_FALSE(r.cases[0].flagged);
    CHECK_FALSE(r.cases[0].truth_spike);
    CHECK(r.cases[1].flagged);
    CHECK(r.cases[2].truth_spike);
    CHECK_FALSE(r.cases[2].flagged);
    CHECK(r.true_positives == 1);
    CHECK(r.false_negatives == 1);
    CHECK(r.true_negatives == 1);
    CHECK(r.false_positives == 0);
    CHECK(r.cases[1].peak_timing_error == 0u);
}

TEST_CASE("largest spike window ends its history before the peak") {
    const SynthResult s = generate_synthetic(default_outbreak_spec(7));
    const DatasetSplits splits = chronological_split(s.dataset);
    const WindowSpec spec;
    const std::size_t w = largest_spike_window(splits.test, spec);
    const auto& y = splits.test.target;
    const std::size_t peak = static_cast<std::size_t>(std::max_element(y.begin(), y.end()) - y.begin());
    CHECK(w + spec.seq_len <= peak);
    CHECK(peak < w + spec.seq_len + spec.pred_len);
}

TEST_CASE("checkpoint round trip preserves predictions") {
    const ModelConfig c = tiny_config();
    const PreparedData data = tiny_data();
    Checkpoint ck;
    ck.config = c;
    ck.features = data.features;
    ck.stats = data.stats;
    ck.params = init_model(c, 21);
    const auto path = std::filesystem::temp_directory_path() / "crosslag_unit_checkpoint.json";
    save_checkpoint(path, ck);
    const Checkpoint back = load_checkpoint(path);
    CHECK(back.features == ck.features);
    CHECK(back.stats == ck.stats);
    CHECK(predict(back.params, data.test[0], back.config) == predict(ck.params, data.test[0], c));

    nlohmann::json j = nlohmann::json::parse(ck.to_json().dump());
    j["version"] = kCheckpointVersion + 1;
    CHECK_THROWS_AS(Checkpoint::from_json(j), CompatibilityError);
    std::filesystem::remove(path);
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("evaluate scores denormalized values over an optional range") {
    const ModelConfig c = tiny_config();
    const PreparedData data = tiny_data();
    const ModelParams p = init_model(c, 2);
    const Metrics all = evaluate(p, data.test, c, data.stats, "cases");
    CHECK(all.points == data.test.size() * c.pred_len);
    const Metrics part = evaluate(p, data.test, c, data.stats, "cases", WindowRange{2, 4});
    CHECK(part.per_window.size() == 2);
    CHECK(part.per_window[0].window == 2);
    CHECK(part.per_window[0].mse == all.per_window[2].mse);
    CHECK_THROWS_AS(evaluate(p, data.test, c, data.stats, "cases", WindowRange{0, data.test.size() + 1}),
                    ConfigError);
    CHECK_THROWS_AS(evaluate(p, data.test, c, data.stats, "deaths"), ConfigError);
}
