#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "crosslag/core/gradcheck.hpp"
#include "crosslag/errors.hpp"
#include "crosslag/model/attention.hpp"
#include "oracles.hpp"

using namespace crosslag;

namespace {

Var identity(std::size_t n) {
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return Var(t, true);
}

CrossAttentionParams identity_params(std::size_t d) {
    return {identity(d), Var(Tensor({d}), true), identity(d), Var(Tensor({d}), true)};
}

std::vector<std::size_t> as_sizes(const std::vector<int>& v) { return {v.begin(), v.end()}; }

}  // namespace

TEST_CASE("lag vectors from max_lag") {
    CHECK(build_lag_vector(8).lags() == std::vector<std::size_t>{0, 2, 4, 6, 8});
    CHECK(build_lag_vector(0).lags() == std::vector<std::size_t>{0});
    CHECK(build_lag_vector(5).lags() == std::vector<std::size_t>{0, 2, 4});
    CHECK(LagSpec().lags() == build_lag_vector(8).lags());
    CHECK_THROWS_AS(build_lag_vector(-1), ConfigError);
    CHECK_THROWS_AS(LagSpec::from_list({2, 1}), ConfigError);
    CHECK_THROWS_AS(LagSpec::from_list({}), ConfigError);
    CHECK_THROWS_AS(LagSpec::from_list({-3}), ConfigError);
    const LagSpec explicit_list = LagSpec::from_list({1, 3});
    CHECK(explicit_list.source() == LagSpec::Source::explicit_list);
    CHECK(LagSpec::from_json(nlohmann::json::parse(explicit_list.to_json().dump())) == explicit_list);
    CHECK(LagSpec::from_json(nlohmann::json::parse(build_lag_vector(6).to_json().dump())) == build_lag_vector(6));
}

TEST_CASE("lag bank worked examples") {
    const Var z(Tensor({3, 1, 1}, std::vector<double>{1, 2, 3}));
    const LagBank bank = build_lag_bank(z, LagSpec::from_list({0, 2}));
    const Tensor& v = bank.values.value();
    REQUIRE(v.shape() == Shape{3, 2, 1});
    CHECK(std::vector<double>{v.at(0, 0, 0), v.at(1, 0, 0), v.at(2, 0, 0)} == std::vector<double>{1, 2, 3});
    CHECK(std::vector<double>{v.at(0, 1, 0), v.at(1, 1, 0), v.at(2, 1, 0)} == std::vector<double>{0, 0, 1});

    Rng rng(3);
    const Tensor zr = oracle::random_tensor({5, 2, 3}, rng);
    CHECK(build_lag_bank(Var(zr), LagSpec::from_list({0})).values.value().storage() == zr.storage());

    const LagBank far = build_lag_bank(Var(zr), LagSpec::from_list({0, 5}));
    const Mask m = valid_key_mask(5, far.lags, 2);
    for (std::size_t t = 0; t < 5; ++t)
        for (std::size_t f = 0; f < 2; ++f) {
            CHECK_FALSE(m(t, far.key_index(1, f)));
            for (std::size_t k = 0; k < 3; ++k) CHECK(far.values.value().at(t, far.key_index(1, f), k) == 0.0);
        }
    CHECK_THROWS_AS(build_lag_bank(Var(Tensor({4, 2})), LagSpec()), DimensionError);
}

TEST_CASE("lag bank equals the brute-force oracle") {
    Rng rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t T = 1 + rng.index(8), F = 1 + rng.index(3), L = 1 + rng.index(3), D = 1 + rng.index(4);
        std::vector<int> lags;
        int next = static_cast<int>(rng.index(3));
        for (std::size_t i = 0; i < L; ++i) {
            lags.push_back(next);
            next += 1 + static_cast<int>(rng.index(4));
        }
        const Tensor z = oracle::random_tensor({T, F, D}, rng);
        const LagBank bank = build_lag_bank(Var(z), LagSpec::from_list(lags));
        CHECK(bank.values.value().storage() == oracle::lag_bank(z, as_sizes(lags)).storage());
    }
}

TEST_CASE("valid key mask counts") {
    const LagSpec lags = LagSpec::from_list({0, 2, 4});
    const std::size_t F = 3;
    const Mask m = valid_key_mask(10, lags, F);
    CHECK(m.row_count(0) == F);
    std::size_t prev = 0;
    for (std::size_t t = 0; t < 10; ++t) {
        std::size_t expected = 0;
        for (std::size_t l : lags.lags()) expected += l <= t ? F : 0;
        CHECK(m.row_count(t) == expected);
        CHECK(m.row_count(t) >= prev);
        prev = m.row_count(t);
        for (std::size_t j = 0; j < lags.size() * F; ++j)
            CHECK(m(t, j) == oracle::valid_key(t + 1, j + 1, F, lags.lags()));
    }
    CHECK(m.row_count(9) == 9);
    CHECK(valid_key_mask(3, LagSpec::from_list({1}), 1).row_count(0) == 0);
}

TEST_CASE("cross-lag attention matches the direct oracle") {
    Rng rng(23);
    const std::size_t T = 4, F = 1, d = 2;
    const std::vector<std::size_t> lags{0, 2};
    const Tensor x = oracle::random_tensor({T, d}, rng);
    const Tensor z = oracle::random_tensor({T, F, d}, rng);
    const CrossAttentionParams p = init_cross_attention(d, d, rng);
    const LagBank bank = build_lag_bank(Var(z), LagSpec::from_list({0, 2}));
    const CrossAttentionResult r = cross_lag_attention(Var(x), bank, valid_key_mask(T, bank.lags, F), p, 0.0, nullptr);

    const Tensor q = oracle::affine_last(x, p.query_weight.value(), p.query_bias.value());
    const Tensor kv = oracle::affine_last(oracle::lag_bank(z, lags), p.kv_weight.value(), p.kv_bias.value());
    const oracle::AttentionRef ref = oracle::attention(q, kv, F, lags);
    CHECK(oracle::max_abs_diff(r.output.value(), ref.output) <= 1e-12);
    CHECK(oracle::max_abs_diff(r.trace.weights, ref.weights) <= 1e-12);
    CHECK(oracle::max_abs_diff(r.trace.scores, ref.scores) <= 1e-12);
    CHECK(r.trace.masked_scores.at(0, 1) == kMaskedScore);
    CHECK(r.trace.masked_scores.at(3, 1) == r.trace.scores.at(3, 1));
}

TEST_CASE("cross-lag attention on random shapes: oracle, row contract, score count") {
    Rng rng(29);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t T = 1 + rng.index(8), F = 1 + rng.index(3), dm = 1 + rng.index(4), d = 1 + rng.index(4);
        std::vector<int> lags{static_cast<int>(rng.index(2))};
        for (std::size_t i = rng.index(3); i > 0; --i) lags.push_back(lags.back() + 1 + static_cast<int>(rng.index(3)));
        const LagSpec spec = LagSpec::from_list(lags);
        const Tensor x = oracle::random_tensor({T, dm}, rng, -2, 2);
        const Tensor z = oracle::random_tensor({T, F, dm}, rng, -2, 2);
        const CrossAttentionParams p = init_cross_attention(dm, d, rng);
        const LagBank bank = build_lag_bank(Var(z), spec);
        const Mask valid = valid_key_mask(T, spec, F);

        reset_score_evaluation_count();
        const CrossAttentionResult r = cross_lag_attention(Var(x), bank, valid, p, 0.0, nullptr);
        CHECK(score_evaluation_count() == T * spec.size() * F);
        CHECK(r.trace.score_evaluations == T * spec.size() * F);

        const Tensor q = oracle::affine_last(x, p.query_weight.value(), p.query_bias.value());
        const Tensor kv = oracle::affine_last(oracle::lag_bank(z, as_sizes(lags)), p.kv_weight.value(), p.kv_bias.value());
        CHECK(oracle::max_abs_diff(r.output.value(), oracle::attention(q, kv, F, as_sizes(lags)).output) <= 1e-12);

        for (std::size_t t = 0; t < T; ++t) {
            double total = 0.0;
            for (std::size_t j = 0; j < spec.size() * F; ++j) {
                if (!valid(t, j)) CHECK(r.trace.weights.at(t, j) == 0.0);
                total += r.trace.weights.at(t, j);
            }
            if (valid.row_count(t) > 0) {
                CHECK(std::abs(total - 1.0) <= 1e-12);
            } else {
                CHECK(total == 0.0);
                for (std::size_t k = 0; k < d; ++k) CHECK(r.output.value().at(t, k) == 0.0);
            }
        }
    }
}

TEST_CASE("cross-lag attention: single key and identical keys") {
    Rng rng(31);
    const Tensor x = oracle::random_tensor({5, 3}, rng);
    const Tensor z = oracle::random_tensor({5, 1, 3}, rng);
    const CrossAttentionParams p = init_cross_attention(3, 3, rng);
    const LagBank one = build_lag_bank(Var(z), LagSpec::from_list({0}));
    const CrossAttentionResult r = cross_lag_attention(Var(x), one, valid_key_mask(5, one.lags, 1), p, 0.0, nullptr);
    const Tensor v = oracle::affine_last(z, p.kv_weight.value(), p.kv_bias.value());
    for (std::size_t t = 0; t < 5; ++t) {
        CHECK(r.trace.weights.at(t, 0) == 1.0);
        for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(r.output.value().at(t, k) - v.at(t, 0, k)) <= 1e-12);
    }

    Tensor same({5, 4, 3});
    for (std::size_t t = 0; t < 5; ++t)
        for (std::size_t f = 0; f < 4; ++f)
            for (std::size_t k = 0; k < 3; ++k) same.at(t, f, k) = z.at(t, 0, k);
    const LagBank flat = build_lag_bank(Var(same), LagSpec::from_list({0}));
    const CrossAttentionResult u = cross_lag_attention(Var(x), flat, valid_key_mask(5, flat.lags, 4), p, 0.0, nullptr);
    for (std::size_t t = 0; t < 5; ++t)
        for (std::size_t j = 0; j < 4; ++j) CHECK(u.trace.weights.at(t, j) == doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("cross-lag attention validates its inputs") {
    Rng rng(1);
    const CrossAttentionParams p = init_cross_attention(2, 2, rng);
    const LagBank bank = build_lag_bank(Var(Tensor({4, 1, 2})), LagSpec::from_list({0, 1}));
    CHECK_THROWS_AS(cross_lag_attention(Var(Tensor({3, 2})), bank, valid_key_mask(4, bank.lags, 1), p, 0, nullptr),
                    DimensionError);
    CHECK_THROWS_AS(cross_lag_attention(Var(Tensor({4, 2})), bank, valid_key_mask(4, bank.lags, 2), p, 0, nullptr),
                    DimensionError);
}

TEST_CASE("shift consistency under a single lag and identity projections") {
    Rng rng(37);
    const std::size_t T = 9, d = 3, k = 3;
    const Tensor x = oracle::random_tensor({T, d}, rng);
    const Tensor z = oracle::random_tensor({T, 1, d}, rng);
    const LagBank bank = build_lag_bank(Var(z), LagSpec::from_list({static_cast<int>(k)}));
    const CrossAttentionResult r =
        cross_lag_attention(Var(x), bank, valid_key_mask(T, bank.lags, 1), identity_params(d), 0.0, nullptr);
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t c = 0; c < d; ++c) CHECK(r.output.value().at(t, c) == (t >= k ? z.at(t - k, 0, c) : 0.0));
}

TEST_CASE("gradients flow back through the lag bank") {
    Rng rng(41);
    const std::size_t T = 6, F = 2, d = 3;
    Var x(oracle::random_tensor({T, d}, rng), true);
    Var z(oracle::random_tensor({T, F, d}, rng), true);
    const CrossAttentionParams p = init_cross_attention(d, d, rng);
    const LagSpec lags = LagSpec::from_list({0, 2});
    const Mask valid = valid_key_mask(T, lags, F);
    const auto loss = [&] {
        const CrossAttentionResult r = cross_lag_attention(x, build_lag_bank(z, lags), valid, p, 0.0, nullptr);
        return sum(mul(r.output, r.output));
    };
    std::vector<NamedParam> ps{{"x", x}, {"z", z}};
    p.collect(ps, "cross");
    const GradReport report = check_gradients(loss, ps);
    CHECK(report.max_rel_diff < 1e-6);

    // Every step of Z is a valid key for at least the lag-0 block.
    for (auto& np : ps) np.var.zero_grad();
    backward(loss());
    const Tensor g = z.grad();
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t f = 0; f < F; ++f) {
            double n = 0.0;
            for (std::size_t c = 0; c < d; ++c) n += std::abs(g.at(t, f, c));
            CHECK(n > 0.0);
        }
}

TEST_CASE("causal self-attention") {
    Rng rng(43);
    const std::size_t d = 4;
    const SelfAttentionParams p = init_self_attention(d, rng);

    const Tensor single = oracle::random_tensor({1, d}, rng);
    const Tensor v1 = oracle::affine_last(single, p.value_weight.value(), p.value_bias.value());
    CHECK(oracle::max_abs_diff(endo_self_attention(Var(single), p, 0.0, nullptr).value(), v1) <= 1e-15);

    const Tensor x = oracle::random_tensor({7, d}, rng);
    const Tensor base = endo_self_attention(Var(x), p, 0.0, nullptr).value();
    Tensor xp = x;
    xp.at(6, 1) += 5.0;
    const Tensor moved = endo_self_attention(Var(xp), p, 0.0, nullptr).value();
    for (std::size_t t = 0; t < 6; ++t)
        for (std::size_t c = 0; c < d; ++c) CHECK(moved.at(t, c) == base.at(t, c));

    Tensor uniform({5, d}, 0.3);
    Tensor w;
    endo_self_attention(Var(uniform), p, 0.0, nullptr, &w);
    for (std::size_t t = 0; t < 5; ++t)
        for (std::size_t s = 0; s < 5; ++s)
            CHECK(w.at(t, s) == doctest::Approx(s <= t ? 1.0 / static_cast<double>(t + 1) : 0.0).epsilon(1e-14));

    CHECK_THROWS_AS(endo_self_attention(Var(Tensor({d})), p, 0.0, nullptr), DimensionError);
}

TEST_CASE("gate combine examples and convexity") {
    const Var in(Tensor::matrix(1, 3, {1, -2, 4}));
    const Var out(Tensor::matrix(1, 3, {3, 2, -4}));
    CHECK(gate_combine(in, out, Var(Tensor::scalar(-800))).value().storage() == in.value().storage());
    CHECK(gate_combine(in, out, Var(Tensor::scalar(800))).value().storage() == out.value().storage());
    CHECK(gate_combine(in, out, Var(Tensor::scalar(0))).value().storage() == std::vector<double>{2, 0, 0});
    CHECK_THROWS_AS(gate_combine(in, Var(Tensor({1, 2})), Var(Tensor::scalar(0))), DimensionError);

    Rng rng(47);
    for (int trial = 0; trial < 50; ++trial) {
        const Tensor a = oracle::random_tensor({4, 5}, rng, -3, 3), b = oracle::random_tensor({4, 5}, rng, -3, 3);
        const Tensor c = gate_combine(Var(a), Var(b), Var(Tensor::scalar(rng.uniform(-6, 6)))).value();
        for (std::size_t i = 0; i < c.size(); ++i) {
            CHECK(c[i] >= std::min(a[i], b[i]) - 1e-15);
            CHECK(c[i] <= std::max(a[i], b[i]) + 1e-15);
        }
    }
}

TEST_CASE("attention trace serializes one record per step and key") {
    Rng rng(53);
    const LagSpec lags = LagSpec::from_list({0, 2});
    const LagBank bank = build_lag_bank(Var(oracle::random_tensor({3, 2, 2}, rng)), lags);
    const CrossAttentionResult r = cross_lag_attention(Var(oracle::random_tensor({3, 2}, rng)), bank,
                                                       valid_key_mask(3, lags, 2), init_cross_attention(2, 2, rng), 0.0,
                                                       nullptr);
    const auto j = r.trace.to_json({"a", "b"});
    REQUIRE(j["entries"].size() == 12);
    CHECK(j["entries"][2]["delta"] == 1);
    CHECK(j["entries"][2]["lag"] == 2);
    CHECK(j["entries"][3]["feature"] == "b");
    CHECK(j["entries"][2]["valid"] == false);
    CHECK(j["entries"][2]["weight"] == 0.0);
}
