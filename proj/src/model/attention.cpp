#include "crosslag/model/attention.hpp"

#include <atomic>
#include <cmath>

#include "crosslag/errors.hpp"

namespace crosslag {

namespace {

std::atomic<std::size_t> g_score_evaluations{0};

Tensor* parent_grad(Node& self, std::size_t i) {
    Node& p = *self.parents[i];
    return p.requires_grad ? &p.grad_buffer() : nullptr;
}

Var uniform_param(Shape shape, double bound, Rng& rng) {
    Tensor t(std::move(shape));
    for (auto& v : t.values()) v = rng.uniform(-bound, bound);
    return Var(std::move(t), true);
}

// S[t, j] = <q[t], kv[t, j]> * scale, counting every dot product.
Var lagged_scores(const Var& q, const Var& kv, double scale, std::size_t& evaluations) {
    const std::size_t steps = kv.shape()[0], keys = kv.shape()[1], d = kv.shape()[2];
    if (q.shape() != Shape{steps, d}) {
        throw DimensionError("cross_lag_attention: queries " + shape_str(q.shape()) + " vs keys " +
                             shape_str(kv.shape()));
    }
    Tensor out({steps, keys});
    const Tensor& qv = q.value();
    const Tensor& kvv = kv.value();
    std::size_t count = 0;
    for (std::size_t t = 0; t < steps; ++t) {
        const double* qt = qv.data() + t * d;
        for (std::size_t j = 0; j < keys; ++j) {
            const double* k = kvv.data() + (t * keys + j) * d;
            double acc = 0.0;
            for (std::size_t c = 0; c < d; ++c) acc += qt[c] * k[c];
            out.at(t, j) = acc * scale;
            ++count;
        }
    }
    evaluations += count;
    g_score_evaluations += count;
    return Var::from_op(std::move(out), {q, kv}, [steps, keys, d, scale](Node& self) {
        const Tensor& qv = self.parents[0]->value;
        const Tensor& kvv = self.parents[1]->value;
        Tensor* gq = parent_grad(self, 0);
        Tensor* gkv = parent_grad(self, 1);
        for (std::size_t t = 0; t < steps; ++t) {
            for (std::size_t j = 0; j < keys; ++j) {
                const double g = self.grad.at(t, j) * scale;
                if (g == 0.0) continue;
                const std::size_t base = (t * keys + j) * d;
                for (std::size_t c = 0; c < d; ++c) {
                    if (gq) (*gq)[t * d + c] += g * kvv[base + c];
                    if (gkv) (*gkv)[base + c] += g * qv[t * d + c];
                }
            }
        }
    }, "cross_lag_attention.scores");
}

// O[t] = sum_j A[t, j] * kv[t, j]
Var lagged_mix(const Var& a, const Var& kv) {
    const std::size_t steps = kv.shape()[0], keys = kv.shape()[1], d = kv.shape()[2];
    Tensor out({steps, d}, 0.0);
    const Tensor& av = a.value();
    const Tensor& kvv = kv.value();
    for (std::size_t t = 0; t < steps; ++t) {
        for (std::size_t j = 0; j < keys; ++j) {
            const double w = av.at(t, j);
            if (w == 0.0) continue;
            const std::size_t base = (t * keys + j) * d;
            for (std::size_t c = 0; c < d; ++c) out[t * d + c] += w * kvv[base + c];
        }
    }
    return Var::from_op(std::move(out), {a, kv}, [steps, keys, d](Node& self) {
        const Tensor& av = self.parents[0]->value;
        const Tensor& kvv = self.parents[1]->value;
        Tensor* ga = parent_grad(self, 0);
        Tensor* gkv = parent_grad(self, 1);
        for (std::size_t t = 0; t < steps; ++t) {
            const double* go = self.grad.data() + t * d;
            for (std::size_t j = 0; j < keys; ++j) {
                const std::size_t base = (t * keys + j) * d;
                if (ga) {
                    double acc = 0.0;
                    for (std::size_t c = 0; c < d; ++c) acc += go[c] * kvv[base + c];
                    ga->at(t, j) += acc;
                }
                if (gkv) {
                    const double w = av.at(t, j);
                    for (std::size_t c = 0; c < d; ++c) (*gkv)[base + c] += w * go[c];
                }
            }
        }
    }, "cross_lag_attention.mix");
}

}  // namespace

LagSpec LagSpec::from_max_lag(int max_lag) {
    if (max_lag < 0) throw ConfigError("max_lag must be >= 0, got " + std::to_string(max_lag));
    LagSpec s;
    s.lags_.clear();
    const int terms = max_lag / 2 + 1;
    for (int i = 0; i < terms; ++i) s.lags_.push_back(static_cast<std::size_t>(2 * i));
    s.source_ = Source::max_lag;
    s.max_lag_ = max_lag;
    return s;
}

LagSpec LagSpec::from_list(const std::vector<int>& lags) {
    if (lags.empty()) throw ConfigError("lag list must not be empty");
    LagSpec s;
    s.lags_.clear();
    for (std::size_t i = 0; i < lags.size(); ++i) {
        if (lags[i] < 0) throw ConfigError("lag " + std::to_string(lags[i]) + " is negative");
        if (i > 0 && lags[i] <= lags[i - 1]) throw ConfigError("lags must be strictly increasing");
        s.lags_.push_back(static_cast<std::size_t>(lags[i]));
    }
    s.source_ = Source::explicit_list;
    s.max_lag_ = lags.back();
    return s;
}

nlohmann::ordered_json LagSpec::to_json() const {
    nlohmann::ordered_json j;
    j["lags"] = lags_;
    j["source"] = source_ == Source::max_lag ? "max_lag" : "explicit";
    if (source_ == Source::max_lag) j["max_lag"] = max_lag_;
    return j;
}

LagSpec LagSpec::from_json(const nlohmann::json& j) {
    if (j.is_array()) return from_list(j.get<std::vector<int>>());
    if (j.is_number_integer()) return from_max_lag(j.get<int>());
    if (j.value("source", std::string("explicit")) == "max_lag" && j.contains("max_lag")) {
        return from_max_lag(j.at("max_lag").get<int>());
    }
    return from_list(j.at("lags").get<std::vector<int>>());
}

LagSpec build_lag_vector(int max_lag) { return LagSpec::from_max_lag(max_lag); }

LagBank build_lag_bank(const Var& z_exo, const LagSpec& lags) {
    if (z_exo.value().rank() != 3) {
        throw DimensionError("build_lag_bank: expected [T x F x d_model], got " + shape_str(z_exo.shape()));
    }
    const std::size_t steps = z_exo.shape()[0], nf = z_exo.shape()[1], d = z_exo.shape()[2];
    const std::size_t nl = lags.size();
    const std::vector<std::size_t> offsets = lags.lags();
    Tensor out({steps, nl * nf, d}, 0.0);
    const Tensor& z = z_exo.value();
    for (std::size_t t = 0; t < steps; ++t) {
        for (std::size_t delta = 0; delta < nl; ++delta) {
            if (t < offsets[delta]) continue;
            const std::size_t src = t - offsets[delta];
            for (std::size_t f = 0; f < nf; ++f) {
                const double* from = z.data() + (src * nf + f) * d;
                double* to = out.data() + (t * nl * nf + f + nf * delta) * d;
                std::copy(from, from + d, to);
            }
        }
    }
    Var values = Var::from_op(std::move(out), {z_exo}, [steps, nf, d, nl, offsets](Node& self) {
        Tensor* g = parent_grad(self, 0);
        if (!g) return;
        for (std::size_t t = 0; t < steps; ++t) {
            for (std::size_t delta = 0; delta < nl; ++delta) {
                if (t < offsets[delta]) continue;
                const std::size_t src = t - offsets[delta];
                for (std::size_t f = 0; f < nf; ++f) {
                    const double* from = self.grad.data() + (t * nl * nf + f + nf * delta) * d;
                    double* to = g->data() + (src * nf + f) * d;
                    for (std::size_t c = 0; c < d; ++c) to[c] += from[c];
                }
            }
        }
    }, "build_lag_bank");
    return LagBank{std::move(values), steps, nf, lags};
}

Mask valid_key_mask(std::size_t steps, const LagSpec& lags, std::size_t features) {
    Mask m(steps, lags.size() * features);
    for (std::size_t t = 0; t < steps; ++t)
        for (std::size_t delta = 0; delta < lags.size(); ++delta)
            for (std::size_t f = 0; f < features; ++f) m.set(t, f + features * delta, t >= lags[delta]);
    return m;
}

void CrossAttentionParams::collect(std::vector<NamedParam>& out, const std::string& prefix) const {
    out.push_back({prefix + ".query_weight", query_weight});
    out.push_back({prefix + ".query_bias", query_bias});
    out.push_back({prefix + ".kv_weight", kv_weight});
    out.push_back({prefix + ".kv_bias", kv_bias});
}

void SelfAttentionParams::collect(std::vector<NamedParam>& out, const std::string& prefix) const {
    out.push_back({prefix + ".query_weight", query_weight});
    out.push_back({prefix + ".query_bias", query_bias});
    out.push_back({prefix + ".key_weight", key_weight});
    out.push_back({prefix + ".key_bias", key_bias});
    out.push_back({prefix + ".value_weight", value_weight});
    out.push_back({prefix + ".value_bias", value_bias});
}

CrossAttentionParams init_cross_attention(std::size_t d_model, std::size_t d, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(d_model));
    CrossAttentionParams p;
    p.query_weight = uniform_param({d_model, d}, bound, rng);
    p.query_bias = uniform_param({d}, bound, rng);
    p.kv_weight = uniform_param({d_model, d}, bound, rng);
    p.kv_bias = uniform_param({d}, bound, rng);
    return p;
}

SelfAttentionParams init_self_attention(std::size_t d_model, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(d_model));
    SelfAttentionParams p;
    p.query_weight = uniform_param({d_model, d_model}, bound, rng);
    p.query_bias = uniform_param({d_model}, bound, rng);
    p.key_weight = uniform_param({d_model, d_model}, bound, rng);
    p.key_bias = uniform_param({d_model}, bound, rng);
    p.value_weight = uniform_param({d_model, d_model}, bound, rng);
    p.value_bias = uniform_param({d_model}, bound, rng);
    return p;
}

nlohmann::ordered_json AttentionTrace::to_json(const std::vector<std::string>& feature_names) const {
    nlohmann::ordered_json j;
    j["steps"] = weights.empty() ? 0 : weights.dim(0);
    j["features"] = features;
    j["lags"] = lags.lags();
    j["score_evaluations"] = score_evaluations;
    auto& entries = j["entries"] = nlohmann::ordered_json::array();
    if (weights.empty()) return j;
    const std::size_t steps = weights.dim(0), keys = weights.dim(1);
    for (std::size_t t = 0; t < steps; ++t) {
        for (std::size_t key = 0; key < keys; ++key) {
            const std::size_t delta = key / features, f = key % features;
            nlohmann::ordered_json e;
            e["t"] = t;
            e["j"] = key;
            e["delta"] = delta;
            e["lag"] = lags[delta];
            e["f"] = f;
            if (f < feature_names.size()) e["feature"] = feature_names[f];
            e["valid"] = valid(t, key);
            e["weight"] = weights.at(t, key);
            entries.push_back(std::move(e));
        }
    }
    return j;
}

CrossAttentionResult cross_lag_attention(const Var& x_endo, const LagBank& bank, const Mask& valid,
                                         const CrossAttentionParams& params, double dropout_p, Rng* rng) {
    const std::size_t steps = bank.steps, keys = bank.keys();
    if (x_endo.value().rank() != 2 || x_endo.shape()[0] != steps) {
        throw DimensionError("cross_lag_attention: endogenous input " + shape_str(x_endo.shape()) + " vs " +
                             std::to_string(steps) + " steps");
    }
    if (valid.rows() != steps || valid.cols() != keys) {
        throw DimensionError("cross_lag_attention: mask does not match the lag bank");
    }
    const std::size_t d = params.query_weight.shape()[1];
    const Var q = linear(x_endo, params.query_weight, params.query_bias);  // [T x d]
    const Var kv = linear(bank.values, params.kv_weight, params.kv_bias);  // [T x L*F x d]

    CrossAttentionResult result;
    AttentionTrace& trace = result.trace;
    const Var scores = lagged_scores(q, kv, 1.0 / std::sqrt(static_cast<double>(d)), trace.score_evaluations);
    const Var weights = masked_softmax(scores, valid);
    result.output = lagged_mix(dropout(weights, dropout_p, rng), kv);

    trace.queries = q.value();
    trace.keys = kv.value();
    trace.scores = scores.value();
    trace.masked_scores = scores.value();
    for (std::size_t t = 0; t < steps; ++t)
        for (std::size_t j = 0; j < keys; ++j)
            if (!valid(t, j)) trace.masked_scores.at(t, j) = kMaskedScore;
    trace.weights = weights.value();
    trace.output = result.output.value();
    trace.valid = valid;
    trace.lags = bank.lags;
    trace.features = bank.features;
    return result;
}

std::size_t score_evaluation_count() { return g_score_evaluations.load(); }
void reset_score_evaluation_count() { g_score_evaluations = 0; }

Var endo_self_attention(const Var& x, const SelfAttentionParams& params, double dropout_p, Rng* rng,
                        Tensor* weights_out) {
    if (x.value().rank() != 2) throw DimensionError("endo_self_attention: expected [T x d_model]");
    const std::size_t steps = x.shape()[0];
    const std::size_t d = params.query_weight.shape()[1];
    const Var q = linear(x, params.query_weight, params.query_bias);
    const Var k = linear(x, params.key_weight, params.key_bias);
    const Var v = linear(x, params.value_weight, params.value_bias);
    const Var scores = scale(matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(d)));
    const Var weights = masked_softmax(scores, Mask::causal(steps));
    if (weights_out) *weights_out = weights.value();
    return matmul(dropout(weights, dropout_p, rng), v);
}

}  // namespace crosslag
