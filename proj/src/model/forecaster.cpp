#include "crosslag/model/forecaster.hpp"

#include <cmath>

#include "crosslag/errors.hpp"

namespace crosslag {

namespace {

Var uniform_param(Shape shape, double bound, Rng& rng) {
    Tensor t(std::move(shape));
    for (auto& v : t.values()) v = rng.uniform(-bound, bound);
    return Var(std::move(t), true);
}

Var copy_leaf(const Var& v) { return Var(v.value(), true); }

}  // namespace

void ModelConfig::validate() const {
    if (seq_len < 1 || pred_len < 1) throw ConfigError("seq_len and pred_len must be >= 1");
    if (d_model < 1 || d_ff < 1) throw ConfigError("d_model and d_ff must be >= 1");
    if (n_heads < 1 || d_model % n_heads != 0) throw ConfigError("n_heads must divide d_model");
    if (n_heads != 1) throw ConfigError("only single-head attention is implemented (n_heads = 1)");
    if (encoder_layers != 1) throw ConfigError("only one encoder layer is implemented (encoder_layers = 1)");
    if (lags.size() == 0) throw ConfigError("lag vector must not be empty");
    embedding().validate();
}

nlohmann::ordered_json ModelConfig::to_json() const {
    nlohmann::ordered_json j;
    j["seq_len"] = seq_len;
    j["label_len"] = label_len;
    j["pred_len"] = pred_len;
    j["d_model"] = d_model;
    j["d_ff"] = d_ff;
    j["n_heads"] = n_heads;
    j["encoder_layers"] = encoder_layers;
    j["dropout"] = dropout;
    j["lags"] = lags.to_json();
    j["period"] = period;
    j["avg_window"] = avg_window;
    return j;
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    ModelConfig c;
    try {
        c.seq_len = j.value("seq_len", c.seq_len);
        c.label_len = j.value("label_len", c.label_len);
        c.pred_len = j.value("pred_len", c.pred_len);
        c.d_model = j.value("d_model", c.d_model);
        c.d_ff = j.value("d_ff", c.d_ff);
        c.n_heads = j.value("n_heads", c.n_heads);
        c.encoder_layers = j.value("encoder_layers", c.encoder_layers);
        c.dropout = j.value("dropout", c.dropout);
        if (j.contains("lags")) c.lags = LagSpec::from_json(j.at("lags"));
        if (j.contains("max_lag")) c.lags = LagSpec::from_max_lag(j.at("max_lag").get<int>());
        c.period = j.value("period", c.period);
        c.avg_window = j.value("avg_window", c.avg_window);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("model config: ") + e.what());
    }
    c.validate();
    return c;
}

std::vector<NamedParam> ModelParams::named() const {
    std::vector<NamedParam> out;
    embedding.collect(out);
    self_attention.collect(out, "self_attention");
    cross_attention.collect(out, "cross_attention");
    out.push_back({"gate.self", gate_self});
    out.push_back({"gate.cross", gate_cross});
    out.push_back({"gate.mlp", gate_mlp});
    out.push_back({"mlp.w1", mlp.w1});
    out.push_back({"mlp.b1", mlp.b1});
    out.push_back({"mlp.w2", mlp.w2});
    out.push_back({"mlp.b2", mlp.b2});
    out.push_back({"head.weight", head.weight});
    out.push_back({"head.bias", head.bias});
    return out;
}

std::size_t ModelParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : named()) n += p.var.size();
    return n;
}

ModelParams ModelParams::clone() const {
    ModelParams c;
    const auto copy_embedding = [](const EmbeddingParams& e) {
        return EmbeddingParams{copy_leaf(e.drift_scale), copy_leaf(e.drift_bias), copy_leaf(e.endo_avg),
                               copy_leaf(e.exo_avg),     copy_leaf(e.endo_weight), copy_leaf(e.endo_bias),
                               copy_leaf(e.exo_weight),  copy_leaf(e.exo_bias)};
    };
    c.embedding = copy_embedding(embedding);
    const auto& s = self_attention;
    c.self_attention = {copy_leaf(s.query_weight), copy_leaf(s.query_bias), copy_leaf(s.key_weight),
                        copy_leaf(s.key_bias),     copy_leaf(s.value_weight), copy_leaf(s.value_bias)};
    const auto& x = cross_attention;
    c.cross_attention = {copy_leaf(x.query_weight), copy_leaf(x.query_bias), copy_leaf(x.kv_weight),
                         copy_leaf(x.kv_bias)};
    c.gate_self = copy_leaf(gate_self);
    c.gate_cross = copy_leaf(gate_cross);
    c.gate_mlp = copy_leaf(gate_mlp);
    c.mlp = {copy_leaf(mlp.w1), copy_leaf(mlp.b1), copy_leaf(mlp.w2), copy_leaf(mlp.b2)};
    c.head = {copy_leaf(head.weight), copy_leaf(head.bias)};
    return c;
}

ModelParams init_model(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    Rng rng(seed);
    ModelParams p;
    p.embedding = init_embedding(config.embedding(), rng);
    p.self_attention = init_self_attention(config.d_model, rng);
    p.cross_attention = init_cross_attention(config.d_model, config.d_model, rng);
    p.gate_self = Var(Tensor::scalar(0.0), true);
    p.gate_cross = Var(Tensor::scalar(0.0), true);
    p.gate_mlp = Var(Tensor::scalar(0.0), true);
    const double in_bound = 1.0 / std::sqrt(static_cast<double>(config.d_model));
    const double ff_bound = 1.0 / std::sqrt(static_cast<double>(config.d_ff));
    p.mlp.w1 = uniform_param({config.d_model, config.d_ff}, in_bound, rng);
    p.mlp.b1 = uniform_param({config.d_ff}, in_bound, rng);
    p.mlp.w2 = uniform_param({config.d_ff, config.d_model}, ff_bound, rng);
    p.mlp.b2 = uniform_param({config.d_model}, ff_bound, rng);
    const std::size_t flat = config.seq_len * config.d_model;
    const double head_bound = 1.0 / std::sqrt(static_cast<double>(flat));
    p.head.weight = uniform_param({flat, config.pred_len}, head_bound, rng);
    p.head.bias = uniform_param({config.pred_len}, head_bound, rng);
    return p;
}

std::size_t reference_stack_census(const ReferenceStack& r) {
    const std::size_t d = r.d_model;
    const std::size_t attention = 4 * (d * d + d);          // q, k, v, out projections
    const std::size_t feed_forward = d * r.d_ff + r.d_ff + r.d_ff * d + d;
    const std::size_t norms = 3 * 2 * d;
    const std::size_t layer = 2 * attention + feed_forward + norms;
    const std::size_t patches = r.seq_len / r.patch_len;
    const std::size_t embeddings = r.patch_len * d /*patch, no bias*/ + d /*global token*/ + (r.seq_len * d + d) /*variate*/;
    const std::size_t head = (patches + 1) * d * r.pred_len + r.pred_len;
    return embeddings + r.layers * layer + 2 * d /*final norm*/ + head;
}

Var forward(const ModelParams& params, const WindowSample& sample, const ModelConfig& config, Mode mode,
            Rng* dropout_rng, ForwardTrace* trace) {
    if (sample.seq_len() != config.seq_len) {
        throw DimensionError("forward[input]: window has " + std::to_string(sample.seq_len()) +
                             " history steps, model expects " + std::to_string(config.seq_len));
    }
    if (sample.z_hist.rank() != 2 || sample.z_hist.dim(0) != config.seq_len) {
        throw DimensionError("forward[input]: exogenous history has shape " + shape_str(sample.z_hist.shape()));
    }
    Rng* rng = mode == Mode::train ? dropout_rng : nullptr;
    const EmbeddingConfig emb = config.embedding();
    const std::size_t steps = config.seq_len;
    const std::size_t nf = sample.num_features();

    const Tensor week_enc = week_periodicity(sample.w_hist.values(), config.period);
    const Var year_enc = annual_drift(Var(sample.y_hist), params.embedding.drift_scale, params.embedding.drift_bias);
    const Var x_endo = embed_endogenous(Var(sample.x_hist), week_enc, year_enc, params.embedding, emb, rng);
    const Var z_exo = embed_exogenous(Var(sample.z_hist), week_enc, year_enc, params.embedding, emb, rng);

    Tensor* self_weights = trace ? &trace->self_weights : nullptr;
    const Var self_out = endo_self_attention(x_endo, params.self_attention, config.dropout, rng, self_weights);
    const Var h1 = gate_combine(x_endo, self_out, params.gate_self);

    const LagBank bank = build_lag_bank(z_exo, config.lags);
    const Mask valid = valid_key_mask(steps, config.lags, nf);
    CrossAttentionResult cross = cross_lag_attention(h1, bank, valid, params.cross_attention, config.dropout, rng);
    const Var h2 = gate_combine(h1, cross.output, params.gate_cross);

    const Var hidden = gelu(linear(h2, params.mlp.w1, params.mlp.b1));
    const Var mlp_out = dropout(linear(hidden, params.mlp.w2, params.mlp.b2), config.dropout, rng);
    const Var h3 = gate_combine(h2, mlp_out, params.gate_mlp);

    const Var flat = reshape(h3, {1, steps * config.d_model});
    const Var out = linear(flat, params.head.weight, params.head.bias);

    if (trace) {
        trace->endo_embedding = x_endo.value();
        trace->exo_embedding = z_exo.value();
        trace->cross = std::move(cross.trace);
    }
    return reshape(out, {config.pred_len});
}

std::vector<double> predict(const ModelParams& params, const WindowSample& sample, const ModelConfig& config,
                            ForwardTrace* trace) {
    const Var out = forward(params, sample, config, Mode::eval, nullptr, trace);
    return out.value().storage();
}

}  // namespace crosslag
