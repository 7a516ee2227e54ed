#include "crosslag/model/embedding.hpp"

#include <cmath>
#include <numbers>

#include "crosslag/errors.hpp"

namespace crosslag {

namespace {

Var uniform_param(Shape shape, double bound, Rng& rng) {
    Tensor t(std::move(shape));
    for (auto& v : t.values()) v = rng.uniform(-bound, bound);
    return Var(std::move(t), true);
}

Var constant_param(Shape shape, double value) { return Var(Tensor(std::move(shape), value), true); }

void require_series(const Var& v, std::size_t steps, const char* what) {
    if (v.value().rank() != 1 || v.size() != steps) {
        throw DimensionError(std::string("embedding: ") + what + " has shape " + shape_str(v.shape()) +
                             ", expected [" + std::to_string(steps) + "]");
    }
}

}  // namespace

void EmbeddingConfig::validate() const {
    if (d_model < 1) throw ConfigError("embedding: d_model must be >= 1");
    if (!(period > 0)) throw ConfigError("embedding: period must be > 0");
    if (avg_window < 1) throw ConfigError("embedding: avg_window must be >= 1");
    if (dropout < 0 || dropout >= 1) throw ConfigError("embedding: dropout must be in [0, 1)");
}

void EmbeddingParams::collect(std::vector<NamedParam>& out) const {
    out.push_back({"embedding.drift_scale", drift_scale});
    out.push_back({"embedding.drift_bias", drift_bias});
    out.push_back({"embedding.endo_avg", endo_avg});
    out.push_back({"embedding.exo_avg", exo_avg});
    out.push_back({"embedding.endo_weight", endo_weight});
    out.push_back({"embedding.endo_bias", endo_bias});
    out.push_back({"embedding.exo_weight", exo_weight});
    out.push_back({"embedding.exo_bias", exo_bias});
}

EmbeddingParams init_embedding(const EmbeddingConfig& cfg, Rng& rng) {
    cfg.validate();
    const double taps = 1.0 / static_cast<double>(cfg.avg_window);
    const double endo_bound = 1.0 / std::sqrt(static_cast<double>(kEndoChannels));
    const double exo_bound = 1.0 / std::sqrt(static_cast<double>(kExoChannels));
    EmbeddingParams p;
    p.drift_scale = constant_param({1}, 1.0);
    p.drift_bias = constant_param({1}, 0.0);
    p.endo_avg = constant_param({cfg.avg_window}, taps);
    p.exo_avg = constant_param({cfg.avg_window}, taps);
    p.endo_weight = uniform_param({kEndoChannels, cfg.d_model}, endo_bound, rng);
    p.endo_bias = uniform_param({cfg.d_model}, endo_bound, rng);
    p.exo_weight = uniform_param({kExoChannels, cfg.d_model}, exo_bound, rng);
    p.exo_bias = uniform_param({cfg.d_model}, exo_bound, rng);
    return p;
}

Tensor week_periodicity(std::span<const double> w, double period) {
    if (!(period > 0)) throw ConfigError("week_periodicity: period must be > 0");
    Tensor out({w.size(), kWeekChannels});
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double theta = 2.0 * std::numbers::pi * w[i] / period;
        out.at(i, 0) = std::sin(theta);
        out.at(i, 1) = std::cos(theta);
        out.at(i, 2) = std::sin(2.0 * theta);
        out.at(i, 3) = std::cos(2.0 * theta);
    }
    return out;
}

Var annual_drift(const Var& y, const Var& c, const Var& b) { return affine(y, c, b); }

Var local_average(const Var& x, const Var& taps) { return conv1d_causal(x, taps); }

Var endogenous_channels(const Var& x, const Tensor& week_enc, const Var& year_enc, const Var& taps) {
    const std::size_t steps = x.size();
    require_series(x, steps, "target");
    require_series(year_enc, steps, "year encoding");
    if (week_enc.shape() != Shape{steps, kWeekChannels}) {
        throw DimensionError("embedding: week encoding has shape " + shape_str(week_enc.shape()));
    }
    const Var avg = local_average(x, taps);
    const Var parts[] = {x, year_enc, Var(week_enc), avg, sub(x, avg), rate_of_change(x)};
    return concat_columns(parts);
}

Var exogenous_channels(const Var& z, const Tensor& week_enc, const Var& year_enc, const Var& taps) {
    const std::size_t steps = z.size();
    require_series(z, steps, "feature");
    require_series(year_enc, steps, "year encoding");
    if (week_enc.shape() != Shape{steps, kWeekChannels}) {
        throw DimensionError("embedding: week encoding has shape " + shape_str(week_enc.shape()));
    }
    const Var parts[] = {z, year_enc, Var(week_enc), local_average(z, taps), rate_of_change(z)};
    return concat_columns(parts);
}

Var embed_endogenous(const Var& x, const Tensor& week_enc, const Var& year_enc, const EmbeddingParams& params,
                     const EmbeddingConfig& cfg, Rng* rng) {
    const Var channels = endogenous_channels(x, week_enc, year_enc, params.endo_avg);
    return dropout(linear(channels, params.endo_weight, params.endo_bias), cfg.dropout, rng);
}

Var embed_exogenous(const Var& z, const Tensor& week_enc, const Var& year_enc, const EmbeddingParams& params,
                    const EmbeddingConfig& cfg, Rng* rng) {
    if (z.value().rank() != 2) throw DimensionError("embed_exogenous: expected [T x F], got " + shape_str(z.shape()));
    const std::size_t nf = z.shape()[1];
    std::vector<Var> per_feature;
    per_feature.reserve(nf);
    for (std::size_t f = 0; f < nf; ++f) {
        per_feature.push_back(exogenous_channels(column(z, f), week_enc, year_enc, params.exo_avg));
    }
    const Var stacked = stack_features(per_feature);  // [T x F x 8]
    return dropout(linear(stacked, params.exo_weight, params.exo_bias), cfg.dropout, rng);
}

}  // namespace crosslag
