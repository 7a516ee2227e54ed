#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "crosslag/core/gradcheck.hpp"
#include "crosslag/core/ops.hpp"

namespace crosslag {

struct EmbeddingConfig {
    std::size_t d_model = 128;
    double period = 50.0;       // periodicity factor applied to the scaled week stamp
    std::size_t avg_window = 4; // taps of the causal local average
    double dropout = 0.1;

    void validate() const;
};

// Channel layout of the enriched inputs:
//   endogenous: x, y_enc, sin t, cos t, sin 2t, cos 2t, x_avg, x - x_avg, x'
//   exogenous:  z, y_enc, sin t, cos t, sin 2t, cos 2t, z_avg, z'
inline constexpr std::size_t kWeekChannels = 4;
inline constexpr std::size_t kEndoChannels = 9;
inline constexpr std::size_t kExoChannels = 8;

struct EmbeddingParams {
    Var drift_scale;   // c
    Var drift_bias;    // b
    Var endo_avg;      // [N] local-average taps for the target
    Var exo_avg;       // [N] taps shared by every exogenous feature
    Var endo_weight;   // [9 x d_model]
    Var endo_bias;     // [d_model]
    Var exo_weight;    // [8 x d_model], shared across features
    Var exo_bias;      // [d_model]

    void collect(std::vector<NamedParam>& out) const;
};

// Projections uniform in +-1/sqrt(fan_in); c = 1, b = 0; taps = 1/N.
EmbeddingParams init_embedding(const EmbeddingConfig& cfg, Rng& rng);

// [T x 4]: sin(theta), cos(theta), sin(2 theta), cos(2 theta), theta = 2 pi w / period.
Tensor week_periodicity(std::span<const double> w, double period);

// c * y + b
Var annual_drift(const Var& y, const Var& c, const Var& b);
// Causal moving average with learnable taps.
Var local_average(const Var& x, const Var& taps);

// [T x 9] enriched endogenous channels (before projection).
Var endogenous_channels(const Var& x, const Tensor& week_enc, const Var& year_enc, const Var& taps);
// [T x 8] enriched channels for one exogenous series.
Var exogenous_channels(const Var& z, const Tensor& week_enc, const Var& year_enc, const Var& taps);

// Dropout(Linear(channels)) -> [T x d_model]. `rng` null disables dropout.
Var embed_endogenous(const Var& x, const Tensor& week_enc, const Var& year_enc, const EmbeddingParams& params,
                     const EmbeddingConfig& cfg, Rng* rng);
// Per-feature embedding of z [T x F] -> [T x F x d_model].
Var embed_exogenous(const Var& z, const Tensor& week_enc, const Var& year_enc, const EmbeddingParams& params,
                    const EmbeddingConfig& cfg, Rng* rng);

}  // namespace crosslag
