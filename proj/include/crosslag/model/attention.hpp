#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "crosslag/core/gradcheck.hpp"
#include "crosslag/core/ops.hpp"

namespace crosslag {

// Lag offsets (weeks) at which every exogenous embedding is offered as a key.
class LagSpec {
public:
    enum class Source { explicit_list, max_lag };

    LagSpec() = default;  // max_lag = 8

    // Even lags 0, 2, ..., 2 * floor(max_lag / 2).
    static LagSpec from_max_lag(int max_lag);
    // Must be non-negative, strictly increasing and non-empty.
    static LagSpec from_list(const std::vector<int>& lags);

    const std::vector<std::size_t>& lags() const { return lags_; }
    std::size_t size() const { return lags_.size(); }
    std::size_t operator[](std::size_t i) const { return lags_[i]; }
    Source source() const { return source_; }
    int max_lag() const { return max_lag_; }  // only meaningful for Source::max_lag

    nlohmann::ordered_json to_json() const;
    static LagSpec from_json(const nlohmann::json& j);

    bool operator==(const LagSpec&) const = default;

private:
    std::vector<std::size_t> lags_{0, 2, 4, 6, 8};
    Source source_ = Source::max_lag;
    int max_lag_ = 8;
};

LagSpec build_lag_vector(int max_lag);

// Lagged exogenous keys: values[t, f + F * delta, :] = z_exo[t - lags[delta], f, :]
// when t - lags[delta] >= 0, else 0 (0-based indices throughout).
struct LagBank {
    Var values;  // [T x L*F x d_model]
    std::size_t steps = 0;
    std::size_t features = 0;
    LagSpec lags;

    std::size_t keys() const { return features * lags.size(); }
    std::size_t key_index(std::size_t delta, std::size_t f) const { return f + features * delta; }
};

LagBank build_lag_bank(const Var& z_exo, const LagSpec& lags);
// mask(t, f + F * delta) is true iff t >= lags[delta].
Mask valid_key_mask(std::size_t steps, const LagSpec& lags, std::size_t features);

// Sentinel stored in the masked score matrix in place of -infinity.
inline constexpr double kMaskedScore = -1e30;

struct CrossAttentionParams {
    Var query_weight;  // [d_model x d]
    Var query_bias;    // [d]
    Var kv_weight;     // [d_model x d], keys and values share this projection
    Var kv_bias;       // [d]

    void collect(std::vector<NamedParam>& out, const std::string& prefix) const;
};

struct SelfAttentionParams {
    Var query_weight, query_bias;
    Var key_weight, key_bias;
    Var value_weight, value_bias;

    void collect(std::vector<NamedParam>& out, const std::string& prefix) const;
};

CrossAttentionParams init_cross_attention(std::size_t d_model, std::size_t d, Rng& rng);
SelfAttentionParams init_self_attention(std::size_t d_model, Rng& rng);

// Everything one cross-lag attention forward computed, for inspection.
struct AttentionTrace {
    Tensor queries;        // Q [T x d]
    Tensor keys;           // K = V [T x L*F x d]
    Tensor scores;         // S [T x L*F]
    Tensor masked_scores;  // S with kMaskedScore outside the valid set
    Tensor weights;        // A [T x L*F] (before dropout)
    Tensor output;         // O [T x d]
    Mask valid;
    LagSpec lags;
    std::size_t features = 0;
    std::size_t score_evaluations = 0;

    // One record per (t, key): t, j, delta, lag, f, valid, weight.
    nlohmann::ordered_json to_json(const std::vector<std::string>& feature_names = {}) const;
};

struct CrossAttentionResult {
    Var output;  // [T x d]
    AttentionTrace trace;
};

// Queries at step t score only the L*F lagged keys of that same step.
CrossAttentionResult cross_lag_attention(const Var& x_endo, const LagBank& bank, const Mask& valid,
                                         const CrossAttentionParams& params, double dropout_p, Rng* rng);

// Total score-kernel evaluations since process start (or the last reset).
std::size_t score_evaluation_count();
void reset_score_evaluation_count();

// Single-head causal scaled dot-product attention over the input window.
// `weights_out`, when given, receives the [T x T] attention matrix.
Var endo_self_attention(const Var& x, const SelfAttentionParams& params, double dropout_p, Rng* rng,
                        Tensor* weights_out = nullptr);

}  // namespace crosslag
