#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "crosslag/data/dataset.hpp"
#include "crosslag/model/attention.hpp"
#include "crosslag/model/embedding.hpp"

namespace crosslag {

struct ModelConfig {
    std::size_t seq_len = 16;
    std::size_t label_len = 12;  // accepted for dataset compatibility; the model has no decoder
    std::size_t pred_len = 24;
    std::size_t d_model = 128;
    std::size_t d_ff = 16;
    std::size_t n_heads = 1;
    std::size_t encoder_layers = 1;
    double dropout = 0.1;
    LagSpec lags = LagSpec::from_max_lag(8);
    double period = 50.0;
    std::size_t avg_window = 4;

    void validate() const;
    EmbeddingConfig embedding() const { return {d_model, period, avg_window, dropout}; }
    WindowSpec windows() const { return {seq_len, label_len, pred_len, 1}; }

    nlohmann::ordered_json to_json() const;
    // Missing keys keep their defaults.
    static ModelConfig from_json(const nlohmann::json& j);
};

struct MlpParams {
    Var w1, b1;  // d_model -> d_ff
    Var w2, b2;  // d_ff -> d_model
};

struct HeadParams {
    Var weight;  // [seq_len * d_model x pred_len]
    Var bias;    // [pred_len]
};

// Every learnable array of the network.
struct ModelParams {
    EmbeddingParams embedding;
    SelfAttentionParams self_attention;
    CrossAttentionParams cross_attention;
    Var gate_self;   // gate pre-activations, alpha = sigmoid(g)
    Var gate_cross;
    Var gate_mlp;
    MlpParams mlp;
    HeadParams head;

    // Stable order; names are the checkpoint keys.
    std::vector<NamedParam> named() const;
    std::size_t parameter_count() const;
    // Independent copy of every leaf value.
    ModelParams clone() const;
};

// Deterministic in (config, seed).
ModelParams init_model(const ModelConfig& config, std::uint64_t seed);

// Parameter count of a TimeXer-style encoder stack (patch + variate
// embeddings, per layer self/cross attention, feed-forward and three layer
// norms, flatten head) for size comparisons.
struct ReferenceStack {
    std::size_t d_model = 512;
    std::size_t d_ff = 2048;
    std::size_t layers = 2;
    std::size_t heads = 8;
    std::size_t seq_len = 16;
    std::size_t pred_len = 24;
    std::size_t patch_len = 16;
    std::size_t exo_vars = 5;
};
std::size_t reference_stack_census(const ReferenceStack& ref);

enum class Mode { train, eval };

struct ForwardTrace {
    Tensor endo_embedding;  // [T x d_model]
    Tensor exo_embedding;   // [T x F x d_model]
    Tensor self_weights;    // [T x T]
    AttentionTrace cross;
};

// One window -> [pred_len] normalized forecast. In train mode `dropout_rng`
// drives dropout; eval mode ignores it and is deterministic.
Var forward(const ModelParams& params, const WindowSample& sample, const ModelConfig& config, Mode mode,
            Rng* dropout_rng = nullptr, ForwardTrace* trace = nullptr);

std::vector<double> predict(const ModelParams& params, const WindowSample& sample, const ModelConfig& config,
                            ForwardTrace* trace = nullptr);

}  // namespace crosslag
