#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include <nlohmann/json.hpp>

#include "crosslag/model/forecaster.hpp"

namespace crosslag {

struct TrainConfig {
    std::size_t epochs = 30;
    std::size_t patience = 10;
    double lr0 = 1e-4;
    double decay = 0.9;
    double lr_floor = 5e-5;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;

    void validate() const;
    nlohmann::ordered_json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
};

// max(lr0 * decay^epoch, lr_floor), epoch counted from 0.
double lr_schedule(std::size_t epoch, const TrainConfig& tc);

// Tracks the best validation loss; signals a stop after `patience`
// consecutive epochs without strict improvement.
class EarlyStopping {
public:
    explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

    struct Step {
        bool improved = false;
        bool stop = false;
    };
    Step update(double val_loss);

    std::size_t best_epoch() const { return best_epoch_; }  // 1-based, 0 before any update
    double best_loss() const { return best_; }
    std::size_t epochs_seen() const { return seen_; }

private:
    std::size_t patience_;
    std::size_t seen_ = 0;
    std::size_t best_epoch_ = 0;
    std::size_t since_best_ = 0;
    double best_ = 0.0;
};

// Adam with decoupled weight decay.
class AdamW {
public:
    AdamW(std::vector<NamedParam> params, const TrainConfig& tc);
    void step(double lr);
    void zero_grad();

private:
    std::vector<NamedParam> params_;
    std::vector<Tensor> m_, v_;
    double beta1_, beta2_, eps_, weight_decay_;
    std::size_t t_ = 0;
};

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double train_mse = 0.0;
    double val_mse = 0.0;
    double lr = 0.0;
};

struct TrainResult {
    ModelParams best;
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;
    double best_val_mse = 0.0;
    bool stopped_early = false;
};

// Mean squared error (normalized units) over all windows and horizon steps, eval mode.
double mean_squared_error(const ModelParams& params, const std::vector<WindowSample>& windows,
                          const ModelConfig& config);

// Validation hook for tests: replaces the evaluated val MSE for an epoch.
using ValLossOverride = std::function<double(std::size_t epoch, double measured)>;

TrainResult train(const ModelParams& init, const std::vector<WindowSample>& train_windows,
                  const std::vector<WindowSample>& val_windows, const ModelConfig& config, const TrainConfig& tc,
                  const ValLossOverride& val_override = {});

void write_history_csv(std::ostream& out, const std::vector<EpochRecord>& history);

}  // namespace crosslag
