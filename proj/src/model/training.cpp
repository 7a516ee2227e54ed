#include "crosslag/model/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>

#include "crosslag/errors.hpp"

namespace crosslag {

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (patience < 1) throw ConfigError("patience must be >= 1");
    if (patience > epochs) throw ConfigError("patience must not exceed epochs");
    if (!(lr0 > 0) || !(lr_floor >= 0) || lr_floor > lr0) throw ConfigError("need 0 <= lr_floor <= lr0, lr0 > 0");
    if (!(decay > 0 && decay <= 1)) throw ConfigError("decay must be in (0, 1]");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) throw ConfigError("Adam betas must be in [0, 1)");
    if (!(adam_eps > 0) || weight_decay < 0) throw ConfigError("bad optimizer epsilon or weight decay");
}

nlohmann::ordered_json TrainConfig::to_json() const {
    nlohmann::ordered_json j;
    j["epochs"] = epochs;
    j["patience"] = patience;
    j["lr0"] = lr0;
    j["decay"] = decay;
    j["lr_floor"] = lr_floor;
    j["batch_size"] = batch_size;
    j["seed"] = seed;
    j["weight_decay"] = weight_decay;
    j["beta1"] = beta1;
    j["beta2"] = beta2;
    j["adam_eps"] = adam_eps;
    return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    TrainConfig c;
    try {
        c.epochs = j.value("epochs", c.epochs);
        c.patience = j.value("patience", c.patience);
        c.lr0 = j.value("lr0", c.lr0);
        c.decay = j.value("decay", c.decay);
        c.lr_floor = j.value("lr_floor", c.lr_floor);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.seed = j.value("seed", c.seed);
        c.weight_decay = j.value("weight_decay", c.weight_decay);
        c.beta1 = j.value("beta1", c.beta1);
        c.beta2 = j.value("beta2", c.beta2);
        c.adam_eps = j.value("adam_eps", c.adam_eps);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("train config: ") + e.what());
    }
    c.validate();
    return c;
}

double lr_schedule(std::size_t epoch, const TrainConfig& tc) {
    return std::max(tc.lr0 * std::pow(tc.decay, static_cast<double>(epoch)), tc.lr_floor);
}

EarlyStopping::Step EarlyStopping::update(double val_loss) {
    ++seen_;
    Step s;
    if (best_epoch_ == 0 || val_loss < best_) {
        best_ = val_loss;
        best_epoch_ = seen_;
        since_best_ = 0;
        s.improved = true;
    } else {
        ++since_best_;
    }
    s.stop = since_best_ >= patience_;
    return s;
}

AdamW::AdamW(std::vector<NamedParam> params, const TrainConfig& tc)
    : params_(std::move(params)), beta1_(tc.beta1), beta2_(tc.beta2), eps_(tc.adam_eps), weight_decay_(tc.weight_decay) {
    for (const auto& p : params_) {
        m_.emplace_back(p.var.shape(), 0.0);
        v_.emplace_back(p.var.shape(), 0.0);
    }
}

void AdamW::zero_grad() {
    for (auto& p : params_) p.var.zero_grad();
}

void AdamW::step(double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        Var& var = params_[k].var;
        const Tensor g = var.grad();
        Tensor& w = var.leaf_value();
        Tensor& m = m_[k];
        Tensor& v = v_[k];
        for (std::size_t i = 0; i < w.size(); ++i) {
            w[i] -= lr * weight_decay_ * w[i];
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
            w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
        }
    }
}

double mean_squared_error(const ModelParams& params, const std::vector<WindowSample>& windows,
                          const ModelConfig& config) {
    if (windows.empty()) throw ConfigError("mean_squared_error: no windows");
    double acc = 0.0;
    std::size_t n = 0;
    for (const auto& w : windows) {
        const auto pred = predict(params, w, config);
        for (std::size_t h = 0; h < pred.size(); ++h) {
            const double d = pred[h] - w.x_future[h];
            acc += d * d;
        }
        n += pred.size();
    }
    return acc / static_cast<double>(n);
}

TrainResult train(const ModelParams& init, const std::vector<WindowSample>& train_windows,
                  const std::vector<WindowSample>& val_windows, const ModelConfig& config, const TrainConfig& tc,
                  const ValLossOverride& val_override) {
    tc.validate();
    config.validate();
    if (train_windows.empty() || val_windows.empty()) throw ConfigError("train: need non-empty train and val windows");

    ModelParams params = init.clone();
    AdamW optimizer(params.named(), tc);
    Rng shuffle_rng(mix_seed(tc.seed, 1));
    Rng dropout_rng(mix_seed(tc.seed, 2));

    TrainResult result;
    result.best = params.clone();
    EarlyStopping stopper(tc.patience);
    std::vector<std::size_t> order(train_windows.size());

    for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
        const double lr = lr_schedule(epoch, tc);
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), shuffle_rng.engine());

        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
            const std::size_t end = std::min(order.size(), start + tc.batch_size);
            optimizer.zero_grad();
            double batch_loss = 0.0;
            for (std::size_t i = start; i < end; ++i) {
                const WindowSample& w = train_windows[order[i]];
                const Var pred = forward(params, w, config, Mode::train, &dropout_rng);
                const Var loss = scale(mse_loss(pred, w.x_future), 1.0 / static_cast<double>(end - start));
                batch_loss += loss.value()[0];
                backward(loss);
            }
            if (!std::isfinite(batch_loss)) {
                double max_grad = 0.0;
                for (const auto& p : params.named())
                    for (double g : p.var.grad().values()) max_grad = std::max(max_grad, std::abs(g));
                std::ostringstream os;
                os << "train: non-finite loss at epoch " << epoch + 1 << ", batch " << batches + 1
                   << ", max |grad| = " << max_grad;
                throw NumericError(os.str());
            }
            optimizer.step(lr);
            loss_sum += batch_loss;
            ++batches;
        }

        double val = mean_squared_error(params, val_windows, config);
        if (val_override) val = val_override(epoch + 1, val);
        result.history.push_back({epoch + 1, loss_sum / static_cast<double>(batches), val, lr});
        const auto step = stopper.update(val);
        if (step.improved) result.best = params.clone();
        if (step.stop) {
            result.stopped_early = epoch + 1 < tc.epochs;
            break;
        }
    }
    result.best_epoch = stopper.best_epoch();
    result.best_val_mse = stopper.best_loss();
    return result;
}

void write_history_csv(std::ostream& out, const std::vector<EpochRecord>& history) {
    out << "epoch,train_mse,val_mse,lr\n";
    out.precision(17);
    for (const auto& r : history) out << r.epoch << ',' << r.train_mse << ',' << r.val_mse << ',' << r.lr << '\n';
}

}  // namespace crosslag
