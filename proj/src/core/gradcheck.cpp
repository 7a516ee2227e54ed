#include "crosslag/core/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "crosslag/core/rng.hpp"
#include "crosslag/errors.hpp"

namespace crosslag {

namespace {

double eval_loss(const std::function<Var()>& loss_fn) {
    const Var loss = loss_fn();
    if (loss.size() != 1) throw DimensionError("check_gradients: loss must be a scalar");
    const double v = loss.value()[0];
    if (!std::isfinite(v)) throw NumericError("check_gradients: non-finite loss");
    return v;
}

}  // namespace

GradReport check_gradients(const std::function<Var()>& loss_fn, std::vector<NamedParam> params,
                           double eps, std::size_t max_checked, std::uint64_t subsample_seed) {
    for (auto& p : params) p.var.zero_grad();
    {
        const Var loss = loss_fn();
        if (!std::isfinite(loss.value()[0])) throw NumericError("check_gradients: non-finite loss");
        backward(loss);
    }
    std::vector<Tensor> analytic;
    analytic.reserve(params.size());
    for (auto& p : params) analytic.push_back(p.var.grad());

    // Flat (param, element) index list, optionally subsampled.
    std::vector<std::pair<std::size_t, std::size_t>> targets;
    for (std::size_t p = 0; p < params.size(); ++p)
        for (std::size_t i = 0; i < params[p].var.size(); ++i) targets.emplace_back(p, i);
    if (targets.size() > max_checked) {
        Rng rng(subsample_seed);
        std::shuffle(targets.begin(), targets.end(), rng.engine());
        targets.resize(max_checked);
        std::sort(targets.begin(), targets.end());
    }

    GradReport report;
    report.entries.reserve(targets.size());
    for (auto [p, i] : targets) {
        Tensor& value = params[p].var.leaf_value();
        const double original = value[i];
        value[i] = original + eps;
        const double up = eval_loss(loss_fn);
        value[i] = original - eps;
        const double down = eval_loss(loss_fn);
        value[i] = original;

        GradEntry e{params[p].name, i, analytic[p][i], (up - down) / (2.0 * eps)};
        const double abs_diff = std::abs(e.analytic - e.numeric);
        const double denom = std::max({std::abs(e.analytic), std::abs(e.numeric), 1e-8});
        report.max_abs_diff = std::max(report.max_abs_diff, abs_diff);
        report.max_rel_diff = std::max(report.max_rel_diff, abs_diff / denom);
        report.entries.push_back(std::move(e));
    }
    return report;
}

}  // namespace crosslag
