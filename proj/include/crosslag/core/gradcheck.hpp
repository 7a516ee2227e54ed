#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "crosslag/core/autodiff.hpp"

namespace crosslag {

struct NamedParam {
    std::string name;
    Var var;
};

struct GradEntry {
    std::string param;
    std::size_t index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

struct GradReport {
    double max_abs_diff = 0.0;
    double max_rel_diff = 0.0;  // |a - n| / max(|a|, |n|, 1e-8)
    std::vector<GradEntry> entries;
};

// Compares reverse-mode gradients with central finite differences of step
// `eps` for every element of `params`. When the total element count exceeds
// `max_checked`, a seeded random subsample of that size is checked instead.
// `loss_fn` must rebuild the graph from the current leaf values on each call
// and be deterministic.
GradReport check_gradients(const std::function<Var()>& loss_fn, std::vector<NamedParam> params,
                           double eps = 1e-5, std::size_t max_checked = 10000,
                           std::uint64_t subsample_seed = 0);

}  // namespace crosslag
