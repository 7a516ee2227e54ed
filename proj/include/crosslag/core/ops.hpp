#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "crosslag/core/autodiff.hpp"
#include "crosslag/core/rng.hpp"
#include "crosslag/core/tensor.hpp"

// Differentiable operations used by the CrossLag network. The set is closed:
// only what the architecture needs, each with a hand-written backward.
namespace crosslag {

// Row-major boolean matrix marking which entries of a score matrix are valid.
class Mask {
public:
    Mask() = default;
    Mask(std::size_t rows, std::size_t cols, bool fill = false)
        : rows_(rows), cols_(cols), bits_(rows * cols, fill ? 1 : 0) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool operator()(std::size_t r, std::size_t c) const { return bits_[r * cols_ + c] != 0; }
    void set(std::size_t r, std::size_t c, bool v) { bits_[r * cols_ + c] = v ? 1 : 0; }
    std::size_t row_count(std::size_t r) const;

    // Lower-triangular (key index <= query index) mask of size n x n.
    static Mask causal(std::size_t n);

    bool operator==(const Mask&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<unsigned char> bits_;
};

// ---- plain kernels -------------------------------------------------------

// Per-row softmax over valid entries only (max-subtracted). Invalid entries are
// exactly 0; a row without valid entries is all zeros.
Tensor masked_softmax(const Tensor& scores, const Mask& valid);

// out_t = sum_{i<N} beta_i * x_{t-i}, zero left padding (0-based indices).
Tensor conv1d_causal(const Tensor& x, const Tensor& beta);

// ---- differentiable ops --------------------------------------------------

Var matmul(const Var& a, const Var& b);     // [m x k] . [k x n]
Var matmul_nt(const Var& a, const Var& b);  // [m x k] . [n x k]^T
// Applies x . w + bias over the last axis of x; leading axes are preserved.
Var linear(const Var& x, const Var& w, const Var& bias);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
// c * x + b with c, b single-element Vars.
Var affine(const Var& x, const Var& c, const Var& b);

Var reshape(const Var& x, Shape shape);
// Concatenates [T] or [T x c_i] inputs along the last axis into [T x sum c_i].
Var concat_columns(std::span<const Var> parts);
// Stacks F inputs of shape [T x c] into [T x F x c].
Var stack_features(std::span<const Var> parts);
// Column f of a [T x F] matrix as a [T] vector.
Var column(const Var& x, std::size_t f);

Var conv1d_causal(const Var& x, const Var& beta);
// x'_0 = 0, x'_t = x_t - x_{t-1}.
Var rate_of_change(const Var& x);
Var masked_softmax(const Var& scores, const Mask& valid);

Var sigmoid(const Var& x);
Var gelu(const Var& x);  // exact erf form
// sigmoid(g) * out + (1 - sigmoid(g)) * in
Var gate_combine(const Var& layer_in, const Var& layer_out, const Var& g);
// Inverted dropout. Identity when rng is null or p == 0.
Var dropout(const Var& x, double p, Rng* rng);

Var sum(const Var& x);
Var mean(const Var& x);
// mean((pred - target)^2)
Var mse_loss(const Var& pred, const Tensor& target);

}  // namespace crosslag
