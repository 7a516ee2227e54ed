#include "crosslag/core/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "crosslag/errors.hpp"

namespace crosslag {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

ConstMatMap as_matrix(const Tensor& t, std::size_t rows, std::size_t cols) {
    return ConstMatMap(t.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
MatMap as_matrix(Tensor& t, std::size_t rows, std::size_t cols) {
    return MatMap(t.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

// Grad buffer of parent i, or nullptr when that parent takes no gradient.
Tensor* parent_grad(Node& self, std::size_t i) {
    Node& p = *self.parents[i];
    return p.requires_grad ? &p.grad_buffer() : nullptr;
}

const Tensor& parent_value(const Node& self, std::size_t i) { return self.parents[i]->value; }

void require_rank(const Var& x, std::size_t rank, const char* op) {
    if (x.value().rank() != rank) {
        throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                             shape_str(x.shape()));
    }
}

void require_scalar(const Var& x, const char* op) {
    if (x.size() != 1) throw DimensionError(std::string(op) + ": expected a scalar parameter");
}

// Rows of an [T] or [T x c] tensor, treated as T x c.
std::size_t cols_of(const Tensor& t) { return t.rank() == 1 ? 1 : t.size() / t.dim(0); }

}  // namespace

std::size_t Mask::row_count(std::size_t r) const {
    std::size_t n = 0;
    for (std::size_t c = 0; c < cols_; ++c) n += bits_[r * cols_ + c];
    return n;
}

Mask Mask::causal(std::size_t n) {
    Mask m(n, n);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c <= r; ++c) m.set(r, c, true);
    return m;
}

Tensor masked_softmax(const Tensor& scores, const Mask& valid) {
    if (scores.rank() != 2 || scores.dim(0) != valid.rows() || scores.dim(1) != valid.cols()) {
        throw DimensionError("masked_softmax: scores " + shape_str(scores.shape()) + " vs mask [" +
                             std::to_string(valid.rows()) + " x " + std::to_string(valid.cols()) + "]");
    }
    const std::size_t rows = valid.rows();
    const std::size_t cols = valid.cols();
    Tensor out(scores.shape(), 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        double mx = -std::numeric_limits<double>::infinity();
        bool any = false;
        for (std::size_t c = 0; c < cols; ++c) {
            if (!valid(r, c)) continue;
            const double s = scores.at(r, c);
            if (!std::isfinite(s)) {
                throw NumericError("masked_softmax: non-finite score at valid position (" +
                                   std::to_string(r) + ", " + std::to_string(c) + ")");
            }
            mx = std::max(mx, s);
            any = true;
        }
        if (!any) continue;
        double z = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            if (!valid(r, c)) continue;
            const double e = std::exp(scores.at(r, c) - mx);
            out.at(r, c) = e;
            z += e;
        }
        for (std::size_t c = 0; c < cols; ++c) {
            if (valid(r, c)) out.at(r, c) /= z;
        }
    }
    return out;
}

Tensor conv1d_causal(const Tensor& x, const Tensor& beta) {
    if (beta.empty()) throw ConfigError("conv1d_causal: empty kernel");
    if (x.rank() != 1 || beta.rank() != 1) throw DimensionError("conv1d_causal: expects rank-1 x and beta");
    const std::size_t n = x.size();
    const std::size_t taps = beta.size();
    Tensor out({n}, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
        double acc = 0.0;
        for (std::size_t i = 0; i < taps && i <= t; ++i) acc += beta[i] * x[t - i];
        out[t] = acc;
    }
    return out;
}

Var matmul(const Var& a, const Var& b) {
    require_rank(a, 2, "matmul");
    require_rank(b, 2, "matmul");
    const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    if (b.shape()[0] != k) {
        throw DimensionError("matmul: " + shape_str(a.shape()) + " . " + shape_str(b.shape()));
    }
    Tensor out({m, n});
    as_matrix(out, m, n).noalias() = as_matrix(a.value(), m, k) * as_matrix(b.value(), k, n);
    return Var::from_op(std::move(out), {a, b}, [m, k, n](Node& self) {
        auto g = as_matrix(self.grad, m, n);
        if (Tensor* ga = parent_grad(self, 0))
            as_matrix(*ga, m, k).noalias() += g * as_matrix(parent_value(self, 1), k, n).transpose();
        if (Tensor* gb = parent_grad(self, 1))
            as_matrix(*gb, k, n).noalias() += as_matrix(parent_value(self, 0), m, k).transpose() * g;
    }, "matmul");
}

Var matmul_nt(const Var& a, const Var& b) {
    require_rank(a, 2, "matmul_nt");
    require_rank(b, 2, "matmul_nt");
    const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[0];
    if (b.shape()[1] != k) {
        throw DimensionError("matmul_nt: " + shape_str(a.shape()) + " . " + shape_str(b.shape()) + "^T");
    }
    Tensor out({m, n});
    as_matrix(out, m, n).noalias() = as_matrix(a.value(), m, k) * as_matrix(b.value(), n, k).transpose();
    return Var::from_op(std::move(out), {a, b}, [m, k, n](Node& self) {
        auto g = as_matrix(self.grad, m, n);
        if (Tensor* ga = parent_grad(self, 0))
            as_matrix(*ga, m, k).noalias() += g * as_matrix(parent_value(self, 1), n, k);
        if (Tensor* gb = parent_grad(self, 1))
            as_matrix(*gb, n, k).noalias() += g.transpose() * as_matrix(parent_value(self, 0), m, k);
    }, "matmul_nt");
}

Var linear(const Var& x, const Var& w, const Var& bias) {
    require_rank(w, 2, "linear");
    const std::size_t k = w.shape()[0], n = w.shape()[1];
    if (x.shape().back() != k || bias.size() != n) {
        throw DimensionError("linear: input " + shape_str(x.shape()) + ", weight " + shape_str(w.shape()) +
                             ", bias " + shape_str(bias.shape()));
    }
    const std::size_t m = x.size() / k;
    Shape out_shape = x.shape();
    out_shape.back() = n;
    Tensor out(out_shape);
    auto o = as_matrix(out, m, n);
    o.noalias() = as_matrix(x.value(), m, k) * as_matrix(w.value(), k, n);
    o.rowwise() += as_matrix(bias.value(), 1, n).row(0);
    return Var::from_op(std::move(out), {x, w, bias}, [m, k, n](Node& self) {
        auto g = as_matrix(self.grad, m, n);
        if (Tensor* gx = parent_grad(self, 0))
            as_matrix(*gx, m, k).noalias() += g * as_matrix(parent_value(self, 1), k, n).transpose();
        if (Tensor* gw = parent_grad(self, 1))
            as_matrix(*gw, k, n).noalias() += as_matrix(parent_value(self, 0), m, k).transpose() * g;
        if (Tensor* gb = parent_grad(self, 2)) as_matrix(*gb, 1, n) += g.colwise().sum();
    }, "linear");
}

Var add(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "add");
    Tensor out = a.value();
    out += b.value();
    return Var::from_op(std::move(out), {a, b}, [](Node& self) {
        if (Tensor* ga = parent_grad(self, 0)) *ga += self.grad;
        if (Tensor* gb = parent_grad(self, 1)) *gb += self.grad;
    }, "add");
}

Var sub(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "sub");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
    return Var::from_op(std::move(out), {a, b}, [](Node& self) {
        if (Tensor* ga = parent_grad(self, 0)) *ga += self.grad;
        if (Tensor* gb = parent_grad(self, 1))
            for (std::size_t i = 0; i < gb->size(); ++i) (*gb)[i] -= self.grad[i];
    }, "sub");
}

Var mul(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "mul");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
    return Var::from_op(std::move(out), {a, b}, [](Node& self) {
        const Tensor& av = parent_value(self, 0);
        const Tensor& bv = parent_value(self, 1);
        if (Tensor* ga = parent_grad(self, 0))
            for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += self.grad[i] * bv[i];
        if (Tensor* gb = parent_grad(self, 1))
            for (std::size_t i = 0; i < gb->size(); ++i) (*gb)[i] += self.grad[i] * av[i];
    }, "mul");
}

Var scale(const Var& a, double s) {
    Tensor out = a.value();
    for (auto& v : out.values()) v *= s;
    return Var::from_op(std::move(out), {a}, [s](Node& self) {
        if (Tensor* ga = parent_grad(self, 0))
            for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += s * self.grad[i];
    }, "scale");
}

Var affine(const Var& x, const Var& c, const Var& b) {
    require_scalar(c, "affine");
    require_scalar(b, "affine");
    const double cv = c.value()[0], bv = b.value()[0];
    Tensor out = x.value();
    for (auto& v : out.values()) v = cv * v + bv;
    return Var::from_op(std::move(out), {x, c, b}, [cv](Node& self) {
        const Tensor& xv = parent_value(self, 0);
        if (Tensor* gx = parent_grad(self, 0))
            for (std::size_t i = 0; i < gx->size(); ++i) (*gx)[i] += cv * self.grad[i];
        if (Tensor* gc = parent_grad(self, 1)) {
            double acc = 0.0;
            for (std::size_t i = 0; i < xv.size(); ++i) acc += self.grad[i] * xv[i];
            (*gc)[0] += acc;
        }
        if (Tensor* gb = parent_grad(self, 2)) {
            double acc = 0.0;
            for (double g : self.grad.values()) acc += g;
            (*gb)[0] += acc;
        }
    }, "affine");
}

Var reshape(const Var& x, Shape shape) {
    Tensor out = x.value().reshaped(std::move(shape));
    return Var::from_op(std::move(out), {x}, [](Node& self) {
        if (Tensor* gx = parent_grad(self, 0))
            for (std::size_t i = 0; i < gx->size(); ++i) (*gx)[i] += self.grad[i];
    }, "reshape");
}

Var concat_columns(std::span<const Var> parts) {
    if (parts.empty()) throw DimensionError("concat_columns: no inputs");
    const std::size_t rows = parts[0].shape()[0];
    std::vector<std::size_t> widths;
    std::size_t total = 0;
    for (const auto& p : parts) {
        if (p.value().rank() > 2 || p.shape()[0] != rows) {
            throw DimensionError("concat_columns: channel " + shape_str(p.shape()) + " does not have " +
                                 std::to_string(rows) + " rows");
        }
        widths.push_back(cols_of(p.value()));
        total += widths.back();
    }
    Tensor out({rows, total});
    std::size_t offset = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
        const Tensor& v = parts[p].value();
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < widths[p]; ++c) out.at(r, offset + c) = v[r * widths[p] + c];
        offset += widths[p];
    }
    std::vector<Var> parents(parts.begin(), parts.end());
    return Var::from_op(std::move(out), std::move(parents), [rows, total, widths](Node& self) {
        std::size_t offset = 0;
        for (std::size_t p = 0; p < widths.size(); ++p) {
            if (Tensor* g = parent_grad(self, p)) {
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t c = 0; c < widths[p]; ++c)
                        (*g)[r * widths[p] + c] += self.grad[r * total + offset + c];
            }
            offset += widths[p];
        }
    }, "concat_columns");
}

Var stack_features(std::span<const Var> parts) {
    if (parts.empty()) throw DimensionError("stack_features: no inputs");
    const Shape& first = parts[0].shape();
    if (first.size() != 2) throw DimensionError("stack_features: inputs must be [T x c]");
    for (const auto& p : parts) {
        if (p.shape() != first) throw DimensionError("stack_features: inputs differ in shape");
    }
    const std::size_t rows = first[0], cols = first[1], nf = parts.size();
    Tensor out({rows, nf, cols});
    for (std::size_t f = 0; f < nf; ++f) {
        const Tensor& v = parts[f].value();
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) out.at(r, f, c) = v.at(r, c);
    }
    std::vector<Var> parents(parts.begin(), parts.end());
    return Var::from_op(std::move(out), std::move(parents), [rows, cols, nf](Node& self) {
        for (std::size_t f = 0; f < nf; ++f) {
            if (Tensor* g = parent_grad(self, f)) {
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t c = 0; c < cols; ++c) g->at(r, c) += self.grad.at(r, f, c);
            }
        }
    }, "stack_features");
}

Var column(const Var& x, std::size_t f) {
    require_rank(x, 2, "column");
    const std::size_t rows = x.shape()[0], cols = x.shape()[1];
    if (f >= cols) throw DimensionError("column: index " + std::to_string(f) + " out of " + std::to_string(cols));
    Tensor out({rows});
    for (std::size_t r = 0; r < rows; ++r) out[r] = x.value().at(r, f);
    return Var::from_op(std::move(out), {x}, [f](Node& self) {
        if (Tensor* g = parent_grad(self, 0))
            for (std::size_t r = 0; r < self.grad.size(); ++r) g->at(r, f) += self.grad[r];
    }, "column");
}

Var conv1d_causal(const Var& x, const Var& beta) {
    Tensor out = conv1d_causal(x.value(), beta.value());
    return Var::from_op(std::move(out), {x, beta}, [](Node& self) {
        const Tensor& xv = parent_value(self, 0);
        const Tensor& bv = parent_value(self, 1);
        const std::size_t n = xv.size(), taps = bv.size();
        Tensor* gx = parent_grad(self, 0);
        Tensor* gb = parent_grad(self, 1);
        for (std::size_t t = 0; t < n; ++t) {
            const double g = self.grad[t];
            for (std::size_t i = 0; i < taps && i <= t; ++i) {
                if (gx) (*gx)[t - i] += g * bv[i];
                if (gb) (*gb)[i] += g * xv[t - i];
            }
        }
    }, "conv1d_causal");
}

Var rate_of_change(const Var& x) {
    require_rank(x, 1, "rate_of_change");
    const Tensor& xv = x.value();
    Tensor out({xv.size()}, 0.0);
    for (std::size_t t = 1; t < xv.size(); ++t) out[t] = xv[t] - xv[t - 1];
    return Var::from_op(std::move(out), {x}, [](Node& self) {
        if (Tensor* g = parent_grad(self, 0)) {
            for (std::size_t t = 1; t < self.grad.size(); ++t) {
                (*g)[t] += self.grad[t];
                (*g)[t - 1] -= self.grad[t];
            }
        }
    }, "rate_of_change");
}

Var masked_softmax(const Var& scores, const Mask& valid) {
    Tensor out = masked_softmax(scores.value(), valid);
    return Var::from_op(std::move(out), {scores}, [valid](Node& self) {
        Tensor* g = parent_grad(self, 0);
        if (!g) return;
        const Tensor& out = self.value;
        const std::size_t rows = valid.rows(), cols = valid.cols();
        for (std::size_t r = 0; r < rows; ++r) {
            double dot = 0.0;
            for (std::size_t c = 0; c < cols; ++c) dot += out.at(r, c) * self.grad.at(r, c);
            for (std::size_t c = 0; c < cols; ++c) {
                if (valid(r, c)) g->at(r, c) += out.at(r, c) * (self.grad.at(r, c) - dot);
            }
        }
    }, "masked_softmax");
}

Var sigmoid(const Var& x) {
    Tensor out = x.value();
    for (auto& v : out.values()) v = 1.0 / (1.0 + std::exp(-v));
    return Var::from_op(std::move(out), {x}, [](Node& self) {
        const Tensor& out = self.value;
        if (Tensor* g = parent_grad(self, 0))
            for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * out[i] * (1.0 - out[i]);
    }, "sigmoid");
}

Var gelu(const Var& x) {
    constexpr double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    Tensor out = x.value();
    for (auto& v : out.values()) v = 0.5 * v * (1.0 + std::erf(v * inv_sqrt2));
    return Var::from_op(std::move(out), {x}, [inv_sqrt_2pi](Node& self) {
        Tensor* g = parent_grad(self, 0);
        if (!g) return;
        const Tensor& xv = parent_value(self, 0);
        for (std::size_t i = 0; i < g->size(); ++i) {
            const double v = xv[i];
            const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
            const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
            (*g)[i] += self.grad[i] * (cdf + v * pdf);
        }
    }, "gelu");
}

Var gate_combine(const Var& layer_in, const Var& layer_out, const Var& g) {
    require_same_shape(layer_in.value(), layer_out.value(), "gate_combine");
    require_scalar(g, "gate_combine");
    const double alpha = 1.0 / (1.0 + std::exp(-g.value()[0]));
    Tensor out = layer_out.value();
    const Tensor& iv = layer_in.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = alpha * out[i] + (1.0 - alpha) * iv[i];
    return Var::from_op(std::move(out), {layer_in, layer_out, g}, [alpha](Node& self) {
        const Tensor& iv = parent_value(self, 0);
        const Tensor& ov = parent_value(self, 1);
        if (Tensor* gi = parent_grad(self, 0))
            for (std::size_t i = 0; i < gi->size(); ++i) (*gi)[i] += (1.0 - alpha) * self.grad[i];
        if (Tensor* go = parent_grad(self, 1))
            for (std::size_t i = 0; i < go->size(); ++i) (*go)[i] += alpha * self.grad[i];
        if (Tensor* gg = parent_grad(self, 2)) {
            double acc = 0.0;
            for (std::size_t i = 0; i < iv.size(); ++i) acc += self.grad[i] * (ov[i] - iv[i]);
            (*gg)[0] += acc * alpha * (1.0 - alpha);
        }
    }, "gate_combine");
}

Var dropout(const Var& x, double p, Rng* rng) {
    if (p < 0.0 || p >= 1.0) throw ConfigError("dropout: probability must be in [0, 1)");
    if (rng == nullptr || p == 0.0) return x;
    const double keep_scale = 1.0 / (1.0 - p);
    Tensor keep(x.shape());
    for (auto& k : keep.values()) k = rng->uniform() < p ? 0.0 : keep_scale;
    Tensor out = x.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= keep[i];
    return Var::from_op(std::move(out), {x}, [keep](Node& self) {
        if (Tensor* g = parent_grad(self, 0))
            for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * keep[i];
    }, "dropout");
}

Var sum(const Var& x) {
    double acc = 0.0;
    for (double v : x.value().values()) acc += v;
    return Var::from_op(Tensor::scalar(acc), {x}, [](Node& self) {
        if (Tensor* g = parent_grad(self, 0)) {
            const double up = self.grad[0];
            for (auto& v : g->values()) v += up;
        }
    }, "sum");
}

Var mean(const Var& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

Var mse_loss(const Var& pred, const Tensor& target) {
    require_same_shape(pred.value(), target, "mse_loss");
    const std::size_t n = target.size();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = pred.value()[i] - target[i];
        acc += d * d;
    }
    return Var::from_op(Tensor::scalar(acc / static_cast<double>(n)), {pred}, [target, n](Node& self) {
        Tensor* g = parent_grad(self, 0);
        if (!g) return;
        const Tensor& pv = parent_value(self, 0);
        const double up = 2.0 * self.grad[0] / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) (*g)[i] += up * (pv[i] - target[i]);
    }, "mse_loss");
}

}  // namespace crosslag
