#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "pdn/errors.hpp"
#include "pdn/tensor.hpp"

namespace pdn {

namespace detail {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using CMapM = Eigen::Map<const MatRM>;
using MapV = Eigen::Map<Eigen::VectorXd>;
using CMapV = Eigen::Map<const Eigen::VectorXd>;

}  // namespace detail

// ---------------------------------------------------------------------------
// dense: y = x @ W + b, broadcast over all leading axes of x.
// x: [..., fan_in], W: [fan_in, fan_out], b: [fan_out] -> y: [..., fan_out]
// ---------------------------------------------------------------------------
inline Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (w.rank() != 2)
        throw ShapeError("dense: weights must be rank 2, got " + shape_str(w.shape()));
    const int64_t fan_in = w.dim(0), fan_out = w.dim(1);
    if (x.rank() < 1 || x.shape().back() != fan_in)
        throw ShapeError("dense: input " + shape_str(x.shape()) + " incompatible with weights " +
                         shape_str(w.shape()));
    if (b.rank() != 1 || b.dim(0) != fan_out)
        throw ShapeError("dense: bias " + shape_str(b.shape()) + " incompatible with weights " +
                         shape_str(w.shape()));
    const int64_t rows = x.numel() / fan_in;

    Shape out_shape = x.shape();
    out_shape.back() = fan_out;
    std::vector<double> out(static_cast<size_t>(rows * fan_out));
    {
        detail::CMapM X(x.values().data(), rows, fan_in);
        detail::CMapM W(w.values().data(), fan_in, fan_out);
        detail::CMapV B(b.values().data(), fan_out);
        detail::MapM Y(out.data(), rows, fan_out);
        Y.noalias() = X * W;
        Y.rowwise() += B.transpose();
    }

    return Tensor::make_op(
        std::move(out_shape), std::move(out), {x, w, b},
        [rows, fan_in, fan_out](detail::TensorNode& self) {
            auto& xn = *self.parents[0];
            auto& wn = *self.parents[1];
            auto& bn = *self.parents[2];
            detail::CMapM DY(self.grad.data(), rows, fan_out);
            if (xn.requires_grad) {
                detail::CMapM W(wn.values.data(), fan_in, fan_out);
                detail::MapM DX(xn.grad_buffer().data(), rows, fan_in);
                DX.noalias() += DY * W.transpose();
            }
            if (wn.requires_grad) {
                detail::CMapM X(xn.values.data(), rows, fan_in);
                detail::MapM DW(wn.grad_buffer().data(), fan_in, fan_out);
                DW.noalias() += X.transpose() * DY;
            }
            if (bn.requires_grad) {
                // fixed row-order accumulation; Eigen's colwise reduction
                // peels by buffer alignment and breaks bitwise determinism
                double* db = bn.grad_buffer().data();
                const double* dy = self.grad.data();
                for (int64_t r = 0; r < rows; ++r)
                    for (int64_t c = 0; c < fan_out; ++c) db[c] += dy[r * fan_out + c];
            }
        });
}

// ---------------------------------------------------------------------------
// Elementwise activations. sine computes sin(omega * x).
// ---------------------------------------------------------------------------
enum class Act { None, Relu, Silu, Sine, Tanh, Sigmoid };

inline const char* act_name(Act a) {
    switch (a) {
        case Act::None: return "none";
        case Act::Relu: return "relu";
        case Act::Silu: return "silu";
        case Act::Sine: return "sine";
        case Act::Tanh: return "tanh";
        case Act::Sigmoid: return "sigmoid";
    }
    return "?";
}

inline Act act_from_name(const std::string& s) {
    if (s == "none") return Act::None;
    if (s == "relu") return Act::Relu;
    if (s == "silu") return Act::Silu;
    if (s == "sine") return Act::Sine;
    if (s == "tanh") return Act::Tanh;
    if (s == "sigmoid") return Act::Sigmoid;
    throw ValidationError("unknown activation '" + s + "'");
}

inline Tensor activation(const Tensor& x, Act kind, double omega = 30.0) {
    if (kind == Act::None) return x;
    const size_t n = x.values().size();
    std::vector<double> out(n);
    const double* xv = x.values().data();
    switch (kind) {
        case Act::Relu:
            for (size_t i = 0; i < n; ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
            break;
        case Act::Silu:
            for (size_t i = 0; i < n; ++i) out[i] = xv[i] / (1.0 + std::exp(-xv[i]));
            break;
        case Act::Sine:
            for (size_t i = 0; i < n; ++i) out[i] = std::sin(omega * xv[i]);
            break;
        case Act::Tanh:
            for (size_t i = 0; i < n; ++i) out[i] = std::tanh(xv[i]);
            break;
        case Act::Sigmoid:
            for (size_t i = 0; i < n; ++i) out[i] = 1.0 / (1.0 + std::exp(-xv[i]));
            break;
        default: break;
    }

    return Tensor::make_op(
        x.shape(), std::move(out), {x}, [kind, omega, n](detail::TensorNode& self) {
            auto& xn = *self.parents[0];
            if (!xn.requires_grad) return;
            const double* xv = xn.values.data();
            const double* yv = self.values.data();
            const double* dy = self.grad.data();
            double* dx = xn.grad_buffer().data();
            switch (kind) {
                case Act::Relu:
                    for (size_t i = 0; i < n; ++i) dx[i] += (xv[i] > 0.0 ? dy[i] : 0.0);
                    break;
                case Act::Silu:
                    for (size_t i = 0; i < n; ++i) {
                        double s = 1.0 / (1.0 + std::exp(-xv[i]));
                        dx[i] += dy[i] * s * (1.0 + xv[i] * (1.0 - s));
                    }
                    break;
                case Act::Sine:
                    for (size_t i = 0; i < n; ++i)
                        dx[i] += dy[i] * omega * std::cos(omega * xv[i]);
                    break;
                case Act::Tanh:
                    for (size_t i = 0; i < n; ++i) dx[i] += dy[i] * (1.0 - yv[i] * yv[i]);
                    break;
                case Act::Sigmoid:
                    for (size_t i = 0; i < n; ++i) dx[i] += dy[i] * yv[i] * (1.0 - yv[i]);
                    break;
                default: break;
            }
        });
}

// ---------------------------------------------------------------------------
// Batch normalization over the last (channel) axis.
// ---------------------------------------------------------------------------
struct BatchNormState {
    std::vector<double> running_mean;
    std::vector<double> running_var;
    double momentum = 0.1;
    double eps = 1e-5;
    int64_t steps = 0;  // number of committed training batches

    explicit BatchNormState(int64_t channels = 0)
        : running_mean(static_cast<size_t>(channels), 0.0),
          running_var(static_cast<size_t>(channels), 1.0) {}
};

// Train mode normalizes by batch statistics over all non-channel axes and
// (when update_running) folds them into the running estimates; eval mode
// normalizes by the running estimates. grad_check paths pass
// update_running=false so repeated forwards stay pure.
inline Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                        BatchNormState& state, bool train, bool update_running = true) {
    if (x.rank() < 2)
        throw ShapeError("batchnorm: input must have a batch axis, got " + shape_str(x.shape()));
    const int64_t ch = x.shape().back();
    const int64_t rows = x.numel() / ch;
    if (gamma.numel() != ch || beta.numel() != ch)
        throw ShapeError("batchnorm: scale/shift " + shape_str(gamma.shape()) +
                         " incompatible with channels " + std::to_string(ch));
    if (static_cast<int64_t>(state.running_mean.size()) != ch)
        throw ShapeError("batchnorm: state has " + std::to_string(state.running_mean.size()) +
                         " channels, input " + std::to_string(ch));

    std::vector<double> mean(static_cast<size_t>(ch)), ivar(static_cast<size_t>(ch));
    if (train) {
        if (rows < 2)
            throw ValidationError("batchnorm: train mode needs >= 2 statistics samples per channel, got " +
                                  std::to_string(rows));
        std::vector<double> var(static_cast<size_t>(ch), 0.0);
        const double* xv = x.values().data();
        for (int64_t r = 0; r < rows; ++r)
            for (int64_t c = 0; c < ch; ++c) mean[static_cast<size_t>(c)] += xv[r * ch + c];
        for (int64_t c = 0; c < ch; ++c) mean[static_cast<size_t>(c)] /= static_cast<double>(rows);
        for (int64_t r = 0; r < rows; ++r)
            for (int64_t c = 0; c < ch; ++c) {
                double d = xv[r * ch + c] - mean[static_cast<size_t>(c)];
                var[static_cast<size_t>(c)] += d * d;
            }
        for (int64_t c = 0; c < ch; ++c) {
            var[static_cast<size_t>(c)] /= static_cast<double>(rows);  // biased, for normalization
            ivar[static_cast<size_t>(c)] = 1.0 / std::sqrt(var[static_cast<size_t>(c)] + state.eps);
        }
        if (update_running) {
            const double unbias = static_cast<double>(rows) / static_cast<double>(rows - 1);
            for (int64_t c = 0; c < ch; ++c) {
                auto s = static_cast<size_t>(c);
                state.running_mean[s] = (1.0 - state.momentum) * state.running_mean[s] +
                                        state.momentum * mean[s];
                state.running_var[s] = (1.0 - state.momentum) * state.running_var[s] +
                                       state.momentum * var[s] * unbias;
            }
            state.steps += 1;
        }
    } else {
        if (state.steps == 0)
            throw UninitializedStatsError("batchnorm: eval mode before any training batch");
        for (int64_t c = 0; c < ch; ++c) {
            auto s = static_cast<size_t>(c);
            mean[s] = state.running_mean[s];
            ivar[s] = 1.0 / std::sqrt(state.running_var[s] + state.eps);
        }
    }

    std::vector<double> out(x.values().size());
    {
        const double* xv = x.values().data();
        const double* g = gamma.values().data();
        const double* bt = beta.values().data();
        for (int64_t r = 0; r < rows; ++r)
            for (int64_t c = 0; c < ch; ++c) {
                auto s = static_cast<size_t>(c);
                out[static_cast<size_t>(r * ch + c)] =
                    g[c] * (xv[r * ch + c] - mean[s]) * ivar[s] + bt[c];
            }
    }

    return Tensor::make_op(
        x.shape(), std::move(out), {x, gamma, beta},
        [rows, ch, train, mean = std::move(mean), ivar = std::move(ivar)](detail::TensorNode& self) {
            auto& xn = *self.parents[0];
            auto& gn = *self.parents[1];
            auto& bn = *self.parents[2];
            const double* xv = xn.values.data();
            const double* g = gn.values.data();
            const double* dy = self.grad.data();
            // per-channel reductions
            std::vector<double> sum_dy(static_cast<size_t>(ch), 0.0);
            std::vector<double> sum_dy_xhat(static_cast<size_t>(ch), 0.0);
            for (int64_t r = 0; r < rows; ++r)
                for (int64_t c = 0; c < ch; ++c) {
                    auto s = static_cast<size_t>(c);
                    double xhat = (xv[r * ch + c] - mean[s]) * ivar[s];
                    sum_dy[s] += dy[r * ch + c];
                    sum_dy_xhat[s] += dy[r * ch + c] * xhat;
                }
            if (gn.requires_grad) {
                double* dg = gn.grad_buffer().data();
                for (int64_t c = 0; c < ch; ++c) dg[c] += sum_dy_xhat[static_cast<size_t>(c)];
            }
            if (bn.requires_grad) {
                double* db = bn.grad_buffer().data();
                for (int64_t c = 0; c < ch; ++c) db[c] += sum_dy[static_cast<size_t>(c)];
            }
            if (xn.requires_grad) {
                double* dx = xn.grad_buffer().data();
                const double inv_rows = 1.0 / static_cast<double>(rows);
                for (int64_t r = 0; r < rows; ++r)
                    for (int64_t c = 0; c < ch; ++c) {
                        auto s = static_cast<size_t>(c);
                        double xhat = (xv[r * ch + c] - mean[s]) * ivar[s];
                        if (train) {
                            // batch statistics contribute to every element's grad
                            dx[r * ch + c] += g[c] * ivar[s] *
                                              (dy[r * ch + c] - sum_dy[s] * inv_rows -
                                               xhat * sum_dy_xhat[s] * inv_rows);
                        } else {
                            dx[r * ch + c] += g[c] * ivar[s] * dy[r * ch + c];
                        }
                    }
            }
        });
}

// ---------------------------------------------------------------------------
// maxpool_points: per-channel max over the point axis. [B,N,H] -> [B,H].
// Backward routes the gradient to the argmax point; ties go to the lowest
// point index.
// ---------------------------------------------------------------------------
inline Tensor maxpool_points(const Tensor& x) {
    if (x.rank() != 3)
        throw ShapeError("maxpool_points: expected [B,N,H], got " + shape_str(x.shape()));
    const int64_t b = x.dim(0), n = x.dim(1), h = x.dim(2);
    if (n < 1)
        throw ShapeError("maxpool_points: empty point set " + shape_str(x.shape()));

    std::vector<double> out(static_cast<size_t>(b * h));
    std::vector<int64_t> argmax(static_cast<size_t>(b * h));
    const double* xv = x.values().data();
    for (int64_t bi = 0; bi < b; ++bi)
        for (int64_t c = 0; c < h; ++c) {
            double best = xv[bi * n * h + c];
            int64_t best_i = 0;
            for (int64_t i = 1; i < n; ++i) {
                double v = xv[(bi * n + i) * h + c];
                if (v > best) {
                    best = v;
                    best_i = i;
                }
            }
            out[static_cast<size_t>(bi * h + c)] = best;
            argmax[static_cast<size_t>(bi * h + c)] = best_i;
        }

    return Tensor::make_op(
        {b, h}, std::move(out), {x},
        [b, n, h, argmax = std::move(argmax)](detail::TensorNode& self) {
            auto& xn = *self.parents[0];
            if (!xn.requires_grad) return;
            double* dx = xn.grad_buffer().data();
            const double* dy = self.grad.data();
            for (int64_t bi = 0; bi < b; ++bi)
                for (int64_t c = 0; c < h; ++c) {
                    int64_t i = argmax[static_cast<size_t>(bi * h + c)];
                    dx[(bi * n + i) * h + c] += dy[bi * h + c];
                }
        });
}

// ---------------------------------------------------------------------------
// mse_loss: mean over all elements of (pred - target)^2. Scalar output.
// ---------------------------------------------------------------------------
inline Tensor mse_loss(const Tensor& pred, const Tensor& target) {
    if (pred.shape() != target.shape())
        throw ShapeError("mse_loss: prediction " + shape_str(pred.shape()) + " vs target " +
                         shape_str(target.shape()));
    const size_t n = pred.values().size();
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double d = pred.values()[i] - target.values()[i];
        acc += d * d;
    }
    acc /= static_cast<double>(n);

    return Tensor::make_op({}, {acc}, {pred, target}, [n](detail::TensorNode& self) {
        auto& pn = *self.parents[0];
        auto& tn = *self.parents[1];
        const double g = self.grad[0] * 2.0 / static_cast<double>(n);
        const double* pv = pn.values.data();
        const double* tv = tn.values.data();
        if (pn.requires_grad) {
            double* dp = pn.grad_buffer().data();
            for (size_t i = 0; i < n; ++i) dp[i] += g * (pv[i] - tv[i]);
        }
        if (tn.requires_grad) {
            double* dt = tn.grad_buffer().data();
            for (size_t i = 0; i < n; ++i) dt[i] -= g * (pv[i] - tv[i]);
        }
    });
}

// ---------------------------------------------------------------------------
// sum_all: scalar sum over every element.
// ---------------------------------------------------------------------------
inline Tensor sum_all(const Tensor& x) {
    double acc = 0.0;
    for (double v : x.values()) acc += v;
    return Tensor::make_op({}, {acc}, {x}, [](detail::TensorNode& self) {
        auto& xn = *self.parents[0];
        if (!xn.requires_grad) return;
        double* dx = xn.grad_buffer().data();
        const double g = self.grad[0];
        for (size_t i = 0; i < xn.values.size(); ++i) dx[i] += g;
    });
}

// ---------------------------------------------------------------------------
// add: elementwise, identical shapes.
// ---------------------------------------------------------------------------
inline Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw ShapeError("add: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const size_t n = a.values().size();
    std::vector<double> out(n);
    for (size_t i = 0; i < n; ++i) out[i] = a.values()[i] + b.values()[i];
    return Tensor::make_op(a.shape(), std::move(out), {a, b}, [n](detail::TensorNode& self) {
        for (int p = 0; p < 2; ++p) {
            auto& pn = *self.parents[static_cast<size_t>(p)];
            if (!pn.requires_grad) continue;
            double* d = pn.grad_buffer().data();
            for (size_t i = 0; i < n; ++i) d[i] += self.grad[i];
        }
    });
}

// ---------------------------------------------------------------------------
// scale_points: out[b,i,h] = latent[b,h] * field[b,i,h] (the element-wise
// branch/trunk fusion, broadcast over the point axis).
// ---------------------------------------------------------------------------
inline Tensor scale_points(const Tensor& latent, const Tensor& field) {
    if (latent.rank() != 2 || field.rank() != 3 || latent.dim(0) != field.dim(0) ||
        latent.dim(1) != field.dim(2))
        throw ShapeError("scale_points: latent " + shape_str(latent.shape()) + " vs field " +
                         shape_str(field.shape()));
    const int64_t b = field.dim(0), n = field.dim(1), h = field.dim(2);
    std::vector<double> out(field.values().size());
    const double* lv = latent.values().data();
    const double* fv = field.values().data();
    for (int64_t bi = 0; bi < b; ++bi)
        for (int64_t i = 0; i < n; ++i)
            for (int64_t c = 0; c < h; ++c)
                out[static_cast<size_t>((bi * n + i) * h + c)] =
                    lv[bi * h + c] * fv[(bi * n + i) * h + c];

    return Tensor::make_op(
        field.shape(), std::move(out), {latent, field}, [b, n, h](detail::TensorNode& self) {
            auto& ln = *self.parents[0];
            auto& fn = *self.parents[1];
            const double* dy = self.grad.data();
            if (ln.requires_grad) {
                double* dl = ln.grad_buffer().data();
                const double* fv = fn.values.data();
                for (int64_t bi = 0; bi < b; ++bi)
                    for (int64_t i = 0; i < n; ++i)
                        for (int64_t c = 0; c < h; ++c)
                            dl[bi * h + c] += dy[(bi * n + i) * h + c] * fv[(bi * n + i) * h + c];
            }
            if (fn.requires_grad) {
                double* df = fn.grad_buffer().data();
                const double* lv = ln.values.data();
                for (int64_t bi = 0; bi < b; ++bi)
                    for (int64_t i = 0; i < n; ++i)
                        for (int64_t c = 0; c < h; ++c)
                            df[(bi * n + i) * h + c] += dy[(bi * n + i) * h + c] * lv[bi * h + c];
            }
        });
}

// ---------------------------------------------------------------------------
// concat_channels: concatenate along the last axis; leading axes must match.
// ---------------------------------------------------------------------------
inline Tensor concat_channels(const Tensor& a, const Tensor& b) {
    if (a.rank() != b.rank() || a.rank() < 1)
        throw ShapeError("concat_channels: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    for (size_t i = 0; i + 1 < a.rank(); ++i)
        if (a.dim(i) != b.dim(i))
            throw ShapeError("concat_channels: " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    const int64_t ca = a.shape().back(), cb = b.shape().back();
    const int64_t rows = a.numel() / ca;
    Shape out_shape = a.shape();
    out_shape.back() = ca + cb;
    std::vector<double> out(static_cast<size_t>(rows * (ca + cb)));
    for (int64_t r = 0; r < rows; ++r) {
        std::copy_n(a.values().data() + r * ca, ca, out.data() + r * (ca + cb));
        std::copy_n(b.values().data() + r * cb, cb, out.data() + r * (ca + cb) + ca);
    }
    return Tensor::make_op(
        std::move(out_shape), std::move(out), {a, b}, [rows, ca, cb](detail::TensorNode& self) {
            auto& an = *self.parents[0];
            auto& bn = *self.parents[1];
            const double* dy = self.grad.data();
            if (an.requires_grad) {
                double* da = an.grad_buffer().data();
                for (int64_t r = 0; r < rows; ++r)
                    for (int64_t c = 0; c < ca; ++c) da[r * ca + c] += dy[r * (ca + cb) + c];
            }
            if (bn.requires_grad) {
                double* db = bn.grad_buffer().data();
                for (int64_t r = 0; r < rows; ++r)
                    for (int64_t c = 0; c < cb; ++c) db[r * cb + c] += dy[r * (ca + cb) + ca + c];
            }
        });
}

// ---------------------------------------------------------------------------
// tile_points: [B,H] -> [B,N,H]; backward sums over the point axis.
// ---------------------------------------------------------------------------
inline Tensor tile_points(const Tensor& global, int64_t n) {
    if (global.rank() != 2)
        throw ShapeError("tile_points: expected [B,H], got " + shape_str(global.shape()));
    const int64_t b = global.dim(0), h = global.dim(1);
    std::vector<double> out(static_cast<size_t>(b * n * h));
    for (int64_t bi = 0; bi < b; ++bi)
        for (int64_t i = 0; i < n; ++i)
            std::copy_n(global.values().data() + bi * h, h, out.data() + (bi * n + i) * h);
    return Tensor::make_op(
        {b, n, h}, std::move(out), {global}, [b, n, h](detail::TensorNode& self) {
            auto& gn = *self.parents[0];
            if (!gn.requires_grad) return;
            double* dg = gn.grad_buffer().data();
            const double* dy = self.grad.data();
            for (int64_t bi = 0; bi < b; ++bi)
                for (int64_t i = 0; i < n; ++i)
                    for (int64_t c = 0; c < h; ++c) dg[bi * h + c] += dy[(bi * n + i) * h + c];
        });
}

// ---------------------------------------------------------------------------
// reshape: same data, new extents.
// ---------------------------------------------------------------------------
inline Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel())
        throw ShapeError("reshape: " + shape_str(x.shape()) + " to " + shape_str(shape));
    std::vector<double> out = x.values();
    return Tensor::make_op(std::move(shape), std::move(out), {x}, [](detail::TensorNode& self) {
        auto& xn = *self.parents[0];
        if (!xn.requires_grad) return;
        double* dx = xn.grad_buffer().data();
        for (size_t i = 0; i < self.grad.size(); ++i) dx[i] += self.grad[i];
    });
}

// ---------------------------------------------------------------------------
// channel_mask: multiply each channel of the last axis by a fixed scale
// (used to zero out disabled inputs while keeping layer widths stable).
// ---------------------------------------------------------------------------
inline Tensor channel_mask(const Tensor& x, std::vector<double> mask) {
    const int64_t ch = x.shape().back();
    if (static_cast<int64_t>(mask.size()) != ch)
        throw ShapeError("channel_mask: mask size " + std::to_string(mask.size()) +
                         " vs channels " + std::to_string(ch));
    const int64_t rows = x.numel() / ch;
    std::vector<double> out(x.values().size());
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < ch; ++c)
            out[static_cast<size_t>(r * ch + c)] =
                x.values()[static_cast<size_t>(r * ch + c)] * mask[static_cast<size_t>(c)];
    return Tensor::make_op(
        x.shape(), std::move(out), {x}, [rows, ch, mask = std::move(mask)](detail::TensorNode& self) {
            auto& xn = *self.parents[0];
            if (!xn.requires_grad) return;
            double* dx = xn.grad_buffer().data();
            const double* dy = self.grad.data();
            for (int64_t r = 0; r < rows; ++r)
                for (int64_t c = 0; c < ch; ++c)
                    dx[r * ch + c] += dy[r * ch + c] * mask[static_cast<size_t>(c)];
        });
}

// ---------------------------------------------------------------------------
// latent_dot: out[b,i,m] = sum_h bf[...,h] * tf[b,i,h,m].
// bf is [B,N,H] (per-point latents) or [B,H] (one latent per batch entry,
// broadcast over points).
// ---------------------------------------------------------------------------
inline Tensor latent_dot(const Tensor& bf, const Tensor& tf) {
    if (tf.rank() != 4)
        throw ShapeError("latent_dot: trunk features must be [B,N,H,M], got " +
                         shape_str(tf.shape()));
    const int64_t b = tf.dim(0), n = tf.dim(1), h = tf.dim(2), m = tf.dim(3);
    const bool per_point = bf.rank() == 3;
    if (per_point) {
        if (bf.dim(0) != b || bf.dim(1) != n || bf.dim(2) != h)
            throw ShapeError("latent_dot: branch " + shape_str(bf.shape()) + " vs trunk " +
                             shape_str(tf.shape()));
    } else if (bf.rank() == 2) {
        if (bf.dim(0) != b || bf.dim(1) != h)
            throw ShapeError("latent_dot: branch " + shape_str(bf.shape()) + " vs trunk " +
                             shape_str(tf.shape()));
    } else {
        throw ShapeError("latent_dot: branch features must be [B,H] or [B,N,H], got " +
                         shape_str(bf.shape()));
    }

    std::vector<double> out(static_cast<size_t>(b * n * m), 0.0);
    {
        const double* bv = bf.values().data();
        const double* tv = tf.values().data();
        for (int64_t bi = 0; bi < b; ++bi)
            for (int64_t i = 0; i < n; ++i) {
                const double* brow = per_point ? bv + (bi * n + i) * h : bv + bi * h;
                const double* trow = tv + ((bi * n + i) * h) * m;
                double* orow = out.data() + (bi * n + i) * m;
                for (int64_t c = 0; c < h; ++c)
                    for (int64_t f = 0; f < m; ++f) orow[f] += brow[c] * trow[c * m + f];
            }
    }

    return Tensor::make_op(
        {b, n, m}, std::move(out), {bf, tf}, [b, n, h, m, per_point](detail::TensorNode& self) {
            auto& bn = *self.parents[0];
            auto& tn = *self.parents[1];
            const double* dy = self.grad.data();
            const double* bv = bn.values.data();
            const double* tv = tn.values.data();
            double* db = bn.requires_grad ? bn.grad_buffer().data() : nullptr;
            double* dt = tn.requires_grad ? tn.grad_buffer().data() : nullptr;
            for (int64_t bi = 0; bi < b; ++bi)
                for (int64_t i = 0; i < n; ++i) {
                    const int64_t boff = per_point ? (bi * n + i) * h : bi * h;
                    const int64_t toff = ((bi * n + i) * h) * m;
                    const double* drow = dy + (bi * n + i) * m;
                    for (int64_t c = 0; c < h; ++c) {
                        for (int64_t f = 0; f < m; ++f) {
                            if (db) db[boff + c] += drow[f] * tv[toff + c * m + f];
                            if (dt) dt[toff + c * m + f] += drow[f] * bv[boff + c];
                        }
                    }
                }
        });
}

}  // namespace pdn
