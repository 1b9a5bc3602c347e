#include "masolab/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "internal.hpp"
#include "masolab/errors.hpp"
#include "masolab/rng.hpp"

namespace masolab {

using detail::overloaded;
using detail::require_dim;

void validate(const Dataset& data) {
    const std::size_t n = data.size();
    const std::size_t d = data.dim();
    for (std::size_t i = 0; i < n; ++i) {
        if (data.inputs[i].size() != d)
            throw FormatError("example " + std::to_string(i) + " has dimension " +
                              std::to_string(data.inputs[i].size()) + ", expected " +
                              std::to_string(d));
        if (!all_finite(data.inputs[i]))
            throw FormatError("example " + std::to_string(i) + " has non-finite features");
    }
    if (!data.labels.empty()) {
        if (data.labels.size() != n) throw FormatError("label count does not match input count");
        for (std::size_t i = 0; i < n; ++i) {
            if (data.labels[i] >= data.classes)
                throw FormatError("label " + std::to_string(data.labels[i]) + " of example " +
                                  std::to_string(i) + " is not below the class count " +
                                  std::to_string(data.classes));
        }
    }
    if (data.is_regression()) {
        if (data.targets.size() != n) throw FormatError("target count does not match input count");
        for (const auto& t : data.targets) {
            if (t.size() != data.targets.front().size()) throw FormatError("ragged targets");
            if (!all_finite(t)) throw FormatError("non-finite target");
        }
    }
}

std::size_t distinct_labels(const Dataset& data) {
    return std::set<std::size_t>(data.labels.begin(), data.labels.end()).size();
}

DenseVector softmax(std::span<const double> logits) {
    DenseVector p(logits.begin(), logits.end());
    if (p.empty()) return p;
    const double top = *std::ranges::max_element(p);
    double norm = 0.0;
    for (double& v : p) {
        v = std::exp(v - top);
        norm += v;
    }
    for (double& v : p) v /= norm;
    return p;
}

double log_sum_exp(std::span<const double> logits) {
    const double top = *std::ranges::max_element(logits);
    double s = 0.0;
    for (double v : logits) s += std::exp(v - top);
    return top + std::log(s);
}

double cross_entropy(std::span<const double> logits, std::size_t y) {
    if (y >= logits.size()) throw DomainError("class index out of range");
    return log_sum_exp(logits) - logits[y];
}

DenseMatrix softmax_jacobian(std::span<const double> p) {
    DenseMatrix J(p.size(), p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        for (std::size_t j = 0; j < p.size(); ++j) J(i, j) = (i == j ? p[i] : 0.0) - p[i] * p[j];
    }
    return J;
}

double ortho_penalty(const DenseMatrix& W) {
    double s = 0.0;
    for (std::size_t a = 0; a < W.rows(); ++a) {
        for (std::size_t b = 0; b < W.rows(); ++b) {
            if (a == b) continue;
            const double g = dot(W.row(a), W.row(b));
            s += g * g;
        }
    }
    return s;
}

DenseMatrix ortho_penalty_gradient(const DenseMatrix& W) {
    DenseMatrix G(W.rows(), W.cols());
    for (std::size_t a = 0; a < W.rows(); ++a) {
        for (std::size_t b = 0; b < W.rows(); ++b) {
            if (a == b) continue;
            axpy(4.0 * dot(W.row(a), W.row(b)), W.row(b), G.row(a));
        }
    }
    return G;
}

double max_offdiagonal_gram(const DenseMatrix& W) {
    double m = 0.0;
    for (std::size_t a = 0; a < W.rows(); ++a) {
        for (std::size_t b = a + 1; b < W.rows(); ++b)
            m = std::max(m, std::abs(dot(W.row(a), W.row(b))));
    }
    return m;
}

namespace {

struct BatchMoments {
    DenseVector mean;
    DenseVector var;
};

BatchMoments moments(std::span<const DenseVector> batch, std::size_t dim) {
    BatchMoments m{DenseVector(dim, 0.0), DenseVector(dim, 0.0)};
    const double n = static_cast<double>(batch.size());
    for (const auto& x : batch) {
        for (std::size_t i = 0; i < dim; ++i) m.mean[i] += x[i];
    }
    for (double& v : m.mean) v /= n;
    for (const auto& x : batch) {
        for (std::size_t i = 0; i < dim; ++i) {
            const double d = x[i] - m.mean[i];
            m.var[i] += d * d;
        }
    }
    for (double& v : m.var) v /= n;
    return m;
}

void blend_running(BatchNormState& s, std::span<const double> mean, std::span<const double> var) {
    for (std::size_t i = 0; i < s.dim(); ++i) {
        s.running_mean[i] = s.momentum * s.running_mean[i] + (1.0 - s.momentum) * mean[i];
        s.running_var[i] = s.momentum * s.running_var[i] + (1.0 - s.momentum) * var[i];
    }
}

}  // namespace

std::vector<DenseVector> batchnorm_forward(BatchNormState& state,
                                           std::span<const DenseVector> batch) {
    const std::size_t dim = state.dim();
    for (const auto& x : batch) require_dim(x.size(), dim, "batchnorm_forward");
    std::vector<DenseVector> out(batch.size(), DenseVector(dim));
    if (state.mode == BatchNormMode::Infer) {
        const auto f = fold_batchnorm(state);
        for (std::size_t n = 0; n < batch.size(); ++n) {
            for (std::size_t i = 0; i < dim; ++i) out[n][i] = f.scale[i] * batch[n][i] + f.shift[i];
        }
        return out;
    }
    if (batch.size() < 2) throw DomainError("train-mode batch norm needs a batch of at least 2");
    const auto m = moments(batch, dim);
    for (std::size_t n = 0; n < batch.size(); ++n) {
        for (std::size_t i = 0; i < dim; ++i) {
            const double xhat = (batch[n][i] - m.mean[i]) / std::sqrt(m.var[i] + state.eps);
            out[n][i] = state.gamma[i] * xhat + state.zeta[i];
        }
    }
    blend_running(state, m.mean, m.var);
    return out;
}

void set_batchnorm_mode(Network& net, BatchNormMode mode) {
    for (auto& layer : net.layers) {
        if (auto* bn = std::get_if<BatchNormLayer>(&layer)) bn->state.mode = mode;
    }
}

Network fold_batchnorms(const Network& net) {
    Network out;
    out.input_shape = net.input_shape;
    out.W_final = net.W_final;
    out.b_final = net.b_final;
    for (const auto& layer : net.layers) {
        const auto* bn = std::get_if<BatchNormLayer>(&layer);
        if (bn == nullptr) {
            out.layers.push_back(layer);
            continue;
        }
        const auto f = fold_batchnorm(bn->state);
        DenseLayer* prev = out.layers.empty() ? nullptr : std::get_if<DenseLayer>(&out.layers.back());
        if (prev != nullptr) {
            prev->W = scale_rows(f.scale, prev->W);
            for (std::size_t i = 0; i < prev->b.size(); ++i)
                prev->b[i] = f.scale[i] * prev->b[i] + f.shift[i];
        } else {
            out.layers.push_back(DenseLayer{DenseMatrix::diagonal(f.scale), f.shift});
        }
    }
    return out;
}

void validate(const TrainConfig& cfg) {
    if (!(cfg.lr > 0.0) || !std::isfinite(cfg.lr)) throw DomainError("learning rate must be > 0");
    if (!(cfg.lambda_ortho >= 0.0)) throw DomainError("lambda_ortho must be >= 0");
    if (cfg.batch_size == 0) throw DomainError("batch size must be >= 1");
    if (!(cfg.lr_decay > 0.0)) throw DomainError("learning rate decay must be > 0");
    if (cfg.optimizer == Optimizer::Adam) {
        if (!(cfg.adam_beta1 >= 0.0 && cfg.adam_beta1 < 1.0) ||
            !(cfg.adam_beta2 >= 0.0 && cfg.adam_beta2 < 1.0))
            throw DomainError("Adam betas must lie in [0, 1)");
        if (!(cfg.adam_eps > 0.0)) throw DomainError("Adam epsilon must be > 0");
    }
}

std::vector<ParamRef> parameters(Network& net) {
    std::vector<ParamRef> out;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const std::string p = "layer" + std::to_string(i) + ".";
        std::visit(overloaded{
                       [&](DenseLayer& l) {
                           out.push_back({p + "W", l.W.data()});
                           out.push_back({p + "b", l.b});
                       },
                       [&](ConvLayer& l) {
                           out.push_back({p + "filters", l.filters.values});
                           out.push_back({p + "channel_bias", l.channel_bias});
                       },
                       [](ActivationLayer&) {},
                       [](PoolLayer&) {},
                       [&](BatchNormLayer& l) {
                           out.push_back({p + "gamma", l.state.gamma});
                           out.push_back({p + "zeta", l.state.zeta});
                       },
                       [&](ResidualLayer& l) {
                           out.push_back({p + "C", l.C.data()});
                           out.push_back({p + "b_C", l.b_C});
                           out.push_back({p + "C_skip", l.C_skip.data()});
                           out.push_back({p + "b_skip", l.b_skip});
                       },
                   },
                   net.layers[i]);
    }
    out.push_back({"W_final", net.W_final.data()});
    out.push_back({"b_final", net.b_final});
    return out;
}

void refresh_derived(Network& net) {
    for (auto& layer : net.layers) {
        if (auto* c = std::get_if<ConvLayer>(&layer)) c->refresh();
    }
}

namespace {

std::vector<std::size_t> tensor_sizes(const Layer& layer) {
    return std::visit(
        overloaded{
            [](const DenseLayer& l) { return std::vector<std::size_t>{l.W.data().size(), l.b.size()}; },
            [](const ConvLayer& l) {
                return std::vector<std::size_t>{l.filters.size(), l.channel_bias.size()};
            },
            [](const ActivationLayer&) { return std::vector<std::size_t>{}; },
            [](const PoolLayer&) { return std::vector<std::size_t>{}; },
            [](const BatchNormLayer& l) {
                return std::vector<std::size_t>{l.state.gamma.size(), l.state.zeta.size()};
            },
            [](const ResidualLayer& l) {
                return std::vector<std::size_t>{l.C.data().size(), l.b_C.size(),
                                                l.C_skip.data().size(), l.b_skip.size()};
            },
        },
        layer);
}

// Batch-norm cache for the reverse pass in train mode.
struct BatchNormCache {
    std::vector<DenseVector> xhat;
    DenseVector inv_std;
};

void outer_accumulate(std::span<const double> delta, std::span<const double> x,
                      std::span<double> dW) {
    const std::size_t cols = x.size();
    for (std::size_t r = 0; r < delta.size(); ++r) {
        if (delta[r] == 0.0) continue;
        axpy(delta[r], x, dW.subspan(r * cols, cols));
    }
}

}  // namespace

BackwardResult backward(const Network& net, const Dataset& data,
                        std::span<const std::size_t> batch, const TrainConfig& cfg) {
    validate(cfg);
    if (batch.empty()) throw DomainError("backward needs a non-empty batch");
    const std::size_t N = batch.size();
    const std::size_t L = net.layers.size();
    const std::size_t C = net.classes();
    const bool mse = cfg.loss == LossKind::MeanSquared;
    if (data.is_regression() && !mse) throw DomainError("regression targets need the MSE loss");

    // Forward, keeping every layer input.
    std::vector<std::vector<DenseVector>> acts(L + 1);
    std::vector<std::vector<SelectionCode>> codes(L);
    std::vector<BatchNormCache> bn_cache(L);
    BackwardResult res;
    acts[0].reserve(N);
    for (std::size_t idx : batch) {
        if (idx >= data.size()) throw DomainError("batch index out of range");
        require_dim(data.inputs[idx].size(), net.input_dim(), "backward input");
        acts[0].push_back(data.inputs[idx]);
    }
    for (std::size_t i = 0; i < L; ++i) {
        const auto* bn = std::get_if<BatchNormLayer>(&net.layers[i]);
        if (bn != nullptr && bn->state.mode == BatchNormMode::Train) {
            if (N < 2) throw DomainError("train-mode batch norm needs a batch of at least 2");
            const std::size_t dim = bn->state.dim();
            auto m = moments(acts[i], dim);
            auto& cache = bn_cache[i];
            cache.inv_std.resize(dim);
            for (std::size_t k = 0; k < dim; ++k) cache.inv_std[k] = 1.0 / std::sqrt(m.var[k] + bn->state.eps);
            acts[i + 1].resize(N, DenseVector(dim));
            cache.xhat.resize(N, DenseVector(dim));
            for (std::size_t n = 0; n < N; ++n) {
                for (std::size_t k = 0; k < dim; ++k) {
                    const double xh = (acts[i][n][k] - m.mean[k]) * cache.inv_std[k];
                    cache.xhat[n][k] = xh;
                    acts[i + 1][n][k] = bn->state.gamma[k] * xh + bn->state.zeta[k];
                }
            }
            res.batch_stats.push_back({i, std::move(m.mean), std::move(m.var)});
            continue;
        }
        acts[i + 1].reserve(N);
        codes[i].reserve(N);
        for (std::size_t n = 0; n < N; ++n) {
            auto out = layer_forward(net.layers[i], acts[i][n]);
            acts[i + 1].push_back(std::move(out.z));
            codes[i].push_back(std::move(out.code));
        }
    }

    // Gradient tensors in parameters() order.
    std::vector<std::size_t> first(L + 1, 0);
    for (std::size_t i = 0; i < L; ++i) first[i + 1] = first[i] + tensor_sizes(net.layers[i]).size();
    auto& T = res.grads.tensors;
    T.resize(first[L] + 2);
    {
        std::size_t t = 0;
        for (const auto& layer : net.layers) {
            for (std::size_t size : tensor_sizes(layer)) T[t++].assign(size, 0.0);
        }
        T[t++].assign(net.W_final.rows() * net.W_final.cols(), 0.0);
        T[t].assign(net.b_final.size(), 0.0);
    }
    auto& dWf = T[first[L]];
    auto& dbf = T[first[L] + 1];

    // Loss and gradient at the logits.
    std::vector<DenseVector> delta(N);
    const double inv_n = 1.0 / static_cast<double>(N);
    double loss = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
        const auto& z = acts[L][n];
        const auto logits = add(gemv(net.W_final, z), net.b_final);
        const std::size_t idx = batch[n];
        DenseVector g(C);
        if (mse) {
            DenseVector target;
            if (data.is_regression()) {
                target = data.targets[idx];
                require_dim(target.size(), C, "regression target");
            } else {
                target.assign(C, 0.0);
                target[data.labels.at(idx)] = 1.0;
            }
            for (std::size_t c = 0; c < C; ++c) {
                const double e = logits[c] - target[c];
                loss += e * e;
                g[c] = 2.0 * e * inv_n;
            }
        } else {
            const std::size_t y = data.labels.at(idx);
            loss += cross_entropy(logits, y);
            const auto p = softmax(logits);
            for (std::size_t c = 0; c < C; ++c) g[c] = (p[c] - (c == y ? 1.0 : 0.0)) * inv_n;
        }
        outer_accumulate(g, z, dWf);
        axpy(1.0, g, dbf);
        delta[n] = gemv_transposed(net.W_final, g);
    }
    res.data_loss = loss * inv_n;
    res.penalty = ortho_penalty(net.W_final);
    res.loss = res.data_loss + cfg.lambda_ortho * res.penalty;
    if (cfg.lambda_ortho != 0.0) {
        const auto pg = ortho_penalty_gradient(net.W_final);
        axpy(cfg.lambda_ortho, pg.data(), dWf);
    }

    // Reverse pass through the layers.
    for (std::size_t i = L; i-- > 0;) {
        const auto& x = acts[i];
        const std::size_t t0 = first[i];
        std::visit(
            overloaded{
                [&](const DenseLayer& l) {
                    for (std::size_t n = 0; n < N; ++n) {
                        outer_accumulate(delta[n], x[n], T[t0]);
                        axpy(1.0, delta[n], T[t0 + 1]);
                        delta[n] = gemv_transposed(l.W, delta[n]);
                    }
                },
                [&](const ConvLayer& l) {
                    const std::size_t plane = l.out_shape.height * l.out_shape.width;
                    for (std::size_t n = 0; n < N; ++n) {
                        for (const auto& tap : l.taps)
                            T[t0][tap.tap] += delta[n][tap.row] * x[n][tap.col];
                        for (std::size_t r = 0; r < delta[n].size(); ++r)
                            T[t0 + 1][r / plane] += delta[n][r];
                        delta[n] = gemv_transposed(l.matrix, delta[n]);
                    }
                },
                [&](const ActivationLayer&) {
                    for (std::size_t n = 0; n < N; ++n)
                        delta[n] = backprop_input(net.layers[i], codes[i][n], delta[n]);
                },
                [&](const PoolLayer&) {
                    for (std::size_t n = 0; n < N; ++n)
                        delta[n] = backprop_input(net.layers[i], codes[i][n], delta[n]);
                },
                [&](const BatchNormLayer& l) {
                    const auto& s = l.state;
                    const std::size_t dim = s.dim();
                    auto& dgamma = T[t0];
                    auto& dzeta = T[t0 + 1];
                    if (s.mode == BatchNormMode::Infer) {
                        const auto f = fold_batchnorm(s);
                        for (std::size_t n = 0; n < N; ++n) {
                            for (std::size_t k = 0; k < dim; ++k) {
                                const double inv = 1.0 / std::sqrt(s.running_var[k] + s.eps);
                                dgamma[k] += delta[n][k] * (x[n][k] - s.running_mean[k]) * inv;
                                dzeta[k] += delta[n][k];
                                delta[n][k] *= f.scale[k];
                            }
                        }
                        return;
                    }
                    const auto& cache = bn_cache[i];
                    const double nn = static_cast<double>(N);
                    DenseVector sum_dxhat(dim, 0.0);
                    DenseVector sum_dxhat_xhat(dim, 0.0);
                    for (std::size_t n = 0; n < N; ++n) {
                        for (std::size_t k = 0; k < dim; ++k) {
                            dgamma[k] += delta[n][k] * cache.xhat[n][k];
                            dzeta[k] += delta[n][k];
                            const double dxh = delta[n][k] * s.gamma[k];
                            sum_dxhat[k] += dxh;
                            sum_dxhat_xhat[k] += dxh * cache.xhat[n][k];
                        }
                    }
                    for (std::size_t n = 0; n < N; ++n) {
                        for (std::size_t k = 0; k < dim; ++k) {
                            const double dxh = delta[n][k] * s.gamma[k];
                            delta[n][k] = cache.inv_std[k] / nn *
                                          (nn * dxh - sum_dxhat[k] - cache.xhat[n][k] * sum_dxhat_xhat[k]);
                        }
                    }
                },
                [&](const ResidualLayer& l) {
                    for (std::size_t n = 0; n < N; ++n) {
                        DenseVector g(delta[n].size());
                        for (std::size_t k = 0; k < g.size(); ++k)
                            g[k] = delta[n][k] * activation_slope(l.kind, l.leak, codes[i][n].index[k]);
                        outer_accumulate(g, x[n], T[t0]);
                        axpy(1.0, g, T[t0 + 1]);
                        outer_accumulate(delta[n], x[n], T[t0 + 2]);
                        axpy(1.0, delta[n], T[t0 + 3]);
                        auto back = gemv_transposed(l.C, g);
                        axpy(1.0, gemv_transposed(l.C_skip, delta[n]), back);
                        delta[n] = std::move(back);
                    }
                },
            },
            net.layers[i]);
    }
    return res;
}

void update_running_stats(Network& net, std::span<const BatchNormStats> stats) {
    for (const auto& s : stats) {
        auto* bn = std::get_if<BatchNormLayer>(&net.layers.at(s.layer));
        if (bn == nullptr) throw DomainError("batch statistics refer to a non-batch-norm layer");
        blend_running(bn->state, s.mean, s.var);
    }
}

void sgd_step(std::span<ParamRef> params, const Gradients& grads, double lr) {
    require_dim(grads.tensors.size(), params.size(), "sgd_step tensors");
    for (std::size_t t = 0; t < params.size(); ++t) {
        require_dim(grads.tensors[t].size(), params[t].values.size(), "sgd_step tensor");
        axpy(-lr, grads.tensors[t], params[t].values);
    }
}

void adam_step(std::span<ParamRef> params, const Gradients& grads, const TrainConfig& cfg,
               double lr, AdamState& state) {
    require_dim(grads.tensors.size(), params.size(), "adam_step tensors");
    if (state.m.empty()) {
        for (const auto& p : params) {
            state.m.emplace_back(p.values.size(), 0.0);
            state.v.emplace_back(p.values.size(), 0.0);
        }
    }
    ++state.step;
    const double b1 = cfg.adam_beta1;
    const double b2 = cfg.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    for (std::size_t t = 0; t < params.size(); ++t) {
        const auto& g = grads.tensors[t];
        require_dim(g.size(), params[t].values.size(), "adam_step tensor");
        auto& m = state.m[t];
        auto& v = state.v[t];
        auto w = params[t].values;
        for (std::size_t j = 0; j < g.size(); ++j) {
            m[j] = b1 * m[j] + (1.0 - b1) * g[j];
            v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
            w[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + cfg.adam_eps);
        }
    }
}

Evaluation evaluate(const Network& net, const Dataset& data, LossKind loss) {
    Evaluation ev;
    if (data.empty()) return ev;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto logits = predict_logits(net, data.inputs[i]);
        if (loss == LossKind::CrossEntropy) {
            ev.loss += cross_entropy(logits, data.labels.at(i));
        } else if (data.is_regression()) {
            for (std::size_t c = 0; c < logits.size(); ++c) {
                const double e = logits[c] - data.targets[i][c];
                ev.loss += e * e;
            }
        } else {
            for (std::size_t c = 0; c < logits.size(); ++c) {
                const double e = logits[c] - (c == data.labels.at(i) ? 1.0 : 0.0);
                ev.loss += e * e;
            }
        }
        if (!data.labels.empty()) {
            const auto arg = static_cast<std::size_t>(
                std::distance(logits.begin(), std::ranges::max_element(logits)));
            correct += arg == data.labels[i];
        }
    }
    const double n = static_cast<double>(data.size());
    ev.loss /= n;
    ev.accuracy = static_cast<double>(correct) / n;
    return ev;
}

TrainHistory train(Network& net, const Dataset& data, const TrainConfig& cfg) {
    validate(cfg);
    if (data.empty()) throw DomainError("cannot train on an empty data set");
    validate(data);
    validate(net);
    require_dim(data.dim(), net.input_dim(), "train input");
    TrainHistory history;
    history.single_class = !data.is_regression() && distinct_labels(data) < 2;

    const bool has_bn = std::ranges::any_of(
        net.layers, [](const Layer& l) { return std::holds_alternative<BatchNormLayer>(l); });
    if (has_bn && data.size() < 2) throw DomainError("batch norm training needs at least 2 examples");

    auto params = parameters(net);
    AdamState adam;
    const CounterRng root(cfg.seed);
    std::vector<std::size_t> order(data.size());
    double lr = cfg.lr;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        set_batchnorm_mode(net, BatchNormMode::Train);
        std::iota(order.begin(), order.end(), std::size_t{0});
        CounterRng rng = root.split(epoch);
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            if (has_bn && stop - start < 2) continue;
            const std::span<const std::size_t> batch(order.data() + start, stop - start);
            auto res = backward(net, data, batch, cfg);
            update_running_stats(net, res.batch_stats);
            if (cfg.optimizer == Optimizer::Sgd)
                sgd_step(params, res.grads, lr);
            else
                adam_step(params, res.grads, cfg, lr, adam);
            refresh_derived(net);
        }

        set_batchnorm_mode(net, BatchNormMode::Infer);
        const auto ev = evaluate(net, data, cfg.loss);
        const double penalty = ortho_penalty(net.W_final);
        history.epochs.push_back({epoch + 1, ev.loss + cfg.lambda_ortho * penalty, ev.accuracy, penalty});
        lr *= cfg.lr_decay;
    }
    set_batchnorm_mode(net, BatchNormMode::Infer);
    return history;
}

}  // namespace masolab
