#include "masolab/layers.hpp"

#include <cmath>
#include <string>

#include "masolab/errors.hpp"

namespace masolab {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

void require_dim(std::size_t got, std::size_t want, const char* what) {
    if (got != want) {
        throw DimensionError(std::string(what) + ": expected dimension " + std::to_string(want) +
                             ", got " + std::to_string(got));
    }
}

SelectionCode zero_code(std::size_t n) { return {std::vector<std::uint32_t>(n, 0)}; }

// Winner of (s0 * u, u) with ties to piece 0.
std::uint32_t activation_piece(ActivationKind kind, double leak, double u, bool& tie) {
    const double first = activation_slope(kind, leak, 0) * u;
    if (u > first) return 1;
    if (u == first) tie = true;
    return 0;
}

}  // namespace

double activation_slope(ActivationKind kind, double leak, std::uint32_t piece) {
    if (piece == 1) return 1.0;
    switch (kind) {
        case ActivationKind::ReLU: return 0.0;
        case ActivationKind::LeakyReLU: return leak;
        case ActivationKind::Abs: return -1.0;
    }
    return 0.0;
}

void ConvLayer::refresh() {
    require_dim(channel_bias.size(), filters.out_channels, "conv channel bias");
    out_shape = conv_output_shape(filters, in_shape, padding, stride);
    taps = conv_taps(filters, in_shape, padding, stride);
    matrix = DenseMatrix(out_shape.dim(), in_shape.dim());
    for (const auto& t : taps) matrix(t.row, t.col) += filters.values[t.tap];
    bias = build_conv_bias(channel_bias, out_shape);
}

ConvLayer make_conv_layer(FilterBank filters, DenseVector channel_bias, Shape3 in_shape,
                          Padding padding, Stride stride) {
    ConvLayer c;
    c.filters = std::move(filters);
    c.channel_bias = std::move(channel_bias);
    c.in_shape = in_shape;
    c.padding = padding;
    c.stride = stride;
    c.refresh();
    return c;
}

void PoolLayer::refresh() { regions = build_pool_regions(axis, in_shape, window, stride); }

PoolLayer make_pool_layer(PoolKind kind, PoolAxis axis, Shape3 in_shape, Stride window,
                          Stride stride) {
    PoolLayer p{kind, axis, in_shape, window, stride, {}};
    p.refresh();
    return p;
}

BatchNormState make_batchnorm_state(std::size_t dim, double eps, double momentum) {
    if (!(eps > 0.0)) throw DomainError("batch norm epsilon must be > 0");
    BatchNormState s;
    s.gamma.assign(dim, 1.0);
    s.zeta.assign(dim, 0.0);
    s.running_mean.assign(dim, 0.0);
    s.running_var.assign(dim, 1.0);
    s.eps = eps;
    s.momentum = momentum;
    return s;
}

FoldedBatchNorm fold_batchnorm(const BatchNormState& state) {
    if (state.mode != BatchNormMode::Infer)
        throw DomainError("batch norm can only be folded in inference mode");
    FoldedBatchNorm f{DenseVector(state.dim()), DenseVector(state.dim())};
    for (std::size_t i = 0; i < state.dim(); ++i) {
        f.scale[i] = state.gamma[i] / std::sqrt(state.running_var[i] + state.eps);
        f.shift[i] = state.zeta[i] - state.running_mean[i] * f.scale[i];
    }
    return f;
}

std::size_t in_dim(const Layer& layer) {
    return std::visit(overloaded{
                          [](const DenseLayer& l) { return l.W.cols(); },
                          [](const ConvLayer& l) { return l.in_shape.dim(); },
                          [](const ActivationLayer& l) { return l.dim; },
                          [](const PoolLayer& l) { return l.in_shape.dim(); },
                          [](const BatchNormLayer& l) { return l.state.dim(); },
                          [](const ResidualLayer& l) { return l.C.cols(); },
                      },
                      layer);
}

std::size_t out_dim(const Layer& layer) {
    return std::visit(overloaded{
                          [](const DenseLayer& l) { return l.W.rows(); },
                          [](const ConvLayer& l) { return l.out_shape.dim(); },
                          [](const ActivationLayer& l) { return l.dim; },
                          [](const PoolLayer& l) { return l.regions.size(); },
                          [](const BatchNormLayer& l) { return l.state.dim(); },
                          [](const ResidualLayer& l) { return l.C.rows(); },
                      },
                      layer);
}

std::size_t piece_count(const Layer& layer) {
    return std::visit(overloaded{
                          [](const ActivationLayer&) -> std::size_t { return 2; },
                          [](const ResidualLayer&) -> std::size_t { return 2; },
                          [](const PoolLayer& l) -> std::size_t {
                              if (l.kind == PoolKind::Average) return 1;
                              std::size_t r = 0;
                              for (const auto& reg : l.regions.regions) r = std::max(r, reg.size());
                              return r;
                          },
                          [](const auto&) -> std::size_t { return 1; },
                      },
                      layer);
}

bool is_nonlinear(const Layer& layer) { return piece_count(layer) > 1; }

const char* layer_kind_name(const Layer& layer) {
    return std::visit(overloaded{
                          [](const DenseLayer&) { return "dense"; },
                          [](const ConvLayer&) { return "conv"; },
                          [](const ActivationLayer&) { return "activation"; },
                          [](const PoolLayer&) { return "pool"; },
                          [](const BatchNormLayer&) { return "batchnorm"; },
                          [](const ResidualLayer&) { return "residual"; },
                      },
                      layer);
}

LayerOutput layer_forward(const Layer& layer, std::span<const double> x) {
    require_dim(x.size(), in_dim(layer), layer_kind_name(layer));
    return std::visit(
        overloaded{
            [&](const DenseLayer& l) {
                return LayerOutput{add(gemv(l.W, x), l.b), zero_code(l.W.rows()), false};
            },
            [&](const ConvLayer& l) {
                return LayerOutput{add(gemv(l.matrix, x), l.bias), zero_code(l.out_shape.dim()),
                                   false};
            },
            [&](const ActivationLayer& l) {
                LayerOutput out{DenseVector(l.dim), zero_code(l.dim), false};
                for (std::size_t k = 0; k < l.dim; ++k) {
                    const auto r = activation_piece(l.kind, l.leak, x[k], out.tie);
                    out.code.index[k] = r;
                    out.z[k] = activation_slope(l.kind, l.leak, r) * x[k];
                }
                return out;
            },
            [&](const PoolLayer& l) {
                const std::size_t K = l.regions.size();
                LayerOutput out{DenseVector(K), zero_code(K), false};
                for (std::size_t k = 0; k < K; ++k) {
                    const auto& reg = l.regions.regions[k];
                    if (l.kind == PoolKind::Average) {
                        const double w = 1.0 / static_cast<double>(reg.size());
                        double s = 0.0;
                        for (std::size_t i : reg) s += w * x[i];
                        out.z[k] = s;
                        continue;
                    }
                    double best = x[reg[0]];
                    std::uint32_t arg = 0;
                    std::size_t winners = 1;
                    for (std::size_t r = 1; r < reg.size(); ++r) {
                        if (x[reg[r]] > best) {
                            best = x[reg[r]];
                            arg = static_cast<std::uint32_t>(r);
                            winners = 1;
                        } else if (x[reg[r]] == best) {
                            ++winners;
                        }
                    }
                    out.tie = out.tie || winners > 1;
                    out.z[k] = best;
                    out.code.index[k] = arg;
                }
                return out;
            },
            [&](const BatchNormLayer& l) {
                const auto f = fold_batchnorm(l.state);
                LayerOutput out{DenseVector(l.state.dim()), zero_code(l.state.dim()), false};
                for (std::size_t i = 0; i < out.z.size(); ++i) out.z[i] = f.scale[i] * x[i] + f.shift[i];
                return out;
            },
            [&](const ResidualLayer& l) {
                const auto pre = add(gemv(l.C, x), l.b_C);
                const auto skip = add(gemv(l.C_skip, x), l.b_skip);
                LayerOutput out{DenseVector(pre.size()), zero_code(pre.size()), false};
                for (std::size_t k = 0; k < pre.size(); ++k) {
                    const auto r = activation_piece(l.kind, l.leak, pre[k], out.tie);
                    out.code.index[k] = r;
                    out.z[k] = activation_slope(l.kind, l.leak, r) * pre[k] + skip[k];
                }
                return out;
            },
        },
        layer);
}

MasoParams layer_maso(const Layer& layer) {
    return std::visit(
        overloaded{
            [](const DenseLayer& l) { return make_affine_maso(l.W, l.b); },
            [](const ConvLayer& l) { return make_affine_maso(l.matrix, l.bias); },
            [](const ActivationLayer& l) { return make_activation_maso(l.kind, l.dim, l.leak); },
            [](const PoolLayer& l) { return make_pool_maso(l.regions, l.kind); },
            [](const BatchNormLayer& l) {
                const auto f = fold_batchnorm(l.state);
                return make_affine_maso(DenseMatrix::diagonal(f.scale), f.shift);
            },
            [](const ResidualLayer& l) {
                return compose_skip(make_activation_maso(l.kind, l.C.rows(), l.leak), l.C, l.b_C,
                                    l.C_skip, l.b_skip);
            },
        },
        layer);
}

SelectedMap selected_map(const Layer& layer, const SelectionCode& code) {
    require_dim(code.size(), out_dim(layer), "selected_map code");
    SelectedMap m;
    m.in = in_dim(layer);
    m.out = out_dim(layer);
    std::visit(overloaded{
                   [&](const DenseLayer& l) {
                       m.linear = l.W;
                       m.offset = l.b;
                   },
                   [&](const ConvLayer& l) {
                       m.linear = l.matrix;
                       m.offset = l.bias;
                   },
                   [&](const ActivationLayer& l) {
                       m.gate.resize(l.dim);
                       for (std::size_t k = 0; k < l.dim; ++k)
                           m.gate[k] = activation_slope(l.kind, l.leak, code.index[k]);
                       m.offset.assign(l.dim, 0.0);
                   },
                   [&](const PoolLayer& l) {
                       const auto maso = make_pool_maso(l.regions, l.kind);
                       m.linear = maso_affine_for_code(maso, code).A;
                       m.offset.assign(m.out, 0.0);
                   },
                   [&](const BatchNormLayer& l) {
                       const auto f = fold_batchnorm(l.state);
                       m.gate = f.scale;
                       m.offset = f.shift;
                   },
                   [&](const ResidualLayer& l) {
                       m.linear = l.C;
                       m.skip = l.C_skip;
                       m.gate.resize(m.out);
                       m.offset.resize(m.out);
                       for (std::size_t k = 0; k < m.out; ++k) {
                           m.gate[k] = activation_slope(l.kind, l.leak, code.index[k]);
                           m.offset[k] = m.gate[k] * l.b_C[k] + l.b_skip[k];
                       }
                   },
               },
               layer);
    return m;
}

DenseMatrix to_dense(const SelectedMap& map) {
    DenseMatrix d = map.linear.empty() ? DenseMatrix::identity(map.out) : map.linear;
    if (!map.gate.empty()) d = scale_rows(map.gate, d);
    if (!map.skip.empty()) d = add(d, map.skip);
    return d;
}

DenseVector apply_map(const SelectedMap& map, std::span<const double> x) {
    require_dim(x.size(), map.in, "SelectedMap apply");
    DenseVector y = map.linear.empty() ? DenseVector(x.begin(), x.end()) : gemv(map.linear, x);
    if (!map.gate.empty())
        for (std::size_t i = 0; i < y.size(); ++i) y[i] *= map.gate[i];
    if (!map.skip.empty()) y = add(y, gemv(map.skip, x));
    return add(y, map.offset);
}

DenseMatrix left_multiply(const DenseMatrix& G, const SelectedMap& map) {
    require_dim(G.cols(), map.out, "left_multiply");
    const DenseMatrix gated = map.gate.empty() ? G : scale_cols(G, map.gate);
    DenseMatrix r = map.linear.empty() ? gated : matmul(gated, map.linear);
    if (!map.skip.empty()) r = add(r, matmul(G, map.skip));
    return r;
}

DenseMatrix right_multiply(const SelectedMap& map, const DenseMatrix& P) {
    require_dim(P.rows(), map.in, "right_multiply");
    DenseMatrix r = map.linear.empty() ? P : matmul(map.linear, P);
    if (!map.gate.empty()) r = scale_rows(map.gate, r);
    if (!map.skip.empty()) r = add(r, matmul(map.skip, P));
    return r;
}

DenseVector backprop_input(const Layer& layer, const SelectionCode& code,
                           std::span<const double> upstream) {
    require_dim(upstream.size(), out_dim(layer), "backprop_input");
    return std::visit(
        overloaded{
            [&](const DenseLayer& l) { return gemv_transposed(l.W, upstream); },
            [&](const ConvLayer& l) { return gemv_transposed(l.matrix, upstream); },
            [&](const ActivationLayer& l) {
                DenseVector g(l.dim);
                for (std::size_t k = 0; k < l.dim; ++k)
                    g[k] = upstream[k] * activation_slope(l.kind, l.leak, code.index[k]);
                return g;
            },
            [&](const PoolLayer& l) {
                DenseVector g(l.in_shape.dim(), 0.0);
                for (std::size_t k = 0; k < l.regions.size(); ++k) {
                    const auto& reg = l.regions.regions[k];
                    if (l.kind == PoolKind::Average) {
                        const double w = 1.0 / static_cast<double>(reg.size());
                        for (std::size_t i : reg) g[i] += upstream[k] * w;
                    } else {
                        const std::size_t r = code.index[k];
                        g[r < reg.size() ? reg[r] : reg[0]] += upstream[k] * 1.0;
                    }
                }
                return g;
            },
            [&](const BatchNormLayer& l) {
                const auto f = fold_batchnorm(l.state);
                DenseVector g(upstream.size());
                for (std::size_t i = 0; i < g.size(); ++i) g[i] = upstream[i] * f.scale[i];
                return g;
            },
            [&](const ResidualLayer& l) {
                DenseVector gated(upstream.size());
                for (std::size_t k = 0; k < gated.size(); ++k)
                    gated[k] = upstream[k] * activation_slope(l.kind, l.leak, code.index[k]);
                return add(gemv_transposed(l.C, gated), gemv_transposed(l.C_skip, upstream));
            },
        },
        layer);
}

}  // namespace masolab
