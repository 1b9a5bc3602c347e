#include "masolab/network.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>

#include "masolab/errors.hpp"
#include "masolab/hash.hpp"

namespace masolab {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

std::size_t level_end(const Network& net, std::size_t level) {
    const auto nl = nonlinear_layers(net);
    if (level == 0 || level > nl.size()) {
        throw DomainError("level " + std::to_string(level) + " out of range 1.." +
                          std::to_string(nl.size()));
    }
    return nl[level - 1];
}

std::uint64_t saturating_mul(std::uint64_t a, std::uint64_t b) {
    if (a != 0 && b > std::numeric_limits<std::uint64_t>::max() / a)
        return std::numeric_limits<std::uint64_t>::max();
    return a * b;
}

}  // namespace

std::uint64_t fingerprint(const Network& net) {
    Fnv1a64 h;
    h.u64(net.input_shape.channels);
    h.u64(net.input_shape.height);
    h.u64(net.input_shape.width);
    for (const auto& layer : net.layers) {
        h.bytes(layer_kind_name(layer));
        h.u64(in_dim(layer));
        h.u64(out_dim(layer));
        std::visit(overloaded{
                       [&](const DenseLayer& l) {
                           h.f64(l.W.data());
                           h.f64(l.b);
                       },
                       [&](const ConvLayer& l) {
                           h.f64(l.matrix.data());
                           h.f64(l.bias);
                       },
                       [&](const ActivationLayer& l) {
                           h.u64(static_cast<std::uint64_t>(l.kind));
                           h.f64(l.leak);
                       },
                       [&](const PoolLayer& l) {
                           h.u64(static_cast<std::uint64_t>(l.kind));
                           for (const auto& r : l.regions.regions) {
                               h.u64(r.size());
                               for (auto i : r) h.u64(i);
                           }
                       },
                       [&](const BatchNormLayer& l) {
                           h.f64(l.state.gamma);
                           h.f64(l.state.zeta);
                           h.f64(l.state.running_mean);
                           h.f64(l.state.running_var);
                           h.f64(l.state.eps);
                       },
                       [&](const ResidualLayer& l) {
                           h.u64(static_cast<std::uint64_t>(l.kind));
                           h.f64(l.leak);
                           h.f64(l.C.data());
                           h.f64(l.b_C);
                           h.f64(l.C_skip.data());
                           h.f64(l.b_skip);
                       },
                   },
                   layer);
    }
    h.u64(net.W_final.rows());
    h.f64(net.W_final.data());
    h.f64(net.b_final);
    return h.value();
}

std::size_t Network::feature_dim() const {
    return layers.empty() ? input_dim() : out_dim(layers.back());
}

void validate(const Network& net) {
    std::size_t d = net.input_dim();
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        if (in_dim(net.layers[i]) != d) {
            throw DimensionError("layer " + std::to_string(i) + " (" +
                                 layer_kind_name(net.layers[i]) + ") expects input dimension " +
                                 std::to_string(in_dim(net.layers[i])) + ", chain provides " +
                                 std::to_string(d));
        }
        d = out_dim(net.layers[i]);
    }
    if (net.W_final.cols() != d)
        throw DimensionError("classifier expects " + std::to_string(net.W_final.cols()) +
                             " features, chain provides " + std::to_string(d));
    if (net.b_final.size() != net.W_final.rows())
        throw DimensionError("classifier bias length does not match class count");
}

std::vector<std::size_t> nonlinear_layers(const Network& net) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < net.layers.size(); ++i)
        if (is_nonlinear(net.layers[i])) idx.push_back(i);
    return idx;
}

std::size_t level_count(const Network& net) { return nonlinear_layers(net).size(); }

MasoParams level_maso(const Network& net, std::size_t level) {
    const auto nl = nonlinear_layers(net);
    const std::size_t end = level_end(net, level);
    const std::size_t begin = level == 1 ? 0 : nl[level - 2] + 1;
    const MasoParams top = layer_maso(net.layers[end]);
    if (begin == end) return top;
    // Collapse the affine prefix of this level into one (W, b).
    const std::size_t d = in_dim(net.layers[begin]);
    DenseMatrix W = DenseMatrix::identity(d);
    DenseVector b(d, 0.0);
    for (std::size_t i = begin; i < end; ++i) {
        const auto& layer = net.layers[i];
        const auto map = selected_map(layer, {std::vector<std::uint32_t>(out_dim(layer), 0)});
        W = right_multiply(map, W);
        b = apply_map(map, b);
    }
    return compose_affine_into_maso(top, W, b);
}

AffineMap classifier_head(const Network& net) {
    const auto nl = nonlinear_layers(net);
    const std::size_t begin = nl.empty() ? 0 : nl.back() + 1;
    const std::size_t d = begin < net.layers.size() ? in_dim(net.layers[begin]) : net.feature_dim();
    DenseMatrix W = DenseMatrix::identity(d);
    DenseVector b(d, 0.0);
    for (std::size_t i = begin; i < net.layers.size(); ++i) {
        const auto& layer = net.layers[i];
        const auto map = selected_map(layer, {std::vector<std::uint32_t>(out_dim(layer), 0)});
        W = right_multiply(map, W);
        b = apply_map(map, b);
    }
    return {matmul(net.W_final, W), add(gemv(net.W_final, b), net.b_final)};
}

bool ForwardTrace::any_tie() const {
    return std::ranges::any_of(ties, [](bool t) { return t; });
}

ForwardTrace forward(const Network& net, std::span<const double> x) {
    if (x.size() != net.input_dim())
        throw DimensionError("network input dimension " + std::to_string(net.input_dim()) +
                             ", got " + std::to_string(x.size()));
    ForwardTrace t;
    t.z.reserve(net.layers.size() + 1);
    t.z.emplace_back(x.begin(), x.end());
    for (const auto& layer : net.layers) {
        auto out = layer_forward(layer, t.z.back());
        t.z.push_back(std::move(out.z));
        t.codes.push_back(std::move(out.code));
        t.ties.push_back(out.tie);
    }
    t.logits = add(gemv(net.W_final, t.z.back()), net.b_final);
    return t;
}

DenseVector predict_logits(const Network& net, std::span<const double> x) {
    return forward(net, x).logits;
}

std::size_t predict_class(const Network& net, std::span<const double> x) {
    const auto logits = predict_logits(net, x);
    return static_cast<std::size_t>(std::ranges::max_element(logits) - logits.begin());
}

AffineDecomposition decompose(const Network& net, const ForwardTrace& trace,
                              std::optional<std::size_t> upto) {
    if (trace.codes.size() != net.layers.size())
        throw DimensionError("trace does not belong to this network");
    std::size_t stop = net.layers.size();  // layers [0, stop) participate
    DenseMatrix G;
    if (upto) {
        if (*upto == 0)
            return {DenseMatrix::identity(net.input_dim()), DenseVector(net.input_dim(), 0.0)};
        stop = level_end(net, *upto) + 1;
        G = DenseMatrix::identity(out_dim(net.layers[stop - 1]));
    } else {
        G = net.W_final;
    }

    std::vector<SelectedMap> maps;
    maps.reserve(stop);
    for (std::size_t i = 0; i < stop; ++i) maps.push_back(selected_map(net.layers[i], trace.codes[i]));

    // Slopes accumulate from the output side so each row is a row-vector chain
    // (the same arithmetic as reverse-mode differentiation).
    for (std::size_t i = stop; i-- > 0;) G = left_multiply(G, maps[i]);

    DenseVector b(net.input_dim(), 0.0);
    for (const auto& m : maps) b = apply_map(m, b);
    if (!upto) b = add(gemv(net.W_final, b), net.b_final);
    return {std::move(G), std::move(b)};
}

DenseVector class_template(const Network& net, const ForwardTrace& trace, std::size_t c) {
    if (c >= net.classes()) throw DomainError("class index out of range");
    return decompose(net, trace).A.row_copy(c);
}

double template_bias(const Network& net, const ForwardTrace& trace, std::size_t c) {
    const auto t = class_template(net, trace, c);
    return trace.logits[c] - dot(t, trace.input());
}

DenseVector input_gradient(const Network& net, std::span<const double> x, std::size_t c) {
    if (c >= net.classes()) throw DomainError("class index out of range");
    const auto trace = forward(net, x);
    DenseVector g = net.W_final.row_copy(c);
    for (std::size_t i = net.layers.size(); i-- > 0;)
        g = backprop_input(net.layers[i], trace.codes[i], g);
    return g;
}

std::uint64_t enumeration_size(const Network& net) {
    const std::size_t n = level_count(net);
    std::uint64_t total = 1;
    for (std::size_t l = 1; l < n; ++l) {
        const auto q = level_maso(net, l);
        for (std::size_t k = 0; k < q.outputs(); ++k) total = saturating_mul(total, q.regions());
    }
    return total;
}

GlobalMatch brute_force_match(const Network& net, std::span<const double> x, std::uint64_t budget) {
    const std::size_t n = level_count(net);
    GlobalMatch out;
    if (n == 0) {
        const auto t = forward(net, x);
        out.features = t.z.back();
        out.logits = t.logits;
        out.configurations = 1;
        return out;
    }
    const std::uint64_t total = enumeration_size(net);
    if (total > budget) {
        throw BudgetError("joint piece enumeration needs " + std::to_string(total) +
                          " configurations, budget is " + std::to_string(budget));
    }
    std::vector<MasoParams> levels;
    for (std::size_t l = 1; l <= n; ++l) levels.push_back(level_maso(net, l));

    out.features.assign(levels.back().outputs(), -INFINITY);
    std::function<void(std::size_t, const DenseVector&)> descend = [&](std::size_t l,
                                                                       const DenseVector& z) {
        const auto& q = levels[l];
        if (l + 1 == levels.size()) {
            const auto y = maso_eval(q, z).y;
            for (std::size_t k = 0; k < y.size(); ++k) out.features[k] = std::max(out.features[k], y[k]);
            ++out.configurations;
            return;
        }
        // Every joint choice of one piece per unit at this level.
        std::vector<std::vector<double>> value(q.outputs(), std::vector<double>(q.regions()));
        for (std::size_t k = 0; k < q.outputs(); ++k)
            for (std::size_t r = 0; r < q.regions(); ++r) value[k][r] = q.piece(k, r, z);
        std::vector<std::size_t> choice(q.outputs(), 0);
        DenseVector next(q.outputs());
        for (;;) {
            for (std::size_t k = 0; k < q.outputs(); ++k) next[k] = value[k][choice[k]];
            descend(l + 1, next);
            std::size_t k = 0;
            while (k < choice.size() && ++choice[k] == q.regions()) choice[k++] = 0;
            if (k == choice.size()) break;
        }
    };
    descend(0, DenseVector(x.begin(), x.end()));

    const auto head = classifier_head(net);
    out.logits = add(gemv(head.A, out.features), head.b);
    return out;
}

EnsembleExpansion resnet_ensemble_terms(const Network& net, std::span<const double> x) {
    for (const auto& layer : net.layers)
        if (!std::holds_alternative<ResidualLayer>(layer))
            throw DomainError("ensemble expansion requires every layer to be a residual block");
    const std::size_t blocks = net.layers.size();
    if (blocks > 20) throw BudgetError("ensemble expansion limited to 20 residual blocks");

    const auto trace = forward(net, x);
    std::vector<DenseVector> gates;
    for (std::size_t i = 0; i < blocks; ++i) gates.push_back(selected_map(net.layers[i], trace.codes[i]).gate);

    EnsembleExpansion e;
    e.bias = decompose(net, trace).b;
    const std::uint64_t count = std::uint64_t{1} << blocks;
    for (std::uint64_t mask = 0; mask < count; ++mask) {
        DenseVector v(x.begin(), x.end());
        std::size_t depth = 0;
        for (std::size_t i = 0; i < blocks; ++i) {
            const auto& block = std::get<ResidualLayer>(net.layers[i]);
            if (mask >> i & 1U) {
                v = gemv(block.C, v);
                for (std::size_t k = 0; k < v.size(); ++k) v[k] *= gates[i][k];
                ++depth;
            } else {
                v = gemv(block.C_skip, v);
            }
        }
        e.paths.push_back({mask, depth, gemv(net.W_final, v)});
    }
    return e;
}

std::vector<double> depth_matrix_norm(const Network& net, std::span<const double> x) {
    const auto trace = forward(net, x);
    DenseMatrix P = DenseMatrix::identity(net.input_dim());
    std::vector<double> norms;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        P = right_multiply(selected_map(net.layers[i], trace.codes[i]), P);
        if (is_nonlinear(net.layers[i])) norms.push_back(frobenius_norm(P));
    }
    return norms;
}

ConvexityReport check_output_convexity(const Network& net, std::size_t n_pairs, std::uint64_t seed,
                                       double radius, double tolerance) {
    CounterRng rng(seed);
    ConvexityReport rep;
    DenseVector x1(net.input_dim()), x2(net.input_dim()), mid(net.input_dim());
    for (std::size_t p = 0; p < n_pairs; ++p) {
        for (std::size_t d = 0; d < x1.size(); ++d) {
            x1[d] = rng.uniform(-radius, radius);
            x2[d] = rng.uniform(-radius, radius);
            mid[d] = 0.5 * (x1[d] + x2[d]);
        }
        const auto f1 = predict_logits(net, x1);
        const auto f2 = predict_logits(net, x2);
        const auto fm = predict_logits(net, mid);
        ++rep.pairs;
        for (std::size_t c = 0; c < fm.size(); ++c) {
            ++rep.checks;
            const double excess = fm[c] - 0.5 * (f1[c] + f2[c]);
            rep.worst_excess = std::max(rep.worst_excess, excess);
            if (excess > tolerance) ++rep.violations;
        }
    }
    return rep;
}

bool has_convex_outputs(const Network& net) {
    const std::size_t n = level_count(net);
    for (std::size_t l = 2; l <= n; ++l)
        if (!is_nondecreasing(level_maso(net, l))) return false;
    if (n == 0) return true;
    const auto head = classifier_head(net);
    return std::ranges::all_of(head.A.data(), [](double a) { return a >= 0.0; });
}

Network make_network(Shape3 input_shape, std::span<const LayerPlan> plan, std::size_t classes,
                     std::uint64_t seed, InitOptions init) {
    Network net;
    net.input_shape = input_shape;
    const CounterRng root(seed);
    Shape3 cur = input_shape;
    bool seen_parametric = false;

    auto fill = [&](std::span<double> v, CounterRng& rng, double stddev) {
        const bool positive = init.nonnegative && seen_parametric;
        for (double& a : v) {
            a = stddev > 0.0 ? rng.normal(0.0, stddev) : 0.0;
            if (positive) a = std::abs(a);
        }
    };

    for (std::size_t i = 0; i < plan.size(); ++i) {
        CounterRng rng = root.split(i);
        std::visit(
            overloaded{
                [&](const DensePlan& p) {
                    const std::size_t in = cur.dim();
                    DenseLayer l{DenseMatrix(p.units, in), DenseVector(p.units)};
                    fill(l.W.data(), rng, init.weight_scale * std::sqrt(2.0 / static_cast<double>(in)));
                    fill(l.b, rng, init.bias_scale);
                    net.layers.emplace_back(std::move(l));
                    cur = {p.units, 1, 1};
                    seen_parametric = true;
                },
                [&](const ConvPlan& p) {
                    FilterBank f(p.out_channels, cur.channels, p.kernel, p.kernel);
                    fill(f.values, rng,
                         init.weight_scale *
                             std::sqrt(2.0 / static_cast<double>(cur.channels * p.kernel * p.kernel)));
                    DenseVector xi(p.out_channels);
                    fill(xi, rng, init.bias_scale);
                    auto l = make_conv_layer(std::move(f), std::move(xi), cur, p.padding, p.stride);
                    cur = l.out_shape;
                    net.layers.emplace_back(std::move(l));
                    seen_parametric = true;
                },
                [&](const ActivationPlan& p) {
                    net.layers.emplace_back(ActivationLayer{p.kind, p.leak, cur.dim()});
                },
                [&](const PoolPlan& p) {
                    auto l = make_pool_layer(p.kind, p.axis, cur, p.window, p.stride);
                    cur = l.regions.out_shape;
                    net.layers.emplace_back(std::move(l));
                },
                [&](const BatchNormPlan& p) {
                    net.layers.emplace_back(BatchNormLayer{make_batchnorm_state(cur.dim(), p.eps, p.momentum)});
                },
                [&](const ResidualPlan& p) {
                    const std::size_t d = cur.dim();
                    ResidualLayer l;
                    l.kind = p.kind;
                    l.leak = p.leak;
                    l.C = DenseMatrix(d, d);
                    l.b_C.assign(d, 0.0);
                    l.b_skip.assign(d, 0.0);
                    fill(l.C.data(), rng, init.weight_scale * std::sqrt(2.0 / static_cast<double>(d)));
                    fill(l.b_C, rng, init.bias_scale);
                    fill(l.b_skip, rng, init.bias_scale);
                    if (p.skip == SkipKind::Identity) {
                        l.C_skip = DenseMatrix::identity(d);
                    } else {
                        l.C_skip = DenseMatrix(d, d);
                        fill(l.C_skip.data(), rng, init.weight_scale / std::sqrt(static_cast<double>(d)));
                    }
                    net.layers.emplace_back(std::move(l));
                    seen_parametric = true;
                },
            },
            plan[i]);
    }
    CounterRng rng = root.split(plan.size());
    const std::size_t d = cur.dim();
    net.W_final = DenseMatrix(classes, d);
    net.b_final.assign(classes, 0.0);
    fill(net.W_final.data(), rng, init.weight_scale * std::sqrt(2.0 / static_cast<double>(d)));
    fill(net.b_final, rng, init.bias_scale);
    validate(net);
    return net;
}

}  // namespace masolab
