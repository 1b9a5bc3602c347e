#include "masolab/analysis.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "internal.hpp"
#include "masolab/errors.hpp"
#include "masolab/rng.hpp"
#include "masolab/vq.hpp"

namespace masolab {

using detail::overloaded;
using detail::require_dim;

double layer_lipschitz(const MasoParams& p) {
    double s = 0.0;
    for (std::size_t k = 0; k < p.outputs(); ++k) {
        double m = 0.0;
        for (std::size_t r = 0; r < p.regions(); ++r) m = std::max(m, norm2_squared(p.slope(k, r)));
        s += m;
    }
    return s;
}

namespace {

double operator_bound(const Layer& layer, double maso_bound) {
    return std::visit(
        overloaded{
            [](const DenseLayer& l) { return norm2_squared(l.W.data()); },
            [](const ConvLayer& l) { return norm2_squared(l.matrix.data()); },
            [](const ActivationLayer& l) {
                const double d = static_cast<double>(l.dim);
                return d * d;
            },
            [&](const PoolLayer& l) {
                if (l.kind == PoolKind::Average) return maso_bound;
                const double d = static_cast<double>(l.regions.size());
                return d * d;
            },
            [&](const BatchNormLayer&) { return maso_bound; },
            [&](const ResidualLayer&) { return maso_bound; },
        },
        layer);
}

}  // namespace

LipschitzReport operator_lipschitz_table(const Network& net) {
    LipschitzReport rep;
    rep.product = 1.0;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const auto& layer = net.layers[i];
        LipschitzEntry e;
        e.name = "layer" + std::to_string(i) + ":" + layer_kind_name(layer);
        e.maso_bound = layer_lipschitz(layer_maso(layer));
        e.operator_bound = operator_bound(layer, e.maso_bound);
        e.used = std::min(e.maso_bound, e.operator_bound);
        rep.product *= e.used;
        rep.entries.push_back(std::move(e));
    }
    LipschitzEntry cls;
    cls.name = "classifier";
    cls.maso_bound = norm2_squared(net.W_final.data());
    cls.operator_bound = cls.maso_bound;
    cls.used = cls.maso_bound;
    rep.product *= cls.used;
    rep.entries.push_back(std::move(cls));
    const double C = static_cast<double>(net.classes());
    rep.softmax = C >= 1.0 ? (C - 1.0) / (C * C) : 0.0;
    rep.product_with_softmax = rep.product * rep.softmax;
    return rep;
}

double network_lipschitz(const Network& net) { return operator_lipschitz_table(net).product; }

double empirical_lipschitz_ratio(const Network& net, std::size_t pairs, std::uint64_t seed,
                                 double radius) {
    CounterRng rng(seed);
    DenseVector a(net.input_dim());
    DenseVector b(net.input_dim());
    double worst = 0.0;
    for (std::size_t n = 0; n < pairs; ++n) {
        for (double& v : a) v = rng.uniform(-radius, radius);
        for (double& v : b) v = rng.uniform(-radius, radius);
        const double den = norm2_squared(subtract(a, b));
        if (den == 0.0) continue;
        const double num = norm2_squared(subtract(predict_logits(net, a), predict_logits(net, b)));
        worst = std::max(worst, num / den);
    }
    return worst;
}

double softmax_jacobian_sq_norm(std::span<const double> p) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        for (std::size_t j = 0; j < p.size(); ++j) {
            const double v = (i == j ? p[i] : 0.0) - p[i] * p[j];
            s += v * v;
        }
    }
    return s;
}

namespace {

void lattice_points(std::size_t C, std::size_t n, const std::function<void(const DenseVector&)>& visit) {
    std::vector<std::size_t> parts(C, 0);
    DenseVector p(C);
    const auto rec = [&](auto&& self, std::size_t i, std::size_t left) -> void {
        if (i + 1 == C) {
            parts[i] = left;
            for (std::size_t k = 0; k < C; ++k)
                p[k] = static_cast<double>(parts[k]) / static_cast<double>(n);
            visit(p);
            return;
        }
        for (std::size_t v = 0; v <= left; ++v) {
            parts[i] = v;
            self(self, i + 1, left - v);
        }
    };
    rec(rec, 0, n);
}

// Hill climbing by moving probability mass between pairs of coordinates.
void refine_on_simplex(DenseVector& p, double& value) {
    const std::size_t C = p.size();
    for (double step = 0.05; step > 1e-13;) {
        bool improved = false;
        for (std::size_t i = 0; i < C; ++i) {
            for (std::size_t j = 0; j < C; ++j) {
                if (i == j) continue;
                const double t = std::min(step, p[j]);
                if (t <= 0.0) continue;
                p[i] += t;
                p[j] -= t;
                const double v = softmax_jacobian_sq_norm(p);
                if (v > value) {
                    value = v;
                    improved = true;
                } else {
                    p[i] -= t;
                    p[j] += t;
                }
            }
        }
        if (!improved) step *= 0.5;
    }
}

}  // namespace

SoftmaxLipschitzResult softmax_lipschitz_max(std::size_t C, std::uint64_t seed) {
    if (C < 2) throw DomainError("softmax Lipschitz constant needs C >= 2");
    SoftmaxLipschitzResult res;
    res.uniform_value = softmax_jacobian_sq_norm(DenseVector(C, 1.0 / static_cast<double>(C)));

    constexpr std::size_t keep = 8;
    std::vector<std::pair<double, DenseVector>> best;
    const auto consider = [&](const DenseVector& p) {
        const double v = softmax_jacobian_sq_norm(p);
        if (best.size() < keep || v > best.back().first) {
            best.emplace_back(v, p);
            std::ranges::sort(best, [](const auto& a, const auto& b) { return a.first > b.first; });
            if (best.size() > keep) best.pop_back();
        }
    };
    if (C <= 6) {
        const std::size_t n = C <= 4 ? 48 : 20;
        lattice_points(C, n, consider);
    } else {
        CounterRng rng(seed);
        DenseVector p(C);
        for (std::size_t s = 0; s < 50000; ++s) {
            const std::size_t support = 1 + rng.below(C);
            std::fill(p.begin(), p.end(), 0.0);
            double total = 0.0;
            for (std::size_t k = 0; k < support; ++k) {
                const double e = -std::log(1.0 - rng.uniform());
                p[rng.below(C)] += e;
                total += e;
            }
            for (double& v : p) v /= total;
            consider(p);
        }
        consider(DenseVector(C, 1.0 / static_cast<double>(C)));
    }
    res.value = -1.0;
    for (auto& [v, p] : best) {
        double val = v;
        refine_on_simplex(p, val);
        if (val > res.value) {
            res.value = val;
            res.maximizer = p;
        }
    }
    return res;
}

DenseMatrix collinear_closed_form(std::span<const double> x, std::size_t y, std::size_t C,
                                  double alpha) {
    if (C < 2) throw DomainError("collinear templates need C >= 2");
    if (y >= C) throw DomainError("class index out of range");
    if (!(alpha > 0.0)) throw DomainError("alpha must be > 0");
    const double cc = static_cast<double>(C);
    const double pos = std::sqrt((cc - 1.0) * alpha / cc);
    const double neg = -std::sqrt(alpha / (cc * (cc - 1.0)));
    DenseMatrix A(C, x.size());
    for (std::size_t c = 0; c < C; ++c) {
        const double s = c == y ? pos : neg;
        for (std::size_t d = 0; d < x.size(); ++d) A(c, d) = s * x[d];
    }
    return A;
}

KktResidual collinear_kkt_residual(const DenseMatrix& A, std::span<const double> x, std::size_t y,
                                   double alpha) {
    require_dim(A.cols(), x.size(), "collinear_kkt_residual");
    const auto z = gemv(A, x);
    const auto p = softmax(z);
    KktResidual r;
    double num = 0.0;
    for (std::size_t c = 0; c < A.rows(); ++c) num += p[c] * z[c];
    r.lambda = (z[y] - num) / (2.0 * alpha);
    for (std::size_t c = 0; c < A.rows(); ++c) {
        const double g = p[c] - (c == y ? 1.0 : 0.0);
        for (std::size_t d = 0; d < x.size(); ++d)
            r.gradient = std::max(r.gradient, std::abs(g * x[d] + 2.0 * r.lambda * A(c, d)));
    }
    r.constraint = std::abs(norm2_squared(A.data()) - alpha);
    return r;
}

CollinearResult collinear_optimize(std::span<const double> x, std::size_t y, std::size_t C,
                                   double alpha, double tol, std::size_t max_iters,
                                   std::uint64_t seed) {
    if (std::abs(norm2(x) - 1.0) > 1e-9) throw DomainError("x must have unit norm");
    CollinearResult res;
    res.predicted = collinear_closed_form(x, y, C, alpha);
    res.kkt_closed_form = collinear_kkt_residual(res.predicted, x, y, alpha);

    const std::size_t D = x.size();
    DenseMatrix A(C, D);
    CounterRng rng(seed);
    for (double& v : A.data()) v = rng.normal();
    const auto project = [&](DenseMatrix& M) {
        const double s = std::sqrt(alpha / norm2_squared(M.data()));
        for (double& v : M.data()) v *= s;
    };
    project(A);

    constexpr double step = 1.0;
    DenseMatrix G(C, D);
    for (std::size_t it = 0; it < max_iters; ++it) {
        const auto p = softmax(gemv(A, x));
        for (std::size_t c = 0; c < C; ++c) {
            const double g = p[c] - (c == y ? 1.0 : 0.0);
            for (std::size_t d = 0; d < D; ++d) G(c, d) = g * x[d];
        }
        const double radial = dot(G.data(), A.data()) / alpha;
        double tangential = 0.0;
        for (std::size_t i = 0; i < G.data().size(); ++i)
            tangential = std::max(tangential, std::abs(G.data()[i] - radial * A.data()[i]));
        res.iterations = it;
        if (tangential <= tol) {
            res.optimized = A;
            res.kkt_optimized = collinear_kkt_residual(A, x, y, alpha);
            res.max_deviation = max_abs_diff(A.data(), res.predicted.data());
            return res;
        }
        axpy(-step, G.data(), A.data());
        project(A);
    }
    throw ConvergenceError("collinear optimization did not reach tolerance " + std::to_string(tol) +
                           " within " + std::to_string(max_iters) + " iterations");
}

std::size_t Histogram::total() const {
    return std::accumulate(counts.begin(), counts.end(), std::size_t{0});
}

Histogram make_histogram(std::span<const double> values, double lo, double hi, std::size_t bins) {
    if (bins == 0) throw DomainError("histogram needs at least one bin");
    if (!(hi > lo)) hi = lo + 1.0;
    Histogram h{lo, hi, std::vector<std::size_t>(bins, 0)};
    const double w = h.bin_width();
    for (double v : values) {
        if (!std::isfinite(v)) continue;
        const double pos = std::floor((v - lo) / w);
        const auto b = static_cast<std::size_t>(std::clamp(pos, 0.0, static_cast<double>(bins - 1)));
        ++h.counts[b];
    }
    return h;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    const double na = norm2(a);
    const double nb = norm2(b);
    if (na == 0.0 || nb == 0.0) return 0.0;
    return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

std::vector<double> pairwise_row_cosines(const DenseMatrix& M) {
    std::vector<double> out;
    for (std::size_t a = 0; a < M.rows(); ++a) {
        for (std::size_t b = a + 1; b < M.rows(); ++b) out.push_back(cosine_similarity(M.row(a), M.row(b)));
    }
    return out;
}

namespace {

double mean_of(std::span<const double> v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::size_t argmax(std::span<const double> v) {
    return static_cast<std::size_t>(std::distance(v.begin(), std::ranges::max_element(v)));
}

}  // namespace

TemplateStats template_stats(const Network& net, const Dataset& data, std::size_t bins) {
    TemplateStats st;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& x = data.inputs[i];
        const auto dec = decompose(net, forward(net, x));
        const std::size_t y = data.labels.at(i);
        for (std::size_t c = 0; c < dec.A.rows(); ++c) {
            const double v = dot(dec.A.row(c), x);
            (c == y ? st.correct : st.incorrect).push_back(v);
        }
        const auto cos = pairwise_row_cosines(dec.A);
        st.cosines.insert(st.cosines.end(), cos.begin(), cos.end());
    }
    double lo = 0.0;
    double hi = 1.0;
    if (!st.correct.empty() || !st.incorrect.empty()) {
        lo = std::numeric_limits<double>::infinity();
        hi = -lo;
        for (double v : st.correct) lo = std::min(lo, v), hi = std::max(hi, v);
        for (double v : st.incorrect) lo = std::min(lo, v), hi = std::max(hi, v);
    }
    st.correct_hist = make_histogram(st.correct, lo, hi, bins);
    st.incorrect_hist = make_histogram(st.incorrect, lo, hi, bins);
    st.cosine_hist = make_histogram(st.cosines, -1.0, 1.0, bins);
    st.correct_mean = mean_of(st.correct);
    st.incorrect_mean = mean_of(st.incorrect);
    st.mean_cosine = mean_of(st.cosines);
    return st;
}

BiasAblation bias_ablation_eval(const Network& net, const Dataset& data) {
    BiasAblation out;
    if (data.empty()) return out;
    std::size_t full = 0;
    std::size_t templ = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& x = data.inputs[i];
        const auto trace = forward(net, x);
        const auto dec = decompose(net, trace);
        const std::size_t y = data.labels.at(i);
        full += argmax(trace.logits) == y;
        templ += argmax(gemv(dec.A, x)) == y;
    }
    const double n = static_cast<double>(data.size());
    out.full_accuracy = static_cast<double>(full) / n;
    out.template_only_accuracy = static_cast<double>(templ) / n;
    return out;
}

Dataset sample_target(const TargetMap& target, std::size_t input_dim, std::size_t n, double lo,
                      double hi, std::uint64_t seed) {
    Dataset d;
    CounterRng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        DenseVector x(input_dim);
        for (double& v : x) v = rng.uniform(lo, hi);
        d.targets.push_back(target(x));
        d.inputs.push_back(std::move(x));
    }
    d.classes = d.targets.empty() ? 0 : d.targets.front().size();
    return d;
}

std::vector<WidthError> universality_experiment(const TargetMap& target,
                                                const UniversalityConfig& cfg) {
    if (!std::ranges::is_sorted(cfg.widths)) throw DomainError("widths must be ascending");
    const CounterRng root(cfg.seed);
    const Dataset train_set =
        sample_target(target, cfg.input_dim, cfg.train_samples, cfg.lo, cfg.hi, root.split(0).at(0));
    const Dataset test_set =
        sample_target(target, cfg.input_dim, cfg.test_samples, cfg.lo, cfg.hi, root.split(1).at(0));
    if (train_set.classes != cfg.output_dim) throw DimensionError("target output dimension mismatch");

    TrainConfig tc = cfg.train;
    tc.loss = LossKind::MeanSquared;
    std::vector<WidthError> out;
    for (std::size_t w = 0; w < cfg.widths.size(); ++w) {
        const std::array<LayerPlan, 2> plan{DensePlan{cfg.widths[w]}, ActivationPlan{}};
        InitOptions init;
        init.bias_scale = 0.5;
        Network net = make_network({cfg.input_dim, 1, 1}, plan, cfg.output_dim,
                                   root.split(2 + w).at(0), init);
        tc.seed = root.split(100 + w).at(0);
        WidthError e;
        e.width = cfg.widths[w];
        train(net, train_set, tc);
        e.train_mse = evaluate(net, train_set, LossKind::MeanSquared).loss;
        e.test_mse = evaluate(net, test_set, LossKind::MeanSquared).loss;
        e.diverged = !std::isfinite(e.train_mse) || !std::isfinite(e.test_mse);
        out.push_back(e);
    }
    return out;
}

MaxAffineFit fit_max_affine(std::span<const DenseVector> points, std::span<const double> values,
                            std::size_t R, std::size_t iters, std::uint64_t seed) {
    require_dim(values.size(), points.size(), "fit_max_affine values");
    if (points.size() < R) throw DomainError("need at least R points");
    const std::size_t N = points.size();
    const std::size_t D = points.front().size();
    MaxAffineFit fit;
    fit.spline = MasoParams(1, R, D);

    std::vector<std::size_t> assign = lloyd(points, R, 50, seed).assignment;
    const auto refit = [&] {
        for (std::size_t r = 0; r < R; ++r) {
            std::vector<std::size_t> idx;
            for (std::size_t n = 0; n < N; ++n) {
                if (assign[n] == r) idx.push_back(n);
            }
            if (idx.size() < D + 1) continue;
            Eigen::MatrixXd X(static_cast<Eigen::Index>(idx.size()), static_cast<Eigen::Index>(D + 1));
            Eigen::VectorXd t(static_cast<Eigen::Index>(idx.size()));
            for (std::size_t i = 0; i < idx.size(); ++i) {
                const auto row = static_cast<Eigen::Index>(i);
                for (std::size_t d = 0; d < D; ++d) X(row, static_cast<Eigen::Index>(d)) = points[idx[i]][d];
                X(row, static_cast<Eigen::Index>(D)) = 1.0;
                t(row) = values[idx[i]];
            }
            const Eigen::VectorXd w = X.completeOrthogonalDecomposition().solve(t);
            for (std::size_t d = 0; d < D; ++d) fit.spline.slope(0, r)[d] = w(static_cast<Eigen::Index>(d));
            fit.spline.offset(0, r) = w(static_cast<Eigen::Index>(D));
        }
    };
    refit();
    for (std::size_t it = 0; it < iters; ++it) {
        fit.iterations = it + 1;
        bool changed = false;
        for (std::size_t n = 0; n < N; ++n) {
            const std::size_t r = maso_eval(fit.spline, points[n]).code.index[0];
            changed = changed || r != assign[n];
            assign[n] = r;
        }
        if (!changed) break;
        refit();
    }
    double mse = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
        const double e = maso_eval(fit.spline, points[n]).y[0] - values[n];
        mse += e * e;
    }
    fit.mse = mse / static_cast<double>(N);
    return fit;
}

}  // namespace masolab
