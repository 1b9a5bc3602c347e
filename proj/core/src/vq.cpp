#include "masolab/vq.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "masolab/errors.hpp"
#include "masolab/rng.hpp"

namespace masolab {

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

}  // namespace

double vq_distance(const RegionSignature& a, const RegionSignature& b, std::size_t level) {
    const auto& ca = a.slice(level);
    const auto& cb = b.slice(level);
    if (ca.size() != cb.size())
        throw DimensionError("signatures disagree on the unit count of level " +
                             std::to_string(level));
    if (ca.size() == 0) return 0.0;
    std::size_t diff = 0;
    for (std::size_t k = 0; k < ca.size(); ++k) diff += ca.index[k] != cb.index[k];
    return static_cast<double>(diff) / static_cast<double>(ca.size());
}

double vq_distance_mean(const RegionSignature& a, const RegionSignature& b) {
    const std::size_t lo = std::max(a.first_level(), b.first_level());
    const std::size_t hi = std::min(a.first_level() + a.levels(), b.first_level() + b.levels());
    if (hi <= lo) throw DomainError("signatures share no level");
    double s = 0.0;
    for (std::size_t l = lo; l < hi; ++l) s += vq_distance(a, b, l);
    return s / static_cast<double>(hi - lo);
}

VqCorpus build_corpus(const Network& net, std::span<const DenseVector> inputs,
                      std::span<const std::size_t> labels) {
    if (!labels.empty() && labels.size() != inputs.size())
        throw DimensionError("label count does not match input count");
    VqCorpus corpus;
    corpus.fingerprint = fingerprint(net);
    const std::size_t L = level_count(net);
    corpus.items.reserve(inputs.size());
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        VqItem item;
        item.id = i;
        item.x = inputs[i];
        if (!labels.empty()) item.label = labels[i];
        item.signature = signature_at(net, inputs[i], L);
        corpus.items.push_back(std::move(item));
    }
    return corpus;
}

VqQuery make_query(const Network& net, std::span<const double> x) {
    return {fingerprint(net), {x.begin(), x.end()}, signature_at(net, x, level_count(net))};
}

std::vector<Neighbor> nearest_neighbors(const VqCorpus& corpus, const VqQuery& query,
                                        std::size_t level, std::size_t k) {
    if (query.fingerprint != corpus.fingerprint)
        throw DomainError("query and corpus were computed with different networks");
    std::vector<Neighbor> all;
    all.reserve(corpus.items.size());
    for (const auto& item : corpus.items) {
        const double d = level == 0 ? vq_distance_mean(item.signature, query.signature)
                                    : vq_distance(item.signature, query.signature, level);
        all.push_back({item.id, d, std::sqrt(squared_distance(item.x, query.x))});
    }
    const auto before = [](const Neighbor& a, const Neighbor& b) {
        if (a.distance != b.distance) return a.distance < b.distance;
        if (a.euclidean != b.euclidean) return a.euclidean < b.euclidean;
        return a.id < b.id;
    };
    const std::size_t keep = std::min(k, all.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(), before);
    all.resize(keep);
    return all;
}

MasoParams set_kmeans_bias(const MasoParams& p) {
    auto slopes = p.slopes();
    MasoParams q(p.outputs(), p.regions(), p.inputs(), {slopes.begin(), slopes.end()},
                 std::vector<double>(p.outputs() * p.regions(), 0.0));
    for (std::size_t k = 0; k < p.outputs(); ++k) {
        for (std::size_t r = 0; r < p.regions(); ++r) q.offset(k, r) = -0.5 * norm2_squared(p.slope(k, r));
    }
    return q;
}

MasoParams kmeans_maso(const Centroids& c) {
    if (c.size() == 0) throw DomainError("need at least one centroid");
    MasoParams p(1, c.size(), c.dim());
    for (std::size_t r = 0; r < c.size(); ++r) {
        if (c.mu[r].size() != c.dim()) throw DimensionError("ragged centroids");
        std::ranges::copy(c.mu[r], p.slope(0, r).begin());
    }
    return set_kmeans_bias(p);
}

Centroids centroids_of_unit(const MasoParams& p, std::size_t k) {
    if (k >= p.outputs()) throw DomainError("unit index out of range");
    Centroids c;
    for (std::size_t r = 0; r < p.regions(); ++r) {
        const auto s = p.slope(k, r);
        c.mu.emplace_back(s.begin(), s.end());
    }
    return c;
}

std::size_t kmeans_assign(const Centroids& c, std::span<const double> x) {
    if (c.size() == 0) throw DomainError("need at least one centroid");
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < c.size(); ++r) {
        if (c.mu[r].size() != x.size()) throw DimensionError("centroid and point dimensions differ");
        const double d = squared_distance(c.mu[r], x);
        if (d < best_d) {
            best_d = d;
            best = r;
        }
    }
    return best;
}

VoronoiReport check_voronoi_equiv(const MasoParams& p, std::span<const DenseVector> points,
                                  double tie_tolerance) {
    VoronoiReport rep;
    rep.samples = points.size();
    std::vector<Centroids> units;
    for (std::size_t k = 0; k < p.outputs(); ++k) units.push_back(centroids_of_unit(p, k));
    std::vector<double> dist(p.regions());
    for (const auto& x : points) {
        const auto out = maso_eval(p, x);
        for (std::size_t k = 0; k < p.outputs(); ++k) {
            for (std::size_t r = 0; r < p.regions(); ++r) dist[r] = squared_distance(units[k].mu[r], x);
            if (p.regions() > 1) {
                std::vector<double> sorted = dist;
                std::ranges::nth_element(sorted, sorted.begin() + 1);
                const double scale = std::max(1.0, sorted[1]);
                if (sorted[1] - sorted[0] <= tie_tolerance * scale) {
                    ++rep.near_ties;
                    continue;
                }
            }
            ++rep.checked;
            rep.mismatches += out.code.index[k] != kmeans_assign(units[k], x);
        }
    }
    return rep;
}

VoronoiReport check_voronoi_equiv(const MasoParams& p, std::size_t samples, std::uint64_t seed,
                                  double lo, double hi, double tie_tolerance) {
    if (!(hi > lo)) throw DomainError("sampling box must be nonempty");
    CounterRng rng(seed);
    std::vector<DenseVector> points(samples, DenseVector(p.inputs()));
    for (auto& x : points) {
        for (double& v : x) v = rng.uniform(lo, hi);
    }
    return check_voronoi_equiv(p, points, tie_tolerance);
}

double kmeans_objective(const Centroids& c, std::span<const DenseVector> data) {
    double s = 0.0;
    for (const auto& x : data) s += squared_distance(c.mu[kmeans_assign(c, x)], x);
    return s;
}

LloydResult lloyd(std::span<const DenseVector> data, std::size_t R, std::size_t iters,
                  std::uint64_t seed) {
    if (R == 0) throw DomainError("need at least one centroid");
    if (data.size() < R) throw DomainError("need at least R data points");
    const std::size_t N = data.size();
    const std::size_t D = data.front().size();
    for (const auto& x : data) {
        if (x.size() != D) throw DimensionError("ragged data");
    }

    LloydResult res;
    std::vector<std::size_t> order(N);
    std::iota(order.begin(), order.end(), std::size_t{0});
    CounterRng rng(seed);
    for (std::size_t i = 0; i < R; ++i) std::swap(order[i], order[i + rng.below(N - i)]);
    for (std::size_t i = 0; i < R; ++i) res.centroids.mu.push_back(data[order[i]]);

    res.assignment.assign(N, 0);
    std::vector<double> dist(N);
    for (std::size_t it = 0; it < iters; ++it) {
        bool changed = it == 0;
        double obj = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
            const std::size_t a = kmeans_assign(res.centroids, data[n]);
            changed = changed || a != res.assignment[n];
            res.assignment[n] = a;
            dist[n] = squared_distance(res.centroids.mu[a], data[n]);
            obj += dist[n];
        }
        res.objective.push_back(obj);
        res.iterations = it + 1;
        if (!changed) {
            res.converged = true;
            break;
        }

        std::vector<DenseVector> sum(R, DenseVector(D, 0.0));
        std::vector<std::size_t> count(R, 0);
        for (std::size_t n = 0; n < N; ++n) {
            axpy(1.0, data[n], sum[res.assignment[n]]);
            ++count[res.assignment[n]];
        }
        std::vector<bool> taken(N, false);
        for (std::size_t r = 0; r < R; ++r) {
            if (count[r] > 0) {
                for (std::size_t d = 0; d < D; ++d)
                    res.centroids.mu[r][d] = sum[r][d] / static_cast<double>(count[r]);
                continue;
            }
            std::size_t far = 0;
            double far_d = -1.0;
            for (std::size_t n = 0; n < N; ++n) {
                if (!taken[n] && dist[n] > far_d) {
                    far_d = dist[n];
                    far = n;
                }
            }
            taken[far] = true;
            res.centroids.mu[r] = data[far];
        }
    }
    return res;
}

}  // namespace masolab
