#include <algorithm>
#include <numeric>
#include <tuple>

#include "doctest.h"
#include "fixtures.hpp"
#include "masolab/errors.hpp"
#include "masolab/vq.hpp"

using namespace masolab;

namespace {

RegionSignature sig(std::vector<std::vector<std::uint32_t>> levels) {
    std::vector<SelectionCode> codes;
    for (auto& l : levels) codes.push_back(SelectionCode{std::move(l)});
    return RegionSignature(std::move(codes), 1);
}

/// Hamming fraction computed straight from the codes.
double hamming(const SelectionCode& a, const SelectionCode& b) {
    std::size_t d = 0;
    for (std::size_t i = 0; i < a.size(); ++i) d += a.index[i] != b.index[i];
    return static_cast<double>(d) / static_cast<double>(a.size());
}

double sq_dist(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

}  // namespace

TEST_CASE("vq distance examples") {
    const auto a = sig({{0, 1, 1, 0}, {1, 0}});
    const auto b = sig({{0, 1, 0, 1}, {1, 0}});
    CHECK(vq_distance(a, a, 1) == 0.0);
    CHECK(vq_distance(a, b, 1) == 0.5);
    CHECK(vq_distance(a, b, 2) == 0.0);
    CHECK(vq_distance_mean(a, b) == 0.25);
    CHECK(vq_distance(sig({{0, 0}}), sig({{1, 1}}), 1) == 1.0);
    CHECK_THROWS(vq_distance(a, b, 3));
    CHECK_THROWS(vq_distance(sig({{0, 0}}), sig({{0, 0, 0}}), 1));
}

TEST_CASE("vq distance is a pseudometric") {
    CounterRng rng(1);
    const auto draw = [&] {
        std::vector<std::uint32_t> c(12);
        for (auto& v : c) v = static_cast<std::uint32_t>(rng.below(3));
        return sig({c});
    };
    for (int t = 0; t < 300; ++t) {
        const auto a = draw(), b = draw(), c = draw();
        CHECK(vq_distance(a, b, 1) == vq_distance(b, a, 1));
        CHECK(vq_distance(a, b, 1) >= 0.0);
        CHECK(vq_distance(a, c, 1) <= vq_distance(a, b, 1) + vq_distance(b, c, 1) + 1e-15);
        CHECK(vq_distance(a, b, 1) == hamming(a.slice(1), b.slice(1)));
    }
}

TEST_CASE("nearest neighbors") {
    const auto net = fixtures::toy_fc(2);
    CounterRng rng(2);
    std::vector<DenseVector> xs;
    std::vector<std::size_t> labels;
    for (int i = 0; i < 200; ++i) {
        xs.push_back(fixtures::random_vector(rng, 2, -3, 3));
        labels.push_back(static_cast<std::size_t>(i % 4));
    }
    const auto corpus = build_corpus(net, xs, labels);
    REQUIRE(corpus.items.size() == 200);
    CHECK(corpus.items[7].label == std::optional<std::size_t>{3});
    CHECK(corpus.fingerprint == fingerprint(net));

    for (std::size_t level : {std::size_t{0}, std::size_t{1}, std::size_t{2}}) {
        for (std::size_t qi = 0; qi < 10; ++qi) {
            const auto q = make_query(net, xs[qi]);
            const auto nn = nearest_neighbors(corpus, q, level, 15);
            REQUIRE(nn.size() == 15);
            CHECK(nn.front().id == qi);
            CHECK(nn.front().distance == 0.0);

            std::vector<std::tuple<double, double, std::size_t>> ranked;
            for (const auto& it : corpus.items) {
                double d = 0.0;
                if (level == 0) {
                    for (std::size_t l = 1; l <= 2; ++l) d += hamming(q.signature.slice(l), it.signature.slice(l));
                    d /= 2.0;
                } else {
                    d = hamming(q.signature.slice(level), it.signature.slice(level));
                }
                ranked.emplace_back(d, std::sqrt(sq_dist(xs[qi], it.x)), it.id);
            }
            std::sort(ranked.begin(), ranked.end());
            for (std::size_t i = 0; i < nn.size(); ++i) {
                CHECK(nn[i].id == std::get<2>(ranked[i]));
                CHECK(nn[i].distance == doctest::Approx(std::get<0>(ranked[i])).epsilon(1e-15));
            }
        }
    }
    CHECK(nearest_neighbors(corpus, make_query(net, xs[0]), 1, 1000).size() == 200);
    CHECK_THROWS_AS(nearest_neighbors(corpus, make_query(fixtures::toy_fc(3), xs[0]), 1, 5), DomainError);
}

TEST_CASE("k-means bias") {
    const MasoParams p(1, 2, 2, {3, 4, 1, 0}, {7, 7});
    const auto q = set_kmeans_bias(p);
    CHECK(q.offset(0, 0) == -12.5);
    CHECK(q.offset(0, 1) == -0.5);
    CHECK(q.slope(0, 0)[1] == 4.0);

    const Centroids c{{{0, 0}, {2, 0}}};
    const auto m = kmeans_maso(c);
    CHECK(maso_eval(m, DenseVector{0.9, 0}).code.index[0] == 0);
    CHECK(maso_eval(m, DenseVector{1.1, 0}).code.index[0] == 1);
    CHECK(kmeans_assign(c, DenseVector{1.0, 5.0}) == 0);
    CHECK(centroids_of_unit(m, 0).mu == c.mu);
}

TEST_CASE("k-means MASO equals nearest-centroid assignment") {
    CounterRng rng(3);
    for (int t = 0; t < 20; ++t) {
        const auto p = fixtures::random_maso(rng, 3, 2 + rng.below(5), 2 + rng.below(3));
        const auto km = set_kmeans_bias(p);
        const auto rep = check_voronoi_equiv(km, 500, 10 + t);
        CHECK(rep.samples == 500);
        CHECK(rep.mismatches == 0);
        CHECK(rep.checked + rep.near_ties == 500 * 3);
        for (int s = 0; s < 20; ++s) {
            const auto x = fixtures::random_vector(rng, p.inputs(), -3, 3);
            const auto cents = centroids_of_unit(km, 1);
            std::size_t best = 0;
            for (std::size_t r = 1; r < cents.size(); ++r)
                if (sq_dist(cents.mu[r], x) < sq_dist(cents.mu[best], x)) best = r;
            CHECK(kmeans_assign(cents, x) == best);
        }
    }
    const MasoParams shifted(1, 2, 1, {0, 2}, {0, 5});
    CHECK(check_voronoi_equiv(shifted, 500, 1).mismatches > 0);
}

TEST_CASE("lloyd") {
    CounterRng rng(4);
    std::vector<DenseVector> data;
    for (int i = 0; i < 100; ++i) data.push_back({rng.normal() * 0.2 - 3, rng.normal() * 0.2});
    for (int i = 0; i < 100; ++i) data.push_back({rng.normal() * 0.2 + 3, rng.normal() * 0.2});
    const auto r = lloyd(data, 2, 100, 7);
    CHECK(r.converged);
    for (std::size_t i = 1; i < r.objective.size(); ++i) CHECK(r.objective[i] <= r.objective[i - 1] + 1e-12);
    for (std::size_t i = 0; i < 100; ++i) {
        CHECK(r.assignment[i] == r.assignment[0]);
        CHECK(r.assignment[100 + i] == r.assignment[100]);
    }
    CHECK(r.assignment[0] != r.assignment[100]);

    // Fixed point: each centroid is the mean of its cluster and the k-means
    // MASO reproduces the assignment.
    const auto m = kmeans_maso(r.centroids);
    for (std::size_t c = 0; c < 2; ++c) {
        DenseVector mean(2, 0.0);
        std::size_t n = 0;
        for (std::size_t i = 0; i < data.size(); ++i)
            if (r.assignment[i] == c) {
                mean = add(mean, data[i]);
                ++n;
            }
        CHECK(fixtures::max_abs_error(scaled(mean, 1.0 / static_cast<double>(n)), r.centroids.mu[c]) <= 1e-12);
    }
    for (std::size_t i = 0; i < data.size(); ++i) CHECK(maso_eval(m, data[i]).code.index[0] == r.assignment[i]);
    CHECK(kmeans_objective(r.centroids, data) == doctest::Approx(r.objective.back()));
    CHECK_THROWS(lloyd(data, 0, 10, 1));
    CHECK_THROWS(lloyd(std::span(data).first(1), 2, 10, 1));
}
