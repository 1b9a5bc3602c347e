#include <numeric>
#include <set>

#include "doctest.h"
#include "fixtures.hpp"
#include "masolab/errors.hpp"
#include "masolab/hash.hpp"
#include "masolab/linalg.hpp"
#include "masolab/rng.hpp"
#include "masolab/structured.hpp"

using namespace masolab;
using fixtures::direct_conv;

TEST_CASE("gemv examples") {
    CHECK(gemv(DenseMatrix::identity(3), DenseVector{1, 2, 3}) == DenseVector{1, 2, 3});
    CHECK(gemv(DenseMatrix::zeros(2, 2), DenseVector{5, 7}) == DenseVector{0, 0});
    CHECK(gemv(DenseMatrix{{1, 2}, {3, 4}}, DenseVector{1, 1}) == DenseVector{3, 7});
    CHECK_THROWS_AS(gemv(DenseMatrix(2, 3), DenseVector{1, 2}), DimensionError);
}

TEST_CASE("matmul and transpose against index loops") {
    CounterRng rng(3);
    const auto a = fixtures::random_matrix(rng, 4, 5);
    const auto b = fixtures::random_matrix(rng, 5, 3);
    const auto c = matmul(a, b);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < 5; ++k) s += a(i, k) * b(k, j);
            CHECK(c(i, j) == doctest::Approx(s).epsilon(1e-15));
        }
    const auto t = a.transposed();
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 5; ++j) CHECK(t(j, i) == a(i, j));
    const DenseVector v{1, -2, 0.5, 3};
    CHECK(gemv_transposed(a, v) == gemv(t, v));
    CHECK_THROWS_AS(matmul(a, a), DimensionError);
}

TEST_CASE("vector helpers") {
    CHECK(dot(DenseVector{1, 2}, DenseVector{3, 4}) == 11.0);
    CHECK(norm2(DenseVector{3, 4}) == 5.0);
    CHECK(max_abs(DenseVector{-7, 2}) == 7.0);
    CHECK(frobenius_norm(DenseMatrix{{1, 2}, {2, 4}}) == 5.0);
    CHECK_FALSE(all_finite(DenseVector{1, std::nan("")}));
    DenseVector y{1, 1};
    axpy(2.0, DenseVector{1, 2}, y);
    CHECK(y == DenseVector{3, 5});
    CHECK(scale_rows(DenseVector{2, 3}, DenseMatrix{{1, 1}, {1, 1}}) == DenseMatrix{{2, 2}, {3, 3}});
    CHECK(scale_cols(DenseMatrix{{1, 1}, {1, 1}}, DenseVector{2, 3}) == DenseMatrix{{2, 3}, {2, 3}});
}

TEST_CASE("shapes") {
    const Shape3 s{2, 3, 4};
    CHECK(s.dim() == 24);
    CHECK(s.index(1, 2, 3) == 1 * 12 + 2 * 4 + 3);
    CHECK_THROWS_AS(checked_shape(0, 1, 1), DimensionError);
}

TEST_CASE("conv matrix: identity and zero filters") {
    FilterBank one(1, 1, 1, 1, 1.0);
    const Shape3 in{1, 3, 3};
    CHECK(build_conv_matrix(one, in, Padding::Valid, {}) == DenseMatrix::identity(9));
    FilterBank zero(2, 1, 2, 2, 0.0);
    const auto m = build_conv_matrix(zero, in, Padding::Valid, {});
    CHECK(m.rows() == 8);
    CHECK(max_abs(m.data()) == 0.0);
}

TEST_CASE("conv matrix: 2x2 filter on 3x3 input equals sliding window") {
    CounterRng rng(11);
    FilterBank f(1, 1, 2, 2);
    for (double& v : f.values) v = rng.uniform(-1, 1);
    const Shape3 in{1, 3, 3};
    const auto m = build_conv_matrix(f, in, Padding::Valid, {});
    CHECK(m.rows() == 4);
    CHECK(m.cols() == 9);
    for (int t = 0; t < 50; ++t) {
        const auto z = fixtures::random_vector(rng, 9);
        CHECK(fixtures::max_abs_error(gemv(m, z), direct_conv(f, in, Padding::Valid, {}, z)) <= 1e-12);
    }
}

TEST_CASE("conv matrix equals direct convolution on 100 random banks") {
    CounterRng rng(12);
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
        const std::size_t ci = 1 + rng.below(3), co = 1 + rng.below(3);
        const std::size_t k = 1 + rng.below(3);
        const Shape3 in{ci, k + rng.below(5), k + rng.below(5)};
        const Padding pad = rng.below(2) == 0 ? Padding::Valid : Padding::Same;
        const Stride st{1 + rng.below(2), 1 + rng.below(2)};
        FilterBank f(co, ci, k, k);
        for (double& v : f.values) v = rng.uniform(-1, 1);
        const auto m = build_conv_matrix(f, in, pad, st);
        const auto z = fixtures::random_vector(rng, in.dim());
        const auto want = direct_conv(f, in, pad, st, z);
        REQUIRE(m.rows() == want.size());
        REQUIRE(conv_output_shape(f, in, pad, st).dim() == want.size());
        worst = std::max(worst, fixtures::max_abs_error(gemv(m, z), want));
    }
    CHECK(worst <= 1e-12);
}

TEST_CASE("conv geometry errors") {
    FilterBank f(1, 1, 4, 4);
    CHECK_THROWS_AS(build_conv_matrix(f, {1, 3, 3}, Padding::Valid, {}), DimensionError);
    CHECK_THROWS_AS(build_conv_matrix(f, {1, 5, 5}, Padding::Valid, {0, 1}), DimensionError);
    FilterBank g(1, 2, 2, 2);
    CHECK_THROWS_AS(build_conv_matrix(g, {1, 5, 5}, Padding::Valid, {}), DimensionError);
}

TEST_CASE("conv bias replication") {
    CHECK(build_conv_bias(DenseVector{1}, {1, 2, 2}) == DenseVector{1, 1, 1, 1});
    CHECK(build_conv_bias(DenseVector{0, 0}, {2, 1, 1}) == DenseVector{0, 0});
    CHECK(build_conv_bias(DenseVector{2, -1}, {2, 1, 2}) == DenseVector{2, 2, -1, -1});
    CHECK_THROWS_AS(build_conv_bias(DenseVector{1, 2}, {3, 1, 1}), DimensionError);
}

namespace {

bool covers(const PoolRegions& p) {
    std::set<std::size_t> seen;
    for (const auto& r : p.regions) seen.insert(r.begin(), r.end());
    return seen.size() == p.input_dim && *seen.rbegin() == p.input_dim - 1;
}

}  // namespace

TEST_CASE("pool regions") {
    SUBCASE("2x2 tiling of 4x4") {
        const auto p = build_pool_regions(PoolAxis::Spatial, {1, 4, 4}, {2, 2}, {2, 2});
        CHECK(p.size() == 4);
        for (const auto& r : p.regions) CHECK(r.size() == 4);
        CHECK(p.regions[0] == std::vector<std::size_t>{0, 1, 4, 5});
        CHECK(covers(p));
    }
    SUBCASE("channel pooling over 3 channels of 2x2 maps") {
        const auto p = build_pool_regions(PoolAxis::Channel, {3, 2, 2}, {3, 1}, {3, 1});
        CHECK(p.size() == 4);
        for (const auto& r : p.regions) CHECK(r.size() == 3);
        CHECK(p.regions[1] == std::vector<std::size_t>{1, 5, 9});
        CHECK(covers(p));
    }
    SUBCASE("full window") {
        const auto p = build_pool_regions(PoolAxis::Spatial, {2, 3, 3}, {3, 3}, {3, 3});
        CHECK(p.size() == 2);
        const auto q = build_pool_regions(PoolAxis::Spatial, {1, 3, 3}, {3, 3}, {1, 1});
        CHECK(q.size() == 1);
        CHECK(q.regions[0].size() == 9);
    }
    SUBCASE("clipped edges still cover") {
        const auto p = build_pool_regions(PoolAxis::Spatial, {2, 5, 5}, {2, 2}, {2, 2});
        CHECK(covers(p));
        validate_pool_regions(p);
    }
    SUBCASE("invalid regions are rejected") {
        PoolRegions bad{3, {1, 1, 1}, {{0, 1}}};
        CHECK_THROWS_AS(validate_pool_regions(bad), DimensionError);
        PoolRegions out_of_range{2, {1, 1, 1}, {{0, 1, 2}}};
        CHECK_THROWS_AS(validate_pool_regions(out_of_range), DimensionError);
    }
}

TEST_CASE("counter rng is deterministic and splittable") {
    CounterRng a(42), b(42), c(43);
    std::vector<std::uint64_t> xa, xb, xc;
    for (int i = 0; i < 100; ++i) {
        xa.push_back(a());
        xb.push_back(b());
        xc.push_back(c());
    }
    CHECK(xa == xb);
    CHECK(xa != xc);
    CHECK(CounterRng(42).at(5) == xa[5]);
    CHECK(CounterRng(42).split(1)() == CounterRng(42).split(1)());
    CHECK(CounterRng(42).split(1)() != CounterRng(42).split(2)());

    CounterRng r(1);
    double sum = 0.0, sq = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double u = r.uniform();
        CHECK((u >= 0.0 && u < 1.0));
        const auto k = r.below(7);
        CHECK(k < 7);
        const double z = r.normal();
        sum += z;
        sq += z * z;
    }
    CHECK(std::abs(sum / n) < 0.05);
    CHECK(std::abs(sq / n - 1.0) < 0.05);
}

TEST_CASE("fnv1a matches the reference") {
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a64("foobar") == fixtures::fnv1a("foobar"));
}
