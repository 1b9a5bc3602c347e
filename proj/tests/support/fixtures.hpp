#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "masolab/io.hpp"
#include "masolab/network.hpp"
#include "masolab/rng.hpp"
#include "masolab/train.hpp"

namespace fixtures {

using namespace masolab;

inline DenseVector random_vector(CounterRng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
    DenseVector v(n);
    for (double& x : v) x = rng.uniform(lo, hi);
    return v;
}

inline DenseMatrix random_matrix(CounterRng& rng, std::size_t r, std::size_t c, double lo = -1.0,
                                 double hi = 1.0) {
    DenseMatrix m(r, c);
    for (double& x : m.data()) x = rng.uniform(lo, hi);
    return m;
}

inline MasoParams random_maso(CounterRng& rng, std::size_t K, std::size_t R, std::size_t D) {
    std::vector<double> a(K * R * D), b(K * R);
    for (double& x : a) x = rng.uniform(-1.0, 1.0);
    for (double& x : b) x = rng.uniform(-1.0, 1.0);
    return MasoParams(K, R, D, std::move(a), std::move(b));
}

inline double max_abs_error(std::span<const double> a, std::span<const double> b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

/// 2-45-3-4 fully connected ReLU net with nonzero biases.
inline Network toy_fc(std::uint64_t seed) {
    const std::vector<LayerPlan> plan{DensePlan{45}, ActivationPlan{}, DensePlan{3}, ActivationPlan{}};
    return make_network({2, 1, 1}, plan, 4, seed, {1.0, 0.5, false});
}

/// 2-45-3-4 with batch norm in front of each ReLU (the trained toy model).
inline Network toy_fc_bn(std::uint64_t seed) {
    const std::vector<LayerPlan> plan{DensePlan{45}, BatchNormPlan{}, ActivationPlan{},
                                      DensePlan{3},  BatchNormPlan{}, ActivationPlan{}};
    return make_network({2, 1, 1}, plan, 4, seed);
}

/// 1x8x8 input, two conv-ReLU-maxpool stages, 3 classes.
inline Network small_cnn(std::uint64_t seed) {
    const std::vector<LayerPlan> plan{
        ConvPlan{4, 3, Padding::Valid, {1, 1}}, ActivationPlan{}, PoolPlan{},
        ConvPlan{4, 2, Padding::Valid, {1, 1}}, ActivationPlan{}, PoolPlan{}};
    return make_network({1, 8, 8}, plan, 3, seed, {1.0, 0.3, false});
}

/// Three residual blocks with dense (linear) skips on a 4-D input.
inline Network resnet3(std::uint64_t seed) {
    const std::vector<LayerPlan> plan{ResidualPlan{ActivationKind::ReLU, 0.0, SkipKind::Dense},
                                      ResidualPlan{ActivationKind::ReLU, 0.0, SkipKind::Dense},
                                      ResidualPlan{ActivationKind::ReLU, 0.0, SkipKind::Dense}};
    return make_network({4, 1, 1}, plan, 3, seed, {1.0, 0.3, false});
}

/// Direct multichannel cross-correlation, zero padding in "same" mode.
inline DenseVector direct_conv(const FilterBank& f, const Shape3& in, Padding pad, Stride st,
                               std::span<const double> z) {
    // "same": ceil(in / stride) outputs, total padding split with the smaller half first.
    const auto axis = [&](std::size_t n, std::size_t k, std::size_t s) -> std::pair<std::size_t, std::size_t> {
        if (pad == Padding::Valid) return {(n - k) / s + 1, 0};
        const std::size_t out = (n + s - 1) / s;
        const std::size_t need = (out - 1) * s + k;
        return {out, need > n ? (need - n) / 2 : 0};
    };
    const auto [oh, ph] = axis(in.height, f.height, st.vertical);
    const auto [ow, pw] = axis(in.width, f.width, st.horizontal);
    DenseVector out(f.out_channels * oh * ow, 0.0);
    for (std::size_t o = 0; o < f.out_channels; ++o)
        for (std::size_t i = 0; i < oh; ++i)
            for (std::size_t j = 0; j < ow; ++j) {
                double acc = 0.0;
                for (std::size_t c = 0; c < f.in_channels; ++c)
                    for (std::size_t u = 0; u < f.height; ++u)
                        for (std::size_t v = 0; v < f.width; ++v) {
                            const auto r = static_cast<std::ptrdiff_t>(i * st.vertical + u) -
                                           static_cast<std::ptrdiff_t>(ph);
                            const auto s = static_cast<std::ptrdiff_t>(j * st.horizontal + v) -
                                           static_cast<std::ptrdiff_t>(pw);
                            if (r < 0 || s < 0 || r >= static_cast<std::ptrdiff_t>(in.height) ||
                                s >= static_cast<std::ptrdiff_t>(in.width))
                                continue;
                            acc += f(o, c, u, v) * z[in.index(c, static_cast<std::size_t>(r),
                                                              static_cast<std::size_t>(s))];
                        }
                out[(o * oh + i) * ow + j] = acc;
            }
    return out;
}

/// Reference FNV-1a 64 over a byte string.
inline std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Squared Frobenius norm of diag(p) - p p^T written out elementwise.
inline double softmax_jac_sq(std::span<const double> p) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i)
        for (std::size_t j = 0; j < p.size(); ++j) {
            const double v = (i == j ? p[i] : 0.0) - p[i] * p[j];
            s += v * v;
        }
    return s;
}

}  // namespace fixtures
