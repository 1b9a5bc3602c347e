#include "masolab/structured.hpp"

#include <algorithm>
#include <string>

#include "masolab/errors.hpp"

namespace masolab {

namespace {

struct AxisPlan {
    std::size_t out = 0;
    std::size_t pad_before = 0;
};

AxisPlan plan_axis(std::size_t in, std::size_t k, std::size_t stride, Padding padding) {
    if (stride == 0) throw DimensionError("convolution stride must be >= 1");
    if (padding == Padding::Valid) {
        if (k > in) {
            throw DimensionError("filter extent " + std::to_string(k) + " exceeds input extent " +
                                 std::to_string(in));
        }
        return {(in - k) / stride + 1, 0};
    }
    const std::size_t out = (in + stride - 1) / stride;
    const std::size_t needed = (out - 1) * stride + k;
    const std::size_t total = needed > in ? needed - in : 0;
    if (k > in + total) throw DimensionError("filter extent exceeds padded input extent");
    return {out, total / 2};
}

}  // namespace

Shape3 checked_shape(std::size_t channels, std::size_t height, std::size_t width) {
    if (channels == 0 || height == 0 || width == 0)
        throw DimensionError("Shape3 extents must all be >= 1");
    return {channels, height, width};
}

Shape3 conv_output_shape(const FilterBank& filters, const Shape3& in_shape, Padding padding,
                         Stride stride) {
    if (filters.in_channels != in_shape.channels) {
        throw DimensionError("filter bank expects " + std::to_string(filters.in_channels) +
                             " input channels, got " + std::to_string(in_shape.channels));
    }
    if (filters.out_channels == 0 || filters.height == 0 || filters.width == 0)
        throw DimensionError("empty filter bank");
    const auto v = plan_axis(in_shape.height, filters.height, stride.vertical, padding);
    const auto h = plan_axis(in_shape.width, filters.width, stride.horizontal, padding);
    return {filters.out_channels, v.out, h.out};
}

std::vector<ConvTap> conv_taps(const FilterBank& filters, const Shape3& in_shape, Padding padding,
                               Stride stride) {
    const Shape3 out = conv_output_shape(filters, in_shape, padding, stride);
    const auto v = plan_axis(in_shape.height, filters.height, stride.vertical, padding);
    const auto h = plan_axis(in_shape.width, filters.width, stride.horizontal, padding);

    std::vector<ConvTap> taps;
    taps.reserve(out.dim() * filters.in_channels * filters.height * filters.width);
    for (std::size_t o = 0; o < out.channels; ++o) {
        for (std::size_t oi = 0; oi < out.height; ++oi) {
            for (std::size_t oj = 0; oj < out.width; ++oj) {
                const std::size_t row = out.index(o, oi, oj);
                for (std::size_t c = 0; c < filters.in_channels; ++c) {
                    for (std::size_t a = 0; a < filters.height; ++a) {
                        // Signed arithmetic on padded coordinates.
                        const auto ii = static_cast<long long>(oi * stride.vertical + a) -
                                        static_cast<long long>(v.pad_before);
                        if (ii < 0 || ii >= static_cast<long long>(in_shape.height)) continue;
                        for (std::size_t b = 0; b < filters.width; ++b) {
                            const auto jj = static_cast<long long>(oj * stride.horizontal + b) -
                                            static_cast<long long>(h.pad_before);
                            if (jj < 0 || jj >= static_cast<long long>(in_shape.width)) continue;
                            taps.push_back({row,
                                            in_shape.index(c, static_cast<std::size_t>(ii),
                                                           static_cast<std::size_t>(jj)),
                                            filters.index(o, c, a, b)});
                        }
                    }
                }
            }
        }
    }
    return taps;
}

DenseMatrix build_conv_matrix(const FilterBank& filters, const Shape3& in_shape, Padding padding,
                              Stride stride) {
    const Shape3 out = conv_output_shape(filters, in_shape, padding, stride);
    DenseMatrix m(out.dim(), in_shape.dim());
    for (const auto& t : conv_taps(filters, in_shape, padding, stride))
        m(t.row, t.col) += filters.values[t.tap];
    return m;
}

DenseVector build_conv_bias(std::span<const double> xi, const Shape3& out_shape) {
    if (xi.size() != out_shape.channels) {
        throw DimensionError("conv bias has " + std::to_string(xi.size()) + " entries for " +
                             std::to_string(out_shape.channels) + " output channels");
    }
    DenseVector b(out_shape.dim());
    const std::size_t plane = out_shape.height * out_shape.width;
    for (std::size_t c = 0; c < out_shape.channels; ++c)
        std::fill_n(b.begin() + static_cast<std::ptrdiff_t>(c * plane), plane, xi[c]);
    return b;
}

namespace {

// Window starts along one axis; the last window is clipped so the axis is covered.
std::vector<std::size_t> window_starts(std::size_t extent, std::size_t window, std::size_t stride) {
    if (window == 0 || stride == 0) throw DimensionError("pool window and stride must be >= 1");
    if (window > extent) {
        throw DimensionError("pool window " + std::to_string(window) + " larger than input extent " +
                             std::to_string(extent));
    }
    std::vector<std::size_t> starts;
    std::size_t s = 0;
    for (;;) {
        starts.push_back(s);
        if (s + window >= extent) break;
        s += stride;
    }
    return starts;
}

}  // namespace

PoolRegions build_pool_regions(PoolAxis axis, const Shape3& in_shape, Stride window, Stride stride) {
    PoolRegions out;
    out.input_dim = in_shape.dim();
    if (axis == PoolAxis::Spatial) {
        const auto rows = window_starts(in_shape.height, window.vertical, stride.vertical);
        const auto cols = window_starts(in_shape.width, window.horizontal, stride.horizontal);
        out.out_shape = {in_shape.channels, rows.size(), cols.size()};
        for (std::size_t c = 0; c < in_shape.channels; ++c) {
            for (std::size_t r0 : rows) {
                for (std::size_t c0 : cols) {
                    std::vector<std::size_t> region;
                    for (std::size_t i = r0; i < std::min(r0 + window.vertical, in_shape.height); ++i)
                        for (std::size_t j = c0; j < std::min(c0 + window.horizontal, in_shape.width); ++j)
                            region.push_back(in_shape.index(c, i, j));
                    out.regions.push_back(std::move(region));
                }
            }
        }
    } else {
        const auto chans = window_starts(in_shape.channels, window.vertical, stride.vertical);
        out.out_shape = {chans.size(), in_shape.height, in_shape.width};
        for (std::size_t c0 : chans) {
            for (std::size_t i = 0; i < in_shape.height; ++i) {
                for (std::size_t j = 0; j < in_shape.width; ++j) {
                    std::vector<std::size_t> region;
                    for (std::size_t c = c0; c < std::min(c0 + window.vertical, in_shape.channels); ++c)
                        region.push_back(in_shape.index(c, i, j));
                    out.regions.push_back(std::move(region));
                }
            }
        }
    }
    validate_pool_regions(out);
    return out;
}

void validate_pool_regions(const PoolRegions& regions) {
    std::vector<bool> covered(regions.input_dim, false);
    for (const auto& r : regions.regions) {
        if (r.empty()) throw DimensionError("empty pooling region");
        for (std::size_t i : r) {
            if (i >= regions.input_dim)
                throw DimensionError("pooling index " + std::to_string(i) + " out of range");
            covered[i] = true;
        }
    }
    const auto missing = std::find(covered.begin(), covered.end(), false);
    if (missing != covered.end()) {
        throw DimensionError("pooling regions do not cover input index " +
                             std::to_string(missing - covered.begin()));
    }
}

}  // namespace masolab
