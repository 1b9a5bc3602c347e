#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "masolab/linalg.hpp"

namespace masolab {

/// Channels x height x width. Flattened index k = c*I*J + i*J + j.
struct Shape3 {
    std::size_t channels = 1;
    std::size_t height = 1;
    std::size_t width = 1;

    std::size_t dim() const noexcept { return channels * height * width; }
    std::size_t index(std::size_t c, std::size_t i, std::size_t j) const noexcept {
        return (c * height + i) * width + j;
    }
    friend bool operator==(const Shape3&, const Shape3&) = default;
};

/// Shape3 with every extent >= 1, otherwise DimensionError.
Shape3 checked_shape(std::size_t channels, std::size_t height, std::size_t width);

enum class Padding { Valid, Same };

/// Four-index filter tensor out_channels x in_channels x height x width,
/// stored row-major in that order.
struct FilterBank {
    std::size_t out_channels = 0;
    std::size_t in_channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> values;

    FilterBank() = default;
    FilterBank(std::size_t out_c, std::size_t in_c, std::size_t h, std::size_t w, double fill = 0.0)
        : out_channels(out_c), in_channels(in_c), height(h), width(w), values(out_c * in_c * h * w, fill) {}

    std::size_t size() const noexcept { return values.size(); }
    std::size_t index(std::size_t o, std::size_t c, std::size_t i, std::size_t j) const noexcept {
        return ((o * in_channels + c) * height + i) * width + j;
    }
    double& operator()(std::size_t o, std::size_t c, std::size_t i, std::size_t j) noexcept {
        return values[index(o, c, i, j)];
    }
    double operator()(std::size_t o, std::size_t c, std::size_t i, std::size_t j) const noexcept {
        return values[index(o, c, i, j)];
    }
    friend bool operator==(const FilterBank&, const FilterBank&) = default;
};

struct Stride {
    std::size_t vertical = 1;
    std::size_t horizontal = 1;
    friend bool operator==(const Stride&, const Stride&) = default;
};

/// One nonzero of the convolution super-matrix: M(row, col) = filters.values[tap].
struct ConvTap {
    std::size_t row;
    std::size_t col;
    std::size_t tap;
};

Shape3 conv_output_shape(const FilterBank& filters, const Shape3& in_shape, Padding padding,
                         Stride stride);

/// Nonzero pattern of the convolution super-matrix in row-major order. Used both
/// to assemble the matrix and to scatter matrix gradients back onto filter taps.
std::vector<ConvTap> conv_taps(const FilterBank& filters, const Shape3& in_shape, Padding padding,
                               Stride stride);

/// Dense matrix M with M * flatten(z) = flatten(conv(z)) (cross-correlation,
/// zero padding in Same mode). Block (o, c) of M is the single-channel
/// operator of filter (o, c).
DenseMatrix build_conv_matrix(const FilterBank& filters, const Shape3& in_shape, Padding padding,
                              Stride stride);

/// Replicates channel bias xi[c] over every spatial position of channel c.
DenseVector build_conv_bias(std::span<const double> xi, const Shape3& out_shape);

enum class PoolAxis { Spatial, Channel };

struct PoolRegions {
    std::size_t input_dim = 0;
    Shape3 out_shape;
    std::vector<std::vector<std::size_t>> regions;

    std::size_t size() const noexcept { return regions.size(); }
};

/// Spatial pooling uses window/stride as (height, width); channel pooling
/// reads window.vertical/stride.vertical as a channel count. Edge windows are
/// clipped to the input so that the regions always cover every index.
PoolRegions build_pool_regions(PoolAxis axis, const Shape3& in_shape, Stride window, Stride stride);

/// Throws DimensionError unless every index < input_dim lies in some region
/// and no region is empty or out of range.
void validate_pool_regions(const PoolRegions& regions);

}  // namespace masolab
