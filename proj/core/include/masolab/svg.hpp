#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "masolab/analysis.hpp"
#include "masolab/dataset.hpp"
#include "masolab/network.hpp"
#include "masolab/partition.hpp"

namespace masolab {

/// "#rrggbb" derived deterministically from a hash.
std::string hash_color(std::uint64_t hash);

/// Signature hash of every grid point, row-major with y outermost.
struct PartitionRaster {
    Grid2DSpec grid;
    std::vector<std::uint64_t> cells;
};

PartitionRaster raster_partition(const Network& net, const Grid2DSpec& grid, std::size_t level,
                                 SignatureScope scope = SignatureScope::Cumulative);

/// One <g> per distinct signature, filled with hash_color. Optional points are
/// drawn on top as black-outlined dots.
std::string render_partition_svg(const PartitionRaster& raster, const Dataset* points = nullptr);

struct HistogramSeries {
    std::string label;
    Histogram histogram;
    std::string color = "#1f77b4";
};

/// Overlaid bar outlines over a shared x range; axes are always drawn.
std::string render_histogram_svg(std::span<const HistogramSeries> series, const std::string& title);

/// Rows of grayscale images (each `height` x `width`, values min-max scaled
/// per image), e.g. a query followed by its neighbors.
std::string render_neighbor_grid_svg(const std::vector<std::vector<DenseVector>>& rows,
                                     std::size_t height, std::size_t width);

}  // namespace masolab
