#include "masolab/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "masolab/errors.hpp"

namespace masolab {

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out.push_back(c);
        }
    }
    return out;
}

std::string header(double w, double h) {
    return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(w) + "\" height=\"" + fmt(h) +
           "\" viewBox=\"0 0 " + fmt(w) + " " + fmt(h) + "\">\n";
}

// HSL to RGB with s, l in [0, 1] and h in degrees.
std::string hsl_hex(double h, double s, double l) {
    const double c = (1.0 - std::abs(2.0 * l - 1.0)) * s;
    const double hp = h / 60.0;
    const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    if (hp < 1) r = c, g = x;
    else if (hp < 2) r = x, g = c;
    else if (hp < 3) g = c, b = x;
    else if (hp < 4) g = x, b = c;
    else if (hp < 5) r = x, b = c;
    else r = c, b = x;
    const double m = l - c / 2.0;
    const auto byte = [&](double v) { return static_cast<int>(std::lround(std::clamp(v + m, 0.0, 1.0) * 255.0)); };
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", byte(r), byte(g), byte(b));
    return buf;
}

const char* kPointPalette[] = {"#000000", "#ffffff", "#e41a1c", "#377eb8", "#4daf4a",
                               "#984ea3", "#ff7f00", "#ffff33", "#a65628", "#f781bf"};

}  // namespace

std::string hash_color(std::uint64_t hash) {
    const double hue = static_cast<double>(hash % 360);
    const double sat = 0.45 + 0.4 * static_cast<double>((hash >> 16) % 101) / 100.0;
    const double lig = 0.40 + 0.25 * static_cast<double>((hash >> 32) % 101) / 100.0;
    return hsl_hex(hue, sat, lig);
}

PartitionRaster raster_partition(const Network& net, const Grid2DSpec& grid, std::size_t level,
                                 SignatureScope scope) {
    if (net.input_dim() != 2) throw DimensionError("partition rasters need a 2-D input");
    if (grid.x_resolution < 2 || grid.y_resolution < 2)
        throw DomainError("grid resolution must be >= 2 per axis");
    PartitionRaster r{grid, {}};
    r.cells.reserve(grid.x_resolution * grid.y_resolution);
    for (std::size_t iy = 0; iy < grid.y_resolution; ++iy) {
        for (std::size_t ix = 0; ix < grid.x_resolution; ++ix)
            r.cells.push_back(signature_at(net, grid_point(grid, ix, iy), level, scope).hash());
    }
    return r;
}

std::string render_partition_svg(const PartitionRaster& raster, const Dataset* points) {
    const auto& g = raster.grid;
    const std::size_t nx = g.x_resolution;
    const std::size_t ny = g.y_resolution;
    if (raster.cells.size() != nx * ny) throw DimensionError("raster size does not match its grid");
    constexpr double size = 512.0;
    const double cw = size / static_cast<double>(nx);
    const double ch = size / static_cast<double>(ny);

    // Horizontal runs per signature; y grows upward in data space.
    std::map<std::uint64_t, std::string> runs;
    for (std::size_t iy = 0; iy < ny; ++iy) {
        const double top = size - static_cast<double>(iy + 1) * ch;
        for (std::size_t ix = 0; ix < nx;) {
            const auto h = raster.cells[iy * nx + ix];
            std::size_t end = ix + 1;
            while (end < nx && raster.cells[iy * nx + end] == h) ++end;
            runs[h] += "<rect x=\"" + fmt(static_cast<double>(ix) * cw) + "\" y=\"" + fmt(top) +
                       "\" width=\"" + fmt(static_cast<double>(end - ix) * cw) + "\" height=\"" +
                       fmt(ch) + "\"/>";
            ix = end;
        }
    }
    std::string svg = header(size, size);
    svg += "<g id=\"regions\" shape-rendering=\"crispEdges\">\n";
    for (const auto& [h, rects] : runs) svg += "<g fill=\"" + hash_color(h) + "\">" + rects + "</g>\n";
    svg += "</g>\n";
    if (points != nullptr) {
        svg += "<g id=\"points\" stroke=\"#000000\" stroke-width=\"0.5\">\n";
        const double sx = size / (g.x_max - g.x_min);
        const double sy = size / (g.y_max - g.y_min);
        for (std::size_t i = 0; i < points->size(); ++i) {
            const auto& p = points->inputs[i];
            if (p.size() != 2) throw DimensionError("overlay points must be 2-D");
            const std::size_t lab = points->labels.empty() ? 0 : points->labels[i];
            svg += "<circle cx=\"" + fmt((p[0] - g.x_min) * sx) + "\" cy=\"" +
                   fmt(size - (p[1] - g.y_min) * sy) + "\" r=\"1.5\" fill=\"" +
                   kPointPalette[lab % std::size(kPointPalette)] + "\"/>\n";
        }
        svg += "</g>\n";
    }
    svg += "</svg>\n";
    return svg;
}

std::string render_histogram_svg(std::span<const HistogramSeries> series, const std::string& title) {
    constexpr double W = 640, H = 400, L = 60, R = 20, T = 40, B = 50;
    const double pw = W - L - R;
    const double ph = H - T - B;
    std::string svg = header(W, H);
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
    svg += "<text x=\"" + fmt(W / 2) + "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">" +
           escape(title) + "</text>\n";

    double lo = 0.0, hi = 1.0;
    std::size_t top = 0;
    if (!series.empty()) {
        lo = series.front().histogram.lo;
        hi = series.front().histogram.hi;
        for (const auto& s : series) {
            lo = std::min(lo, s.histogram.lo);
            hi = std::max(hi, s.histogram.hi);
            for (auto c : s.histogram.counts) top = std::max(top, c);
        }
    }
    if (!(hi > lo)) hi = lo + 1.0;
    const double ymax = top == 0 ? 1.0 : static_cast<double>(top);
    const auto px = [&](double v) { return L + (v - lo) / (hi - lo) * pw; };
    const auto py = [&](double c) { return T + ph - c / ymax * ph; };

    svg += "<g id=\"axes\" stroke=\"#000000\" stroke-width=\"1\" font-family=\"sans-serif\" font-size=\"11\">\n";
    svg += "<line x1=\"" + fmt(L) + "\" y1=\"" + fmt(T + ph) + "\" x2=\"" + fmt(L + pw) + "\" y2=\"" + fmt(T + ph) + "\"/>\n";
    svg += "<line x1=\"" + fmt(L) + "\" y1=\"" + fmt(T) + "\" x2=\"" + fmt(L) + "\" y2=\"" + fmt(T + ph) + "\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double v = lo + (hi - lo) * i / 4.0;
        svg += "<text x=\"" + fmt(px(v)) + "\" y=\"" + fmt(T + ph + 16) + "\" text-anchor=\"middle\" stroke=\"none\">" +
               fmt(v) + "</text>\n";
        const double c = ymax * i / 4.0;
        svg += "<text x=\"" + fmt(L - 6) + "\" y=\"" + fmt(py(c) + 4) + "\" text-anchor=\"end\" stroke=\"none\">" +
               fmt(c) + "</text>\n";
    }
    svg += "</g>\n";

    for (std::size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        const auto& h = s.histogram;
        svg += "<g fill=\"" + s.color + "\" fill-opacity=\"0.35\" stroke=\"" + s.color + "\">\n";
        const double w = h.counts.empty() ? 0.0 : (h.hi - h.lo) / static_cast<double>(h.counts.size());
        for (std::size_t b = 0; b < h.counts.size(); ++b) {
            if (h.counts[b] == 0) continue;
            const double x0 = px(h.lo + w * static_cast<double>(b));
            const double x1 = px(h.lo + w * static_cast<double>(b + 1));
            const double y = py(static_cast<double>(h.counts[b]));
            svg += "<rect x=\"" + fmt(x0) + "\" y=\"" + fmt(y) + "\" width=\"" + fmt(x1 - x0) + "\" height=\"" +
                   fmt(T + ph - y) + "\"/>\n";
        }
        svg += "</g>\n";
        svg += "<text x=\"" + fmt(L + pw - 4) + "\" y=\"" + fmt(T + 14 + 14 * static_cast<double>(si)) +
               "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\" fill=\"" + s.color + "\">" +
               escape(s.label) + "</text>\n";
    }
    svg += "</svg>\n";
    return svg;
}

std::string render_neighbor_grid_svg(const std::vector<std::vector<DenseVector>>& rows,
                                     std::size_t height, std::size_t width) {
    if (height == 0 || width == 0) throw DomainError("image extents must be >= 1");
    constexpr double cell = 2.0;
    constexpr double gap = 4.0;
    std::size_t cols = 0;
    for (const auto& r : rows) cols = std::max(cols, r.size());
    const double tw = static_cast<double>(width) * cell;
    const double th = static_cast<double>(height) * cell;
    const double W = gap + static_cast<double>(cols) * (tw + gap);
    const double H = gap + static_cast<double>(rows.size()) * (th + gap);
    std::string svg = header(W, H);
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n<g shape-rendering=\"crispEdges\">\n";
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < rows[r].size(); ++c) {
            const auto& img = rows[r][c];
            if (img.size() != height * width) throw DimensionError("image size does not match the grid extents");
            const auto [mn, mx] = std::ranges::minmax(img);
            const double span = mx > mn ? mx - mn : 1.0;
            const double ox = gap + static_cast<double>(c) * (tw + gap);
            const double oy = gap + static_cast<double>(r) * (th + gap);
            for (std::size_t i = 0; i < height; ++i) {
                for (std::size_t j = 0; j < width; ++j) {
                    const int v = static_cast<int>(std::lround((img[i * width + j] - mn) / span * 255.0));
                    char col[8];
                    std::snprintf(col, sizeof col, "#%02x%02x%02x", v, v, v);
                    svg += "<rect x=\"" + fmt(ox + static_cast<double>(j) * cell) + "\" y=\"" +
                           fmt(oy + static_cast<double>(i) * cell) + "\" width=\"" + fmt(cell) +
                           "\" height=\"" + fmt(cell) + "\" fill=\"" + col + "\"/>";
                }
            }
            svg += "\n";
        }
    }
    svg += "</g>\n</svg>\n";
    return svg;
}

}  // namespace masolab
