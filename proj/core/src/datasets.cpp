#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <sstream>

#include "masolab/errors.hpp"
#include "masolab/io.hpp"
#include "masolab/rng.hpp"

namespace masolab {

namespace {

constexpr double kBox = 3.0;

DenseVector clipped(double x, double y) {
    return {std::clamp(x, -kBox, kBox), std::clamp(y, -kBox, kBox)};
}

std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t offset, const std::string& file) {
    if (offset + 4 > b.size())
        throw FormatError(file + ": truncated header at byte offset " + std::to_string(offset) +
                          " (file has " + std::to_string(b.size()) + " bytes)");
    return (std::uint32_t{b[offset]} << 24) | (std::uint32_t{b[offset + 1]} << 16) |
           (std::uint32_t{b[offset + 2]} << 8) | std::uint32_t{b[offset + 3]};
}

std::string hex32(std::uint32_t v) {
    char buf[11];
    std::snprintf(buf, sizeof buf, "0x%08x", v);
    return buf;
}

void expect_magic(const std::vector<unsigned char>& b, std::uint32_t want, const std::string& file) {
    const auto got = be32(b, 0, file);
    if (got != want)
        throw FormatError(file + ": bad magic " + hex32(got) + " at byte offset 0, expected " +
                          hex32(want));
}

void expect_payload(const std::vector<unsigned char>& b, std::size_t offset, std::size_t need,
                    const std::string& file) {
    if (b.size() < offset + need)
        throw FormatError(file + ": truncated payload at byte offset " + std::to_string(b.size()) +
                          ", expected " + std::to_string(offset + need) + " bytes");
}

}  // namespace

Dataset gen_synthetic_2d(const Synthetic2DSpec& spec) {
    if (spec.per_class == 0) throw DomainError("need at least one point per class");
    if (spec.layout == Layout2D::RingsAndBlobs && spec.classes != 4)
        throw DomainError("the rings+blobs layout has exactly 4 classes");
    if (spec.classes < 2) throw DomainError("need at least two classes");
    Dataset d;
    d.classes = spec.classes;
    const CounterRng root(spec.seed);
    for (std::size_t c = 0; c < spec.classes; ++c) {
        CounterRng rng = root.split(c);
        for (std::size_t n = 0; n < spec.per_class; ++n) {
            DenseVector p;
            if (spec.layout == Layout2D::RingsAndBlobs && c < 2) {
                const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
                const double r = (c == 0 ? 1.0 : 2.0) + rng.normal(0.0, 0.08);
                p = clipped(r * std::cos(theta), r * std::sin(theta));
            } else if (spec.layout == Layout2D::RingsAndBlobs) {
                const double cx = c == 2 ? -2.4 : 2.4;
                const double cy = c == 2 ? 2.4 : -2.4;
                p = clipped(cx + rng.normal(0.0, 0.2), cy + rng.normal(0.0, 0.2));
            } else {
                const double theta = 2.0 * std::numbers::pi * static_cast<double>(c) /
                                     static_cast<double>(spec.classes);
                p = clipped(2.0 * std::cos(theta) + rng.normal(0.0, 0.3),
                            2.0 * std::sin(theta) + rng.normal(0.0, 0.3));
            }
            d.inputs.push_back(std::move(p));
            d.labels.push_back(c);
        }
    }
    return d;
}

ImageDataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                      std::size_t limit) {
    if (limit == 0) throw DomainError("limit 0 yields an empty data set");
    const std::string fi = images.string();
    const std::string fl = labels.string();
    const auto ib = read_bytes(images);
    const auto lb = read_bytes(labels);
    expect_magic(ib, 0x00000803, fi);
    expect_magic(lb, 0x00000801, fl);
    const std::size_t n_img = be32(ib, 4, fi);
    const std::size_t rows = be32(ib, 8, fi);
    const std::size_t cols = be32(ib, 12, fi);
    const std::size_t n_lab = be32(lb, 4, fl);
    if (n_img != n_lab)
        throw FormatError("item count mismatch: " + fi + " declares " + std::to_string(n_img) +
                          " images at byte offset 4, " + fl + " declares " + std::to_string(n_lab) +
                          " labels at byte offset 4");
    if (rows == 0 || cols == 0) throw FormatError(fi + ": zero image extent at byte offset 8");
    const std::size_t pixels = rows * cols;
    expect_payload(ib, 16, n_img * pixels, fi);
    expect_payload(lb, 8, n_lab, fl);

    const std::size_t n = std::min(limit, n_img);
    if (n == 0) throw FormatError(fi + ": file contains no items");
    ImageDataset out;
    out.rows = rows;
    out.cols = cols;
    out.mean.assign(pixels, 0.0);
    out.data.inputs.reserve(n);
    std::size_t top = 0;
    for (std::size_t i = 0; i < n; ++i) {
        DenseVector x(pixels);
        const std::size_t base = 16 + i * pixels;
        for (std::size_t p = 0; p < pixels; ++p) {
            x[p] = static_cast<double>(ib[base + p]) / 255.0;
            out.mean[p] += x[p];
        }
        out.data.inputs.push_back(std::move(x));
        out.data.labels.push_back(lb[8 + i]);
        top = std::max<std::size_t>(top, lb[8 + i]);
    }
    for (double& m : out.mean) m /= static_cast<double>(n);
    for (auto& x : out.data.inputs) {
        for (std::size_t p = 0; p < pixels; ++p) x[p] -= out.mean[p];
    }
    out.data.classes = top + 1;
    return out;
}

Dataset load_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    Dataset d;
    std::string line;
    std::size_t lineno = 0;
    std::size_t top = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        std::vector<std::string_view> fields;
        std::string_view rest(line);
        while (true) {
            const auto comma = rest.find(',');
            fields.push_back(rest.substr(0, comma));
            if (comma == std::string_view::npos) break;
            rest.remove_prefix(comma + 1);
        }
        const auto where = path.string() + ":" + std::to_string(lineno);
        if (fields.size() < 2) throw FormatError(where + ": need at least one feature and a label");
        DenseVector x(fields.size() - 1);
        for (std::size_t i = 0; i + 1 < fields.size(); ++i) {
            const auto f = fields[i];
            const auto r = std::from_chars(f.data(), f.data() + f.size(), x[i]);
            if (r.ec != std::errc() || r.ptr != f.data() + f.size())
                throw FormatError(where + ": bad number in column " + std::to_string(i + 1));
        }
        std::size_t label = 0;
        const auto lf = fields.back();
        const auto r = std::from_chars(lf.data(), lf.data() + lf.size(), label);
        if (r.ec != std::errc() || r.ptr != lf.data() + lf.size())
            throw FormatError(where + ": bad label");
        if (!d.inputs.empty() && x.size() != d.inputs.front().size())
            throw FormatError(where + ": inconsistent feature count");
        top = std::max(top, label);
        d.inputs.push_back(std::move(x));
        d.labels.push_back(label);
    }
    d.classes = d.inputs.empty() ? 0 : top + 1;
    validate(d);
    return d;
}

void save_csv(const Dataset& data, const std::filesystem::path& path) {
    std::string text;
    char buf[64];
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (double v : data.inputs[i]) {
            const auto r = std::to_chars(buf, buf + sizeof buf, v);
            text.append(buf, r.ptr);
            text.push_back(',');
        }
        text += std::to_string(data.labels.empty() ? 0 : data.labels[i]);
        text.push_back('\n');
    }
    write_text_file(path, text);
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace masolab
