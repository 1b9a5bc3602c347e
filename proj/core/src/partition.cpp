#include "masolab/partition.hpp"

#include <algorithm>
#include <cstdio>
#include <unordered_map>

#include "masolab/errors.hpp"
#include "masolab/rng.hpp"

namespace masolab {

namespace {

void put_u16(std::string& out, std::uint64_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

void put_u32(std::string& out, std::uint64_t v) {
    put_u16(out, v & 0xFFFF);
    put_u16(out, (v >> 16) & 0xFFFF);
}

}  // namespace

RegionSignature::RegionSignature(std::vector<SelectionCode> codes, std::size_t first_level)
    : codes_(std::move(codes)), first_(first_level) {
    for (std::size_t l = 0; l < codes_.size(); ++l) {
        const auto& code = codes_[l];
        if (first_ + l > 0xFFFF) throw DomainError("level number does not fit the signature layout");
        if (code.size() > 0xFFFFFFFFULL) throw DomainError("unit count does not fit the signature layout");
        put_u16(bytes_, first_ + l);
        put_u32(bytes_, code.size());
        for (auto r : code.index) {
            if (r > 0xFFFF) throw DomainError("piece index does not fit the signature layout");
            put_u16(bytes_, r);
        }
    }
    hash_ = fnv1a64(bytes_);
}

const SelectionCode& RegionSignature::slice(std::size_t level) const {
    if (level < first_ || level >= first_ + codes_.size())
        throw DomainError("level " + std::to_string(level) + " is not part of this signature");
    return codes_[level - first_];
}

std::string RegionSignature::hex() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash_));
    return buf;
}

RegionSignature signature(const Network& net, const ForwardTrace& trace, std::size_t level,
                          SignatureScope scope) {
    const auto nl = nonlinear_layers(net);
    if (level > nl.size())
        throw DomainError("level " + std::to_string(level) + " exceeds the " +
                          std::to_string(nl.size()) + " levels of the network");
    if (trace.codes.size() != net.layers.size())
        throw DimensionError("trace does not belong to this network");
    if (scope == SignatureScope::LevelOnly) {
        if (level == 0) throw DomainError("level-only signatures need level >= 1");
        return RegionSignature({trace.codes[nl[level - 1]]}, level);
    }
    std::vector<SelectionCode> codes;
    codes.reserve(level);
    for (std::size_t l = 0; l < level; ++l) codes.push_back(trace.codes[nl[l]]);
    return RegionSignature(std::move(codes), 1);
}

RegionSignature signature_at(const Network& net, std::span<const double> x, std::size_t level,
                             SignatureScope scope) {
    return signature(net, forward(net, x), level, scope);
}

DenseVector grid_point(const Grid2DSpec& grid, std::size_t ix, std::size_t iy) {
    const auto at = [](double lo, double hi, std::size_t i, std::size_t n) {
        return lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    };
    return {at(grid.x_min, grid.x_max, ix, grid.x_resolution),
            at(grid.y_min, grid.y_max, iy, grid.y_resolution)};
}

std::vector<std::size_t> PartitionStats::occupancy_curve() const {
    std::vector<std::size_t> c;
    c.reserve(occupancy.size());
    for (const auto& e : occupancy) c.push_back(e.count);
    return c;
}

namespace {

class Counter {
public:
    void add(RegionSignature s) {
        ++samples_;
        auto [it, inserted] = index_.try_emplace(std::move(s), 0);
        ++it->second;
    }

    PartitionStats finish(BigInt bound) && {
        PartitionStats st;
        st.samples = samples_;
        st.theoretical_max = std::move(bound);
        st.occupancy.reserve(index_.size());
        for (auto& [sig, count] : index_) st.occupancy.push_back({sig, count});
        std::ranges::sort(st.occupancy, [](const OccupancyEntry& a, const OccupancyEntry& b) {
            if (a.count != b.count) return a.count > b.count;
            return a.signature < b.signature;
        });
        return st;
    }

private:
    std::size_t samples_ = 0;
    std::unordered_map<RegionSignature, std::size_t, RegionSignatureHash> index_;
};

BigInt bound_for(const Network& net, std::size_t level, SignatureScope scope) {
    return scope == SignatureScope::Cumulative ? region_count_upper_bound(net, level)
                                               : level_region_count_upper_bound(net, level);
}

}  // namespace

PartitionStats estimate_partition(const Network& net, const Grid2DSpec& grid, std::size_t level,
                                  SignatureScope scope) {
    if (net.input_dim() != 2) throw DimensionError("grid partitions need a 2-D input");
    if (grid.x_resolution < 2 || grid.y_resolution < 2)
        throw DomainError("grid resolution must be >= 2 per axis");
    if (!(grid.x_max > grid.x_min) || !(grid.y_max > grid.y_min))
        throw DomainError("grid ranges must be nonempty");
    auto bound = bound_for(net, level, scope);
    Counter counter;
    for (std::size_t iy = 0; iy < grid.y_resolution; ++iy) {
        for (std::size_t ix = 0; ix < grid.x_resolution; ++ix)
            counter.add(signature_at(net, grid_point(grid, ix, iy), level, scope));
    }
    return std::move(counter).finish(std::move(bound));
}

PartitionStats estimate_partition(const Network& net, const SamplerSpec& sampler,
                                  std::size_t level, SignatureScope scope) {
    if (!(sampler.hi > sampler.lo)) throw DomainError("sampler box must be nonempty");
    auto bound = bound_for(net, level, scope);
    Counter counter;
    CounterRng rng(sampler.seed);
    DenseVector x(net.input_dim());
    for (std::size_t n = 0; n < sampler.samples; ++n) {
        for (double& v : x) v = rng.uniform(sampler.lo, sampler.hi);
        counter.add(signature_at(net, x, level, scope));
    }
    return std::move(counter).finish(std::move(bound));
}

PartitionStats occupancy(const Network& net, const Dataset& data, std::size_t level,
                         SignatureScope scope) {
    auto bound = bound_for(net, level, scope);
    Counter counter;
    for (const auto& x : data.inputs) counter.add(signature_at(net, x, level, scope));
    return std::move(counter).finish(std::move(bound));
}

BigInt level_region_count_upper_bound(const Network& net, std::size_t level) {
    const auto nl = nonlinear_layers(net);
    if (level == 0 || level > nl.size())
        throw DomainError("level " + std::to_string(level) + " is out of range");
    const Layer& layer = net.layers[nl[level - 1]];
    BigInt r = piece_count(layer);
    BigInt out = 1;
    for (std::size_t k = 0; k < out_dim(layer); ++k) out *= r;
    return out;
}

BigInt region_count_upper_bound(const Network& net, std::size_t level) {
    const auto nl = nonlinear_layers(net);
    if (level > nl.size()) throw DomainError("level " + std::to_string(level) + " is out of range");
    BigInt out = 1;
    for (std::size_t l = 1; l <= level; ++l) out *= level_region_count_upper_bound(net, l);
    return out;
}

}  // namespace masolab
