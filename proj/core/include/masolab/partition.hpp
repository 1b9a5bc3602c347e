#pragma once

#include <boost/multiprecision/cpp_int.hpp>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "masolab/dataset.hpp"
#include "masolab/hash.hpp"
#include "masolab/network.hpp"

namespace masolab {

using BigInt = boost::multiprecision::cpp_int;

/// Selection codes of a run of levels, canonically serialized. Each level
/// contributes its 1-based level number (u16), unit count K (u32) and K piece
/// indices (u16), all little-endian.
class RegionSignature {
public:
    RegionSignature() = default;
    /// `first_level` is the 1-based level number of codes.front().
    RegionSignature(std::vector<SelectionCode> codes, std::size_t first_level);

    std::size_t levels() const noexcept { return codes_.size(); }
    std::size_t first_level() const noexcept { return first_; }
    /// Code of level `level` (1-based, absolute).
    const SelectionCode& slice(std::size_t level) const;
    const std::string& bytes() const noexcept { return bytes_; }
    std::uint64_t hash() const noexcept { return hash_; }
    /// Hash rendered as 16 lowercase hex digits.
    std::string hex() const;

    friend bool operator==(const RegionSignature& a, const RegionSignature& b) {
        return a.bytes_ == b.bytes_;
    }
    friend bool operator<(const RegionSignature& a, const RegionSignature& b) {
        return a.bytes_ < b.bytes_;
    }

private:
    std::vector<SelectionCode> codes_;
    std::size_t first_ = 1;
    std::string bytes_;
    std::uint64_t hash_ = 0;
};

struct RegionSignatureHash {
    std::size_t operator()(const RegionSignature& s) const noexcept {
        return static_cast<std::size_t>(s.hash());
    }
};

enum class SignatureScope {
    Cumulative,  ///< levels 1..l (the global partition up to level l)
    LevelOnly,   ///< level l alone (the partition induced by that level's input)
};

/// Signature of the region containing trace.input(). Throws DomainError when
/// `level` exceeds the level count (or is 0 with LevelOnly scope).
RegionSignature signature(const Network& net, const ForwardTrace& trace, std::size_t level,
                          SignatureScope scope = SignatureScope::Cumulative);
RegionSignature signature_at(const Network& net, std::span<const double> x, std::size_t level,
                             SignatureScope scope = SignatureScope::Cumulative);

struct Grid2DSpec {
    double x_min = -3.0;
    double x_max = 3.0;
    double y_min = -3.0;
    double y_max = 3.0;
    std::size_t x_resolution = 1024;
    std::size_t y_resolution = 1024;
};

/// Point (ix, iy) of the grid; both ends of each range are included.
DenseVector grid_point(const Grid2DSpec& grid, std::size_t ix, std::size_t iy);

/// Uniform samples from the box [lo, hi]^D.
struct SamplerSpec {
    std::size_t samples = 100000;
    std::uint64_t seed = 0;
    double lo = -3.0;
    double hi = 3.0;
};

struct OccupancyEntry {
    RegionSignature signature;
    std::size_t count = 0;
};

struct PartitionStats {
    std::size_t samples = 0;
    /// Sorted by decreasing count, ties by signature bytes.
    std::vector<OccupancyEntry> occupancy;
    BigInt theoretical_max;

    std::size_t unique() const noexcept { return occupancy.size(); }
    /// Counts in decreasing order.
    std::vector<std::size_t> occupancy_curve() const;
};

PartitionStats estimate_partition(const Network& net, const Grid2DSpec& grid, std::size_t level,
                                  SignatureScope scope = SignatureScope::Cumulative);
PartitionStats estimate_partition(const Network& net, const SamplerSpec& sampler,
                                  std::size_t level,
                                  SignatureScope scope = SignatureScope::Cumulative);
PartitionStats occupancy(const Network& net, const Dataset& data, std::size_t level,
                         SignatureScope scope = SignatureScope::Cumulative);

/// Product over levels 1..level of R^D (pieces per unit to the power of
/// units), exact.
BigInt region_count_upper_bound(const Network& net, std::size_t level);
/// R^D of one level.
BigInt level_region_count_upper_bound(const Network& net, std::size_t level);

}  // namespace masolab
