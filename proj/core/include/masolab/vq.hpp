#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "masolab/linalg.hpp"
#include "masolab/maso.hpp"
#include "masolab/network.hpp"
#include "masolab/partition.hpp"

namespace masolab {

/// Fraction of level-`level` units whose selected pieces differ. Both
/// signatures must contain that level with the same unit count.
double vq_distance(const RegionSignature& a, const RegionSignature& b, std::size_t level);
/// Mean of vq_distance over every level the two signatures share. This
/// multi-level aggregate is a convention of this library.
double vq_distance_mean(const RegionSignature& a, const RegionSignature& b);

struct VqItem {
    std::size_t id = 0;
    DenseVector x;
    std::optional<std::size_t> label;
    RegionSignature signature;  ///< cumulative over every level
};

struct VqCorpus {
    std::uint64_t fingerprint = 0;
    std::vector<VqItem> items;
};

/// Caches the signatures of `inputs` under `net`; ids are the input positions.
VqCorpus build_corpus(const Network& net, std::span<const DenseVector> inputs,
                      std::span<const std::size_t> labels = {});

struct VqQuery {
    std::uint64_t fingerprint = 0;
    DenseVector x;
    RegionSignature signature;
};

VqQuery make_query(const Network& net, std::span<const double> x);

struct Neighbor {
    std::size_t id = 0;
    double distance = 0.0;   ///< VQ distance
    double euclidean = 0.0;  ///< input-space tie breaker
};

/// The k nearest corpus items by VQ distance at `level` (0 selects the
/// mean-over-levels aggregate), ties by Euclidean distance then id. Throws
/// DomainError when the query and corpus come from different networks.
std::vector<Neighbor> nearest_neighbors(const VqCorpus& corpus, const VqQuery& query,
                                        std::size_t level, std::size_t k);

struct Centroids {
    std::vector<DenseVector> mu;

    std::size_t size() const noexcept { return mu.size(); }
    std::size_t dim() const noexcept { return mu.empty() ? 0 : mu.front().size(); }
};

/// B[k,r] := -1/2 ||A[k,r,:]||^2, slopes unchanged.
MasoParams set_kmeans_bias(const MasoParams& p);
/// Single-unit MASO whose pieces are the centroids, with k-means bias.
MasoParams kmeans_maso(const Centroids& c);
/// Centroids read from the slopes of unit k.
Centroids centroids_of_unit(const MasoParams& p, std::size_t k);

/// argmin_r ||mu_r - x||^2, ties to the smallest r.
std::size_t kmeans_assign(const Centroids& c, std::span<const double> x);

struct VoronoiReport {
    std::size_t samples = 0;
    std::size_t checked = 0;     ///< samples times units, minus near ties
    std::size_t near_ties = 0;   ///< skipped: top two distances within tolerance
    std::size_t mismatches = 0;  ///< MASO argmax differs from kmeans_assign
};

/// Compares the MASO argmax of every unit with nearest-centroid assignment to
/// that unit's slope rows on uniform samples from [lo, hi]^D.
VoronoiReport check_voronoi_equiv(const MasoParams& p, std::size_t samples, std::uint64_t seed,
                                  double lo = -3.0, double hi = 3.0, double tie_tolerance = 1e-9);
/// Same comparison on caller-supplied points.
VoronoiReport check_voronoi_equiv(const MasoParams& p, std::span<const DenseVector> points,
                                  double tie_tolerance = 1e-9);

/// Sum over points of the squared distance to the nearest centroid.
double kmeans_objective(const Centroids& c, std::span<const DenseVector> data);

struct LloydResult {
    Centroids centroids;
    std::vector<std::size_t> assignment;
    std::vector<double> objective;  ///< after each assignment step
    std::size_t iterations = 0;
    bool converged = false;
};

/// Lloyd iterations from R distinct data points chosen by `seed`. Empty
/// clusters are re-seeded at the point farthest from its centroid.
LloydResult lloyd(std::span<const DenseVector> data, std::size_t R, std::size_t iters,
                  std::uint64_t seed);

}  // namespace masolab
