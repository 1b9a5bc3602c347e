#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "masolab/layers.hpp"
#include "masolab/linalg.hpp"
#include "masolab/maso.hpp"
#include "masolab/rng.hpp"

namespace masolab {

/// Ordered layer stack followed by the linear classifier (W_final, b_final).
struct Network {
    std::vector<Layer> layers;
    DenseMatrix W_final;
    DenseVector b_final;
    Shape3 input_shape;

    std::size_t input_dim() const noexcept { return input_shape.dim(); }
    std::size_t classes() const noexcept { return W_final.rows(); }
    /// Output dimension of the last layer (input width of the classifier).
    std::size_t feature_dim() const;
};

/// Throws DimensionError when adjacent dimensions do not chain.
void validate(const Network& net);

/// Stable hash of the architecture and every parameter bit (including batch
/// norm running statistics).
std::uint64_t fingerprint(const Network& net);

/// Indices into net.layers of the nonlinear layers. Level l (1-based) is the
/// group of layers ending at nonlinear_layers(net)[l-1]: the affine layers in
/// front of a nonlinearity fold into it.
std::vector<std::size_t> nonlinear_layers(const Network& net);
std::size_t level_count(const Network& net);

/// The composite MASO computed by level `level` (1-based). Requires batch norm
/// layers in inference mode.
MasoParams level_maso(const Network& net, std::size_t level);

/// Composite affine map of the trailing affine layers after the last
/// nonlinearity followed by the classifier.
struct AffineMap {
    DenseMatrix A;
    DenseVector b;
};
AffineMap classifier_head(const Network& net);

struct ForwardTrace {
    std::vector<DenseVector> z;          ///< z[0] = x, z[i+1] = output of layer i
    std::vector<SelectionCode> codes;    ///< one per layer
    std::vector<bool> ties;              ///< one per layer
    DenseVector logits;

    const DenseVector& input() const { return z.front(); }
    bool any_tie() const;
};

ForwardTrace forward(const Network& net, std::span<const double> x);
DenseVector predict_logits(const Network& net, std::span<const double> x);
std::size_t predict_class(const Network& net, std::span<const double> x);

/// Signal-dependent affine map f(x) = A x + b at the region of trace.input().
struct AffineDecomposition {
    DenseMatrix A;
    DenseVector b;
};

/// `upto` = nullopt decomposes the logits; `upto` = l decomposes the output of
/// level l (l = 0 is the identity on the input).
AffineDecomposition decompose(const Network& net, const ForwardTrace& trace,
                              std::optional<std::size_t> upto = std::nullopt);

/// Row `c` of the logit decomposition: the matched filter for class c.
DenseVector class_template(const Network& net, const ForwardTrace& trace, std::size_t c);
double template_bias(const Network& net, const ForwardTrace& trace, std::size_t c);

/// Reverse-mode derivative of logit c with respect to the input.
DenseVector input_gradient(const Network& net, std::span<const double> x, std::size_t c);

inline constexpr std::uint64_t kDefaultEnumerationBudget = std::uint64_t{1} << 20;

struct GlobalMatch {
    DenseVector features;  ///< per-unit joint maximum at the last level
    DenseVector logits;    ///< classifier head applied to `features`
    std::uint64_t configurations = 0;
};

/// Per unit of the last level, the maximum of the fully expanded affine value
/// over every joint piece assignment of the earlier levels.
GlobalMatch brute_force_match(const Network& net, std::span<const double> x,
                              std::uint64_t budget = kDefaultEnumerationBudget);
/// Joint assignments brute_force_match would enumerate (saturates at UINT64_MAX).
std::uint64_t enumeration_size(const Network& net);

struct EnsemblePath {
    std::uint64_t mask = 0;     ///< bit l set: block l+1 takes its activation branch
    std::size_t depth = 0;      ///< number of activation branches on the path
    DenseVector contribution;   ///< W_final * (product along the path) * x
};

struct EnsembleExpansion {
    std::vector<EnsemblePath> paths;  ///< 2^blocks paths, ascending mask
    DenseVector bias;                 ///< W_final * b_RES[x] + b_final
};

/// Expands a stack of residual blocks into its ensemble of paths.
/// Throws DomainError if any layer is not a ResidualLayer.
EnsembleExpansion resnet_ensemble_terms(const Network& net, std::span<const double> x);

/// Frobenius norm of the linear part of the level-l decomposition, l = 1..L.
std::vector<double> depth_matrix_norm(const Network& net, std::span<const double> x);

struct ConvexityReport {
    std::size_t pairs = 0;
    std::size_t checks = 0;
    std::size_t violations = 0;
    double worst_excess = 0.0;
};

/// Midpoint convexity of every logit on random pairs drawn uniformly from
/// [-radius, radius]^D.
ConvexityReport check_output_convexity(const Network& net, std::size_t n_pairs,
                                       std::uint64_t seed, double radius = 3.0,
                                       double tolerance = 1e-9);

/// Levels 2.. and the classifier head have nonnegative slopes, so every logit
/// is globally convex (level 1 is unrestricted).
bool has_convex_outputs(const Network& net);

// ---------------------------------------------------------------------------
// Architecture plans and random initialization.

struct DensePlan {
    std::size_t units = 0;
};
struct ConvPlan {
    std::size_t out_channels = 1;
    std::size_t kernel = 3;
    Padding padding = Padding::Valid;
    Stride stride;
};
struct ActivationPlan {
    ActivationKind kind = ActivationKind::ReLU;
    double leak = 0.0;
};
struct PoolPlan {
    PoolKind kind = PoolKind::Max;
    PoolAxis axis = PoolAxis::Spatial;
    Stride window{2, 2};
    Stride stride{2, 2};
};
struct BatchNormPlan {
    double eps = 1e-5;
    double momentum = 0.9;
};
enum class SkipKind { Identity, Dense };
struct ResidualPlan {
    ActivationKind kind = ActivationKind::ReLU;
    double leak = 0.0;
    SkipKind skip = SkipKind::Identity;
};

using LayerPlan =
    std::variant<DensePlan, ConvPlan, ActivationPlan, PoolPlan, BatchNormPlan, ResidualPlan>;

struct InitOptions {
    double weight_scale = 1.0;  ///< multiplies the He standard deviation
    double bias_scale = 0.0;    ///< biases ~ N(0, bias_scale)
    bool nonnegative = false;   ///< absolute values for every layer after the first
};

Network make_network(Shape3 input_shape, std::span<const LayerPlan> plan, std::size_t classes,
                     std::uint64_t seed, InitOptions init = {});

}  // namespace masolab
