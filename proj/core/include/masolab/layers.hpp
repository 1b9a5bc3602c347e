#pragma once

#include <cstddef>
#include <span>
#include <variant>
#include <vector>

#include "masolab/linalg.hpp"
#include "masolab/maso.hpp"
#include "masolab/structured.hpp"

namespace masolab {

struct DenseLayer {
    DenseMatrix W;
    DenseVector b;
};

/// Multichannel convolution realized as its dense super-matrix. The derived
/// members are rebuilt by refresh() whenever filters or geometry change.
struct ConvLayer {
    FilterBank filters;
    DenseVector channel_bias;  ///< one entry per output channel
    Shape3 in_shape;
    Padding padding = Padding::Valid;
    Stride stride;

    Shape3 out_shape;
    DenseMatrix matrix;
    DenseVector bias;
    std::vector<ConvTap> taps;

    void refresh();
};

ConvLayer make_conv_layer(FilterBank filters, DenseVector channel_bias, Shape3 in_shape,
                          Padding padding, Stride stride);

struct ActivationLayer {
    ActivationKind kind = ActivationKind::ReLU;
    double leak = 0.0;  ///< negative-side slope for LeakyReLU
    std::size_t dim = 0;
};

struct PoolLayer {
    PoolKind kind = PoolKind::Max;
    PoolAxis axis = PoolAxis::Spatial;
    Shape3 in_shape;
    Stride window;
    Stride stride;

    PoolRegions regions;

    void refresh();
};

PoolLayer make_pool_layer(PoolKind kind, PoolAxis axis, Shape3 in_shape, Stride window,
                          Stride stride);

enum class BatchNormMode { Train, Infer };

/// Per-feature normalization (z - m) / sqrt(v + eps) * gamma + zeta.
struct BatchNormState {
    DenseVector gamma;
    DenseVector zeta;
    DenseVector running_mean;
    DenseVector running_var;
    double eps = 1e-5;
    double momentum = 0.9;  ///< running = momentum * running + (1 - momentum) * batch
    BatchNormMode mode = BatchNormMode::Infer;

    std::size_t dim() const noexcept { return gamma.size(); }
};

BatchNormState make_batchnorm_state(std::size_t dim, double eps = 1e-5, double momentum = 0.9);

struct BatchNormLayer {
    BatchNormState state;
};

/// z -> act(C z + b_C) + C_skip z + b_skip
struct ResidualLayer {
    DenseMatrix C;
    DenseVector b_C;
    ActivationKind kind = ActivationKind::ReLU;
    double leak = 0.0;
    DenseMatrix C_skip;
    DenseVector b_skip;
};

using Layer = std::variant<DenseLayer, ConvLayer, ActivationLayer, PoolLayer, BatchNormLayer,
                           ResidualLayer>;

std::size_t in_dim(const Layer& layer);
std::size_t out_dim(const Layer& layer);
/// Number of affine pieces per output unit (1 for affine layers).
std::size_t piece_count(const Layer& layer);
/// Activation, max pooling and residual layers carry a nontrivial selection.
bool is_nonlinear(const Layer& layer);
const char* layer_kind_name(const Layer& layer);

struct LayerOutput {
    DenseVector z;
    SelectionCode code;
    bool tie = false;
};

/// Inference-mode evaluation (batch norm uses running statistics).
LayerOutput layer_forward(const Layer& layer, std::span<const double> x);

/// The layer as a single MASO (affine layers are degenerate MASOs).
MasoParams layer_maso(const Layer& layer);

/// Affine map selected by `code`, kept in factored form
///     x -> gate .* (linear x) + skip x + offset
/// where an empty `linear` means identity and empty `gate` / `skip` are absent.
struct SelectedMap {
    DenseMatrix linear;
    DenseVector gate;
    DenseMatrix skip;
    DenseVector offset;
    std::size_t in = 0;
    std::size_t out = 0;
};

SelectedMap selected_map(const Layer& layer, const SelectionCode& code);
DenseMatrix to_dense(const SelectedMap& map);
DenseVector apply_map(const SelectedMap& map, std::span<const double> x);
/// G * map, with G having map.out columns.
DenseMatrix left_multiply(const DenseMatrix& G, const SelectedMap& map);
/// map * P, with P having map.in rows (linear part only).
DenseMatrix right_multiply(const SelectedMap& map, const DenseMatrix& P);

/// Reverse-mode step: gradient w.r.t. the layer input given the gradient
/// w.r.t. its output, under the selection recorded in `code`.
DenseVector backprop_input(const Layer& layer, const SelectionCode& code,
                           std::span<const double> upstream);

/// Slope of the winning piece for elementwise activations.
double activation_slope(ActivationKind kind, double leak, std::uint32_t piece);

/// Per-feature affine (scale, shift) equivalent to inference-mode batch norm.
struct FoldedBatchNorm {
    DenseVector scale;
    DenseVector shift;
};

/// Throws DomainError when the state is in train mode.
FoldedBatchNorm fold_batchnorm(const BatchNormState& state);

}  // namespace masolab
