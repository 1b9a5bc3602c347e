#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "masolab/dataset.hpp"
#include "masolab/layers.hpp"
#include "masolab/network.hpp"

namespace masolab {

DenseVector softmax(std::span<const double> logits);
double log_sum_exp(std::span<const double> logits);
/// -logits[y] + log sum_c exp(logits[c]).
double cross_entropy(std::span<const double> logits, std::size_t y);
/// Softmax Jacobian diag(p) - p p^T at the probabilities p.
DenseMatrix softmax_jacobian(std::span<const double> p);

/// Sum over ordered pairs c1 != c2 of <W_c1, W_c2>^2 (both orders counted).
double ortho_penalty(const DenseMatrix& W);
DenseMatrix ortho_penalty_gradient(const DenseMatrix& W);
/// Largest |<W_c1, W_c2>| over c1 != c2.
double max_offdiagonal_gram(const DenseMatrix& W);

/// Normalizes a batch feature-wise. Train mode uses batch statistics (batch
/// size >= 2) and folds them into the running statistics; infer mode uses the
/// running statistics.
std::vector<DenseVector> batchnorm_forward(BatchNormState& state,
                                           std::span<const DenseVector> batch);

/// Switches every batch norm layer of the network.
void set_batchnorm_mode(Network& net, BatchNormMode mode);

/// Folds each inference-mode batch norm into the dense layer right before it
/// (W <- diag(a) W, b <- a b + s); any other batch norm becomes a diagonal
/// dense layer.
Network fold_batchnorms(const Network& net);

enum class Optimizer { Sgd, Adam };
enum class LossKind { CrossEntropy, MeanSquared };

struct TrainConfig {
    double lr = 1e-2;
    std::size_t epochs = 10;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    Optimizer optimizer = Optimizer::Adam;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    LossKind loss = LossKind::CrossEntropy;
    double lambda_ortho = 0.0;
    double lr_decay = 1.0;  ///< learning rate multiplier applied after each epoch
};

/// Throws DomainError when lr <= 0, lambda_ortho < 0, batch_size == 0, etc.
void validate(const TrainConfig& cfg);

/// Named view of one parameter tensor of a network.
struct ParamRef {
    std::string name;
    std::span<double> values;
};

/// Every trainable tensor in a fixed order: per layer (dense W,b; conv
/// filters, channel bias; batch norm gamma, zeta; residual C, b_C, C_skip,
/// b_skip) then the classifier W_final, b_final.
std::vector<ParamRef> parameters(Network& net);
/// Rebuilds matrices derived from parameters (conv super-matrices).
void refresh_derived(Network& net);

/// Gradient tensors aligned with parameters(net).
struct Gradients {
    std::vector<std::vector<double>> tensors;
};

struct BatchNormStats {
    std::size_t layer = 0;
    DenseVector mean;
    DenseVector var;
};

struct BackwardResult {
    double loss = 0.0;       ///< data_loss + lambda_ortho * penalty
    double data_loss = 0.0;  ///< mean over the batch
    double penalty = 0.0;
    Gradients grads;
    std::vector<BatchNormStats> batch_stats;  ///< for train-mode batch norms
};

/// Gradient of the mean loss over `batch` (indices into data) plus the
/// orthogonality penalty on W_final. Does not modify the network.
BackwardResult backward(const Network& net, const Dataset& data,
                        std::span<const std::size_t> batch, const TrainConfig& cfg);

/// Applies the exponential running-statistics update from a backward pass.
void update_running_stats(Network& net, std::span<const BatchNormStats> stats);

void sgd_step(std::span<ParamRef> params, const Gradients& grads, double lr);

struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    std::size_t step = 0;
};

void adam_step(std::span<ParamRef> params, const Gradients& grads, const TrainConfig& cfg,
               double lr, AdamState& state);

struct EpochRecord {
    std::size_t epoch = 0;
    double loss = 0.0;
    double accuracy = 0.0;
    double penalty = 0.0;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    bool single_class = false;  ///< the data set had only one distinct label
};

/// Mini-batch training; deterministic for a fixed seed. Batch norm layers are
/// left in inference mode afterwards.
TrainHistory train(Network& net, const Dataset& data, const TrainConfig& cfg);

struct Evaluation {
    double loss = 0.0;
    double accuracy = 0.0;
};

Evaluation evaluate(const Network& net, const Dataset& data, LossKind loss);

}  // namespace masolab
