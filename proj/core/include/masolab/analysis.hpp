#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "masolab/dataset.hpp"
#include "masolab/linalg.hpp"
#include "masolab/maso.hpp"
#include "masolab/network.hpp"
#include "masolab/train.hpp"

namespace masolab {

// ---------------------------------------------------------------------------
// Lipschitz constants (squared-norm form: ||f(a)-f(b)||^2 <= kappa ||a-b||^2).

/// sum_k max_r ||A[k,r,:]||^2
double layer_lipschitz(const MasoParams& p);

struct LipschitzEntry {
    std::string name;       ///< "layer3:activation", "classifier", ...
    double maso_bound = 0;  ///< layer_lipschitz of the layer's MASO
    /// Operator-table bound: ||W||_F^2 for dense/conv/classifier, D^2 for
    /// activations and max pooling, the MASO bound otherwise.
    double operator_bound = 0;
    double used = 0;  ///< min of the two
};

struct LipschitzReport {
    std::vector<LipschitzEntry> entries;  ///< one per layer, then the classifier
    double softmax = 0;                   ///< (C-1)/C^2
    double product = 0;                   ///< product of `used` over entries (logits)
    double product_with_softmax = 0;      ///< product * softmax
};

LipschitzReport operator_lipschitz_table(const Network& net);
/// Product bound for the logits.
double network_lipschitz(const Network& net);

/// max ||f(a)-f(b)||^2 / ||a-b||^2 over random pairs in [-radius, radius]^D.
double empirical_lipschitz_ratio(const Network& net, std::size_t pairs, std::uint64_t seed,
                                 double radius = 3.0);

/// ||diag(p) - p p^T||_F^2
double softmax_jacobian_sq_norm(std::span<const double> p);

struct SoftmaxLipschitzResult {
    double value = 0;         ///< numeric maximum over the simplex
    DenseVector maximizer;
    double uniform_value = 0; ///< squared Jacobian norm at the uniform point
};

/// Numerically maximizes softmax_jacobian_sq_norm over the probability simplex
/// (exhaustive lattice for small C, seeded random starts otherwise, then a
/// pairwise mass-transfer refinement).
SoftmaxLipschitzResult softmax_lipschitz_max(std::size_t C, std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Collinear templates.

/// Rows +sqrt((C-1) alpha / C) x for class y, -sqrt(alpha / (C (C-1))) x otherwise.
DenseMatrix collinear_closed_form(std::span<const double> x, std::size_t y, std::size_t C,
                                  double alpha);

/// Largest |entry| of the Lagrangian gradient (p_c - [c=y]) x + 2 lambda A_c
/// with the stationary multiplier, together with the constraint violation.
struct KktResidual {
    double gradient = 0;
    double constraint = 0;
    double lambda = 0;
};
KktResidual collinear_kkt_residual(const DenseMatrix& A, std::span<const double> x, std::size_t y,
                                   double alpha);

struct CollinearResult {
    DenseMatrix optimized;
    DenseMatrix predicted;
    double max_deviation = 0;          ///< max |optimized - predicted|
    KktResidual kkt_closed_form;
    KktResidual kkt_optimized;
    std::size_t iterations = 0;
};

/// Projected gradient descent on the cross-entropy of logits A x over
/// sum_c ||A_c||^2 = alpha, from a seeded random start. Throws
/// ConvergenceError when the tangential gradient stays above `tol`.
CollinearResult collinear_optimize(std::span<const double> x, std::size_t y, std::size_t C,
                                   double alpha, double tol = 1e-10,
                                   std::size_t max_iters = 200000, std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Template statistics.

struct Histogram {
    double lo = 0;
    double hi = 1;
    std::vector<std::size_t> counts;

    double bin_width() const { return (hi - lo) / static_cast<double>(counts.size()); }
    std::size_t total() const;
};

/// Values outside [lo, hi] are clamped into the end bins.
Histogram make_histogram(std::span<const double> values, double lo, double hi, std::size_t bins);

double cosine_similarity(std::span<const double> a, std::span<const double> b);
/// Cosines of every unordered pair of rows.
std::vector<double> pairwise_row_cosines(const DenseMatrix& M);

struct TemplateStats {
    std::vector<double> correct;    ///< <template_y, x> over examples
    std::vector<double> incorrect;  ///< <template_c, x>, c != y
    std::vector<double> cosines;    ///< template pairs of the same example
    Histogram correct_hist;
    Histogram incorrect_hist;
    Histogram cosine_hist;
    double correct_mean = 0;
    double incorrect_mean = 0;
    double mean_cosine = 0;
};

TemplateStats template_stats(const Network& net, const Dataset& data, std::size_t bins = 50);

struct BiasAblation {
    double full_accuracy = 0;           ///< argmax of A[x] x + b[x]
    double template_only_accuracy = 0;  ///< argmax of A[x] x
};

BiasAblation bias_ablation_eval(const Network& net, const Dataset& data);

// ---------------------------------------------------------------------------
// Universality trend.

using TargetMap = std::function<DenseVector(std::span<const double>)>;

struct UniversalityConfig {
    std::vector<std::size_t> widths{8, 16, 32, 64};
    std::size_t input_dim = 2;
    std::size_t output_dim = 1;
    std::size_t train_samples = 512;
    std::size_t test_samples = 2048;
    double lo = -1.0;
    double hi = 1.0;
    std::uint64_t seed = 0;
    TrainConfig train;
};

struct WidthError {
    std::size_t width = 0;
    double train_mse = 0;
    double test_mse = 0;
    bool diverged = false;
};

/// Trains input -> dense(width) -> ReLU -> linear nets on samples of `target`
/// and reports the mean squared error per width.
std::vector<WidthError> universality_experiment(const TargetMap& target,
                                                const UniversalityConfig& cfg);

/// Regression data set of uniform samples of `target` on [lo, hi]^D.
Dataset sample_target(const TargetMap& target, std::size_t input_dim, std::size_t n, double lo,
                      double hi, std::uint64_t seed);

struct MaxAffineFit {
    MasoParams spline{1, 1, 1};
    double mse = 0;
    std::size_t iterations = 0;
};

/// Least-squares fit of a single max-affine unit with R pieces by alternating
/// partition assignment and per-piece least squares.
MaxAffineFit fit_max_affine(std::span<const DenseVector> points, std::span<const double> values,
                            std::size_t R, std::size_t iters, std::uint64_t seed);

}  // namespace masolab
