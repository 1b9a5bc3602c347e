#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "masolab/linalg.hpp"
#include "masolab/structured.hpp"

namespace masolab {

/// Max-affine spline operator with K outputs, R affine pieces per output and
/// input dimension D:
///     y_k = max_r <A[k,r,:], x> + B[k,r].
/// R == 1 is the degenerate (purely affine) case.
class MasoParams {
public:
    MasoParams() = default;
    /// Zero slopes and offsets.
    MasoParams(std::size_t K, std::size_t R, std::size_t D);
    /// slopes: K*R*D row-major (k, r, d); offsets: K*R row-major (k, r).
    MasoParams(std::size_t K, std::size_t R, std::size_t D, std::vector<double> slopes,
               std::vector<double> offsets);

    std::size_t outputs() const noexcept { return K_; }
    std::size_t regions() const noexcept { return R_; }
    std::size_t inputs() const noexcept { return D_; }
    bool degenerate() const noexcept { return R_ == 1; }

    std::span<const double> slope(std::size_t k, std::size_t r) const noexcept {
        return {slopes_.data() + (k * R_ + r) * D_, D_};
    }
    std::span<double> slope(std::size_t k, std::size_t r) noexcept {
        return {slopes_.data() + (k * R_ + r) * D_, D_};
    }
    double offset(std::size_t k, std::size_t r) const noexcept { return offsets_[k * R_ + r]; }
    double& offset(std::size_t k, std::size_t r) noexcept { return offsets_[k * R_ + r]; }

    std::span<const double> slopes() const noexcept { return slopes_; }
    std::span<const double> offsets() const noexcept { return offsets_; }

    /// <A[k,r,:], x> + B[k,r]
    double piece(std::size_t k, std::size_t r, std::span<const double> x) const;

    friend bool operator==(const MasoParams&, const MasoParams&) = default;

private:
    std::size_t K_ = 0;
    std::size_t R_ = 0;
    std::size_t D_ = 0;
    std::vector<double> slopes_;
    std::vector<double> offsets_;
};

/// Winning piece per output unit, 0-based (piece r of a 1..R
/// numbering is stored as r-1).
struct SelectionCode {
    std::vector<std::uint32_t> index;

    std::size_t size() const noexcept { return index.size(); }
    friend bool operator==(const SelectionCode&, const SelectionCode&) = default;
};

struct MasoOutput {
    DenseVector y;
    SelectionCode code;
    /// True when some unit had two or more pieces attaining the max exactly;
    /// the smallest such piece index is reported.
    bool tie = false;
};

MasoOutput maso_eval(const MasoParams& p, std::span<const double> x);

struct GradientSelection {
    SelectionCode code;
    bool tie = false;
};

/// Recovers the selection by differentiating the running max with respect to
/// each piece value; the winner is the piece that receives unit derivative.
GradientSelection selection_from_gradient(const MasoParams& p, std::span<const double> x);

struct LocalAffine {
    DenseMatrix A;  ///< K x D
    DenseVector b;  ///< K
};

/// Rows of the winning pieces: maso_eval(p, x).y == A x + b.
LocalAffine maso_affine_at(const MasoParams& p, std::span<const double> x);
LocalAffine maso_affine_for_code(const MasoParams& p, const SelectionCode& code);

struct SoftConfig {
    double beta = 0.5;  ///< temperature in (0, 1)
};

/// Entropy-regularized evaluation: softmax(beta/(1-beta) * pieces)-weighted
/// average of the pieces. beta -> 1 recovers maso_eval, beta -> 0 the piece mean.
DenseVector maso_eval_soft(const MasoParams& p, std::span<const double> x, SoftConfig cfg);

enum class ActivationKind { ReLU, LeakyReLU, Abs };

MasoParams make_affine_maso(const DenseMatrix& W, std::span<const double> b);
/// Elementwise activation on D units; `leak` is the negative-side slope of LeakyReLU.
MasoParams make_activation_maso(ActivationKind kind, std::size_t D, double leak = 0.0);

enum class PoolKind { Max, Average };

/// Max pooling has R equal to the (common) region size; average pooling is degenerate.
MasoParams make_pool_maso(const PoolRegions& regions, PoolKind kind);

/// q with maso_eval(q, x) == maso_eval(act, W x + b) for all x.
MasoParams compose_affine_into_maso(const MasoParams& act, const DenseMatrix& W,
                                    std::span<const double> b);

/// Residual layer z -> act(C z + b_C) + C_skip z + b_skip as a single MASO.
MasoParams compose_skip(const MasoParams& act, const DenseMatrix& C, std::span<const double> b_C,
                        const DenseMatrix& C_skip, std::span<const double> b_skip);

/// MASO whose offsets are folded into one input translation:
///     y_k = max_r <A[k,r,:], x + shift>.
struct SimplifiedMaso {
    MasoParams slopes;  ///< offsets are all zero
    DenseVector shift;
};

inline constexpr double kSimplifyResidualTolerance = 1e-8;

/// Least-squares solve of <A[k,r,:], shift> = B[k,r]; throws
/// InconsistentSystemError when the worst residual exceeds the tolerance.
SimplifiedMaso to_simplified(const MasoParams& p,
                             double tolerance = kSimplifyResidualTolerance);
DenseVector simplified_eval(const SimplifiedMaso& s, std::span<const double> x);

/// True iff every slope entry is >= 0 (the MASO is nondecreasing in each input).
bool is_nondecreasing(const MasoParams& p);

}  // namespace masolab
