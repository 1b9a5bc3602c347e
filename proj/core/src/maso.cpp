#include "masolab/maso.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>

#include "masolab/errors.hpp"

namespace masolab {

namespace {

void require_dim(std::size_t got, std::size_t want, const char* what) {
    if (got != want) {
        throw DimensionError(std::string(what) + ": expected dimension " + std::to_string(want) +
                             ", got " + std::to_string(got));
    }
}

}  // namespace

MasoParams::MasoParams(std::size_t K, std::size_t R, std::size_t D)
    : K_(K), R_(R), D_(D), slopes_(K * R * D, 0.0), offsets_(K * R, 0.0) {
    if (R == 0) throw DomainError("a MASO needs at least one piece per unit");
}

MasoParams::MasoParams(std::size_t K, std::size_t R, std::size_t D, std::vector<double> slopes,
                       std::vector<double> offsets)
    : K_(K), R_(R), D_(D), slopes_(std::move(slopes)), offsets_(std::move(offsets)) {
    if (R == 0) throw DomainError("a MASO needs at least one piece per unit");
    require_dim(slopes_.size(), K * R * D, "MasoParams slopes");
    require_dim(offsets_.size(), K * R, "MasoParams offsets");
    if (!all_finite(slopes_) || !all_finite(offsets_))
        throw DomainError("MasoParams entries must be finite");
}

double MasoParams::piece(std::size_t k, std::size_t r, std::span<const double> x) const {
    return dot(slope(k, r), x) + offset(k, r);
}

MasoOutput maso_eval(const MasoParams& p, std::span<const double> x) {
    require_dim(x.size(), p.inputs(), "maso_eval");
    MasoOutput out;
    out.y.resize(p.outputs());
    out.code.index.resize(p.outputs());
    for (std::size_t k = 0; k < p.outputs(); ++k) {
        double best = p.piece(k, 0, x);
        std::uint32_t arg = 0;
        std::size_t winners = 1;
        for (std::size_t r = 1; r < p.regions(); ++r) {
            const double v = p.piece(k, r, x);
            if (v > best) {
                best = v;
                arg = static_cast<std::uint32_t>(r);
                winners = 1;
            } else if (v == best) {
                ++winners;
            }
        }
        if (winners > 1) out.tie = true;
        out.y[k] = best;
        out.code.index[k] = arg;
    }
    return out;
}

GradientSelection selection_from_gradient(const MasoParams& p, std::span<const double> x) {
    require_dim(x.size(), p.inputs(), "selection_from_gradient");
    GradientSelection sel;
    sel.code.index.resize(p.outputs());
    std::vector<double> value(p.regions());
    std::vector<bool> replaced(p.regions());
    std::vector<double> grad(p.regions());
    for (std::size_t k = 0; k < p.outputs(); ++k) {
        for (std::size_t r = 0; r < p.regions(); ++r) value[r] = p.piece(k, r, x);
        // Forward: m_0 = v_0, m_r = max(m_{r-1}, v_r) keeping the running value on equality.
        double m = value[0];
        replaced[0] = true;
        for (std::size_t r = 1; r < p.regions(); ++r) {
            replaced[r] = value[r] > m;
            if (replaced[r]) m = value[r];
        }
        // Reverse: dm/dm_r flows either to v_r (if it replaced) or to m_{r-1}.
        double upstream = 1.0;
        std::fill(grad.begin(), grad.end(), 0.0);
        for (std::size_t r = p.regions(); r-- > 0;) {
            if (replaced[r]) {
                grad[r] = upstream;
                upstream = 0.0;
            }
        }
        std::size_t winners = 0;
        for (std::size_t r = 0; r < p.regions(); ++r) {
            if (grad[r] == 1.0) sel.code.index[k] = static_cast<std::uint32_t>(r);
            winners += value[r] == m;
        }
        if (winners > 1) sel.tie = true;
    }
    return sel;
}

LocalAffine maso_affine_for_code(const MasoParams& p, const SelectionCode& code) {
    require_dim(code.size(), p.outputs(), "maso_affine_for_code");
    LocalAffine out{DenseMatrix(p.outputs(), p.inputs()), DenseVector(p.outputs())};
    for (std::size_t k = 0; k < p.outputs(); ++k) {
        const std::size_t r = code.index[k];
        if (r >= p.regions()) throw DomainError("selection index out of range");
        std::ranges::copy(p.slope(k, r), out.A.row(k).begin());
        out.b[k] = p.offset(k, r);
    }
    return out;
}

LocalAffine maso_affine_at(const MasoParams& p, std::span<const double> x) {
    return maso_affine_for_code(p, maso_eval(p, x).code);
}

DenseVector maso_eval_soft(const MasoParams& p, std::span<const double> x, SoftConfig cfg) {
    if (!(cfg.beta > 0.0 && cfg.beta < 1.0))
        throw DomainError("soft MASO temperature beta must lie in (0, 1)");
    require_dim(x.size(), p.inputs(), "maso_eval_soft");
    const double gain = cfg.beta / (1.0 - cfg.beta);
    DenseVector y(p.outputs());
    std::vector<double> value(p.regions());
    for (std::size_t k = 0; k < p.outputs(); ++k) {
        double top = -INFINITY;
        for (std::size_t r = 0; r < p.regions(); ++r) {
            value[r] = p.piece(k, r, x);
            top = std::max(top, gain * value[r]);
        }
        double norm = 0.0;
        double acc = 0.0;
        for (std::size_t r = 0; r < p.regions(); ++r) {
            const double w = std::exp(gain * value[r] - top);
            norm += w;
            acc += w * value[r];
        }
        y[k] = acc / norm;
    }
    return y;
}

MasoParams make_affine_maso(const DenseMatrix& W, std::span<const double> b) {
    require_dim(b.size(), W.rows(), "make_affine_maso bias");
    auto d = W.data();
    return MasoParams(W.rows(), 1, W.cols(), {d.begin(), d.end()}, {b.begin(), b.end()});
}

MasoParams make_activation_maso(ActivationKind kind, std::size_t D, double leak) {
    if (kind == ActivationKind::LeakyReLU && !(leak > 0.0))
        throw DomainError("leaky ReLU slope must be > 0");
    MasoParams p(D, 2, D);
    for (std::size_t k = 0; k < D; ++k) {
        switch (kind) {
            case ActivationKind::ReLU: break;
            case ActivationKind::LeakyReLU: p.slope(k, 0)[k] = leak; break;
            case ActivationKind::Abs: p.slope(k, 0)[k] = -1.0; break;
        }
        p.slope(k, 1)[k] = 1.0;
    }
    return p;
}

MasoParams make_pool_maso(const PoolRegions& regions, PoolKind kind) {
    validate_pool_regions(regions);
    const std::size_t K = regions.size();
    if (kind == PoolKind::Average) {
        MasoParams p(K, 1, regions.input_dim);
        for (std::size_t k = 0; k < K; ++k) {
            const double w = 1.0 / static_cast<double>(regions.regions[k].size());
            for (std::size_t i : regions.regions[k]) p.slope(k, 0)[i] += w;
        }
        return p;
    }
    std::size_t R = 0;
    for (const auto& r : regions.regions) R = std::max(R, r.size());
    MasoParams p(K, R, regions.input_dim);
    for (std::size_t k = 0; k < K; ++k) {
        const auto& reg = regions.regions[k];
        // Clipped edge regions repeat their first entry; duplicates never win a strict max.
        for (std::size_t r = 0; r < R; ++r) p.slope(k, r)[r < reg.size() ? reg[r] : reg[0]] = 1.0;
    }
    return p;
}

MasoParams compose_affine_into_maso(const MasoParams& act, const DenseMatrix& W,
                                    std::span<const double> b) {
    require_dim(W.rows(), act.inputs(), "compose_affine_into_maso");
    require_dim(b.size(), W.rows(), "compose_affine_into_maso bias");
    MasoParams q(act.outputs(), act.regions(), W.cols());
    for (std::size_t k = 0; k < act.outputs(); ++k) {
        for (std::size_t r = 0; r < act.regions(); ++r) {
            const auto a = act.slope(k, r);
            const auto composed = gemv_transposed(W, a);
            std::ranges::copy(composed, q.slope(k, r).begin());
            q.offset(k, r) = act.offset(k, r) + dot(b, a);
        }
    }
    return q;
}

MasoParams compose_skip(const MasoParams& act, const DenseMatrix& C, std::span<const double> b_C,
                        const DenseMatrix& C_skip, std::span<const double> b_skip) {
    require_dim(C_skip.rows(), act.outputs(), "compose_skip skip rows");
    require_dim(C_skip.cols(), C.cols(), "compose_skip skip cols");
    require_dim(b_skip.size(), act.outputs(), "compose_skip skip bias");
    MasoParams q = compose_affine_into_maso(act, C, b_C);
    for (std::size_t k = 0; k < q.outputs(); ++k) {
        const auto skip_row = C_skip.row(k);
        for (std::size_t r = 0; r < q.regions(); ++r) {
            auto s = q.slope(k, r);
            for (std::size_t d = 0; d < s.size(); ++d) s[d] += skip_row[d];
            q.offset(k, r) += b_skip[k];
        }
    }
    return q;
}

SimplifiedMaso to_simplified(const MasoParams& p, double tolerance) {
    const std::size_t rows = p.outputs() * p.regions();
    Eigen::MatrixXd A(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(p.inputs()));
    Eigen::VectorXd B(static_cast<Eigen::Index>(rows));
    for (std::size_t k = 0; k < p.outputs(); ++k) {
        for (std::size_t r = 0; r < p.regions(); ++r) {
            const auto i = static_cast<Eigen::Index>(k * p.regions() + r);
            const auto s = p.slope(k, r);
            for (std::size_t d = 0; d < s.size(); ++d) A(i, static_cast<Eigen::Index>(d)) = s[d];
            B(i) = p.offset(k, r);
        }
    }
    const Eigen::VectorXd shift = A.completeOrthogonalDecomposition().solve(B);
    const double residual = rows == 0 ? 0.0 : (A * shift - B).cwiseAbs().maxCoeff();
    if (!(residual <= tolerance)) {
        throw InconsistentSystemError(
            "offsets are not expressible as a shared input shift (max residual " +
                std::to_string(residual) + ")",
            residual);
    }
    SimplifiedMaso s;
    auto slopes = p.slopes();
    s.slopes = MasoParams(p.outputs(), p.regions(), p.inputs(), {slopes.begin(), slopes.end()},
                          std::vector<double>(rows, 0.0));
    s.shift.assign(shift.data(), shift.data() + shift.size());
    return s;
}

DenseVector simplified_eval(const SimplifiedMaso& s, std::span<const double> x) {
    return maso_eval(s.slopes, add(x, s.shift)).y;
}

bool is_nondecreasing(const MasoParams& p) {
    return std::ranges::all_of(p.slopes(), [](double a) { return a >= 0.0; });
}

}  // namespace masolab
