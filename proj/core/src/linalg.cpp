#include "masolab/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "masolab/errors.hpp"

namespace masolab {

namespace {

void require(bool ok, const char* op, std::size_t a, std::size_t b) {
    if (!ok) {
        throw DimensionError(std::string(op) + ": dimension mismatch (" + std::to_string(a) +
                             " vs " + std::to_string(b) + ")");
    }
}

}  // namespace

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    require(data_.size() == rows_ * cols_, "DenseMatrix", data_.size(), rows_ * cols_);
}

DenseMatrix::DenseMatrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        require(r.size() == cols_, "DenseMatrix", r.size(), cols_);
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

DenseMatrix DenseMatrix::diagonal(std::span<const double> diag) {
    DenseMatrix m(diag.size(), diag.size());
    for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
    return m;
}

DenseVector DenseMatrix::row_copy(std::size_t r) const {
    auto s = row(r);
    return {s.begin(), s.end()};
}

DenseMatrix DenseMatrix::transposed() const {
    DenseMatrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
        for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
}

double dot(std::span<const double> a, std::span<const double> b) {
    require(a.size() == b.size(), "dot", a.size(), b.size());
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2_squared(std::span<const double> v) { return dot(v, v); }

double norm2(std::span<const double> v) { return std::sqrt(norm2_squared(v)); }

double max_abs(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    require(a.size() == b.size(), "max_abs_diff", a.size(), b.size());
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

double frobenius_norm(const DenseMatrix& m) { return norm2(m.data()); }

bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

DenseVector gemv(const DenseMatrix& m, std::span<const double> v) {
    require(m.cols() == v.size(), "gemv", m.cols(), v.size());
    DenseVector y(m.rows(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const auto r = m.row(i);
        double s = 0.0;
        for (std::size_t j = 0; j < r.size(); ++j) s += r[j] * v[j];
        y[i] = s;
    }
    return y;
}

DenseVector gemv_transposed(const DenseMatrix& m, std::span<const double> v) {
    require(m.rows() == v.size(), "gemv_transposed", m.rows(), v.size());
    DenseVector y(m.cols(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const auto r = m.row(i);
        const double vi = v[i];
        for (std::size_t j = 0; j < r.size(); ++j) y[j] += vi * r[j];
    }
    return y;
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
    require(a.cols() == b.rows(), "matmul", a.cols(), b.rows());
    DenseMatrix c(a.rows(), b.cols());
    // Row i of C is the row vector a_i^T B, accumulated over k ascending; this is
    // the same arithmetic as gemv_transposed(B, a_i).
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto ci = c.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            const auto bk = b.row(k);
            for (std::size_t j = 0; j < bk.size(); ++j) ci[j] += aik * bk[j];
        }
    }
    return c;
}

DenseVector add(std::span<const double> a, std::span<const double> b) {
    require(a.size() == b.size(), "add", a.size(), b.size());
    DenseVector y(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] + b[i];
    return y;
}

DenseVector subtract(std::span<const double> a, std::span<const double> b) {
    require(a.size() == b.size(), "subtract", a.size(), b.size());
    DenseVector y(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] - b[i];
    return y;
}

DenseVector scaled(std::span<const double> v, double s) {
    DenseVector y(v.begin(), v.end());
    for (double& x : y) x *= s;
    return y;
}

void axpy(double s, std::span<const double> x, std::span<double> y) {
    require(x.size() == y.size(), "axpy", x.size(), y.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += s * x[i];
}

DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b) {
    require(a.rows() == b.rows() && a.cols() == b.cols(), "add", a.rows() * a.cols(),
            b.rows() * b.cols());
    DenseMatrix c = a;
    auto cd = c.data();
    auto bd = b.data();
    for (std::size_t i = 0; i < cd.size(); ++i) cd[i] += bd[i];
    return c;
}

DenseMatrix scaled(const DenseMatrix& m, double s) {
    DenseMatrix c = m;
    for (double& x : c.data()) x *= s;
    return c;
}

DenseMatrix scale_rows(std::span<const double> d, const DenseMatrix& m) {
    require(d.size() == m.rows(), "scale_rows", d.size(), m.rows());
    DenseMatrix c = m;
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (double& x : c.row(i)) x *= d[i];
    return c;
}

DenseMatrix scale_cols(const DenseMatrix& m, std::span<const double> d) {
    require(d.size() == m.cols(), "scale_cols", d.size(), m.cols());
    DenseMatrix c = m;
    for (std::size_t i = 0; i < m.rows(); ++i) {
        auto r = c.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) r[j] *= d[j];
    }
    return c;
}

}  // namespace masolab
