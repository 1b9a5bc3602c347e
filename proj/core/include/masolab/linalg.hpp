#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace masolab {

using DenseVector = std::vector<double>;

/// Row-major dense matrix of doubles. Products iterate the inner index in
/// ascending order so results are reproducible bit-for-bit.
class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    DenseMatrix(std::initializer_list<std::initializer_list<double>> rows);

    static DenseMatrix identity(std::size_t n);
    static DenseMatrix zeros(std::size_t rows, std::size_t cols) { return {rows, cols}; }
    static DenseMatrix diagonal(std::span<const double> diag);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool empty() const noexcept { return rows_ == 0 || cols_ == 0; }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept {
        return {data_.data() + r * cols_, cols_};
    }
    DenseVector row_copy(std::size_t r) const;

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    DenseMatrix transposed() const;

    friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

double dot(std::span<const double> a, std::span<const double> b);
double norm2_squared(std::span<const double> v);
double norm2(std::span<const double> v);
double max_abs(std::span<const double> v);
double max_abs_diff(std::span<const double> a, std::span<const double> b);
double frobenius_norm(const DenseMatrix& m);
bool all_finite(std::span<const double> v);

/// y = M v.
DenseVector gemv(const DenseMatrix& m, std::span<const double> v);
/// y = M^T v, i.e. the row vector v^T M.
DenseVector gemv_transposed(const DenseMatrix& m, std::span<const double> v);
/// C = A B.
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);

DenseVector add(std::span<const double> a, std::span<const double> b);
DenseVector subtract(std::span<const double> a, std::span<const double> b);
DenseVector scaled(std::span<const double> v, double s);
/// y += s * x
void axpy(double s, std::span<const double> x, std::span<double> y);

DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix scaled(const DenseMatrix& m, double s);
/// diag(d) * M: scales row i of M by d[i].
DenseMatrix scale_rows(std::span<const double> d, const DenseMatrix& m);
/// M * diag(d): scales column j of M by d[j].
DenseMatrix scale_cols(const DenseMatrix& m, std::span<const double> d);

}  // namespace masolab
