#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "lsnt/errors.hpp"
#include "lsnt/rng.hpp"

namespace lsnt {

/// Dense row-major matrix of 64-bit floats. The only tensor type in the
/// numeric core; sequences are T x d matrices.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    double* row_ptr(std::size_t r) { return data_.data() + r * cols_; }
    const double* row_ptr(std::size_t r) const { return data_.data() + r * cols_; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
    std::string shape_str() const;

    bool operator==(const Matrix& o) const {
        return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// a * b. Throws ShapeError carrying both shapes on inner-dimension mismatch.
Matrix matmul(const Matrix& a, const Matrix& b);
/// a * b^T without materializing the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);
/// a^T * b without materializing the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& m);
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& m, double s);
void add_inplace(Matrix& a, const Matrix& b);
/// a += s * b
void axpy_inplace(Matrix& a, double s, const Matrix& b);

/// Row-wise softmax with per-row max subtraction; every output row is
/// nonnegative and sums to 1.
Matrix softmax_rows(const Matrix& m);

Matrix relu(const Matrix& m);
Matrix sigmoid(const Matrix& m);

/// Inverted-dropout mask: entries are 0 with probability `rate`, else
/// 1/(1-rate). Requires 0 <= rate < 1.
Matrix dropout_mask(std::size_t rows, std::size_t cols, double rate, SeededRng& rng);

bool all_finite(const Matrix& m);

/// max |a-b| over entries; shapes must match.
double max_abs_diff(const Matrix& a, const Matrix& b);

}  // namespace lsnt
