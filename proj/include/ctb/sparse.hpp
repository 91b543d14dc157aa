#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "ctb/tensor.hpp"

namespace ctb {

/// Compressed sparse row matrix. Rows are built in order; the column
/// pattern inside a row follows insertion order (ray traversal order for
/// Radon matrices), which keeps apply() and apply_transpose() bitwise
/// deterministic.
class CsrMatrix {
  public:
    CsrMatrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), indptr_(1, 0) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t nnz() const { return values_.size(); }

    /// Appends one row given parallel (column, value) lists.
    void push_row(const std::vector<std::size_t>& cols,
                  const std::vector<double>& vals) {
        if (cols.size() != vals.size())
            throw std::invalid_argument("CsrMatrix: row cols/vals mismatch");
        if (indptr_.size() > rows_)
            throw std::logic_error("CsrMatrix: too many rows pushed");
        for (std::size_t k = 0; k < cols.size(); ++k) {
            if (cols[k] >= cols_)
                throw std::out_of_range("CsrMatrix: column index out of range");
            indices_.push_back(cols[k]);
            values_.push_back(vals[k]);
        }
        indptr_.push_back(indices_.size());
    }

    bool complete() const { return indptr_.size() == rows_ + 1; }

    std::size_t row_begin(std::size_t r) const { return indptr_[r]; }
    std::size_t row_end(std::size_t r) const { return indptr_[r + 1]; }
    std::size_t col_index(std::size_t k) const { return indices_[k]; }
    double value(std::size_t k) const { return values_[k]; }

    /// y = A x
    void apply(const double* x, double* y) const {
        for (std::size_t r = 0; r < rows_; ++r) {
            double acc = 0.0;
            for (std::size_t k = indptr_[r]; k < indptr_[r + 1]; ++k)
                acc += values_[k] * x[indices_[k]];
            y[r] = acc;
        }
    }

    /// y = A^T x, computed by row-order scatter (exact transpose of apply).
    void apply_transpose(const double* x, double* y) const {
        for (std::size_t j = 0; j < cols_; ++j) y[j] = 0.0;
        for (std::size_t r = 0; r < rows_; ++r) {
            double xr = x[r];
            for (std::size_t k = indptr_[r]; k < indptr_[r + 1]; ++k)
                y[indices_[k]] += values_[k] * xr;
        }
    }

    Tensor apply(const Tensor& x, std::vector<std::size_t> out_shape) const {
        if (x.numel() != cols_)
            throw std::invalid_argument("CsrMatrix::apply: size mismatch");
        Tensor y = Tensor::zeros(std::move(out_shape));
        if (y.numel() != rows_)
            throw std::invalid_argument("CsrMatrix::apply: bad output shape");
        apply(x.data.data(), y.data.data());
        return y;
    }

    Tensor apply_transpose(const Tensor& x, std::vector<std::size_t> out_shape) const {
        if (x.numel() != rows_)
            throw std::invalid_argument("CsrMatrix::apply_transpose: size mismatch");
        Tensor y = Tensor::zeros(std::move(out_shape));
        if (y.numel() != cols_)
            throw std::invalid_argument("CsrMatrix::apply_transpose: bad output shape");
        apply_transpose(x.data.data(), y.data.data());
        return y;
    }

    double frobenius_norm() const {
        double s = 0.0;
        for (double v : values_) s += v * v;
        return std::sqrt(s);
    }

    /// Dense copy, row-major [rows, cols]. Test/oracle use only.
    std::vector<double> to_dense() const {
        std::vector<double> d(rows_ * cols_, 0.0);
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t k = indptr_[r]; k < indptr_[r + 1]; ++k)
                d[r * cols_ + indices_[k]] += values_[k];
        return d;
    }

  private:
    std::size_t rows_, cols_;
    std::vector<std::size_t> indptr_;
    std::vector<std::size_t> indices_;
    std::vector<double> values_;
};

}  // namespace ctb
