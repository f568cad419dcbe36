#pragma once
// Minimal dense row-major matrix. Just enough linear algebra for dense
// layers and Jacobians; not a general-purpose library.

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace xuq {

class Matrix {
  public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept {
        return {data_.data() + r * cols_, cols_};
    }

    std::vector<double>& data() noexcept { return data_; }
    const std::vector<double>& data() const noexcept { return data_; }

    bool operator==(const Matrix&) const = default;

    // y = M x
    void multiply(std::span<const double> x, std::span<double> y) const {
        if (x.size() != cols_ || y.size() != rows_)
            throw std::invalid_argument("Matrix::multiply: dimension mismatch");
        for (std::size_t r = 0; r < rows_; ++r) {
            const double* w = data_.data() + r * cols_;
            double acc = 0.0;
            for (std::size_t c = 0; c < cols_; ++c) acc += w[c] * x[c];
            y[r] = acc;
        }
    }

    // y = M^T x  (accumulating into y, which must be zeroed by the caller)
    void multiply_transpose_add(std::span<const double> x, std::span<double> y) const {
        if (x.size() != rows_ || y.size() != cols_)
            throw std::invalid_argument("Matrix::multiply_transpose_add: dimension mismatch");
        for (std::size_t r = 0; r < rows_; ++r) {
            const double* w = data_.data() + r * cols_;
            const double xr = x[r];
            for (std::size_t c = 0; c < cols_; ++c) y[c] += w[c] * xr;
        }
    }

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

}  // namespace xuq
