#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace guardspace {

// Precondition or type-invariant violation by the caller.
struct contract_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// A kernel could not produce a valid result (non-convergence, residual above
// tolerance after the allowed rounds, divergence during training).
struct numerical_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dense real matrix, 64-bit entries, row-major layout.
// Invariants: rows >= 1, cols >= 1, entries.size() == rows*cols, entries finite.
// A default-constructed Matrix is an empty placeholder; kernels reject it.
class Matrix {
public:
    Matrix() = default;

    Matrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), data_(check_dims(rows, cols), 0.0) {}

    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        check_dims(rows, cols);
        if (data_.size() != rows * cols)
            throw contract_error("Matrix: data length " + std::to_string(data_.size()) +
                                 " does not match " + std::to_string(rows) + "x" + std::to_string(cols));
        for (double v : data_)
            if (!std::isfinite(v))
                throw contract_error("Matrix: non-finite entry admitted");
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
    [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
    [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

    [[nodiscard]] const std::vector<double>& data() const noexcept { return data_; }
    [[nodiscard]] std::vector<double>& data() noexcept { return data_; }

    [[nodiscard]] Matrix transpose() const {
        Matrix t(cols_, rows_);
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
        return t;
    }

    [[nodiscard]] double frobenius_norm() const {
        double s = 0.0;
        for (double v : data_) s += v * v;
        return std::sqrt(s);
    }

    [[nodiscard]] double max_abs() const {
        double m = 0.0;
        for (double v : data_) m = std::max(m, std::abs(v));
        return m;
    }

    [[nodiscard]] bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    bool operator==(const Matrix& o) const = default;

private:
    static std::size_t check_dims(std::size_t rows, std::size_t cols) {
        if (rows == 0 || cols == 0)
            throw contract_error("Matrix: dimensions must be positive, got " +
                                 std::to_string(rows) + "x" + std::to_string(cols));
        return rows * cols;
    }

    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw contract_error(std::string(what) + ": shape mismatch " +
                             std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " vs " +
                             std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
}

inline Matrix operator+(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "operator+");
    Matrix r = a;
    for (std::size_t i = 0; i < r.size(); ++i) r.data()[i] += b.data()[i];
    return r;
}

inline Matrix operator-(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "operator-");
    Matrix r = a;
    for (std::size_t i = 0; i < r.size(); ++i) r.data()[i] -= b.data()[i];
    return r;
}

inline Matrix& operator+=(Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "operator+=");
    for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] += b.data()[i];
    return a;
}

inline Matrix& operator-=(Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "operator-=");
    for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] -= b.data()[i];
    return a;
}

inline Matrix operator*(double s, const Matrix& m) {
    Matrix r = m;
    for (double& v : r.data()) v *= s;
    return r;
}

// ||a - b||_F / max(||b||_F, floor); the relative error used throughout the tests
// and the construction invariants.
inline double relative_frobenius_error(const Matrix& a, const Matrix& b, double floor = 1e-30) {
    require_same_shape(a, b, "relative_frobenius_error");
    return (a - b).frobenius_norm() / std::max(b.frobenius_norm(), floor);
}

}  // namespace guardspace
