#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

namespace specpoint::linalg {

/// Dense row-major matrix of 64-bit floats.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
    Matrix(std::initializer_list<std::initializer_list<double>> init);
    /// Row-major flat initializer; entries.size() must equal r*c.
    Matrix(std::size_t r, std::size_t c, std::initializer_list<double> entries);

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    double* row_ptr(std::size_t r) { return data.data() + r * cols; }
    const double* row_ptr(std::size_t r) const { return data.data() + r * cols; }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

    static Matrix identity(std::size_t n);
};

Matrix matmul(const Matrix& a, const Matrix& b);

/// dst = a b. dst is resized; must not alias a or b.
void matmul_into(Matrix& dst, const Matrix& a, const Matrix& b);

/// dst = aT b without forming the transpose.
void matmul_at_b_into(Matrix& dst, const Matrix& a, const Matrix& b);

/// dst = a bT without forming the transpose.
void matmul_a_bt_into(Matrix& dst, const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& m);

double max_abs(const Matrix& m);
double max_abs_diff(const Matrix& a, const Matrix& b);
double frobenius_norm(const Matrix& m);

} // namespace specpoint::linalg
