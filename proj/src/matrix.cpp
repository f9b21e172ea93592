#include "specpoint/matrix.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "specpoint/errors.hpp"

namespace specpoint::linalg {

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> init) {
    rows = init.size();
    cols = rows == 0 ? 0 : init.begin()->size();
    data.reserve(rows * cols);
    for (const auto& r : init) {
        if (r.size() != cols) {
            throw ConfigError("Matrix initializer rows have unequal lengths");
        }
        data.insert(data.end(), r.begin(), r.end());
    }
}

Matrix::Matrix(std::size_t r, std::size_t c, std::initializer_list<double> entries)
    : rows(r), cols(c), data(entries) {
    if (entries.size() != r * c) {
        throw ConfigError("Matrix initializer has " + std::to_string(entries.size()) +
                          " entries for a " + std::to_string(r) + "x" + std::to_string(c) +
                          " matrix");
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

void matmul_into(Matrix& dst, const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) {
        throw ConfigError("matmul: dimension mismatch (" + std::to_string(a.rows) + "x" +
                          std::to_string(a.cols) + " by " + std::to_string(b.rows) + "x" +
                          std::to_string(b.cols) + ")");
    }
    dst.rows = a.rows;
    dst.cols = b.cols;
    dst.data.assign(a.rows * b.cols, 0.0);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = a.row_ptr(i);
        double* drow = dst.row_ptr(i);
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = arow[k];
            if (aik == 0.0) continue;
            const double* brow = b.row_ptr(k);
            for (std::size_t j = 0; j < b.cols; ++j) {
                drow[j] += aik * brow[j];
            }
        }
    }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    Matrix dst;
    matmul_into(dst, a, b);
    return dst;
}

void matmul_at_b_into(Matrix& dst, const Matrix& a, const Matrix& b) {
    if (a.rows != b.rows) {
        throw ConfigError("matmul_at_b: dimension mismatch");
    }
    dst.rows = a.cols;
    dst.cols = b.cols;
    dst.data.assign(a.cols * b.cols, 0.0);
    for (std::size_t k = 0; k < a.rows; ++k) {
        const double* arow = a.row_ptr(k);
        const double* brow = b.row_ptr(k);
        for (std::size_t i = 0; i < a.cols; ++i) {
            const double aki = arow[i];
            if (aki == 0.0) continue;
            double* drow = dst.row_ptr(i);
            for (std::size_t j = 0; j < b.cols; ++j) {
                drow[j] += aki * brow[j];
            }
        }
    }
}

void matmul_a_bt_into(Matrix& dst, const Matrix& a, const Matrix& b) {
    if (a.cols != b.cols) {
        throw ConfigError("matmul_a_bt: dimension mismatch");
    }
    dst.rows = a.rows;
    dst.cols = b.rows;
    dst.data.assign(a.rows * b.rows, 0.0);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = a.row_ptr(i);
        double* drow = dst.row_ptr(i);
        for (std::size_t j = 0; j < b.rows; ++j) {
            const double* brow = b.row_ptr(j);
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols; ++k) {
                acc += arow[k] * brow[k];
            }
            drow[j] = acc;
        }
    }
}

Matrix transpose(const Matrix& m) {
    Matrix t(m.cols, m.rows);
    for (std::size_t r = 0; r < m.rows; ++r) {
        for (std::size_t c = 0; c < m.cols; ++c) {
            t(c, r) = m(r, c);
        }
    }
    return t;
}

double max_abs(const Matrix& m) {
    double v = 0.0;
    for (double x : m.data) v = std::max(v, std::fabs(x));
    return v;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    double v = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        v = std::max(v, std::fabs(a.data[i] - b.data[i]));
    }
    return v;
}

double frobenius_norm(const Matrix& m) {
    double s = 0.0;
    for (double x : m.data) s += x * x;
    return std::sqrt(s);
}

} // namespace specpoint::linalg
