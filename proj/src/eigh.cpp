#include "specpoint/eigh.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "specpoint/errors.hpp"

namespace specpoint::linalg {

namespace {

// One Givens rotation zeroing a(p,q). Updates a (full symmetric storage) and
// accumulates into the eigenvector columns p,q of v.
void rotate(Matrix& a, Matrix& v, std::size_t p, std::size_t q) {
    const std::size_t n = a.rows;
    const double apq = a(p, q);
    const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
    double t;
    if (std::fabs(theta) > 1.0 / std::numeric_limits<double>::epsilon()) {
        t = 1.0 / (2.0 * theta);
    } else {
        t = 1.0 / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        if (theta < 0.0) t = -t;
    }
    const double c = 1.0 / std::sqrt(t * t + 1.0);
    const double s = t * c;

    a(p, p) -= t * apq;
    a(q, q) += t * apq;
    a(p, q) = 0.0;
    a(q, p) = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (i == p || i == q) continue;
        const double aip = a(i, p);
        const double aiq = a(i, q);
        a(i, p) = c * aip - s * aiq;
        a(p, i) = a(i, p);
        a(i, q) = s * aip + c * aiq;
        a(q, i) = a(i, q);
    }
    for (std::size_t i = 0; i < n; ++i) {
        const double vip = v(i, p);
        const double viq = v(i, q);
        v(i, p) = c * vip - s * viq;
        v(i, q) = s * vip + c * viq;
    }
}

double max_off_diagonal(const Matrix& a) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t j = i + 1; j < a.cols; ++j) {
            m = std::max(m, std::fabs(a(i, j)));
        }
    }
    return m;
}

void canonicalize_sign(Matrix& vectors, std::size_t col) {
    std::size_t arg = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < vectors.rows; ++i) {
        const double mag = std::fabs(vectors(i, col));
        if (mag > best) {
            best = mag;
            arg = i;
        }
    }
    if (vectors(arg, col) < 0.0) {
        for (std::size_t i = 0; i < vectors.rows; ++i) {
            vectors(i, col) = -vectors(i, col);
        }
    }
}

} // namespace

EighResult jacobi_eigh(const Matrix& input) {
    if (input.rows != input.cols) {
        throw ConfigError("jacobi_eigh: matrix is not square (" + std::to_string(input.rows) +
                          "x" + std::to_string(input.cols) + ")");
    }
    const std::size_t n = input.rows;
    const double norm = max_abs(input);

    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (std::fabs(input(i, j) - input(j, i)) > 1e-9 * std::max(1.0, norm)) {
                throw ConfigError("jacobi_eigh: matrix is asymmetric beyond tolerance at (" +
                                  std::to_string(i) + "," + std::to_string(j) + ")");
            }
        }
    }

    Matrix a(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            a(i, j) = 0.5 * (input(i, j) + input(j, i));
        }
    }
    Matrix v = Matrix::identity(n);

    const double conv_tol = 1e-12 * norm;
    // Rotations on entries already far below the convergence tolerance only
    // churn; they are skipped and re-checked next sweep.
    const double skip_tol = 0.25 * conv_tol;

    bool converged = norm == 0.0 || n < 2;
    double residual = max_off_diagonal(a);
    for (int sweep = 0; sweep < 64 && !converged; ++sweep) {
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                if (std::fabs(a(p, q)) > skip_tol) {
                    rotate(a, v, p, q);
                }
            }
        }
        residual = max_off_diagonal(a);
        converged = residual < conv_tol;
    }
    if (!converged) {
        throw NumericalError("jacobi_eigh: no convergence in 64 sweeps, residual " +
                             std::to_string(residual));
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&a](std::size_t x, std::size_t y) { return a(x, x) < a(y, y); });

    EighResult out;
    out.values.resize(n);
    out.vectors = Matrix(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        out.values[j] = a(order[j], order[j]);
        for (std::size_t i = 0; i < n; ++i) {
            out.vectors(i, j) = v(i, order[j]);
        }
        canonicalize_sign(out.vectors, j);
    }
    return out;
}

} // namespace specpoint::linalg
