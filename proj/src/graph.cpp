#include "specpoint/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "specpoint/errors.hpp"

namespace specpoint::spectral {

namespace {

double distance(const Matrix& coords, std::size_t i, std::size_t j) {
    const double* a = coords.row_ptr(i);
    const double* b = coords.row_ptr(j);
    double acc = 0.0;
    for (std::size_t d = 0; d < coords.cols; ++d) {
        const double diff = a[d] - b[d];
        acc += diff * diff;
    }
    return std::sqrt(acc);
}

} // namespace

Matrix adjacency(const Matrix& coords, const WeightScheme& scheme) {
    const std::size_t k = coords.rows;
    if (k == 0) throw ConfigError("adjacency: empty point set");

    Matrix dist(k, k);
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = i + 1; j < k; ++j) {
            const double d = distance(coords, i, j);
            dist(i, j) = d;
            dist(j, i) = d;
        }
    }
    if (scheme.kind == WeightKind::raw_distance) return dist;

    double sigma = scheme.sigma;
    if (sigma <= 0.0) {
        double sum = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            for (std::size_t j = i + 1; j < k; ++j) sum += dist(i, j);
        }
        const std::size_t pairs = k * (k - 1) / 2;
        sigma = pairs > 0 ? sum / static_cast<double>(pairs) : 0.0;
        if (sigma == 0.0) sigma = 1.0;
    }

    Matrix w(k, k);
    const double inv_sigma_sq = 1.0 / (sigma * sigma);
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = i + 1; j < k; ++j) {
            const double d = dist(i, j);
            const double val = std::exp(-d * d * inv_sigma_sq);
            w(i, j) = val;
            w(j, i) = val;
        }
    }
    return w;
}

Matrix normalized_laplacian(const Matrix& w) {
    const std::size_t k = w.rows;
    if (w.cols != k) {
        throw ConfigError("normalized_laplacian: adjacency is " + std::to_string(w.rows) +
                          "x" + std::to_string(w.cols) + ", expected square");
    }

    std::vector<double> dinv_sqrt(k);
    for (std::size_t i = 0; i < k; ++i) {
        const double* row = w.row_ptr(i);
        const double deg = std::accumulate(row, row + k, 0.0);
        dinv_sqrt[i] = deg > 0.0 ? 1.0 / std::sqrt(deg) : 0.0;
    }

    Matrix l = Matrix::identity(k);
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            if (i != j) l(i, j) = -dinv_sqrt[i] * w(i, j) * dinv_sqrt[j];
        }
    }
    return l;
}

NeighborhoodGraph build_graph(const Matrix& coords, const WeightScheme& scheme) {
    NeighborhoodGraph graph;
    graph.w = adjacency(coords, scheme);

    const std::size_t k = graph.w.rows;
    graph.degrees.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
        const double* row = graph.w.row_ptr(i);
        graph.degrees[i] = std::accumulate(row, row + k, 0.0);
    }

    graph.laplacian = normalized_laplacian(graph.w);
    linalg::EighResult eig = linalg::jacobi_eigh(graph.laplacian);
    graph.eigenvalues = std::move(eig.values);
    graph.basis = std::move(eig.vectors);
    return graph;
}

Matrix gft(const Matrix& u, const Matrix& x) {
    Matrix xt(u.cols, x.cols);
    linalg::matmul_at_b_into(xt, u, x);
    return xt;
}

Matrix igft(const Matrix& u, const Matrix& xt) {
    return linalg::matmul(u, xt);
}

std::vector<std::size_t> fiedler_order(const NeighborhoodGraph& graph) {
    const std::size_t k = graph.basis.rows;
    if (k < 2) {
        throw ConfigError("fiedler_order: graph has " + std::to_string(k) +
                          " vertices, need at least 2");
    }
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&graph](std::size_t a, std::size_t b) {
        return graph.basis(a, 1) < graph.basis(b, 1);
    });
    return order;
}

} // namespace specpoint::spectral
