#include "specpoint/sampling.hpp"

#include <algorithm>
#include <limits>
#include <string>
#include <utility>

#include "specpoint/errors.hpp"

namespace specpoint::sampling {

namespace {

double squared_distance(const Matrix& points, std::size_t i, std::size_t j) {
    const double* a = points.row_ptr(i);
    const double* b = points.row_ptr(j);
    double acc = 0.0;
    for (std::size_t d = 0; d < points.cols; ++d) {
        const double diff = a[d] - b[d];
        acc += diff * diff;
    }
    return acc;
}

// True when row i is lexicographically smaller than row j.
bool row_less(const Matrix& points, std::size_t i, std::size_t j) {
    const double* a = points.row_ptr(i);
    const double* b = points.row_ptr(j);
    for (std::size_t d = 0; d < points.cols; ++d) {
        if (a[d] < b[d]) return true;
        if (a[d] > b[d]) return false;
    }
    return false;
}

} // namespace

std::vector<std::size_t> fps(const Matrix& points, std::size_t m_centroids) {
    const std::size_t n = points.rows;
    if (m_centroids == 0 || m_centroids > n) {
        throw ConfigError("fps: requested " + std::to_string(m_centroids) +
                          " centroids from " + std::to_string(n) + " points");
    }

    std::size_t seed = 0;
    for (std::size_t i = 1; i < n; ++i) {
        if (row_less(points, i, seed)) seed = i;
    }

    std::vector<std::size_t> selected;
    selected.reserve(m_centroids);
    selected.push_back(seed);

    // min_sq[i] = squared distance from point i to the nearest selected point.
    std::vector<double> min_sq(n);
    for (std::size_t i = 0; i < n; ++i) min_sq[i] = squared_distance(points, i, seed);

    while (selected.size() < m_centroids) {
        std::size_t best = 0;
        double best_sq = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (min_sq[i] > best_sq) {
                best_sq = min_sq[i];
                best = i;
            }
        }
        selected.push_back(best);
        for (std::size_t i = 0; i < n; ++i) {
            min_sq[i] = std::min(min_sq[i], squared_distance(points, i, best));
        }
    }
    return selected;
}

std::vector<std::size_t> knn(const Matrix& points, std::size_t query_index, std::size_t k) {
    const std::size_t n = points.rows;
    if (query_index >= n) {
        throw ConfigError("knn: query index " + std::to_string(query_index) +
                          " out of range for " + std::to_string(n) + " points");
    }
    if (k == 0 || k > n) {
        throw ConfigError("knn: requested " + std::to_string(k) + " neighbors from " +
                          std::to_string(n) + " points");
    }

    std::vector<std::pair<double, std::size_t>> order(n);
    for (std::size_t i = 0; i < n; ++i) {
        order[i] = {squared_distance(points, query_index, i), i};
    }
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k),
                      order.end());

    std::vector<std::size_t> result(k);
    for (std::size_t i = 0; i < k; ++i) result[i] = order[i].second;
    return result;
}

std::vector<Neighborhood> group(const Matrix& points, const Matrix& features,
                                const std::vector<std::size_t>& centroid_indices,
                                std::size_t k) {
    if (features.rows != points.rows) {
        throw ConfigError("group: " + std::to_string(points.rows) + " points but " +
                          std::to_string(features.rows) + " feature rows");
    }

    std::vector<Neighborhood> result;
    result.reserve(centroid_indices.size());
    for (const std::size_t c : centroid_indices) {
        Neighborhood hood;
        hood.centroid_index = c;
        hood.member_indices = knn(points, c, k);
        hood.rel_coords = Matrix(k, points.cols);
        hood.features = Matrix(k, features.cols);
        const double* center = points.row_ptr(c);
        for (std::size_t i = 0; i < k; ++i) {
            const std::size_t m = hood.member_indices[i];
            const double* src = points.row_ptr(m);
            double* dst = hood.rel_coords.row_ptr(i);
            for (std::size_t d = 0; d < points.cols; ++d) dst[d] = src[d] - center[d];
            if (features.cols > 0) {
                const double* fsrc = features.row_ptr(m);
                double* fdst = hood.features.row_ptr(i);
                for (std::size_t d = 0; d < features.cols; ++d) fdst[d] = fsrc[d];
            }
        }
        result.push_back(std::move(hood));
    }
    return result;
}

} // namespace specpoint::sampling
