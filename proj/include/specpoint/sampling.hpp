#pragma once

#include <cstddef>
#include <vector>

#include "specpoint/matrix.hpp"

namespace specpoint::sampling {

using linalg::Matrix;

/// One k-NN neighborhood of a centroid. `rel_coords` holds member coordinates
/// translated so the centroid sits at the origin; `features` rows are copied
/// from the parent set unmodified (k x 0 when the cloud carries no features).
struct Neighborhood {
    std::size_t centroid_index = 0;
    std::vector<std::size_t> member_indices;
    Matrix rel_coords;
    Matrix features;
};

/// Farthest point sampling. The seed is the lexicographically smallest
/// coordinate tuple; every later pick maximizes the minimum distance to the
/// points already chosen, ties resolved to the lowest index. Output is in
/// selection order.
std::vector<std::size_t> fps(const Matrix& points, std::size_t m_centroids);

/// The k nearest points to `points[query_index]` (the query itself included),
/// sorted by (distance, index). Exhaustive scan.
std::vector<std::size_t> knn(const Matrix& points, std::size_t query_index, std::size_t k);

/// One Neighborhood per centroid, members from knn.
std::vector<Neighborhood> group(const Matrix& points, const Matrix& features,
                                const std::vector<std::size_t>& centroid_indices,
                                std::size_t k);

} // namespace specpoint::sampling
