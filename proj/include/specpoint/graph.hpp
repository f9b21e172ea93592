#pragma once

#include <cstddef>
#include <vector>

#include "specpoint/eigh.hpp"
#include "specpoint/matrix.hpp"

namespace specpoint::spectral {

using linalg::Matrix;

/// Edge-weight rule for neighborhood graphs.
///
/// gaussian_similarity: W_ij = exp(-||x_i - x_j||^2 / sigma^2), with sigma
/// taken from the `sigma` field when positive, otherwise the mean pairwise
/// distance of the input (1.0 when that mean is zero, i.e. all points
/// coincident). raw_distance: W_ij = ||x_i - x_j||.
enum class WeightKind { gaussian_similarity, raw_distance };

struct WeightScheme {
    WeightKind kind = WeightKind::gaussian_similarity;
    double sigma = 0.0; // <= 0 selects the mean-pairwise-distance rule
};

/// A neighborhood graph together with its full spectral decomposition.
/// `basis` columns are the Fourier modes, ordered by ascending `eigenvalues`;
/// `laplacian` is the symmetric normalized Laplacian, so every eigenvalue
/// lies in [0, 2] up to round-off.
struct NeighborhoodGraph {
    Matrix w;
    std::vector<double> degrees;
    Matrix laplacian;
    std::vector<double> eigenvalues;
    Matrix basis;
};

/// Pairwise-weight matrix over rows of `coords` per the scheme: symmetric,
/// non-negative, zero diagonal.
Matrix adjacency(const Matrix& coords, const WeightScheme& scheme);

/// L = I - D^(-1/2) W D^(-1/2) with D_ii = sum_j W_ij. Rows with zero degree
/// use the convention D^(-1/2)_ii = 0, leaving an identity row/column.
Matrix normalized_laplacian(const Matrix& w);

/// adjacency -> normalized_laplacian -> eigendecomposition, bundled.
NeighborhoodGraph build_graph(const Matrix& coords, const WeightScheme& scheme);

/// Graph Fourier transform of the k x m signal x: U^T x.
Matrix gft(const Matrix& u, const Matrix& x);

/// Inverse graph Fourier transform: U xt.
Matrix igft(const Matrix& u, const Matrix& xt);

/// Vertex indices sorted ascending by the Fiedler vector (basis column 1),
/// ties resolved to ascending index. Requires k >= 2.
std::vector<std::size_t> fiedler_order(const NeighborhoodGraph& graph);

} // namespace specpoint::spectral
