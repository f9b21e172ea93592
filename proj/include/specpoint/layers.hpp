#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "specpoint/graph.hpp"
#include "specpoint/matrix.hpp"

namespace specpoint::layers {

using linalg::Matrix;
using spectral::NeighborhoodGraph;
using spectral::WeightScheme;

// ---------------------------------------------------------------------------
// Spectral graph convolution
// ---------------------------------------------------------------------------

/// Parameters of one spectral convolution: `g` modulates each graph frequency
/// (the diagonal of the spectral kernel, one entry per neighborhood point) and
/// `w_f` mixes feature channels (m x m').
struct SpecConvParams {
    std::vector<double> g;
    Matrix w_f;
};

/// Forward-pass cache. `graph` is a borrowed pointer: the caller must keep the
/// NeighborhoodGraph alive until the matching backward call.
struct SpecConvTape {
    const NeighborhoodGraph* graph = nullptr;
    Matrix xt; // U^T x
    Matrix p;  // diag(g) U^T x
};

struct SpecConvGrads {
    Matrix x;
    std::vector<double> g;
    Matrix w_f;
};

/// y = U ((diag(g) (U^T x)) w_f): modulate the signal in the graph frequency
/// domain, filter features, and return to the vertex domain.
std::pair<Matrix, SpecConvTape> spectral_conv_forward(const Matrix& x,
                                                      const NeighborhoodGraph& graph,
                                                      const SpecConvParams& params);

/// Exact gradients of the forward map above, with the Fourier basis treated as
/// a constant of the forward pass.
SpecConvGrads spectral_conv_backward(const Matrix& grad_y, const SpecConvTape& tape,
                                     const SpecConvParams& params);

// ---------------------------------------------------------------------------
// Point-wise MLP (shared affine + ReLU per row)
// ---------------------------------------------------------------------------

struct MlpTape {
    Matrix x;
    Matrix z; // pre-activation x w + b
};

struct MlpGrads {
    Matrix x;
    Matrix w;
    std::vector<double> b;
};

/// y_ij = max(0, (x w)_ij + b_j). Every output row depends only on the same
/// input row.
std::pair<Matrix, MlpTape> point_mlp_forward(const Matrix& x, const Matrix& w,
                                             const std::vector<double>& b);

MlpGrads point_mlp_backward(const Matrix& grad_y, const MlpTape& tape, const Matrix& w);

/// Standalone rectifier; the returned value doubles as the backward tape.
Matrix relu(const Matrix& x);
Matrix relu_backward(const Matrix& grad_y, const Matrix& y);

// ---------------------------------------------------------------------------
// Set max pooling
// ---------------------------------------------------------------------------

struct MaxPoolTape {
    std::size_t k = 0;
    std::vector<std::size_t> argmax; // winning row per column, ties -> lowest row
};

/// Column-wise maximum over all rows; output is 1 x m.
std::pair<Matrix, MaxPoolTape> max_pool_set(const Matrix& h);

/// Routes the incoming 1 x m gradient to each column's argmax row.
Matrix max_pool_set_backward(const Matrix& grad, const MaxPoolTape& tape);

// ---------------------------------------------------------------------------
// Recursive cluster pooling
// ---------------------------------------------------------------------------

enum class PoolMode { max, avg };

/// What the per-recurrence graphs are built from: the representatives'
/// spatial coordinates (default; a pooled cluster is placed at the centroid
/// of its members) or the pooled feature rows themselves.
enum class ClusterBy { spatial, feature };

struct PoolSpec {
    std::size_t csize = 2;
    ClusterBy cluster_by = ClusterBy::spatial;
};

/// One pooling stage: representatives are visited in `order` (a spectral
/// ordering, padded by repeating its last entry until divisible) and pooled
/// in consecutive groups of `group_size` with `mode`.
struct PoolStagePlan {
    std::vector<std::size_t> order;
    std::size_t group_size = 0;
    PoolMode mode = PoolMode::max;
};

/// The full geometry of a recursive pooling: alternating MAX/AVG recurrences
/// (first MAX) while more than csize representatives remain, then one
/// terminal pool over the rest. Depends only on coordinates, so it can be
/// computed once and replayed against many feature tensors.
struct ClusterPoolPlan {
    std::size_t k = 0;
    std::vector<PoolStagePlan> stages;
};

/// Build the pooling geometry from spatial coordinates (ClusterBy::spatial).
/// When a graph over exactly these coordinates already exists (a convolution
/// on the same neighborhood), pass it as `first_graph` to skip rebuilding it
/// for the first recurrence; the result is identical either way.
ClusterPoolPlan cluster_pool_plan(const Matrix& cluster_coords, std::size_t csize,
                                  const WeightScheme& scheme,
                                  const NeighborhoodGraph* first_graph = nullptr);

struct ClusterPoolTape {
    ClusterPoolPlan plan;
    std::size_t m = 0;
    // For MAX stages: winning representative per (group, column), flattened
    // group-major. Empty vector for AVG stages.
    std::vector<std::vector<std::size_t>> argmax;
};

/// Pool a k x m feature tensor down to 1 x m along a prebuilt plan.
std::pair<Matrix, ClusterPoolTape> cluster_pool_apply(const Matrix& x,
                                                      const ClusterPoolPlan& plan);

/// Plan + apply in one call. ClusterBy::feature rebuilds the graph from the
/// pooled feature rows at every recurrence instead of using coordinates.
std::pair<Matrix, ClusterPoolTape> cluster_pool_forward(const Matrix& x,
                                                        const Matrix& cluster_coords,
                                                        const PoolSpec& spec,
                                                        const WeightScheme& scheme);

/// Exact gradient: MAX stages route to the winning row, AVG stages split
/// uniformly over the (possibly padded) group; cluster assignments are
/// forward-pass constants.
Matrix cluster_pool_backward(const Matrix& grad, const ClusterPoolTape& tape);

// ---------------------------------------------------------------------------
// Feature propagation (interpolation decoder for segmentation)
// ---------------------------------------------------------------------------

struct FpTape {
    std::vector<std::size_t> neighbor_indices; // 3 per fine point (coarse rows)
    std::vector<double> weights;               // matching inverse-distance weights
    std::size_t n_coarse = 0;
    std::size_t n_interp = 0; // neighbors actually used (min(3, n_coarse))
    std::size_t m_coarse = 0; // interpolated feature columns (rest are skip)
    Matrix z;                 // concatenated (interp | skip) input rows
    Matrix pre;               // affine pre-activation
};

struct FpGrads {
    Matrix coarse_feats;
    Matrix skip_feats;
    Matrix w;
    std::vector<double> b;
};

/// Upsample coarse features onto fine points: per fine point take its 3
/// nearest coarse points, weight them by normalized 1/(distance + 1e-10),
/// concatenate the interpolated row with that point's skip features, and push
/// the result through one shared affine + ReLU.
std::pair<Matrix, FpTape> fp_interpolate(const Matrix& coarse_coords,
                                         const Matrix& coarse_feats,
                                         const Matrix& fine_coords,
                                         const Matrix& skip_feats, const Matrix& w,
                                         const std::vector<double>& b);

FpGrads fp_interpolate_backward(const Matrix& grad_y, const FpTape& tape, const Matrix& w);

} // namespace specpoint::layers
