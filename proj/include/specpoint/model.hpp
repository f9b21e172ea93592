#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "specpoint/cloud.hpp"
#include "specpoint/graph.hpp"
#include "specpoint/layers.hpp"
#include "specpoint/matrix.hpp"
#include "specpoint/rng.hpp"
#include "specpoint/sampling.hpp"

namespace specpoint::model {

using linalg::Matrix;

// ---------------------------------------------------------------------------
// Architecture description
// ---------------------------------------------------------------------------

enum class Kernel { point_mlp, spec_conv };
enum class Pooling { max, cluster_pool };
enum class Head { classify, segment };
enum class Mode { train, eval };

struct LayerSpec {
    std::size_t n_centroids = 0; // C
    std::size_t k = 0;           // neighborhood size
    std::size_t m = 0;           // output feature width
    Kernel kernel = Kernel::point_mlp;
    Pooling pooling = Pooling::max;
};

struct ArchSpec {
    std::vector<LayerSpec> layers;
    Head head = Head::classify;
    std::size_t n_outputs = 0;   // classes or part labels
    std::size_t input_dim = 3;   // coordinate dimensionality
    std::size_t input_feats = 0; // extra per-point input channels
    std::size_t seg_head_hidden = 128;
    spectral::WeightScheme scheme;
    layers::ClusterBy cluster_by = layers::ClusterBy::spatial;
};

/// Cluster size for a cluster_pool layer. Interior layers must satisfy
/// k = 2c^2 exactly; the terminal classification layer (C = 1) pools whatever
/// neighborhood size is left, with c = max(2, floor(sqrt(k/2))).
std::size_t pool_csize(const LayerSpec& layer, bool terminal);

/// Throws ConfigError naming the violated rule if the architecture is
/// inconsistent.
void validate(const ArchSpec& arch);

/// Named presets. Classification archs mirror the four benchmark variants at
/// two input scales (1024/2048 points) plus a small "desk" scale for quick
/// experiments; "-seg" variants drop the global pooling layer.
ArchSpec named_arch(const std::string& name, std::size_t n_outputs);

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

struct LayerParams {
    Matrix w;              // point_mlp weights or spec_conv feature filter
    std::vector<double> b; // point_mlp bias (empty for spec_conv)
    std::vector<double> g; // spec_conv frequency kernel (empty for point_mlp)
};

struct DenseState {
    Matrix w;
    std::vector<double> b;
    bool has_bn = false;
    bool relu = true;
    double dropout_keep = 1.0; // 1.0 disables dropout
    std::vector<double> gamma, beta, run_mean, run_var;
};

struct FpParams {
    Matrix w;
    std::vector<double> b;
};

struct NetworkState {
    ArchSpec arch;
    std::vector<LayerParams> layers;
    std::vector<DenseState> dense;    // classification head (3 stages)
    std::vector<FpParams> fp;         // segmentation decoder (deepest first)
    std::vector<DenseState> seg_head; // per-point head (hidden + logits)
    std::uint64_t step = 0;
};

/// Deterministic initialization: spectral kernels all ones, weights uniform
/// with scale sqrt(6 / (fan_in + fan_out)), biases zero, BN at (gamma=1,
/// beta=0, running stats (0,1)).
NetworkState build_network(const ArchSpec& arch, std::uint64_t seed);

/// A same-shaped state with every parameter (and BN stat) zeroed — the
/// container used for gradients and optimizer moments.
NetworkState zeros_like(const NetworkState& state);

/// Views of every trainable array, in a fixed traversal order shared by
/// states, gradients, and optimizer moments. BN running statistics and the
/// step counter are not trainable and are excluded.
struct ParamView {
    double* data = nullptr;
    std::size_t size = 0;
};
std::vector<ParamView> param_views(NetworkState& state);

/// Total trainable parameter count (sum of param_views sizes).
std::size_t param_count(const NetworkState& state);

// ---------------------------------------------------------------------------
// Geometry (cacheable per cloud when coordinates do not change)
// ---------------------------------------------------------------------------

struct LayerGeometry {
    std::vector<std::size_t> centroids;
    std::vector<sampling::Neighborhood> hoods; // rel_coords + member indices
    std::vector<spectral::NeighborhoodGraph> graphs;  // spec_conv layers
    std::vector<layers::ClusterPoolPlan> pool_plans;  // spatial cluster_pool
    Matrix coords; // centroid coordinates (next level's point set)
};

struct CloudGeometry {
    std::vector<LayerGeometry> layers;
};

/// farthest-point centroids, k-NN neighborhoods, neighborhood graphs, and
/// cluster-pool plans for every layer — everything about a forward pass that
/// depends only on the coordinates. When a spec_conv layer also cluster-
/// pools in spatial mode, its convolution graph doubles as the first pooling
/// recurrence's graph (the coordinates are identical).
CloudGeometry build_geometry(const ArchSpec& arch, const Matrix& coords);

// ---------------------------------------------------------------------------
// Dense layer (affine -> BN -> ReLU -> dropout)
// ---------------------------------------------------------------------------

struct DenseTape {
    Matrix x;
    Matrix z;    // affine output
    Matrix xhat; // BN-normalized activations (empty without BN)
    std::vector<double> inv_std;
    Matrix pre_act; // input of the rectifier
    Matrix mask;    // inverted-dropout mask (empty when inactive)
};

struct DenseGrads {
    Matrix x, w;
    std::vector<double> b, gamma, beta;
};

/// In train mode BN uses batch statistics (batch >= 2 required) and folds
/// them into the running stats as running = mom*running + (1-mom)*batch;
/// dropout draws its mask from `rng`. In eval mode BN uses running stats and
/// dropout is a no-op.
Matrix dense_forward(const Matrix& x, DenseState& st, Mode mode, double bn_momentum,
                     Rng* rng, DenseTape* tape);

DenseGrads dense_backward(const Matrix& grad_y, const DenseTape& tape, const DenseState& st);

// ---------------------------------------------------------------------------
// Network forward/backward
// ---------------------------------------------------------------------------

struct LayerTape {
    const LayerGeometry* geo = nullptr;
    std::unique_ptr<LayerGeometry> owned; // set when no cached geometry given
    std::vector<layers::SpecConvTape> conv_tapes;
    std::vector<Matrix> relu_out; // post-rectifier activations (spec_conv)
    std::vector<layers::MlpTape> mlp_tapes;
    std::vector<layers::MaxPoolTape> max_tapes;
    std::vector<layers::ClusterPoolTape> cp_tapes;
};

struct CloudTape {
    std::vector<LayerTape> layers;
};

struct ClassifyResult {
    Matrix logits;                 // batch x n_outputs
    std::vector<CloudTape> clouds; // encoder tapes, one per batch item
    std::vector<DenseTape> dense;
};

/// Encode a batch of clouds and apply the classification head. `geos[i]`
/// may supply cached geometry for batch item i (nullptr entries or an empty
/// span mean "build it here"). Train mode records tapes and needs `rng` for
/// dropout; the batch must have >= 2 items for BN.
ClassifyResult forward_classify(NetworkState& state, const std::vector<const Cloud*>& batch,
                                Mode mode, double bn_momentum, Rng* rng,
                                const std::vector<const CloudGeometry*>& geos = {});

/// Exact gradients of sum(grad_logits .* logits) for the recorded forward
/// pass, accumulated over the batch in a NetworkState-shaped container.
NetworkState backward_classify(NetworkState& state, ClassifyResult& result,
                               const Matrix& grad_logits);

struct SegmentResult {
    Matrix logits; // n_points x n_outputs
    CloudTape encoder;
    std::vector<Matrix> level_feats; // encoder outputs per level (0 = input)
    std::vector<layers::FpTape> fp_tapes;
    std::vector<DenseTape> head;
};

/// Per-point labeling: run the encoder, propagate features back to the
/// original points through interpolation decoders with skip connections,
/// then apply the shared per-point head. Single cloud (BN-free path).
SegmentResult forward_segment(NetworkState& state, const Cloud& cloud, Mode mode, Rng* rng,
                              const CloudGeometry* geo = nullptr);

NetworkState backward_segment(NetworkState& state, SegmentResult& result,
                              const Matrix& grad_logits);

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

/// Versioned text checkpoint: architecture, step counter, and every tensor
/// (parameters and BN running stats) as hex floats — byte-stable across runs
/// and exact on round-trip.
void save_checkpoint(const NetworkState& state, const std::string& path);
NetworkState load_checkpoint(const std::string& path);

} // namespace specpoint::model
