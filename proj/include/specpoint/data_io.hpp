#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "specpoint/cloud.hpp"
#include "specpoint/matrix.hpp"

namespace specpoint::data {

using linalg::Matrix;

// ---------------------------------------------------------------------------
// Triangle meshes (OFF format)
// ---------------------------------------------------------------------------

struct Mesh {
    Matrix vertices; // v x 3
    std::vector<std::array<std::size_t, 3>> triangles;
};

/// Parses an ASCII OFF file. Polygons with more than three vertices are
/// fan-triangulated; `#` comments and CRLF line endings are handled. Throws
/// DataError naming the offending line on malformed input.
Mesh load_off(const std::string& path);

struct MeshSample {
    Matrix coords;  // n x 3, centered on the sample centroid, max radius 1
    Matrix normals; // n x 3 unit face normals (empty unless requested)
    std::array<double, 3> center{}; // centroid subtracted before scaling
    double scale = 1.0;             // max radius divided out
};

/// Area-weighted uniform surface sampling with barycentric coordinates.
/// The applied normalization is reported so callers can map samples back
/// onto the original mesh.
MeshSample sample_mesh(const Mesh& mesh, std::size_t n, std::uint64_t seed,
                       bool with_normals = false);

/// Centers `coords` on its centroid and scales to unit max radius in place.
/// Returns the subtracted center and the scale divisor. Degenerate inputs
/// (all points coincident) keep scale 1.
std::pair<std::array<double, 3>, double> normalize_points(Matrix& coords);

// ---------------------------------------------------------------------------
// Plain-text clouds
// ---------------------------------------------------------------------------

struct XyzCloud {
    Matrix coords;                   // n x 3
    Matrix normals;                  // n x 3 or empty
    std::vector<std::size_t> labels; // per-point labels or empty
};

/// Whitespace-separated lines `x y z [nx ny nz] [label]`; `#` starts a
/// comment, blank lines are skipped. All data lines must carry the same
/// column count. Throws DataError with a line number on bad tokens.
XyzCloud load_xyz(const std::string& path);

/// Full-precision text writer; load_xyz(save_xyz(c)) preserves every value
/// to better than 1e-12.
void save_xyz(const std::string& path, const XyzCloud& cloud);

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

struct Item {
    Cloud cloud;
    std::size_t label = 0;                 // classification target
    std::vector<std::size_t> point_labels; // per-point targets (segmentation)
};

struct Dataset {
    std::vector<Item> items;
    std::vector<std::string> class_names; // classes or part names
    std::string split;

    std::size_t n_classes() const { return class_names.size(); }
};

/// Four synthetic shape classes — sphere (r=1), cube surface ([-1,1]^3),
/// cylinder surface (r=0.5, h=2), flat disk (r=1) — uniformly surface
/// sampled, Gaussian coordinate noise sigma=`noise`, a uniform random
/// rotation per item. Shapes are origin-centered by construction.
Dataset synth_shapes(std::size_t n_per_class, std::size_t n_points, double noise,
                     std::uint64_t seed);

/// Cylinder clouds with planted per-point part labels: wall = 0, caps = 1.
Dataset synth_cylinders(std::size_t n_items, std::size_t n_points, double noise,
                        std::uint64_t seed);

/// Directory serialization: one xyz file per item plus `manifest.txt`
/// (split tag, class names, per-item file/label rows). Per-point labels ride
/// in the xyz label column.
void save_dataset(const Dataset& ds, const std::string& dir);
Dataset load_dataset(const std::string& dir);

/// Order-sensitive FNV-1a fingerprint of every coordinate, feature, and
/// label in the dataset; stable across platforms for identical content.
std::uint64_t content_hash(const Dataset& ds);

// ---------------------------------------------------------------------------
// Image clouds (IDX container)
// ---------------------------------------------------------------------------

struct IdxImages {
    std::size_t count = 0, rows = 0, cols = 0;
    std::vector<std::uint8_t> pixels; // count * rows * cols, row-major
};

/// Big-endian IDX readers (magic 2051 for images, 2049 for labels).
IdxImages load_idx_images(const std::string& path);
std::vector<std::uint8_t> load_idx_labels(const std::string& path);

void save_idx_images(const std::string& path, const IdxImages& images);
void save_idx_labels(const std::string& path, const std::vector<std::uint8_t>& labels);

enum class PixelMode { full_grid, subsample };

/// One 28x28 (or rows x cols) grayscale image as a planar point cloud:
/// pixel centers mapped affinely into [-1,1]^2, intensity/255 as a single
/// feature channel. full_grid keeps every pixel; subsample keeps the
/// `n_sub` brightest (ties broken in row-major order).
Cloud image_to_points(const std::uint8_t* pixels, std::size_t rows, std::size_t cols,
                      PixelMode mode, std::size_t n_sub = 0);

/// Loads an IDX image/label pair into a dataset of planar clouds, keeping at
/// most `limit` items (0 = all).
Dataset image_dataset(const std::string& images_path, const std::string& labels_path,
                      PixelMode mode, std::size_t n_sub, std::size_t limit,
                      const std::string& split);

/// Synthetic stroke-rendered digit images (10 classes) in genuine IDX
/// layout — a stand-in corpus for handwritten-digit experiments, exercised
/// through the same IDX readers as the real thing.
struct DigitSet {
    IdxImages images;
    std::vector<std::uint8_t> labels;
};
DigitSet synth_digit_images(std::size_t n, std::uint64_t seed);

} // namespace specpoint::data
