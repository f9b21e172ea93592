#include "specpoint/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>

#include "specpoint/errors.hpp"

namespace specpoint::model {

namespace {

constexpr double kBnEps = 1e-5;

void add_into(Matrix& dst, const Matrix& src) {
    for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

void add_into(std::vector<double>& dst, const std::vector<double>& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

// Kernel input width of layer l: relative coordinates plus the previous
// level's feature channels.
std::size_t layer_in_width(const ArchSpec& arch, std::size_t l) {
    return arch.input_dim + (l == 0 ? arch.input_feats : arch.layers[l - 1].m);
}

bool is_terminal_classify(const ArchSpec& arch, std::size_t l) {
    return arch.head == Head::classify && l + 1 == arch.layers.size();
}

} // namespace

std::size_t pool_csize(const LayerSpec& layer, bool terminal) {
    if (!terminal) {
        // Interior layers: k = 2c^2 exactly.
        const double c_exact = std::sqrt(static_cast<double>(layer.k) / 2.0);
        const auto c = static_cast<std::size_t>(std::llround(c_exact));
        if (c < 2 || 2 * c * c != layer.k) {
            throw ConfigError("cluster_pool layer requires k = 2c^2 for a cluster size "
                              "c >= 2; k = " + std::to_string(layer.k) + " has no such c");
        }
        return c;
    }
    // The terminal classification layer pools whatever remains; derive the
    // nearest admissible cluster size from the same relationship.
    const auto c = static_cast<std::size_t>(
        std::floor(std::sqrt(static_cast<double>(layer.k) / 2.0)));
    return std::max<std::size_t>(2, c);
}

void validate(const ArchSpec& arch) {
    if (arch.layers.empty()) throw ConfigError("architecture has no layers");
    if (arch.n_outputs < 1) throw ConfigError("architecture needs at least one output");
    if (arch.input_dim < 1) throw ConfigError("architecture needs a coordinate dimension");

    for (std::size_t l = 0; l < arch.layers.size(); ++l) {
        const LayerSpec& layer = arch.layers[l];
        const std::string tag = "layer " + std::to_string(l + 1);
        if (layer.n_centroids < 1) throw ConfigError(tag + ": centroid count must be >= 1");
        if (layer.k < 1) throw ConfigError(tag + ": neighborhood size must be >= 1");
        if (layer.m < 1) throw ConfigError(tag + ": feature width must be >= 1");
        if (l > 0 && layer.n_centroids > arch.layers[l - 1].n_centroids) {
            throw ConfigError(tag + ": centroid counts must be non-increasing (" +
                              std::to_string(arch.layers[l - 1].n_centroids) + " -> " +
                              std::to_string(layer.n_centroids) + ")");
        }
        if (l > 0 && layer.k > arch.layers[l - 1].n_centroids) {
            throw ConfigError(tag + ": neighborhood size " + std::to_string(layer.k) +
                              " exceeds the " + std::to_string(arch.layers[l - 1].n_centroids) +
                              " points that reach it");
        }
        if (layer.pooling == Pooling::cluster_pool) {
            (void)pool_csize(layer, is_terminal_classify(arch, l)); // throws if violated
        }
    }
    if (arch.head == Head::classify && arch.layers.back().n_centroids != 1) {
        throw ConfigError("classification architectures must end with a single centroid");
    }
}

namespace {

ArchSpec make_cls_arch(const std::vector<std::size_t>& c, const std::vector<std::size_t>& k,
                       const std::vector<std::size_t>& m, Kernel kernel, Pooling pooling,
                       std::size_t n_outputs) {
    ArchSpec arch;
    for (std::size_t i = 0; i < c.size(); ++i) {
        arch.layers.push_back({c[i], k[i], m[i], kernel, pooling});
    }
    arch.head = Head::classify;
    arch.n_outputs = n_outputs;
    return arch;
}

} // namespace

ArchSpec named_arch(const std::string& name, std::size_t n_outputs) {
    ArchSpec arch;
    if (name == "1k-3l-pointnet++") {
        arch = make_cls_arch({512, 128, 1}, {64, 64, 128}, {128, 256, 1024},
                             Kernel::point_mlp, Pooling::max, n_outputs);
    } else if (name == "1k-4l-pointnet++") {
        arch = make_cls_arch({512, 128, 32, 1}, {32, 32, 8, 32}, {128, 256, 512, 1024},
                             Kernel::point_mlp, Pooling::max, n_outputs);
    } else if (name == "1k-4l-spec-max") {
        arch = make_cls_arch({512, 128, 32, 1}, {32, 32, 8, 32}, {128, 256, 512, 1024},
                             Kernel::spec_conv, Pooling::max, n_outputs);
    } else if (name == "1k-4l-spec-cp") {
        arch = make_cls_arch({512, 128, 32, 1}, {32, 32, 8, 32}, {128, 256, 512, 1024},
                             Kernel::spec_conv, Pooling::cluster_pool, n_outputs);
    } else if (name == "2k-3l-pointnet++") {
        arch = make_cls_arch({1024, 256, 1}, {64, 64, 256}, {128, 256, 1024},
                             Kernel::point_mlp, Pooling::max, n_outputs);
    } else if (name == "2k-4l-pointnet++") {
        arch = make_cls_arch({1024, 256, 64, 1}, {32, 32, 8, 64}, {128, 256, 512, 1024},
                             Kernel::point_mlp, Pooling::max, n_outputs);
    } else if (name == "2k-4l-spec-max") {
        arch = make_cls_arch({1024, 256, 64, 1}, {32, 32, 8, 64}, {128, 256, 512, 1024},
                             Kernel::spec_conv, Pooling::max, n_outputs);
    } else if (name == "2k-4l-spec-cp") {
        arch = make_cls_arch({1024, 256, 64, 1}, {32, 32, 8, 64}, {128, 256, 512, 1024},
                             Kernel::spec_conv, Pooling::cluster_pool, n_outputs);
    } else if (name == "desk-pointnet++") {
        arch = make_cls_arch({64, 16, 1}, {32, 8, 16}, {64, 128, 256}, Kernel::point_mlp,
                             Pooling::max, n_outputs);
    } else if (name == "desk-spec-max") {
        arch = make_cls_arch({64, 16, 1}, {32, 8, 16}, {64, 128, 256}, Kernel::spec_conv,
                             Pooling::max, n_outputs);
    } else if (name == "desk-spec-cp") {
        arch = make_cls_arch({64, 16, 1}, {32, 8, 16}, {64, 128, 256}, Kernel::spec_conv,
                             Pooling::cluster_pool, n_outputs);
    } else if (name == "desk-seg-pointnet++" || name == "desk-seg-spec-max" ||
               name == "desk-seg-spec-cp") {
        const Kernel kernel =
            name == "desk-seg-pointnet++" ? Kernel::point_mlp : Kernel::spec_conv;
        const Pooling pooling =
            name == "desk-seg-spec-cp" ? Pooling::cluster_pool : Pooling::max;
        arch.layers = {{128, 32, 64, kernel, pooling}, {32, 8, 128, kernel, pooling}};
        arch.head = Head::segment;
        arch.n_outputs = n_outputs;
    } else {
        throw ConfigError("unknown architecture '" + name + "'");
    }
    validate(arch);
    return arch;
}

// ---------------------------------------------------------------------------
// Parameter construction
// ---------------------------------------------------------------------------

namespace {

Matrix glorot(Rng& rng, std::size_t fan_in, std::size_t fan_out) {
    const double scale = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Matrix w(fan_in, fan_out);
    for (double& v : w.data) v = rng.uniform(-scale, scale);
    return w;
}

DenseState make_dense(Rng& rng, std::size_t in, std::size_t out, bool bn, bool relu,
                      double keep) {
    DenseState st;
    st.w = glorot(rng, in, out);
    st.b.assign(out, 0.0);
    st.has_bn = bn;
    st.relu = relu;
    st.dropout_keep = keep;
    if (bn) {
        st.gamma.assign(out, 1.0);
        st.beta.assign(out, 0.0);
        st.run_mean.assign(out, 0.0);
        st.run_var.assign(out, 1.0);
    }
    return st;
}

} // namespace

NetworkState build_network(const ArchSpec& arch, std::uint64_t seed) {
    validate(arch);
    NetworkState state;
    state.arch = arch;
    Rng rng(derive_seed(seed, 0x6d6f64656cULL)); // stream tag: "model"

    for (std::size_t l = 0; l < arch.layers.size(); ++l) {
        const LayerSpec& layer = arch.layers[l];
        const std::size_t in = layer_in_width(arch, l);
        LayerParams params;
        params.w = glorot(rng, in, layer.m);
        if (layer.kernel == Kernel::point_mlp) {
            params.b.assign(layer.m, 0.0);
        } else {
            params.g.assign(layer.k, 1.0); // identity modulation at init
        }
        state.layers.push_back(std::move(params));
    }

    if (arch.head == Head::classify) {
        const std::size_t m_last = arch.layers.back().m;
        state.dense.push_back(make_dense(rng, m_last, 512, true, true, 0.5));
        state.dense.push_back(make_dense(rng, 512, 256, true, true, 0.5));
        state.dense.push_back(make_dense(rng, 256, arch.n_outputs, false, false, 1.0));
    } else {
        // Interpolation decoders, deepest first: level L -> L-1 -> ... -> 0,
        // each mirroring the width of the level it lands on.
        const std::size_t levels = arch.layers.size();
        for (std::size_t i = levels; i >= 1; --i) {
            const std::size_t coarse_m = arch.layers[i - 1].m;
            const std::size_t skip_m = i >= 2 ? arch.layers[i - 2].m : arch.input_feats;
            const std::size_t out_m = i >= 2 ? arch.layers[i - 2].m : arch.layers[0].m;
            FpParams fp;
            fp.w = glorot(rng, coarse_m + skip_m, out_m);
            fp.b.assign(out_m, 0.0);
            state.fp.push_back(std::move(fp));
        }
        state.seg_head.push_back(make_dense(rng, arch.layers[0].m, arch.seg_head_hidden,
                                            false, true, 1.0));
        state.seg_head.push_back(
            make_dense(rng, arch.seg_head_hidden, arch.n_outputs, false, false, 1.0));
    }
    return state;
}

NetworkState zeros_like(const NetworkState& state) {
    NetworkState z = state;
    z.step = 0;
    for (LayerParams& p : z.layers) {
        std::fill(p.w.data.begin(), p.w.data.end(), 0.0);
        std::fill(p.b.begin(), p.b.end(), 0.0);
        std::fill(p.g.begin(), p.g.end(), 0.0);
    }
    const auto zero_dense = [](DenseState& d) {
        std::fill(d.w.data.begin(), d.w.data.end(), 0.0);
        std::fill(d.b.begin(), d.b.end(), 0.0);
        std::fill(d.gamma.begin(), d.gamma.end(), 0.0);
        std::fill(d.beta.begin(), d.beta.end(), 0.0);
        std::fill(d.run_mean.begin(), d.run_mean.end(), 0.0);
        std::fill(d.run_var.begin(), d.run_var.end(), 0.0);
    };
    for (DenseState& d : z.dense) zero_dense(d);
    for (DenseState& d : z.seg_head) zero_dense(d);
    for (FpParams& p : z.fp) {
        std::fill(p.w.data.begin(), p.w.data.end(), 0.0);
        std::fill(p.b.begin(), p.b.end(), 0.0);
    }
    return z;
}

std::vector<ParamView> param_views(NetworkState& state) {
    std::vector<ParamView> views;
    const auto push = [&views](std::vector<double>& v) {
        if (!v.empty()) views.push_back({v.data(), v.size()});
    };
    const auto push_m = [&views](Matrix& m) {
        if (!m.data.empty()) views.push_back({m.data.data(), m.data.size()});
    };
    for (LayerParams& p : state.layers) {
        push_m(p.w);
        push(p.b);
        push(p.g);
    }
    const auto push_dense = [&](DenseState& d) {
        push_m(d.w);
        push(d.b);
        push(d.gamma);
        push(d.beta);
    };
    for (DenseState& d : state.dense) push_dense(d);
    for (FpParams& p : state.fp) {
        push_m(p.w);
        push(p.b);
    }
    for (DenseState& d : state.seg_head) push_dense(d);
    return views;
}

std::size_t param_count(const NetworkState& state) {
    std::size_t total = 0;
    for (const ParamView& v : param_views(const_cast<NetworkState&>(state))) total += v.size;
    return total;
}

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

CloudGeometry build_geometry(const ArchSpec& arch, const Matrix& coords) {
    if (coords.cols != arch.input_dim) {
        throw ConfigError("cloud has " + std::to_string(coords.cols) +
                          "-dimensional coordinates, architecture expects " +
                          std::to_string(arch.input_dim));
    }

    CloudGeometry geo;
    const Matrix* level_coords = &coords;
    for (std::size_t l = 0; l < arch.layers.size(); ++l) {
        const LayerSpec& layer = arch.layers[l];
        const std::size_t n = level_coords->rows;
        if (layer.k > n || layer.n_centroids > n) {
            throw ConfigError("layer " + std::to_string(l + 1) + " needs " +
                              std::to_string(std::max(layer.k, layer.n_centroids)) +
                              " points but only " + std::to_string(n) + " reach it");
        }

        LayerGeometry lg;
        lg.centroids = sampling::fps(*level_coords, layer.n_centroids);
        lg.hoods = sampling::group(*level_coords, Matrix(n, 0), lg.centroids, layer.k);

        const bool conv = layer.kernel == Kernel::spec_conv;
        const bool cp = layer.pooling == Pooling::cluster_pool &&
                        arch.cluster_by == layers::ClusterBy::spatial;
        if (conv) lg.graphs.reserve(lg.hoods.size());
        if (cp) lg.pool_plans.reserve(lg.hoods.size());
        const std::size_t csize =
            layer.pooling == Pooling::cluster_pool
                ? pool_csize(layer, is_terminal_classify(arch, l))
                : 0;
        for (std::size_t h = 0; h < lg.hoods.size(); ++h) {
            const Matrix& rel = lg.hoods[h].rel_coords;
            if (conv) lg.graphs.push_back(spectral::build_graph(rel, arch.scheme));
            if (cp) {
                // A convolution graph over the same coordinates serves as the
                // first pooling recurrence's graph.
                const spectral::NeighborhoodGraph* first = conv ? &lg.graphs[h] : nullptr;
                lg.pool_plans.push_back(
                    layers::cluster_pool_plan(rel, csize, arch.scheme, first));
            }
        }

        lg.coords = Matrix(layer.n_centroids, level_coords->cols);
        for (std::size_t h = 0; h < lg.centroids.size(); ++h) {
            const double* src = level_coords->row_ptr(lg.centroids[h]);
            double* dst = lg.coords.row_ptr(h);
            for (std::size_t d = 0; d < lg.coords.cols; ++d) dst[d] = src[d];
        }
        geo.layers.push_back(std::move(lg));
        level_coords = &geo.layers.back().coords;
    }
    return geo;
}

// ---------------------------------------------------------------------------
// Dense layer
// ---------------------------------------------------------------------------

Matrix dense_forward(const Matrix& x, DenseState& st, Mode mode, double bn_momentum,
                     Rng* rng, DenseTape* tape) {
    if (x.cols != st.w.rows) {
        throw ConfigError("dense layer expects " + std::to_string(st.w.rows) +
                          " inputs, got " + std::to_string(x.cols));
    }
    const std::size_t n = x.rows;
    const std::size_t h = st.w.cols;

    Matrix z(n, h);
    linalg::matmul_into(z, x, st.w);
    for (std::size_t i = 0; i < n; ++i) {
        double* row = z.row_ptr(i);
        for (std::size_t j = 0; j < h; ++j) row[j] += st.b[j];
    }

    Matrix act = z;
    Matrix xhat;
    std::vector<double> inv_std;
    if (st.has_bn) {
        if (mode == Mode::train) {
            if (n < 2) {
                throw ConfigError("batch normalization needs a batch of at least 2 rows "
                                  "in train mode, got " + std::to_string(n));
            }
            xhat = Matrix(n, h);
            inv_std.resize(h);
            for (std::size_t j = 0; j < h; ++j) {
                double mean = 0.0;
                for (std::size_t i = 0; i < n; ++i) mean += z(i, j);
                mean /= static_cast<double>(n);
                double var = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    const double d = z(i, j) - mean;
                    var += d * d;
                }
                var /= static_cast<double>(n);
                inv_std[j] = 1.0 / std::sqrt(var + kBnEps);
                for (std::size_t i = 0; i < n; ++i) {
                    xhat(i, j) = (z(i, j) - mean) * inv_std[j];
                    act(i, j) = st.gamma[j] * xhat(i, j) + st.beta[j];
                }
                st.run_mean[j] = bn_momentum * st.run_mean[j] + (1.0 - bn_momentum) * mean;
                st.run_var[j] = bn_momentum * st.run_var[j] + (1.0 - bn_momentum) * var;
            }
        } else {
            for (std::size_t j = 0; j < h; ++j) {
                const double scale = st.gamma[j] / std::sqrt(st.run_var[j] + kBnEps);
                for (std::size_t i = 0; i < n; ++i) {
                    act(i, j) = scale * (z(i, j) - st.run_mean[j]) + st.beta[j];
                }
            }
        }
    }

    Matrix pre_act;
    if (st.relu) {
        pre_act = act;
        for (double& v : act.data) v = std::max(0.0, v);
    }

    Matrix mask;
    if (mode == Mode::train && st.dropout_keep < 1.0) {
        if (rng == nullptr) {
            throw ConfigError("dense layer dropout needs a random stream in train mode");
        }
        mask = Matrix(n, h);
        const double inv_keep = 1.0 / st.dropout_keep;
        for (std::size_t i = 0; i < mask.data.size(); ++i) {
            mask.data[i] = rng->uniform01() < st.dropout_keep ? inv_keep : 0.0;
            act.data[i] *= mask.data[i];
        }
    }

    if (tape != nullptr) {
        tape->x = x;
        tape->z = std::move(z);
        tape->xhat = std::move(xhat);
        tape->inv_std = std::move(inv_std);
        tape->pre_act = std::move(pre_act);
        tape->mask = std::move(mask);
    }
    return act;
}

DenseGrads dense_backward(const Matrix& grad_y, const DenseTape& tape, const DenseState& st) {
    const std::size_t n = tape.x.rows;
    const std::size_t h = st.w.cols;
    if (grad_y.rows != n || grad_y.cols != h) {
        throw ConfigError("dense backward: cotangent shape mismatch");
    }

    Matrix g = grad_y;
    if (!tape.mask.data.empty()) {
        for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] *= tape.mask.data[i];
    }
    if (st.relu) {
        for (std::size_t i = 0; i < g.data.size(); ++i) {
            if (tape.pre_act.data[i] <= 0.0) g.data[i] = 0.0;
        }
    }

    DenseGrads grads;
    Matrix gz;
    if (st.has_bn) {
        grads.gamma.assign(h, 0.0);
        grads.beta.assign(h, 0.0);
        gz = Matrix(n, h);
        const auto dn = static_cast<double>(n);
        for (std::size_t j = 0; j < h; ++j) {
            double sum_g = 0.0, sum_gx = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                grads.gamma[j] += g(i, j) * tape.xhat(i, j);
                grads.beta[j] += g(i, j);
                sum_g += g(i, j);
                sum_gx += g(i, j) * tape.xhat(i, j);
            }
            const double scale = st.gamma[j] * tape.inv_std[j] / dn;
            for (std::size_t i = 0; i < n; ++i) {
                gz(i, j) = scale * (dn * g(i, j) - sum_g - tape.xhat(i, j) * sum_gx);
            }
        }
    } else {
        gz = std::move(g);
    }

    grads.w = Matrix(st.w.rows, st.w.cols);
    linalg::matmul_at_b_into(grads.w, tape.x, gz);
    grads.b.assign(h, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = gz.row_ptr(i);
        for (std::size_t j = 0; j < h; ++j) grads.b[j] += row[j];
    }
    grads.x = Matrix(n, st.w.rows);
    linalg::matmul_a_bt_into(grads.x, gz, st.w);
    return grads;
}

// ---------------------------------------------------------------------------
// Encoder forward/backward (shared by both heads)
// ---------------------------------------------------------------------------

namespace {

// Kernel input of one neighborhood: [rel_coords | previous-level features].
Matrix gather_input(const sampling::Neighborhood& hood, const Matrix& feats) {
    const std::size_t k = hood.rel_coords.rows;
    const std::size_t d = hood.rel_coords.cols;
    const std::size_t m = feats.cols;
    Matrix x(k, d + m);
    for (std::size_t i = 0; i < k; ++i) {
        double* row = x.row_ptr(i);
        const double* rel = hood.rel_coords.row_ptr(i);
        for (std::size_t j = 0; j < d; ++j) row[j] = rel[j];
        if (m > 0) {
            const double* f = feats.row_ptr(hood.member_indices[i]);
            for (std::size_t j = 0; j < m; ++j) row[d + j] = f[j];
        }
    }
    return x;
}

// Run the encoder over one cloud. `level_feats`, when non-null, collects the
// feature matrix of every level (index 0 = the input features).
Matrix encode_cloud(NetworkState& state, const Cloud& cloud, const CloudGeometry* geo,
                    CloudTape& tape, std::vector<Matrix>* level_feats) {
    const ArchSpec& arch = state.arch;
    if (cloud.feats.cols != arch.input_feats || cloud.feats.rows != cloud.coords.rows) {
        throw ConfigError("cloud features are " + std::to_string(cloud.feats.rows) + "x" +
                          std::to_string(cloud.feats.cols) + ", architecture expects " +
                          std::to_string(cloud.coords.rows) + "x" +
                          std::to_string(arch.input_feats));
    }

    tape.layers.clear();
    tape.layers.resize(arch.layers.size());
    if (geo == nullptr) {
        CloudGeometry built = build_geometry(arch, cloud.coords);
        for (std::size_t l = 0; l < arch.layers.size(); ++l) {
            tape.layers[l].owned =
                std::make_unique<LayerGeometry>(std::move(built.layers[l]));
            tape.layers[l].geo = tape.layers[l].owned.get();
        }
    } else {
        for (std::size_t l = 0; l < arch.layers.size(); ++l) {
            tape.layers[l].geo = &geo->layers[l];
        }
    }

    Matrix feats = cloud.feats;
    if (level_feats != nullptr) level_feats->push_back(feats);
    for (std::size_t l = 0; l < arch.layers.size(); ++l) {
        const LayerSpec& layer = arch.layers[l];
        const LayerParams& params = state.layers[l];
        LayerTape& lt = tape.layers[l];
        const LayerGeometry& lg = *lt.geo;
        const std::size_t n_hoods = lg.hoods.size();

        lt.conv_tapes.reserve(layer.kernel == Kernel::spec_conv ? n_hoods : 0);
        lt.relu_out.reserve(layer.kernel == Kernel::spec_conv ? n_hoods : 0);
        lt.mlp_tapes.reserve(layer.kernel == Kernel::point_mlp ? n_hoods : 0);

        Matrix out(n_hoods, layer.m);
        for (std::size_t h = 0; h < n_hoods; ++h) {
            const Matrix x = gather_input(lg.hoods[h], feats);
            Matrix activated;
            if (layer.kernel == Kernel::spec_conv) {
                layers::SpecConvParams conv{params.g, params.w};
                auto [y, t] = layers::spectral_conv_forward(x, lg.graphs[h], conv);
                activated = layers::relu(y);
                lt.conv_tapes.push_back(std::move(t));
                lt.relu_out.push_back(activated);
            } else {
                auto [y, t] = layers::point_mlp_forward(x, params.w, params.b);
                activated = std::move(y);
                lt.mlp_tapes.push_back(std::move(t));
            }

            Matrix pooled;
            if (layer.pooling == Pooling::max) {
                auto [row, t] = layers::max_pool_set(activated);
                pooled = std::move(row);
                lt.max_tapes.push_back(std::move(t));
            } else if (arch.cluster_by == layers::ClusterBy::spatial) {
                auto [row, t] = layers::cluster_pool_apply(activated, lg.pool_plans[h]);
                pooled = std::move(row);
                lt.cp_tapes.push_back(std::move(t));
            } else {
                const layers::PoolSpec spec{
                    pool_csize(layer, is_terminal_classify(arch, l)),
                    layers::ClusterBy::feature};
                auto [row, t] = layers::cluster_pool_forward(activated, Matrix(),
                                                             spec, arch.scheme);
                pooled = std::move(row);
                lt.cp_tapes.push_back(std::move(t));
            }
            for (std::size_t j = 0; j < layer.m; ++j) out(h, j) = pooled(0, j);
        }
        feats = std::move(out);
        if (level_feats != nullptr) level_feats->push_back(feats);
    }
    return feats;
}

// Backward through one encoder layer: distributes grad_out (one row per
// centroid) into parameter gradients and the previous level's feature grads.
Matrix encode_layer_backward(const ArchSpec& arch, std::size_t l, const LayerParams& params,
                             LayerParams& grad_params, LayerTape& lt, const Matrix& grad_out,
                             std::size_t n_prev) {
    const LayerSpec& layer = arch.layers[l];
    const std::size_t d = arch.input_dim;
    const std::size_t m_prev = l == 0 ? arch.input_feats : arch.layers[l - 1].m;
    Matrix grad_feats(n_prev, m_prev);

    for (std::size_t h = 0; h < lt.geo->hoods.size(); ++h) {
        Matrix grad_row(1, layer.m);
        for (std::size_t j = 0; j < layer.m; ++j) grad_row(0, j) = grad_out(h, j);

        Matrix grad_act;
        if (layer.pooling == Pooling::max) {
            grad_act = layers::max_pool_set_backward(grad_row, lt.max_tapes[h]);
        } else {
            grad_act = layers::cluster_pool_backward(grad_row, lt.cp_tapes[h]);
        }

        Matrix grad_x;
        if (layer.kernel == Kernel::spec_conv) {
            const Matrix grad_pre = layers::relu_backward(grad_act, lt.relu_out[h]);
            layers::SpecConvParams conv{params.g, params.w};
            layers::SpecConvGrads grads =
                layers::spectral_conv_backward(grad_pre, lt.conv_tapes[h], conv);
            add_into(grad_params.g, grads.g);
            add_into(grad_params.w, grads.w_f);
            grad_x = std::move(grads.x);
        } else {
            layers::MlpGrads grads =
                layers::point_mlp_backward(grad_act, lt.mlp_tapes[h], params.w);
            add_into(grad_params.w, grads.w);
            add_into(grad_params.b, grads.b);
            grad_x = std::move(grads.x);
        }

        if (m_prev > 0) {
            const sampling::Neighborhood& hood = lt.geo->hoods[h];
            for (std::size_t i = 0; i < hood.member_indices.size(); ++i) {
                double* dst = grad_feats.row_ptr(hood.member_indices[i]);
                const double* src = grad_x.row_ptr(i);
                for (std::size_t j = 0; j < m_prev; ++j) dst[j] += src[d + j];
            }
        }
    }
    return grad_feats;
}

} // namespace

// ---------------------------------------------------------------------------
// Classification
// ---------------------------------------------------------------------------

ClassifyResult forward_classify(NetworkState& state, const std::vector<const Cloud*>& batch,
                                Mode mode, double bn_momentum, Rng* rng,
                                const std::vector<const CloudGeometry*>& geos) {
    if (state.arch.head != Head::classify) {
        throw ConfigError("forward_classify called on a segmentation network");
    }
    if (batch.empty()) throw ConfigError("forward_classify: empty batch");
    if (!geos.empty() && geos.size() != batch.size()) {
        throw ConfigError("forward_classify: geometry cache size mismatch");
    }

    ClassifyResult result;
    result.clouds.resize(batch.size());
    const std::size_t m_last = state.arch.layers.back().m;
    Matrix pooled(batch.size(), m_last);
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const CloudGeometry* geo = geos.empty() ? nullptr : geos[b];
        const Matrix feats =
            encode_cloud(state, *batch[b], geo, result.clouds[b], nullptr);
        for (std::size_t j = 0; j < m_last; ++j) pooled(b, j) = feats(0, j);
    }

    result.dense.resize(state.dense.size());
    Matrix x = std::move(pooled);
    for (std::size_t i = 0; i < state.dense.size(); ++i) {
        x = dense_forward(x, state.dense[i], mode, bn_momentum, rng, &result.dense[i]);
    }
    result.logits = std::move(x);
    return result;
}

NetworkState backward_classify(NetworkState& state, ClassifyResult& result,
                               const Matrix& grad_logits) {
    NetworkState grads = zeros_like(state);

    Matrix g = grad_logits;
    for (std::size_t i = state.dense.size(); i-- > 0;) {
        DenseGrads dg = dense_backward(g, result.dense[i], state.dense[i]);
        add_into(grads.dense[i].w, dg.w);
        add_into(grads.dense[i].b, dg.b);
        if (!dg.gamma.empty()) {
            add_into(grads.dense[i].gamma, dg.gamma);
            add_into(grads.dense[i].beta, dg.beta);
        }
        g = std::move(dg.x);
    }

    const ArchSpec& arch = state.arch;
    for (std::size_t b = 0; b < result.clouds.size(); ++b) {
        CloudTape& tape = result.clouds[b];
        Matrix grad_feats(1, arch.layers.back().m);
        for (std::size_t j = 0; j < grad_feats.cols; ++j) grad_feats(0, j) = g(b, j);

        for (std::size_t l = arch.layers.size(); l-- > 0;) {
            std::size_t n_prev;
            if (l > 0) {
                n_prev = arch.layers[l - 1].n_centroids;
            } else if (arch.input_feats == 0) {
                n_prev = 1; // scatter is skipped; the row count is unused
            } else {
                // The input-point gradient is discarded, but the scatter still
                // indexes the input cloud, so size the buffer to cover it.
                n_prev = 1;
                for (const auto& hood : tape.layers[0].geo->hoods) {
                    for (std::size_t idx : hood.member_indices) {
                        n_prev = std::max(n_prev, idx + 1);
                    }
                }
            }
            grad_feats = encode_layer_backward(arch, l, state.layers[l], grads.layers[l],
                                               tape.layers[l], grad_feats, n_prev);
        }
    }
    return grads;
}

// ---------------------------------------------------------------------------
// Segmentation
// ---------------------------------------------------------------------------

SegmentResult forward_segment(NetworkState& state, const Cloud& cloud, Mode mode, Rng* rng,
                              const CloudGeometry* geo) {
    if (state.arch.head != Head::segment) {
        throw ConfigError("forward_segment called on a classification network");
    }
    const ArchSpec& arch = state.arch;

    SegmentResult result;
    Matrix deep = encode_cloud(state, cloud, geo, result.encoder, &result.level_feats);

    // Decoder: interpolate level L down to level 0, concatenating each skip.
    const std::size_t levels = arch.layers.size();
    Matrix current = std::move(deep);
    result.fp_tapes.resize(levels);
    for (std::size_t i = levels; i >= 1; --i) {
        const Matrix& coarse_coords = result.encoder.layers[i - 1].geo->coords;
        const Matrix& fine_coords =
            i >= 2 ? result.encoder.layers[i - 2].geo->coords : cloud.coords;
        const Matrix& skip = result.level_feats[i - 1];
        const FpParams& fp = state.fp[levels - i];
        auto [y, t] = layers::fp_interpolate(coarse_coords, current, fine_coords, skip,
                                             fp.w, fp.b);
        current = std::move(y);
        result.fp_tapes[levels - i] = std::move(t);
    }

    result.head.resize(state.seg_head.size());
    for (std::size_t i = 0; i < state.seg_head.size(); ++i) {
        current = dense_forward(current, state.seg_head[i], mode, 0.0, rng, &result.head[i]);
    }
    result.logits = std::move(current);
    return result;
}

NetworkState backward_segment(NetworkState& state, SegmentResult& result,
                              const Matrix& grad_logits) {
    NetworkState grads = zeros_like(state);
    const ArchSpec& arch = state.arch;
    const std::size_t levels = arch.layers.size();

    Matrix g = grad_logits;
    for (std::size_t i = state.seg_head.size(); i-- > 0;) {
        DenseGrads dg = dense_backward(g, result.head[i], state.seg_head[i]);
        add_into(grads.seg_head[i].w, dg.w);
        add_into(grads.seg_head[i].b, dg.b);
        if (!dg.gamma.empty()) {
            add_into(grads.seg_head[i].gamma, dg.gamma);
            add_into(grads.seg_head[i].beta, dg.beta);
        }
        g = std::move(dg.x);
    }

    // Decoder backward, finest to deepest; each stage contributes a skip
    // gradient to its level and passes the coarse gradient upward.
    std::vector<Matrix> level_grads(levels + 1);
    for (std::size_t i = 1; i <= levels; ++i) {
        const std::size_t t = levels - i; // tape/param index of stage i -> i-1
        layers::FpGrads fg = layers::fp_interpolate_backward(g, result.fp_tapes[t],
                                                             state.fp[t].w);
        add_into(grads.fp[t].w, fg.w);
        add_into(grads.fp[t].b, fg.b);
        if (level_grads[i - 1].data.empty()) {
            level_grads[i - 1] = std::move(fg.skip_feats);
        } else {
            add_into(level_grads[i - 1], fg.skip_feats);
        }
        g = std::move(fg.coarse_feats);
    }
    level_grads[levels] = std::move(g);

    // Encoder backward, deepest layer first, accumulating into lower levels.
    for (std::size_t l = levels; l-- > 0;) {
        const std::size_t n_prev = l == 0 ? result.level_feats[0].rows
                                          : arch.layers[l - 1].n_centroids;
        Matrix lower = encode_layer_backward(arch, l, state.layers[l], grads.layers[l],
                                             result.encoder.layers[l], level_grads[l + 1],
                                             n_prev);
        if (l == 0) break;
        if (level_grads[l].data.empty()) {
            level_grads[l] = std::move(lower);
        } else {
            add_into(level_grads[l], lower);
        }
    }
    return grads;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

void write_tensor(std::ostream& out, const std::string& name, std::size_t rows,
                  std::size_t cols, const double* data) {
    out << "tensor " << name << ' ' << rows << ' ' << cols << '\n';
    char buf[64];
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            std::snprintf(buf, sizeof(buf), "%a", data[i * cols + j]);
            out << buf << (j + 1 == cols ? "" : " ");
        }
        out << '\n';
    }
}

void write_vector(std::ostream& out, const std::string& name, const std::vector<double>& v) {
    if (!v.empty()) write_tensor(out, name, 1, v.size(), v.data());
}

const char* kernel_name(Kernel k) { return k == Kernel::point_mlp ? "mlp" : "conv"; }
const char* pooling_name(Pooling p) { return p == Pooling::max ? "max" : "cp"; }

} // namespace

void save_checkpoint(const NetworkState& state, const std::string& path) {
    std::ofstream out(path, std::ios::binary); // binary: stable newlines
    if (!out) throw DataError("cannot open checkpoint file for writing: " + path);
    const ArchSpec& arch = state.arch;

    out << "specpoint-checkpoint 1\n";
    out << "layers " << arch.layers.size() << '\n';
    for (const LayerSpec& l : arch.layers) {
        out << "layer " << l.n_centroids << ' ' << l.k << ' ' << l.m << ' '
            << kernel_name(l.kernel) << ' ' << pooling_name(l.pooling) << '\n';
    }
    out << "head " << (arch.head == Head::classify ? "classify" : "segment") << ' '
        << arch.n_outputs << '\n';
    out << "input " << arch.input_dim << ' ' << arch.input_feats << '\n';
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%a", arch.scheme.sigma);
    out << "scheme "
        << (arch.scheme.kind == spectral::WeightKind::gaussian_similarity ? "gaussian"
                                                                          : "raw")
        << ' ' << buf << '\n';
    out << "cluster "
        << (arch.cluster_by == layers::ClusterBy::spatial ? "spatial" : "feature") << '\n';
    out << "seg_hidden " << arch.seg_head_hidden << '\n';
    out << "step " << state.step << '\n';

    for (std::size_t l = 0; l < state.layers.size(); ++l) {
        const std::string base = "layer" + std::to_string(l);
        const LayerParams& p = state.layers[l];
        write_tensor(out, base + ".w", p.w.rows, p.w.cols, p.w.data.data());
        write_vector(out, base + ".b", p.b);
        write_vector(out, base + ".g", p.g);
    }
    const auto write_dense = [&out](const std::string& base, const DenseState& d) {
        write_tensor(out, base + ".w", d.w.rows, d.w.cols, d.w.data.data());
        write_vector(out, base + ".b", d.b);
        write_vector(out, base + ".gamma", d.gamma);
        write_vector(out, base + ".beta", d.beta);
        write_vector(out, base + ".run_mean", d.run_mean);
        write_vector(out, base + ".run_var", d.run_var);
    };
    for (std::size_t i = 0; i < state.dense.size(); ++i) {
        write_dense("dense" + std::to_string(i), state.dense[i]);
    }
    for (std::size_t i = 0; i < state.fp.size(); ++i) {
        const std::string base = "fp" + std::to_string(i);
        write_tensor(out, base + ".w", state.fp[i].w.rows, state.fp[i].w.cols,
                     state.fp[i].w.data.data());
        write_vector(out, base + ".b", state.fp[i].b);
    }
    for (std::size_t i = 0; i < state.seg_head.size(); ++i) {
        write_dense("seg_head" + std::to_string(i), state.seg_head[i]);
    }
    out << "end\n";
    if (!out) throw DataError("failed writing checkpoint: " + path);
}

namespace {

std::string next_line(std::istream& in, const std::string& path) {
    std::string line;
    if (!std::getline(in, line)) {
        throw DataError("checkpoint truncated: " + path);
    }
    return line;
}

double parse_hex_double(const std::string& token, const std::string& path) {
    const char* begin = token.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin || *end != '\0') {
        throw DataError("checkpoint has a malformed number '" + token + "': " + path);
    }
    return v;
}

} // namespace

NetworkState load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint file: " + path);

    std::string line = next_line(in, path);
    if (line != "specpoint-checkpoint 1") {
        throw DataError("not a recognized checkpoint file: " + path);
    }

    ArchSpec arch;
    std::uint64_t step = 0;
    std::size_t n_layers = 0;
    {
        std::istringstream ls(next_line(in, path));
        std::string word;
        ls >> word >> n_layers;
        if (word != "layers" || n_layers == 0) {
            throw DataError("checkpoint missing layer count: " + path);
        }
    }
    for (std::size_t l = 0; l < n_layers; ++l) {
        std::istringstream ls(next_line(in, path));
        std::string word, kernel, pooling;
        LayerSpec spec;
        ls >> word >> spec.n_centroids >> spec.k >> spec.m >> kernel >> pooling;
        if (word != "layer" || !ls) throw DataError("malformed layer line: " + path);
        if (kernel == "mlp") {
            spec.kernel = Kernel::point_mlp;
        } else if (kernel == "conv") {
            spec.kernel = Kernel::spec_conv;
        } else {
            throw DataError("unknown kernel '" + kernel + "' in checkpoint: " + path);
        }
        if (pooling == "max") {
            spec.pooling = Pooling::max;
        } else if (pooling == "cp") {
            spec.pooling = Pooling::cluster_pool;
        } else {
            throw DataError("unknown pooling '" + pooling + "' in checkpoint: " + path);
        }
        arch.layers.push_back(spec);
    }
    {
        std::istringstream ls(next_line(in, path));
        std::string word, head;
        ls >> word >> head >> arch.n_outputs;
        if (word != "head") throw DataError("malformed head line: " + path);
        if (head == "classify") {
            arch.head = Head::classify;
        } else if (head == "segment") {
            arch.head = Head::segment;
        } else {
            throw DataError("unknown head '" + head + "' in checkpoint: " + path);
        }
    }
    {
        std::istringstream ls(next_line(in, path));
        std::string word;
        ls >> word >> arch.input_dim >> arch.input_feats;
        if (word != "input") throw DataError("malformed input line: " + path);
    }
    {
        std::istringstream ls(next_line(in, path));
        std::string word, kind, sigma;
        ls >> word >> kind >> sigma;
        if (word != "scheme") throw DataError("malformed scheme line: " + path);
        arch.scheme.kind = kind == "raw" ? spectral::WeightKind::raw_distance
                                         : spectral::WeightKind::gaussian_similarity;
        arch.scheme.sigma = parse_hex_double(sigma, path);
    }
    {
        std::istringstream ls(next_line(in, path));
        std::string word, mode;
        ls >> word >> mode;
        if (word != "cluster") throw DataError("malformed cluster line: " + path);
        arch.cluster_by = mode == "feature" ? layers::ClusterBy::feature
                                            : layers::ClusterBy::spatial;
    }
    {
        std::istringstream ls(next_line(in, path));
        std::string word;
        ls >> word >> arch.seg_head_hidden;
        if (word != "seg_hidden") throw DataError("malformed seg_hidden line: " + path);
    }
    {
        std::istringstream ls(next_line(in, path));
        std::string word;
        ls >> word >> step;
        if (word != "step") throw DataError("malformed step line: " + path);
    }

    NetworkState state = build_network(arch, 0);
    state.step = step;

    // Index every tensor slot by name, then fill from the file.
    struct Slot {
        double* data;
        std::size_t rows, cols;
    };
    std::vector<std::pair<std::string, Slot>> slots;
    const auto add_m = [&slots](const std::string& name, Matrix& m) {
        slots.emplace_back(name, Slot{m.data.data(), m.rows, m.cols});
    };
    const auto add_v = [&slots](const std::string& name, std::vector<double>& v) {
        if (!v.empty()) slots.emplace_back(name, Slot{v.data(), 1, v.size()});
    };
    for (std::size_t l = 0; l < state.layers.size(); ++l) {
        const std::string base = "layer" + std::to_string(l);
        add_m(base + ".w", state.layers[l].w);
        add_v(base + ".b", state.layers[l].b);
        add_v(base + ".g", state.layers[l].g);
    }
    const auto add_dense = [&](const std::string& base, DenseState& d) {
        add_m(base + ".w", d.w);
        add_v(base + ".b", d.b);
        add_v(base + ".gamma", d.gamma);
        add_v(base + ".beta", d.beta);
        add_v(base + ".run_mean", d.run_mean);
        add_v(base + ".run_var", d.run_var);
    };
    for (std::size_t i = 0; i < state.dense.size(); ++i) {
        add_dense("dense" + std::to_string(i), state.dense[i]);
    }
    for (std::size_t i = 0; i < state.fp.size(); ++i) {
        const std::string base = "fp" + std::to_string(i);
        add_m(base + ".w", state.fp[i].w);
        add_v(base + ".b", state.fp[i].b);
    }
    for (std::size_t i = 0; i < state.seg_head.size(); ++i) {
        add_dense("seg_head" + std::to_string(i), state.seg_head[i]);
    }

    std::size_t filled = 0;
    while (true) {
        line = next_line(in, path);
        if (line == "end") break;
        std::istringstream ls(line);
        std::string word, name;
        std::size_t rows = 0, cols = 0;
        ls >> word >> name >> rows >> cols;
        if (word != "tensor" || !ls) throw DataError("malformed tensor line: " + path);

        Slot* slot = nullptr;
        for (auto& [n, s] : slots) {
            if (n == name) {
                slot = &s;
                break;
            }
        }
        if (slot == nullptr) throw DataError("unknown tensor '" + name + "': " + path);
        if (slot->rows != rows || slot->cols != cols) {
            throw DataError("tensor '" + name + "' has shape " + std::to_string(rows) + "x" +
                            std::to_string(cols) + ", expected " +
                            std::to_string(slot->rows) + "x" + std::to_string(slot->cols) +
                            ": " + path);
        }
        for (std::size_t i = 0; i < rows; ++i) {
            std::istringstream row(next_line(in, path));
            for (std::size_t j = 0; j < cols; ++j) {
                std::string token;
                if (!(row >> token)) throw DataError("tensor row truncated: " + path);
                slot->data[i * cols + j] = parse_hex_double(token, path);
            }
        }
        ++filled;
    }
    if (filled != slots.size()) {
        throw DataError("checkpoint is missing tensors (" + std::to_string(filled) + " of " +
                        std::to_string(slots.size()) + "): " + path);
    }
    return state;
}

} // namespace specpoint::model
