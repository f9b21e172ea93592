#include "specpoint/layers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>

#include "specpoint/errors.hpp"

namespace specpoint::layers {

namespace {

void check_shape(bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
}

// Scale row i of m by s[i], in place.
void scale_rows(Matrix& m, const std::vector<double>& s) {
    for (std::size_t i = 0; i < m.rows; ++i) {
        double* row = m.row_ptr(i);
        for (std::size_t j = 0; j < m.cols; ++j) row[j] *= s[i];
    }
}

} // namespace

// ---------------------------------------------------------------------------
// Spectral graph convolution
// ---------------------------------------------------------------------------

std::pair<Matrix, SpecConvTape> spectral_conv_forward(const Matrix& x,
                                                      const NeighborhoodGraph& graph,
                                                      const SpecConvParams& params) {
    const std::size_t k = graph.basis.rows;
    check_shape(x.rows == k, "spectral_conv: signal has " + std::to_string(x.rows) +
                                 " rows but the graph has " + std::to_string(k) +
                                 " vertices");
    check_shape(params.g.size() == k, "spectral_conv: kernel has " +
                                          std::to_string(params.g.size()) +
                                          " entries for " + std::to_string(k) +
                                          " graph frequencies");
    check_shape(params.w_f.rows == x.cols,
                "spectral_conv: feature filter expects " + std::to_string(params.w_f.rows) +
                    " channels, signal has " + std::to_string(x.cols));

    SpecConvTape tape;
    tape.graph = &graph;
    tape.xt = spectral::gft(graph.basis, x);
    tape.p = tape.xt;
    scale_rows(tape.p, params.g);

    Matrix q(k, params.w_f.cols);
    linalg::matmul_into(q, tape.p, params.w_f);
    return {spectral::igft(graph.basis, q), std::move(tape)};
}

SpecConvGrads spectral_conv_backward(const Matrix& grad_y, const SpecConvTape& tape,
                                     const SpecConvParams& params) {
    check_shape(tape.graph != nullptr, "spectral_conv backward: tape has no graph");
    const Matrix& u = tape.graph->basis;
    const std::size_t k = u.rows;
    check_shape(grad_y.rows == k && grad_y.cols == params.w_f.cols,
                "spectral_conv backward: cotangent shape mismatch");

    // a = U^T grad_y, the cotangent of q.
    Matrix a(k, grad_y.cols);
    linalg::matmul_at_b_into(a, u, grad_y);

    SpecConvGrads grads;
    grads.w_f = Matrix(params.w_f.rows, params.w_f.cols);
    linalg::matmul_at_b_into(grads.w_f, tape.p, a);

    // t2 = a w_f^T is the cotangent of p; it serves both grad_g and grad_x.
    Matrix t2(k, params.w_f.rows);
    linalg::matmul_a_bt_into(t2, a, params.w_f);

    grads.g.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
        const double* trow = t2.row_ptr(i);
        const double* xrow = tape.xt.row_ptr(i);
        double acc = 0.0;
        for (std::size_t j = 0; j < t2.cols; ++j) acc += trow[j] * xrow[j];
        grads.g[i] = acc;
    }

    scale_rows(t2, params.g); // now the cotangent of xt
    grads.x = spectral::igft(u, t2);
    return grads;
}

// ---------------------------------------------------------------------------
// Point-wise MLP
// ---------------------------------------------------------------------------

std::pair<Matrix, MlpTape> point_mlp_forward(const Matrix& x, const Matrix& w,
                                             const std::vector<double>& b) {
    check_shape(b.size() == w.cols, "point_mlp: bias has " + std::to_string(b.size()) +
                                        " entries for " + std::to_string(w.cols) +
                                        " output channels");
    MlpTape tape;
    tape.x = x;
    tape.z = Matrix(x.rows, w.cols);
    linalg::matmul_into(tape.z, x, w);
    for (std::size_t i = 0; i < tape.z.rows; ++i) {
        double* row = tape.z.row_ptr(i);
        for (std::size_t j = 0; j < tape.z.cols; ++j) row[j] += b[j];
    }

    Matrix y = tape.z;
    for (double& v : y.data) v = std::max(0.0, v);
    return {std::move(y), std::move(tape)};
}

MlpGrads point_mlp_backward(const Matrix& grad_y, const MlpTape& tape, const Matrix& w) {
    check_shape(grad_y.same_shape(tape.z), "point_mlp backward: cotangent shape mismatch");

    Matrix gz = grad_y;
    for (std::size_t i = 0; i < gz.data.size(); ++i) {
        if (tape.z.data[i] <= 0.0) gz.data[i] = 0.0;
    }

    MlpGrads grads;
    grads.w = Matrix(w.rows, w.cols);
    linalg::matmul_at_b_into(grads.w, tape.x, gz);
    grads.b.assign(w.cols, 0.0);
    for (std::size_t i = 0; i < gz.rows; ++i) {
        const double* row = gz.row_ptr(i);
        for (std::size_t j = 0; j < gz.cols; ++j) grads.b[j] += row[j];
    }
    grads.x = Matrix(tape.x.rows, tape.x.cols);
    linalg::matmul_a_bt_into(grads.x, gz, w);
    return grads;
}

Matrix relu(const Matrix& x) {
    Matrix y = x;
    for (double& v : y.data) v = std::max(0.0, v);
    return y;
}

Matrix relu_backward(const Matrix& grad_y, const Matrix& y) {
    check_shape(grad_y.same_shape(y), "relu backward: cotangent shape mismatch");
    Matrix gx = grad_y;
    for (std::size_t i = 0; i < gx.data.size(); ++i) {
        if (y.data[i] <= 0.0) gx.data[i] = 0.0;
    }
    return gx;
}

// ---------------------------------------------------------------------------
// Set max pooling
// ---------------------------------------------------------------------------

std::pair<Matrix, MaxPoolTape> max_pool_set(const Matrix& h) {
    check_shape(h.rows >= 1, "max_pool_set: empty input");
    MaxPoolTape tape;
    tape.k = h.rows;
    tape.argmax.assign(h.cols, 0);

    Matrix y(1, h.cols);
    for (std::size_t j = 0; j < h.cols; ++j) y(0, j) = h(0, j);
    for (std::size_t i = 1; i < h.rows; ++i) {
        const double* row = h.row_ptr(i);
        for (std::size_t j = 0; j < h.cols; ++j) {
            if (row[j] > y(0, j)) {
                y(0, j) = row[j];
                tape.argmax[j] = i;
            }
        }
    }
    return {std::move(y), std::move(tape)};
}

Matrix max_pool_set_backward(const Matrix& grad, const MaxPoolTape& tape) {
    check_shape(grad.rows == 1 && grad.cols == tape.argmax.size(),
                "max_pool_set backward: cotangent shape mismatch");
    Matrix gx(tape.k, grad.cols);
    for (std::size_t j = 0; j < grad.cols; ++j) gx(tape.argmax[j], j) = grad(0, j);
    return gx;
}

// ---------------------------------------------------------------------------
// Recursive cluster pooling
// ---------------------------------------------------------------------------

namespace {

// Pad a spectral ordering by repeating its last entry until the length is a
// multiple of the group size. Canonical k = 2*csize^2 layouts never pad.
void pad_order(std::vector<std::size_t>& order, std::size_t group_size) {
    while (order.size() % group_size != 0) order.push_back(order.back());
}

// Pool `vals` rows along one stage. Appends the stage's argmax record (empty
// for AVG) to `tape_argmax` when recording.
Matrix pool_stage(const Matrix& vals, const PoolStagePlan& stage,
                  std::vector<std::vector<std::size_t>>* tape_argmax) {
    const std::size_t m = vals.cols;
    const std::size_t groups = stage.order.size() / stage.group_size;
    Matrix out(groups, m);
    std::vector<std::size_t> argmax;
    if (stage.mode == PoolMode::max) argmax.assign(groups * m, 0);

    for (std::size_t g = 0; g < groups; ++g) {
        const std::size_t* members = stage.order.data() + g * stage.group_size;
        double* orow = out.row_ptr(g);
        if (stage.mode == PoolMode::max) {
            const double* first = vals.row_ptr(members[0]);
            for (std::size_t j = 0; j < m; ++j) {
                orow[j] = first[j];
                argmax[g * m + j] = members[0];
            }
            for (std::size_t i = 1; i < stage.group_size; ++i) {
                const double* row = vals.row_ptr(members[i]);
                for (std::size_t j = 0; j < m; ++j) {
                    if (row[j] > orow[j]) {
                        orow[j] = row[j];
                        argmax[g * m + j] = members[i];
                    }
                }
            }
        } else {
            for (std::size_t i = 0; i < stage.group_size; ++i) {
                const double* row = vals.row_ptr(members[i]);
                for (std::size_t j = 0; j < m; ++j) orow[j] += row[j];
            }
            for (std::size_t j = 0; j < m; ++j) {
                orow[j] /= static_cast<double>(stage.group_size);
            }
        }
    }
    if (tape_argmax != nullptr) tape_argmax->push_back(std::move(argmax));
    return out;
}

// Coordinates of pooled clusters in spatial mode: centroid over the (padded)
// group members.
Matrix group_centroids(const Matrix& coords, const PoolStagePlan& stage) {
    const std::size_t groups = stage.order.size() / stage.group_size;
    Matrix out(groups, coords.cols);
    for (std::size_t g = 0; g < groups; ++g) {
        const std::size_t* members = stage.order.data() + g * stage.group_size;
        double* orow = out.row_ptr(g);
        for (std::size_t i = 0; i < stage.group_size; ++i) {
            const double* row = coords.row_ptr(members[i]);
            for (std::size_t d = 0; d < coords.cols; ++d) orow[d] += row[d];
        }
        for (std::size_t d = 0; d < coords.cols; ++d) {
            orow[d] /= static_cast<double>(stage.group_size);
        }
    }
    return out;
}

std::vector<std::size_t> identity_order(std::size_t n) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    return order;
}

void check_pool_args(std::size_t k, std::size_t csize) {
    if (k < 1) throw ConfigError("cluster_pool: empty input");
    if (csize < 2) {
        throw ConfigError("cluster_pool: cluster size must be at least 2, got " +
                          std::to_string(csize));
    }
}

} // namespace

ClusterPoolPlan cluster_pool_plan(const Matrix& cluster_coords, std::size_t csize,
                                  const WeightScheme& scheme,
                                  const NeighborhoodGraph* first_graph) {
    check_pool_args(cluster_coords.rows, csize);
    check_shape(first_graph == nullptr || first_graph->basis.rows == cluster_coords.rows,
                "cluster_pool: provided first-stage graph size mismatch");

    ClusterPoolPlan plan;
    plan.k = cluster_coords.rows;
    Matrix reps = cluster_coords;
    PoolMode mode = PoolMode::max;
    bool first = true;
    while (reps.rows > csize) {
        PoolStagePlan stage;
        stage.mode = mode;
        stage.group_size = csize;
        if (first && first_graph != nullptr) {
            stage.order = fiedler_order(*first_graph);
        } else {
            stage.order = fiedler_order(spectral::build_graph(reps, scheme));
        }
        first = false;
        pad_order(stage.order, csize);
        reps = group_centroids(reps, stage);
        plan.stages.push_back(std::move(stage));
        mode = mode == PoolMode::max ? PoolMode::avg : PoolMode::max;
    }

    PoolStagePlan terminal;
    terminal.mode = mode;
    terminal.group_size = reps.rows;
    terminal.order = identity_order(reps.rows);
    plan.stages.push_back(std::move(terminal));
    return plan;
}

std::pair<Matrix, ClusterPoolTape> cluster_pool_apply(const Matrix& x,
                                                      const ClusterPoolPlan& plan) {
    check_shape(x.rows == plan.k, "cluster_pool: signal has " + std::to_string(x.rows) +
                                      " rows, plan expects " + std::to_string(plan.k));
    ClusterPoolTape tape;
    tape.plan = plan;
    tape.m = x.cols;

    Matrix vals = x;
    for (const PoolStagePlan& stage : plan.stages) {
        vals = pool_stage(vals, stage, &tape.argmax);
    }
    return {std::move(vals), std::move(tape)};
}

std::pair<Matrix, ClusterPoolTape> cluster_pool_forward(const Matrix& x,
                                                        const Matrix& cluster_coords,
                                                        const PoolSpec& spec,
                                                        const WeightScheme& scheme) {
    if (spec.cluster_by == ClusterBy::spatial) {
        check_shape(cluster_coords.rows == x.rows,
                    "cluster_pool: coordinate/feature row mismatch");
        return cluster_pool_apply(x, cluster_pool_plan(cluster_coords, spec.csize, scheme));
    }

    // Feature-mode: the per-recurrence graph is built from the pooled feature
    // rows themselves, so planning and pooling interleave.
    check_pool_args(x.rows, spec.csize);
    ClusterPoolTape tape;
    tape.plan.k = x.rows;
    tape.m = x.cols;

    Matrix vals = x;
    PoolMode mode = PoolMode::max;
    while (vals.rows > spec.csize) {
        PoolStagePlan stage;
        stage.mode = mode;
        stage.group_size = spec.csize;
        stage.order = fiedler_order(spectral::build_graph(vals, scheme));
        pad_order(stage.order, spec.csize);
        vals = pool_stage(vals, stage, &tape.argmax);
        tape.plan.stages.push_back(std::move(stage));
        mode = mode == PoolMode::max ? PoolMode::avg : PoolMode::max;
    }

    PoolStagePlan terminal;
    terminal.mode = mode;
    terminal.group_size = vals.rows;
    terminal.order = identity_order(vals.rows);
    vals = pool_stage(vals, terminal, &tape.argmax);
    tape.plan.stages.push_back(std::move(terminal));
    return {std::move(vals), std::move(tape)};
}

Matrix cluster_pool_backward(const Matrix& grad, const ClusterPoolTape& tape) {
    check_shape(grad.rows == 1 && grad.cols == tape.m,
                "cluster_pool backward: cotangent shape mismatch");
    check_shape(tape.argmax.size() == tape.plan.stages.size(),
                "cluster_pool backward: tape does not match plan");

    Matrix current = grad;
    for (std::size_t s = tape.plan.stages.size(); s-- > 0;) {
        const PoolStagePlan& stage = tape.plan.stages[s];
        const std::size_t groups = stage.order.size() / stage.group_size;
        const std::size_t n_in = s == 0 ? tape.plan.k : tape.plan.stages[s - 1].order.size() /
                                                            tape.plan.stages[s - 1].group_size;
        Matrix upstream(n_in, tape.m);
        for (std::size_t g = 0; g < groups; ++g) {
            const double* grow = current.row_ptr(g);
            if (stage.mode == PoolMode::max) {
                const std::vector<std::size_t>& argmax = tape.argmax[s];
                for (std::size_t j = 0; j < tape.m; ++j) {
                    upstream(argmax[g * tape.m + j], j) += grow[j];
                }
            } else {
                const std::size_t* members = stage.order.data() + g * stage.group_size;
                const double share = 1.0 / static_cast<double>(stage.group_size);
                for (std::size_t i = 0; i < stage.group_size; ++i) {
                    double* urow = upstream.row_ptr(members[i]);
                    for (std::size_t j = 0; j < tape.m; ++j) urow[j] += grow[j] * share;
                }
            }
        }
        current = std::move(upstream);
    }
    return current;
}

// ---------------------------------------------------------------------------
// Feature propagation
// ---------------------------------------------------------------------------

std::pair<Matrix, FpTape> fp_interpolate(const Matrix& coarse_coords,
                                         const Matrix& coarse_feats,
                                         const Matrix& fine_coords,
                                         const Matrix& skip_feats, const Matrix& w,
                                         const std::vector<double>& b) {
    check_shape(coarse_coords.rows >= 1, "fp_interpolate: empty coarse set");
    check_shape(coarse_coords.rows == coarse_feats.rows,
                "fp_interpolate: coarse coordinate/feature row mismatch");
    check_shape(fine_coords.rows == skip_feats.rows,
                "fp_interpolate: fine coordinate/skip row mismatch");
    const std::size_t m = coarse_feats.cols;
    const std::size_t s = skip_feats.cols;
    check_shape(w.rows == m + s, "fp_interpolate: affine expects " + std::to_string(w.rows) +
                                     " inputs, got " + std::to_string(m + s));
    check_shape(b.size() == w.cols, "fp_interpolate: bias/weight column mismatch");

    const std::size_t n_fine = fine_coords.rows;
    const std::size_t n_coarse = coarse_coords.rows;
    const std::size_t n_interp = std::min<std::size_t>(3, n_coarse);

    FpTape tape;
    tape.n_coarse = n_coarse;
    tape.n_interp = n_interp;
    tape.m_coarse = m;
    tape.neighbor_indices.resize(n_fine * n_interp);
    tape.weights.resize(n_fine * n_interp);
    tape.z = Matrix(n_fine, m + s);

    std::vector<std::pair<double, std::size_t>> dist(n_coarse);
    for (std::size_t f = 0; f < n_fine; ++f) {
        const double* fp = fine_coords.row_ptr(f);
        for (std::size_t c = 0; c < n_coarse; ++c) {
            const double* cp = coarse_coords.row_ptr(c);
            double acc = 0.0;
            for (std::size_t d = 0; d < fine_coords.cols; ++d) {
                const double diff = fp[d] - cp[d];
                acc += diff * diff;
            }
            dist[c] = {acc, c};
        }
        std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(n_interp),
                          dist.end());

        double wsum = 0.0;
        for (std::size_t i = 0; i < n_interp; ++i) {
            const double inv = 1.0 / (std::sqrt(dist[i].first) + 1e-10);
            tape.neighbor_indices[f * n_interp + i] = dist[i].second;
            tape.weights[f * n_interp + i] = inv;
            wsum += inv;
        }
        double* zrow = tape.z.row_ptr(f);
        for (std::size_t i = 0; i < n_interp; ++i) {
            const double weight = tape.weights[f * n_interp + i] / wsum;
            tape.weights[f * n_interp + i] = weight;
            const double* crow = coarse_feats.row_ptr(tape.neighbor_indices[f * n_interp + i]);
            for (std::size_t j = 0; j < m; ++j) zrow[j] += weight * crow[j];
        }
        const double* srow = skip_feats.row_ptr(f);
        for (std::size_t j = 0; j < s; ++j) zrow[m + j] = srow[j];
    }

    tape.pre = Matrix(n_fine, w.cols);
    linalg::matmul_into(tape.pre, tape.z, w);
    for (std::size_t i = 0; i < n_fine; ++i) {
        double* row = tape.pre.row_ptr(i);
        for (std::size_t j = 0; j < w.cols; ++j) row[j] += b[j];
    }
    Matrix y = tape.pre;
    for (double& v : y.data) v = std::max(0.0, v);
    return {std::move(y), std::move(tape)};
}

FpGrads fp_interpolate_backward(const Matrix& grad_y, const FpTape& tape, const Matrix& w) {
    check_shape(grad_y.same_shape(tape.pre), "fp_interpolate backward: cotangent mismatch");

    Matrix gz = grad_y;
    for (std::size_t i = 0; i < gz.data.size(); ++i) {
        if (tape.pre.data[i] <= 0.0) gz.data[i] = 0.0;
    }

    FpGrads grads;
    grads.w = Matrix(w.rows, w.cols);
    linalg::matmul_at_b_into(grads.w, tape.z, gz);
    grads.b.assign(w.cols, 0.0);
    for (std::size_t i = 0; i < gz.rows; ++i) {
        const double* row = gz.row_ptr(i);
        for (std::size_t j = 0; j < gz.cols; ++j) grads.b[j] += row[j];
    }

    Matrix grad_z(tape.z.rows, tape.z.cols);
    linalg::matmul_a_bt_into(grad_z, gz, w);

    // Split the concatenated cotangent: the first m_coarse columns belong to
    // the interpolated coarse features, the rest to the skip features. The
    // interpolation weights are forward-pass constants, so each coarse row
    // accumulates weight * cotangent from every fine point it served.
    const std::size_t n_fine = tape.z.rows;
    const std::size_t mc = tape.m_coarse;
    const std::size_t ms = tape.z.cols - mc;
    grads.coarse_feats = Matrix(tape.n_coarse, mc);
    grads.skip_feats = Matrix(n_fine, ms);
    for (std::size_t f = 0; f < n_fine; ++f) {
        const double* zrow = grad_z.row_ptr(f);
        for (std::size_t i = 0; i < tape.n_interp; ++i) {
            const double weight = tape.weights[f * tape.n_interp + i];
            double* crow = grads.coarse_feats.row_ptr(tape.neighbor_indices[f * tape.n_interp + i]);
            for (std::size_t j = 0; j < mc; ++j) crow[j] += weight * zrow[j];
        }
        double* srow = grads.skip_feats.row_ptr(f);
        for (std::size_t j = 0; j < ms; ++j) srow[j] = zrow[mc + j];
    }
    return grads;
}

} // namespace specpoint::layers
