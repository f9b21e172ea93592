#include <doctest.h>

#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "fd_check.hpp"
#include "oracles.hpp"
#include "pool_oracle.hpp"
#include "specpoint/errors.hpp"
#include "specpoint/graph.hpp"
#include "specpoint/layers.hpp"
#include "specpoint/matrix.hpp"
#include "specpoint/rng.hpp"

using specpoint::ConfigError;
using specpoint::Rng;
using specpoint::linalg::Matrix;
using namespace specpoint::layers;
using specpoint::spectral::build_graph;
using specpoint::spectral::NeighborhoodGraph;
using specpoint::spectral::WeightScheme;

namespace {

const WeightScheme kScheme{};

SpecConvParams identity_params(std::size_t k, std::size_t m) {
    SpecConvParams params;
    params.g.assign(k, 1.0);
    params.w_f = Matrix::identity(m);
    return params;
}

SpecConvParams random_params(Rng& rng, std::size_t k, std::size_t m, std::size_t m_out) {
    SpecConvParams params;
    params.g.resize(k);
    for (double& v : params.g) v = rng.uniform(0.25, 2.0);
    params.w_f = oracles::random_matrix(rng, m, m_out);
    return params;
}

} // namespace

TEST_SUITE("layers") {

// ---- spectral convolution ----

TEST_CASE("spectral conv with identity kernel and filter is the identity") {
    Rng rng(301);
    const NeighborhoodGraph graph = build_graph(oracles::random_points(rng, 12), kScheme);
    const Matrix x = oracles::random_matrix(rng, 12, 5);
    const auto [y, tape] = spectral_conv_forward(x, graph, identity_params(12, 5));
    CHECK(specpoint::linalg::max_abs_diff(y, x) < 1e-10);
}

TEST_CASE("spectral conv with g = eigenvalues applies the laplacian") {
    Rng rng(303);
    const NeighborhoodGraph graph = build_graph(oracles::random_points(rng, 16), kScheme);
    const Matrix x = oracles::random_matrix(rng, 16, 4);

    SpecConvParams params = identity_params(16, 4);
    params.g = graph.eigenvalues;
    const auto [y, tape] = spectral_conv_forward(x, graph, params);
    const Matrix lx = specpoint::linalg::matmul(graph.laplacian, x);
    CHECK(specpoint::linalg::max_abs_diff(y, lx) < 1e-8);
}

TEST_CASE("spectral conv singleton scalar case") {
    const NeighborhoodGraph graph = build_graph(Matrix(1, 3), kScheme);
    SpecConvParams params;
    params.g = {2.0};
    params.w_f = Matrix(1, 1, {3.0});
    const auto [y, tape] = spectral_conv_forward(Matrix(1, 1, {5.0}), graph, params);
    CHECK(y(0, 0) == doctest::Approx(30.0));
}

TEST_CASE("spectral conv equals the element-wise frequency product for one channel") {
    Rng rng(307);
    const NeighborhoodGraph graph = build_graph(oracles::random_points(rng, 10), kScheme);
    Matrix x = oracles::random_matrix(rng, 10, 1);

    SpecConvParams params;
    params.g.resize(10);
    for (double& v : params.g) v = rng.uniform(-1.0, 1.0);
    params.w_f = Matrix(1, 1, {1.0});
    const auto [y, tape] = spectral_conv_forward(x, graph, params);

    // Oracle: transform, multiply entry-wise by g, transform back.
    const Matrix xt = specpoint::spectral::gft(graph.basis, x);
    Matrix hadamard(10, 1);
    for (std::size_t i = 0; i < 10; ++i) hadamard(i, 0) = params.g[i] * xt(i, 0);
    const Matrix expected = specpoint::spectral::igft(graph.basis, hadamard);
    CHECK(specpoint::linalg::max_abs_diff(y, expected) < 1e-10);
}

TEST_CASE("spectral conv equals one dense filter matrix when w_f is identity") {
    Rng rng(311);
    const NeighborhoodGraph graph = build_graph(oracles::random_points(rng, 9), kScheme);
    const Matrix x = oracles::random_matrix(rng, 9, 3);

    SpecConvParams params = identity_params(9, 3);
    for (double& v : params.g) v = rng.uniform(-1.0, 1.0);
    const auto [y, tape] = spectral_conv_forward(x, graph, params);

    // Oracle: assemble U g(Lambda) U^T as one dense operator, then apply it.
    Matrix filter(9, 9);
    for (std::size_t i = 0; i < 9; ++i) {
        for (std::size_t j = 0; j < 9; ++j) {
            double acc = 0.0;
            for (std::size_t t = 0; t < 9; ++t) {
                acc += graph.basis(i, t) * params.g[t] * graph.basis(j, t);
            }
            filter(i, j) = acc;
        }
    }
    CHECK(specpoint::linalg::max_abs_diff(y, specpoint::linalg::matmul(filter, x)) < 1e-9);
}

TEST_CASE("spectral conv backward of a zero cotangent is zero") {
    Rng rng(313);
    const NeighborhoodGraph graph = build_graph(oracles::random_points(rng, 8), kScheme);
    const Matrix x = oracles::random_matrix(rng, 8, 3);
    const SpecConvParams params = random_params(rng, 8, 3, 2);
    const auto [y, tape] = spectral_conv_forward(x, graph, params);
    const SpecConvGrads grads = spectral_conv_backward(Matrix(8, 2), tape, params);
    CHECK(specpoint::linalg::max_abs(grads.x) == 0.0);
    CHECK(specpoint::linalg::max_abs(grads.w_f) == 0.0);
    for (const double v : grads.g) CHECK(v == 0.0);
}

TEST_CASE("spectral conv backward matches finite differences") {
    Rng rng(317);
    const std::size_t k = 8, m = 3, m_out = 4;
    const NeighborhoodGraph graph = build_graph(oracles::random_points(rng, k), kScheme);
    Matrix x = oracles::random_matrix(rng, k, m);
    SpecConvParams params = random_params(rng, k, m, m_out);
    const Matrix c = oracles::random_cotangent(rng, k, m_out);

    const auto eval = [&] {
        return oracles::weighted_sum(c, spectral_conv_forward(x, graph, params).first);
    };
    const auto [y, tape] = spectral_conv_forward(x, graph, params);
    const SpecConvGrads grads = spectral_conv_backward(c, tape, params);

    for (std::size_t i = 0; i < x.data.size(); ++i) {
        CHECK(oracles::rel_err(grads.x.data[i], oracles::central_diff(eval, &x.data[i])) <
              oracles::kFdTol);
    }
    for (std::size_t i = 0; i < params.g.size(); ++i) {
        CHECK(oracles::rel_err(grads.g[i], oracles::central_diff(eval, &params.g[i])) <
              oracles::kFdTol);
    }
    for (std::size_t i = 0; i < params.w_f.data.size(); ++i) {
        CHECK(oracles::rel_err(grads.w_f.data[i],
                               oracles::central_diff(eval, &params.w_f.data[i])) <
              oracles::kFdTol);
    }
}

TEST_CASE("spectral conv mixes rows; point mlp does not") {
    Rng rng(331);
    const std::size_t k = 8, m = 3;
    const NeighborhoodGraph graph = build_graph(oracles::random_points(rng, k), kScheme);
    Matrix x = oracles::random_matrix(rng, k, m);

    SpecConvParams params = identity_params(k, m);
    for (double& v : params.g) v = rng.uniform(0.1, 2.0); // non-constant modulation
    const Matrix base_conv = spectral_conv_forward(x, graph, params).first;

    const Matrix w = oracles::random_matrix(rng, m, m);
    std::vector<double> b(m, 0.1);
    const Matrix base_mlp = point_mlp_forward(x, w, b).first;

    Matrix bumped = x;
    bumped(2, 1) += 0.5;
    const Matrix conv2 = spectral_conv_forward(bumped, graph, params).first;
    const Matrix mlp2 = point_mlp_forward(bumped, w, b).first;

    // The convolution propagates the bump to some other row...
    double off_row_change = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        if (i == 2) continue;
        for (std::size_t j = 0; j < m; ++j) {
            off_row_change = std::max(off_row_change, std::fabs(conv2(i, j) - base_conv(i, j)));
        }
    }
    CHECK(off_row_change > 1e-6);

    // ...while the point MLP touches only the bumped row.
    for (std::size_t i = 0; i < k; ++i) {
        if (i == 2) continue;
        for (std::size_t j = 0; j < m; ++j) CHECK(mlp2(i, j) == base_mlp(i, j));
    }
}

// ---- point MLP ----

TEST_CASE("point mlp with zero weights yields the rectified bias everywhere") {
    Rng rng(337);
    const Matrix x = oracles::random_matrix(rng, 6, 4);
    const std::vector<double> b = {0.5, -0.25, 0.0, 2.0};
    const auto [y, tape] = point_mlp_forward(x, Matrix(4, 3 + 1), b);
    for (std::size_t i = 0; i < 6; ++i) {
        CHECK(y(i, 0) == 0.5);
        CHECK(y(i, 1) == 0.0);
        CHECK(y(i, 2) == 0.0);
        CHECK(y(i, 3) == 2.0);
    }
}

TEST_CASE("point mlp maps duplicate rows to duplicate rows") {
    Rng rng(347);
    Matrix x = oracles::random_matrix(rng, 5, 3);
    for (std::size_t j = 0; j < 3; ++j) x(4, j) = x(1, j);
    const Matrix w = oracles::random_matrix(rng, 3, 6);
    std::vector<double> b(6);
    for (double& v : b) v = rng.uniform(-1.0, 1.0);
    const auto [y, tape] = point_mlp_forward(x, w, b);
    for (std::size_t j = 0; j < 6; ++j) CHECK(y(4, j) == y(1, j));
}

TEST_CASE("point mlp matches the per-row affine oracle") {
    Rng rng(349);
    const Matrix x = oracles::random_matrix(rng, 7, 3);
    const Matrix w = oracles::random_matrix(rng, 3, 5);
    std::vector<double> b(5);
    for (double& v : b) v = rng.uniform(-1.0, 1.0);
    const auto [y, tape] = point_mlp_forward(x, w, b);
    for (std::size_t i = 0; i < 7; ++i) {
        for (std::size_t j = 0; j < 5; ++j) {
            double acc = b[j];
            for (std::size_t d = 0; d < 3; ++d) acc += x(i, d) * w(d, j);
            CHECK(y(i, j) == doctest::Approx(std::max(0.0, acc)).epsilon(1e-12));
        }
    }
}

TEST_CASE("point mlp backward matches finite differences") {
    Rng rng(353);
    Matrix x = oracles::random_matrix(rng, 6, 3);
    Matrix w = oracles::random_matrix(rng, 3, 4);
    std::vector<double> b(4);
    for (double& v : b) v = rng.uniform(-0.5, 0.5);
    const Matrix c = oracles::random_cotangent(rng, 6, 4);

    const auto eval = [&] {
        return oracles::weighted_sum(c, point_mlp_forward(x, w, b).first);
    };
    const auto [y, tape] = point_mlp_forward(x, w, b);
    const MlpGrads grads = point_mlp_backward(c, tape, w);

    for (std::size_t i = 0; i < x.data.size(); ++i) {
        CHECK(oracles::rel_err(grads.x.data[i], oracles::central_diff(eval, &x.data[i])) <
              oracles::kFdTol);
    }
    for (std::size_t i = 0; i < w.data.size(); ++i) {
        CHECK(oracles::rel_err(grads.w.data[i], oracles::central_diff(eval, &w.data[i])) <
              oracles::kFdTol);
    }
    for (std::size_t i = 0; i < b.size(); ++i) {
        CHECK(oracles::rel_err(grads.b[i], oracles::central_diff(eval, &b[i])) <
              oracles::kFdTol);
    }
}

// ---- max pooling ----

TEST_CASE("max pool of a single row is that row") {
    Matrix h(1, 3, {1.0, -2.0, 0.5});
    const auto [y, tape] = max_pool_set(h);
    CHECK(y(0, 0) == 1.0);
    CHECK(y(0, 1) == -2.0);
    CHECK(y(0, 2) == 0.5);
}

TEST_CASE("max pool works per column") {
    Matrix h(2, 2, {1.0, 0.0, //
                    0.0, 1.0});
    const auto [y, tape] = max_pool_set(h);
    CHECK(y(0, 0) == 1.0);
    CHECK(y(0, 1) == 1.0);
    CHECK(tape.argmax == std::vector<std::size_t>{0, 1});
}

TEST_CASE("max pool ties go to the lowest row") {
    Matrix h(3, 1, {2.0, 2.0, 1.0});
    const auto [y, tape] = max_pool_set(h);
    CHECK(tape.argmax[0] == 0);
    const Matrix gx = max_pool_set_backward(Matrix(1, 1, {5.0}), tape);
    CHECK(gx(0, 0) == 5.0);
    CHECK(gx(1, 0) == 0.0);
    CHECK(gx(2, 0) == 0.0);
}

TEST_CASE("max pool matches a column-scan oracle and finite differences") {
    Rng rng(359);
    Matrix h = oracles::random_matrix(rng, 9, 5);
    const auto [y, tape] = max_pool_set(h);
    for (std::size_t j = 0; j < 5; ++j) {
        double best = h(0, j);
        for (std::size_t i = 1; i < 9; ++i) best = std::max(best, h(i, j));
        CHECK(y(0, j) == best);
    }

    const Matrix c = oracles::random_cotangent(rng, 1, 5);
    const auto eval = [&] { return oracles::weighted_sum(c, max_pool_set(h).first); };
    const Matrix gx = max_pool_set_backward(c, tape);
    for (std::size_t i = 0; i < h.data.size(); ++i) {
        CHECK(oracles::rel_err(gx.data[i], oracles::central_diff(eval, &h.data[i])) <
              oracles::kFdTol);
    }
}

// ---- recursive cluster pooling ----

TEST_CASE("cluster pool of identical rows returns that row") {
    Rng rng(367);
    const Matrix coords = oracles::random_points(rng, 8);
    Matrix x(8, 3);
    for (std::size_t i = 0; i < 8; ++i) {
        x(i, 0) = 1.5;
        x(i, 1) = -0.25;
        x(i, 2) = 4.0;
    }
    const auto [y, tape] = cluster_pool_forward(x, coords, PoolSpec{2}, kScheme);
    CHECK(y.rows == 1);
    CHECK(y(0, 0) == 1.5);
    CHECK(y(0, 1) == -0.25);
    CHECK(y(0, 2) == 4.0);
}

TEST_CASE("cluster pool with k = csize reduces to one max pool") {
    Rng rng(373);
    const Matrix coords = oracles::random_points(rng, 3);
    const Matrix x = oracles::random_matrix(rng, 3, 4);
    const auto [y, tape] = cluster_pool_forward(x, coords, PoolSpec{3}, kScheme);
    const auto [expected, mp_tape] = max_pool_set(x);
    CHECK(specpoint::linalg::max_abs_diff(y, expected) == 0.0);
    CHECK(tape.plan.stages.size() == 1);
    CHECK(tape.plan.stages[0].mode == PoolMode::max);
}

TEST_CASE("cluster pool hand trace on a line, k=8 csize=2") {
    // Eight points on a line, feature = position index. The spectral (Fiedler)
    // order walks the line, so the stages are: pairwise MAX (1,3,5,7),
    // pairwise AVG (2,6), terminal MAX -> 6. A flipped Fiedler sign reverses
    // the walk but produces the same groups and the same result.
    Matrix coords(8, 3);
    Matrix x(8, 1);
    for (std::size_t i = 0; i < 8; ++i) {
        coords(i, 0) = static_cast<double>(i);
        x(i, 0) = static_cast<double>(i);
    }
    const auto [y, tape] = cluster_pool_forward(x, coords, PoolSpec{2}, kScheme);
    CHECK(y(0, 0) == doctest::Approx(6.0).epsilon(1e-12));
    REQUIRE(tape.plan.stages.size() == 3);
    CHECK(tape.plan.stages[0].mode == PoolMode::max);
    CHECK(tape.plan.stages[1].mode == PoolMode::avg);
    CHECK(tape.plan.stages[2].mode == PoolMode::max);

    // Gradient: 6 = avg(max(4,5), max(6,7)) picked by the terminal max, so
    // rows 5 and 7 each receive half of the incoming gradient.
    const Matrix gx = cluster_pool_backward(Matrix(1, 1, {1.0}), tape);
    for (std::size_t i = 0; i < 8; ++i) {
        CHECK(gx(i, 0) == doctest::Approx(i == 5 || i == 7 ? 0.5 : 0.0).epsilon(1e-12));
    }
}

TEST_CASE("cluster pool canonical stage counts for k = 2c^2") {
    Rng rng(379);
    for (const std::size_t c : {std::size_t{2}, std::size_t{4}}) {
        const std::size_t k = 2 * c * c;
        const Matrix coords = oracles::random_points(rng, k);
        const Matrix x = oracles::random_matrix(rng, k, 3);
        const auto [y, tape] = cluster_pool_forward(x, coords, PoolSpec{c}, kScheme);
        // Counts walk 2c^2 -> 2c -> 2 -> 1 over two recurrences + terminal.
        REQUIRE(tape.plan.stages.size() == 3);
        CHECK(tape.plan.stages[0].order.size() == k);
        CHECK(tape.plan.stages[1].order.size() == 2 * c);
        CHECK(tape.plan.stages[2].order.size() == 2);
        CHECK(tape.plan.stages[2].mode == PoolMode::max);
        CHECK(y.rows == 1);
        CHECK(y.cols == 3);
    }
}

TEST_CASE("forced all-average plan spreads gradient uniformly") {
    ClusterPoolPlan plan;
    plan.k = 8;
    for (const std::size_t n : {std::size_t{8}, std::size_t{4}, std::size_t{2}}) {
        PoolStagePlan stage;
        stage.mode = PoolMode::avg;
        stage.group_size = 2;
        stage.order.resize(n);
        std::iota(stage.order.begin(), stage.order.end(), std::size_t{0});
        plan.stages.push_back(stage);
    }
    plan.stages.back().group_size = 2; // terminal stage pools the last 2 rows

    Rng rng(383);
    Matrix x = oracles::random_matrix(rng, 8, 3);
    const auto [y, tape] = cluster_pool_apply(x, plan);
    for (std::size_t j = 0; j < 3; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < 8; ++i) mean += x(i, j);
        mean /= 8.0;
        CHECK(y(0, j) == doctest::Approx(mean).epsilon(1e-12));
    }

    const Matrix c = oracles::random_cotangent(rng, 1, 3);
    const Matrix gx = cluster_pool_backward(c, tape);
    for (std::size_t i = 0; i < 8; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            CHECK(gx(i, j) == doctest::Approx(c(0, j) / 8.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("cluster pool backward matches finite differences") {
    Rng rng(389);
    const std::size_t k = 8;
    const Matrix coords = oracles::random_points(rng, k);
    Matrix x = oracles::random_matrix(rng, k, 3);
    const Matrix c = oracles::random_cotangent(rng, 1, 3);

    // The plan is geometry-only, so finite differences on x replay the same
    // cluster assignments — exactly the constant-assignment gradient.
    const ClusterPoolPlan plan = cluster_pool_plan(coords, 2, kScheme);
    const auto eval = [&] { return oracles::weighted_sum(c, cluster_pool_apply(x, plan).first); };
    const auto [y, tape] = cluster_pool_apply(x, plan);
    const Matrix gx = cluster_pool_backward(c, tape);
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        CHECK(oracles::rel_err(gx.data[i], oracles::central_diff(eval, &x.data[i])) <
              oracles::kFdTol);
    }
}

TEST_CASE("cluster pool is permutation invariant when the graph is rebuilt") {
    Rng rng(397);
    const std::size_t k = 8;
    const Matrix coords = oracles::random_points(rng, k);
    const Matrix x = oracles::random_matrix(rng, k, 3);
    const Matrix base = cluster_pool_forward(x, coords, PoolSpec{2}, kScheme).first;

    std::vector<std::size_t> perm(k);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (int trial = 0; trial < 5; ++trial) {
        rng.shuffle(perm);
        Matrix pcoords(k, 3), px(k, 3);
        for (std::size_t i = 0; i < k; ++i) {
            for (std::size_t d = 0; d < 3; ++d) {
                pcoords(i, d) = coords(perm[i], d);
                px(i, d) = x(perm[i], d);
            }
        }
        const Matrix pooled = cluster_pool_forward(px, pcoords, PoolSpec{2}, kScheme).first;
        CHECK(specpoint::linalg::max_abs_diff(pooled, base) < 1e-8);
    }
}

TEST_CASE("feature-mode cluster pool equals the literal recursive procedure") {
    Rng rng(401);
    const Matrix x = oracles::random_matrix(rng, 8, 3);
    const auto [y, tape] =
        cluster_pool_forward(x, Matrix(8, 0), PoolSpec{2, ClusterBy::feature}, kScheme);
    const Matrix expected = oracles::literal_recursive_pool(x, 2, kScheme);
    REQUIRE(y.same_shape(expected));
    for (std::size_t j = 0; j < 3; ++j) CHECK(y(0, j) == expected(0, j));
}

TEST_CASE("cluster pool pads non-divisible counts by repeating the last row") {
    // Six points on a line with csize 4: the sorted sequence is padded with
    // two copies of its final entry, so the counts walk 6 -> 2 -> 1 with a
    // MAX stage then a terminal AVG. The feature marks one endpoint, which
    // lands alone in a group whichever way the spectral walk runs, so the
    // result is 0.5 regardless of eigenvector sign.
    Matrix coords(6, 1);
    Matrix x(6, 1);
    for (std::size_t i = 0; i < 6; ++i) coords(i, 0) = static_cast<double>(i);
    x(5, 0) = 1.0;

    const auto [y, tape] = cluster_pool_forward(x, coords, PoolSpec{4}, kScheme);
    REQUIRE(tape.plan.stages.size() == 2);
    const auto& order = tape.plan.stages[0].order;
    REQUIRE(order.size() == 8);
    CHECK(order[6] == order[5]);
    CHECK(order[7] == order[5]);
    CHECK(tape.plan.stages[1].mode == PoolMode::avg);
    CHECK(y(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("cluster pool rejects degenerate cluster sizes") {
    Matrix x(4, 2);
    Matrix coords(4, 3);
    CHECK_THROWS_AS((void)cluster_pool_forward(x, coords, PoolSpec{1}, kScheme), ConfigError);
    CHECK_THROWS_AS((void)cluster_pool_forward(Matrix(0, 2), Matrix(0, 3), PoolSpec{2}, kScheme),
                    ConfigError);
}

// ---- feature propagation ----

TEST_CASE("fp interpolation weights match the hand-computed inverse distances") {
    // Coarse points at 0, 1, 10 on a line; fine point at 0.5. One-hot coarse
    // features read the normalized weights straight out of the output.
    Matrix coarse_coords(3, 1, {0.0, 1.0, 10.0});
    const Matrix coarse_feats = Matrix::identity(3);
    Matrix fine_coords(1, 1, {0.5});
    const auto [y, tape] = fp_interpolate(coarse_coords, coarse_feats, fine_coords,
                                          Matrix(1, 0), Matrix::identity(3),
                                          std::vector<double>(3, 0.0));
    const double w0 = 1.0 / (0.5 + 1e-10);
    const double w2 = 1.0 / (9.5 + 1e-10);
    const double total = w0 + w0 + w2;
    CHECK(y(0, 0) == doctest::Approx(w0 / total).epsilon(1e-12));
    CHECK(y(0, 1) == doctest::Approx(w0 / total).epsilon(1e-12));
    CHECK(y(0, 2) == doctest::Approx(w2 / total).epsilon(1e-12));
}

TEST_CASE("fp interpolation at a coincident fine point returns that coarse feature") {
    Rng rng(409);
    const Matrix coarse_coords = oracles::random_points(rng, 5);
    Matrix coarse_feats = oracles::random_matrix(rng, 5, 4, 0.5, 2.0); // positive
    Matrix fine_coords(1, 3);
    for (std::size_t d = 0; d < 3; ++d) fine_coords(0, d) = coarse_coords(2, d);

    const auto [y, tape] = fp_interpolate(coarse_coords, coarse_feats, fine_coords,
                                          Matrix(1, 0), Matrix::identity(4),
                                          std::vector<double>(4, 0.0));
    for (std::size_t j = 0; j < 4; ++j) {
        CHECK(y(0, j) == doctest::Approx(coarse_feats(2, j)).epsilon(1e-6));
    }
}

TEST_CASE("fp interpolation of a constant field is that constant") {
    Rng rng(419);
    const Matrix coarse_coords = oracles::random_points(rng, 6);
    Matrix coarse_feats(6, 2);
    for (std::size_t i = 0; i < 6; ++i) {
        coarse_feats(i, 0) = 0.75;
        coarse_feats(i, 1) = 1.25;
    }
    const Matrix fine_coords = oracles::random_points(rng, 10);
    const auto [y, tape] = fp_interpolate(coarse_coords, coarse_feats, fine_coords,
                                          Matrix(10, 0), Matrix::identity(2),
                                          std::vector<double>(2, 0.0));
    for (std::size_t i = 0; i < 10; ++i) {
        CHECK(y(i, 0) == doctest::Approx(0.75).epsilon(1e-9));
        CHECK(y(i, 1) == doctest::Approx(1.25).epsilon(1e-9));
    }
}

TEST_CASE("fp backward matches finite differences") {
    Rng rng(421);
    const Matrix coarse_coords = oracles::random_points(rng, 5);
    Matrix coarse_feats = oracles::random_matrix(rng, 5, 3);
    const Matrix fine_coords = oracles::random_points(rng, 7);
    Matrix skip_feats = oracles::random_matrix(rng, 7, 2);
    Matrix w = oracles::random_matrix(rng, 5, 4);
    std::vector<double> b(4);
    for (double& v : b) v = rng.uniform(-0.5, 0.5);
    const Matrix c = oracles::random_cotangent(rng, 7, 4);

    const auto eval = [&] {
        return oracles::weighted_sum(
            c, fp_interpolate(coarse_coords, coarse_feats, fine_coords, skip_feats, w, b).first);
    };
    const auto [y, tape] = fp_interpolate(coarse_coords, coarse_feats, fine_coords,
                                          skip_feats, w, b);
    const FpGrads grads = fp_interpolate_backward(c, tape, w);

    for (std::size_t i = 0; i < coarse_feats.data.size(); ++i) {
        CHECK(oracles::rel_err(grads.coarse_feats.data[i],
                               oracles::central_diff(eval, &coarse_feats.data[i])) <
              oracles::kFdTol);
    }
    for (std::size_t i = 0; i < skip_feats.data.size(); ++i) {
        CHECK(oracles::rel_err(grads.skip_feats.data[i],
                               oracles::central_diff(eval, &skip_feats.data[i])) <
              oracles::kFdTol);
    }
    for (std::size_t i = 0; i < w.data.size(); ++i) {
        CHECK(oracles::rel_err(grads.w.data[i], oracles::central_diff(eval, &w.data[i])) <
              oracles::kFdTol);
    }
    for (std::size_t i = 0; i < b.size(); ++i) {
        CHECK(oracles::rel_err(grads.b[i], oracles::central_diff(eval, &b[i])) <
              oracles::kFdTol);
    }
}

} // TEST_SUITE
