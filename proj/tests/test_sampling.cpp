#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <utility>
#include <vector>

#include "oracles.hpp"
#include "specpoint/errors.hpp"
#include "specpoint/matrix.hpp"
#include "specpoint/rng.hpp"
#include "specpoint/sampling.hpp"

using specpoint::ConfigError;
using specpoint::Rng;
using specpoint::linalg::Matrix;
using specpoint::sampling::fps;
using specpoint::sampling::group;
using specpoint::sampling::knn;
using specpoint::sampling::Neighborhood;

namespace {

double point_distance(const Matrix& points, std::size_t i, std::size_t j) {
    double acc = 0.0;
    for (std::size_t d = 0; d < points.cols; ++d) {
        const double diff = points(i, d) - points(j, d);
        acc += diff * diff;
    }
    return std::sqrt(acc);
}

double min_pairwise_distance(const Matrix& points, const std::vector<std::size_t>& subset) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < subset.size(); ++a) {
        for (std::size_t b = a + 1; b < subset.size(); ++b) {
            best = std::min(best, point_distance(points, subset[a], subset[b]));
        }
    }
    return best;
}

// Independent neighbor oracle: full sort of (squared distance, index) pairs.
std::vector<std::size_t> naive_knn(const Matrix& points, std::size_t query, std::size_t k) {
    std::vector<std::pair<double, std::size_t>> order;
    for (std::size_t i = 0; i < points.rows; ++i) {
        double acc = 0.0;
        for (std::size_t d = 0; d < points.cols; ++d) {
            const double diff = points(query, d) - points(i, d);
            acc += diff * diff;
        }
        order.emplace_back(acc, i);
    }
    std::sort(order.begin(), order.end());
    std::vector<std::size_t> result(k);
    for (std::size_t i = 0; i < k; ++i) result[i] = order[i].second;
    return result;
}

} // namespace

TEST_SUITE("sampling") {

TEST_CASE("fps m=1 picks the lexicographically smallest point") {
    Matrix points(4, 2, {3.0, 1.0, //
                         2.0, 5.0, //
                         2.0, 4.0, //
                         6.0, 0.0});
    CHECK(fps(points, 1) == std::vector<std::size_t>{2});
}

TEST_CASE("fps square corners, m=2") {
    Matrix corners(4, 2, {0.0, 0.0, //
                          1.0, 0.0, //
                          0.0, 1.0, //
                          1.0, 1.0});
    const auto picked = fps(corners, 2);
    CHECK(picked == std::vector<std::size_t>{0, 3});
}

TEST_CASE("fps m=n is a permutation of all indices") {
    Rng rng(11);
    const Matrix points = oracles::random_points(rng, 12);
    auto picked = fps(points, 12);
    std::sort(picked.begin(), picked.end());
    std::vector<std::size_t> all(12);
    std::iota(all.begin(), all.end(), std::size_t{0});
    CHECK(picked == all);
}

TEST_CASE("fps rejects impossible centroid counts") {
    Matrix points(3, 2, {0.0, 0.0, 1.0, 0.0, 0.0, 1.0});
    CHECK_THROWS_AS((void)fps(points, 4), ConfigError);
    CHECK_THROWS_AS((void)fps(points, 0), ConfigError);
}

TEST_CASE("fps selection is invariant under row permutation up to relabeling") {
    Rng rng(23);
    const std::size_t n = 40;
    const Matrix points = oracles::random_points(rng, n);
    const auto base = fps(points, 10);

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.shuffle(perm);

    Matrix shuffled(n, points.cols);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t d = 0; d < points.cols; ++d) shuffled(i, d) = points(perm[i], d);
    }
    const auto permuted = fps(shuffled, 10);

    REQUIRE(permuted.size() == base.size());
    for (std::size_t i = 0; i < base.size(); ++i) {
        // Same selected coordinates, in the same selection order.
        for (std::size_t d = 0; d < points.cols; ++d) {
            CHECK(shuffled(permuted[i], d) == points(base[i], d));
        }
    }
}

TEST_CASE("fps spreads better than random subsets") {
    Rng rng(37);
    const std::size_t n = 100;
    const std::size_t m = 10;
    const Matrix points = oracles::random_points(rng, n);
    const double fps_spread = min_pairwise_distance(points, fps(points, m));

    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), std::size_t{0});
    for (int trial = 0; trial < 120; ++trial) {
        rng.shuffle(all);
        const std::vector<std::size_t> subset(all.begin(),
                                              all.begin() + static_cast<std::ptrdiff_t>(m));
        CHECK(fps_spread >= min_pairwise_distance(points, subset));
    }
}

TEST_CASE("knn k=n returns all indices") {
    Rng rng(5);
    const Matrix points = oracles::random_points(rng, 7);
    auto neighbors = knn(points, 3, 7);
    std::sort(neighbors.begin(), neighbors.end());
    std::vector<std::size_t> all(7);
    std::iota(all.begin(), all.end(), std::size_t{0});
    CHECK(neighbors == all);
}

TEST_CASE("knn collinear points") {
    Matrix line(4, 1, {0.0, 1.0, 2.0, 3.0});
    CHECK(knn(line, 0, 2) == std::vector<std::size_t>{0, 1});
    CHECK(knn(line, 3, 3) == std::vector<std::size_t>{3, 2, 1});
}

TEST_CASE("knn duplicate points at query win by index order") {
    Matrix points(5, 2, {1.0, 1.0, //
                         4.0, 0.0, //
                         1.0, 1.0, //
                         1.0, 1.0, //
                         1.1, 1.0});
    CHECK(knn(points, 2, 4) == std::vector<std::size_t>{0, 2, 3, 4});
}

TEST_CASE("knn matches naive sort oracle on random clouds") {
    Rng rng(71);
    for (int trial = 0; trial < 10; ++trial) {
        const Matrix points = oracles::random_points(rng, 30);
        const std::size_t query = rng.below(30);
        CHECK(knn(points, query, 8) == naive_knn(points, query, 8));
    }
}

TEST_CASE("knn rejects bad arguments") {
    Matrix points(3, 2, {0.0, 0.0, 1.0, 0.0, 0.0, 1.0});
    CHECK_THROWS_AS((void)knn(points, 0, 4), ConfigError);
    CHECK_THROWS_AS((void)knn(points, 9, 2), ConfigError);
}

TEST_CASE("group of a single centroid at the origin keeps raw coordinates") {
    Matrix points(3, 3, {0.0, 0.0, 0.0, //
                         1.0, 2.0, 3.0, //
                         -1.0, 0.5, 0.25});
    const auto hoods = group(points, Matrix(3, 0), {0}, 3);
    REQUIRE(hoods.size() == 1);
    const Neighborhood& hood = hoods[0];
    CHECK(hood.centroid_index == 0);
    CHECK(hood.member_indices[0] == 0);
    for (std::size_t i = 0; i < 3; ++i) {
        const std::size_t m = hood.member_indices[i];
        for (std::size_t d = 0; d < 3; ++d) CHECK(hood.rel_coords(i, d) == points(m, d));
    }
    CHECK(hood.features.cols == 0);
}

TEST_CASE("group centroid row of rel_coords is zero and features are copied") {
    Rng rng(13);
    const Matrix points = oracles::random_points(rng, 20);
    const Matrix feats = oracles::random_matrix(rng, 20, 4);
    const auto hoods = group(points, feats, fps(points, 5), 6);
    REQUIRE(hoods.size() == 5);
    for (const Neighborhood& hood : hoods) {
        // The centroid is its own nearest neighbor, so row 0 is the zero vector.
        CHECK(hood.member_indices[0] == hood.centroid_index);
        for (std::size_t d = 0; d < 3; ++d) CHECK(hood.rel_coords(0, d) == 0.0);
        for (std::size_t i = 0; i < 6; ++i) {
            const std::size_t m = hood.member_indices[i];
            for (std::size_t f = 0; f < 4; ++f) CHECK(hood.features(i, f) == feats(m, f));
        }
    }
}

TEST_CASE("group is translation invariant") {
    Rng rng(97);
    const std::size_t n = 25;
    const Matrix points = oracles::random_points(rng, n);
    Matrix shifted = points;
    const double shift[3] = {13.5, -2.25, 0.75};
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t d = 0; d < 3; ++d) shifted(i, d) += shift[d];
    }

    const auto centroids = fps(points, 6);
    const auto base = group(points, Matrix(n, 0), centroids, 8);
    const auto moved = group(shifted, Matrix(n, 0), centroids, 8);
    for (std::size_t h = 0; h < base.size(); ++h) {
        CHECK(base[h].member_indices == moved[h].member_indices);
        CHECK(specpoint::linalg::max_abs_diff(base[h].rel_coords, moved[h].rel_coords) <
              1e-12);
    }
}

TEST_CASE("group rejects mismatched feature rows") {
    Matrix points(4, 3);
    Matrix feats(3, 2);
    CHECK_THROWS_AS((void)group(points, feats, {0}, 2), ConfigError);
}

} // TEST_SUITE
