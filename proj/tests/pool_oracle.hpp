#pragma once

// Independent step-by-step transliteration of the recursive cluster-pooling
// procedure, used as a bit-for-bit oracle: build a graph on the current rows,
// argsort the Fiedler vector, rearrange, reshape into groups of csize, pool
// each group with the alternating mode (max first), repeat while more than
// csize rows remain, then pool what is left with the toggled mode.
//
// Deliberately written against the pooled rows themselves (the feature-
// distance reading), with its own argsort and its own group loops.

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <vector>

#include "specpoint/graph.hpp"
#include "specpoint/matrix.hpp"

namespace oracles {

inline specpoint::linalg::Matrix literal_recursive_pool(
    specpoint::linalg::Matrix x, std::size_t csize,
    const specpoint::spectral::WeightScheme& scheme) {
    using specpoint::linalg::Matrix;

    bool use_max = true;
    while (x.rows > csize) {
        const auto graph = specpoint::spectral::build_graph(x, scheme);
        std::vector<std::size_t> order(x.rows);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&graph](std::size_t a, std::size_t b) {
            return graph.basis(a, 1) < graph.basis(b, 1);
        });

        Matrix rearranged(x.rows, x.cols);
        for (std::size_t i = 0; i < x.rows; ++i) {
            for (std::size_t j = 0; j < x.cols; ++j) rearranged(i, j) = x(order[i], j);
        }

        const std::size_t groups = x.rows / csize;
        Matrix pooled(groups, x.cols);
        for (std::size_t g = 0; g < groups; ++g) {
            for (std::size_t j = 0; j < x.cols; ++j) {
                if (use_max) {
                    double best = rearranged(g * csize, j);
                    for (std::size_t i = 1; i < csize; ++i) {
                        best = std::max(best, rearranged(g * csize + i, j));
                    }
                    pooled(g, j) = best;
                } else {
                    double acc = 0.0;
                    for (std::size_t i = 0; i < csize; ++i) acc += rearranged(g * csize + i, j);
                    pooled(g, j) = acc / static_cast<double>(csize);
                }
            }
        }
        x = pooled;
        use_max = !use_max;
    }

    Matrix out(1, x.cols);
    for (std::size_t j = 0; j < x.cols; ++j) {
        if (use_max) {
            double best = x(0, j);
            for (std::size_t i = 1; i < x.rows; ++i) best = std::max(best, x(i, j));
            out(0, j) = best;
        } else {
            double acc = 0.0;
            for (std::size_t i = 0; i < x.rows; ++i) acc += x(i, j);
            out(0, j) = acc / static_cast<double>(x.rows);
        }
    }
    return out;
}

} // namespace oracles
