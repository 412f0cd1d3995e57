#ifndef CROT_TEST_SUPPORT_HPP
#define CROT_TEST_SUPPORT_HPP

#include <algorithm>
#include <cmath>
#include <functional>

#include "crot/core.hpp"

namespace crot::testing {

inline Matrix random_matrix(std::size_t rows, std::size_t cols, RngStream& rng, double scale = 1.0, double shift = 0.0) {
    Matrix m(rows, cols);
    for (auto& v : m.values()) {
        v = shift + scale * rng.normal();
    }
    return m;
}

/**
 * Settings that drive Sinkhorn to machine-level convergence, for comparisons against finite differences.
 */
inline CrotConfig tight_config(double epsilon, int p = 2) {
    CrotConfig cfg;
    cfg.epsilon = epsilon;
    cfg.p = p;
    cfg.sinkhorn_tol = 1e-13;
    cfg.sinkhorn_max_iter = 200000;
    return cfg;
}

/**
 * Central differences of `f` at every (row, col) in the given sets, step `h`.
 */
inline Matrix central_differences(const std::function<double(const Matrix&)>& f, const Matrix& at, const std::vector<std::size_t>& rows,
                                  const std::vector<std::size_t>& cols, double h) {
    Matrix out(at.rows(), at.cols());
    Matrix probe = at;
    for (auto i : rows) {
        for (auto c : cols) {
            const double orig = probe(i, c);
            probe(i, c) = orig + h;
            const double up = f(probe);
            probe(i, c) = orig - h;
            const double down = f(probe);
            probe(i, c) = orig;
            out(i, c) = (up - down) / (2 * h);
        }
    }
    return out;
}

/**
 * Largest entry-wise relative error of `analytic` against `numeric`. Each difference is scaled by
 * the larger of the entry's magnitude and 1e-3 of the largest numeric entry, so near-zero components
 * do not blow up the ratio.
 */
inline double max_relative_error(const Matrix& analytic, const Matrix& numeric) {
    double scale = 0;
    for (double v : numeric.values()) {
        scale = std::max(scale, std::abs(v));
    }
    double worst = 0;
    for (std::size_t k = 0; k < numeric.size(); ++k) {
        const double denom = std::max({std::abs(numeric.values()[k]), 1e-3 * scale, 1e-12});
        worst = std::max(worst, std::abs(analytic.values()[k] - numeric.values()[k]) / denom);
    }
    return worst;
}

}

#endif
