#ifndef CROT_OT_HPP
#define CROT_OT_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "core.hpp"

/**
 * @file ot.hpp
 * @brief Entropic optimal transport between uniformly weighted point clouds.
 *
 * Point clouds are the rows of a `Matrix`, each carrying mass `1/rows`.
 * The ground cost is the Euclidean distance raised to the power `p`.
 */

namespace crot {

/**
 * @brief Pairwise ground costs, entry `(i, j)` being `||x_i - y_j||^p`.
 */
class CostMatrix : public Matrix {
public:
    CostMatrix() = default;
    explicit CostMatrix(Matrix values) : Matrix(std::move(values)) {}
};

namespace internal {

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
    double out = 0;
    for (std::size_t d = 0; d < a.size(); ++d) {
        const double diff = a[d] - b[d];
        out += diff * diff;
    }
    return out;
}

inline double ground_cost(std::span<const double> a, std::span<const double> b, int p) {
    const double d2 = squared_distance(a, b);
    if (p == 2) {
        return d2;
    }
    const double d = std::sqrt(d2);
    return p == 1 ? d : std::pow(d, p);
}

/**
 * Add `weight * d/dy ||y - x||^p` to `out`.
 * The derivative is taken as zero where `y == x` for `p < 2`.
 */
inline void accumulate_cost_gradient(std::span<const double> y, std::span<const double> x, int p, double weight, std::span<double> out) {
    if (weight == 0) {
        return;
    }
    if (p == 2) {
        for (std::size_t d = 0; d < y.size(); ++d) {
            out[d] += weight * 2.0 * (y[d] - x[d]);
        }
        return;
    }
    const double dist = std::sqrt(squared_distance(y, x));
    if (dist == 0) {
        return;
    }
    const double scale = weight * p * std::pow(dist, p - 2);
    for (std::size_t d = 0; d < y.size(); ++d) {
        out[d] += scale * (y[d] - x[d]);
    }
}

// Four interleaved partial sums; the summation order is fixed, so results do not depend on the compiler.
inline double dot(const double* a, const double* b, std::size_t n) {
    double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
        s0 += a[j] * b[j];
        s1 += a[j + 1] * b[j + 1];
        s2 += a[j + 2] * b[j + 2];
        s3 += a[j + 3] * b[j + 3];
    }
    for (; j < n; ++j) {
        s0 += a[j] * b[j];
    }
    return (s0 + s1) + (s2 + s3);
}

inline Matrix transpose(const Matrix& m) {
    Matrix out(m.cols(), m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            out(j, i) = m(i, j);
        }
    }
    return out;
}

/**
 * Soft-min update of one set of potentials in the log domain.
 * `cost` has one row per output potential; `other` holds the opposite potentials.
 */
inline void softmin_update(const Matrix& cost, std::span<const double> other, double log_weight, double eps, std::vector<double>& out, std::vector<double>& scratch) {
    const double inv_eps = 1.0 / eps;
    const std::size_t n = cost.cols();
    scratch.resize(n);
    for (std::size_t i = 0; i < cost.rows(); ++i) {
        auto crow = cost.row(i);
        double top = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
            scratch[j] = (other[j] - crow[j]) * inv_eps;
            top = std::max(top, scratch[j]);
        }
        double sum = 0;
        for (std::size_t j = 0; j < n; ++j) {
            sum += std::exp(scratch[j] - top);
        }
        out[i] = -eps * (log_weight + top + std::log(sum));
    }
}

}

/**
 * Pairwise cost matrix between the rows of `x` and the rows of `y`.
 */
inline CostMatrix cost_matrix(const Matrix& x, const Matrix& y, int p) {
    if (x.cols() != y.cols()) {
        throw DimensionError("cost_matrix: " + std::to_string(x.cols()) + " vs " + std::to_string(y.cols()) + " columns");
    }
    if (p < 1) {
        throw ArgumentError("cost_matrix: p must be at least 1");
    }
    Matrix out(x.rows(), y.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        auto xi = x.row(i);
        for (std::size_t j = 0; j < y.rows(); ++j) {
            out(i, j) = internal::ground_cost(xi, y.row(j), p);
        }
    }
    return CostMatrix(std::move(out));
}

/**
 * @brief Options for `sinkhorn()`.
 */
struct SinkhornOptions {
    /**
     * Entropic regularization strength, in the units of the cost.
     */
    double epsilon = 1.0;

    /**
     * Maximum number of iterations at the target `epsilon`.
     */
    std::size_t max_iter = 200;

    /**
     * Convergence threshold on the L1 deviation of the plan's marginals from uniform.
     */
    double tol = 1e-6;

    /**
     * When the largest cost exceeds `100 * epsilon`, warm-start by running a few iterations
     * at geometrically decreasing regularization, starting from half the largest cost.
     */
    bool anneal = true;
};

/**
 * @brief Output of `sinkhorn()`.
 */
struct SinkhornResult {
    /** Transport plan; rows sum to `1/rows` and columns to `1/cols`. */
    Matrix plan;

    /** Dual potentials, so that `plan(i, j) = exp((f_i + g_j - C_ij) / epsilon) / (rows * cols)`. */
    std::vector<double> potential_f;
    std::vector<double> potential_g;

    /** Transport cost `<plan, C>`. */
    double reg_cost = 0;

    /**
     * Value of the regularized objective `<plan, C> + epsilon * KL(plan || a x b)`.
     * Its derivative with respect to `C` is exactly `plan` at the optimum.
     */
    double objective = 0;

    std::size_t iterations_used = 0;
    bool converged = false;

    /** Larger of the row and column L1 marginal deviations. */
    double marginal_error = 0;
};

namespace internal {

/**
 * Scaling-form Sinkhorn with log-domain absorption.
 *
 * The plan is `diag(u) K diag(v)` with `K_ij = exp((f_i + g_j - C_ij) / eps) a b`.
 * Whenever a scaling drifts far from 1 it is folded into the potentials and `K` is rebuilt,
 * so `K` never underflows on the support of the plan.
 * For symmetric problems (`symmetric = true`, square symmetric cost) a single potential is kept
 * and updated by the averaged fixed point, which avoids the period-two oscillation of the plain iteration.
 */
class ScalingSolver {
public:
    ScalingSolver(const Matrix& cost, bool symmetric)
        : cost_(cost), nr_(cost.rows()), nc_(cost.cols()), symmetric_(symmetric), f_(nr_, 0.0), g_(nc_, 0.0), kernel_(nr_, nc_) {}

    /**
     * Iterate at `eps` until the L1 row deviation is below `threshold` or `limit` iterations pass.
     * Returns whether the threshold was met; adds the iterations performed to `counter`.
     */
    bool run(double eps, std::size_t limit, double threshold, std::size_t& counter) {
        eps_ = eps;
        rebuild();
        for (std::size_t it = 0; it < limit; ++it) {
            ++counter;
            bool ok = symmetric_ ? step_symmetric() : step();
            if (!ok) {
                log_domain_reset();
                continue;
            }
            if (error_ < threshold) {
                absorb();
                return true;
            }
            if (drifted()) {
                absorb();
                rebuild();
            }
        }
        absorb();
        return false;
    }

    const std::vector<double>& f() const { return f_; }
    const std::vector<double>& g() const { return symmetric_ ? f_ : g_; }

private:
    void rebuild() {
        const double inv = 1.0 / eps_;
        const double log_ab = -std::log(static_cast<double>(nr_)) - std::log(static_cast<double>(nc_));
        const auto& g = symmetric_ ? f_ : g_;
        for (std::size_t i = 0; i < nr_; ++i) {
            auto crow = cost_.row(i);
            auto krow = kernel_.row(i);
            for (std::size_t j = 0; j < nc_; ++j) {
                krow[j] = std::exp(log_ab + (f_[i] + g[j] - crow[j]) * inv);
            }
        }
        u_.assign(nr_, 1.0);
        v_.assign(nc_, 1.0);
    }

    // Column update against u, then the row deviation of the resulting plan and the next u.
    bool step() {
        const double a = 1.0 / nr_, b = 1.0 / nc_;
        col_.assign(nc_, 0.0);
        for (std::size_t i = 0; i < nr_; ++i) {
            auto krow = kernel_.row(i);
            const double ui = u_[i];
            for (std::size_t j = 0; j < nc_; ++j) {
                col_[j] += krow[j] * ui;
            }
        }
        for (std::size_t j = 0; j < nc_; ++j) {
            if (!(col_[j] > 0) || !std::isfinite(col_[j])) {
                return false;
            }
            v_[j] = b / col_[j];
        }
        error_ = 0;
        for (std::size_t i = 0; i < nr_; ++i) {
            const double r = dot(kernel_.row(i).data(), v_.data(), nc_);
            if (!(r > 0) || !std::isfinite(r)) {
                return false;
            }
            error_ += std::abs(u_[i] * r - a);
            u_[i] = a / r;
        }
        return true;
    }

    // u <- sqrt(u * a / (K u)); the deviation is that of the plan before the update.
    bool step_symmetric() {
        const double a = 1.0 / nr_;
        error_ = 0;
        next_.resize(nr_);
        for (std::size_t i = 0; i < nr_; ++i) {
            const double r = dot(kernel_.row(i).data(), u_.data(), nc_);
            if (!(r > 0) || !std::isfinite(r)) {
                return false;
            }
            error_ += std::abs(u_[i] * r - a);
            next_[i] = std::sqrt(u_[i] * a / r);
        }
        std::swap(u_, next_);
        return true;
    }

    bool drifted() const {
        constexpr double lo = 1e-30, hi = 1e30;
        auto bad = [&](const std::vector<double>& s) { return std::any_of(s.begin(), s.end(), [&](double x) { return x < lo || x > hi; }); };
        return bad(u_) || (!symmetric_ && bad(v_));
    }

    void absorb() {
        for (std::size_t i = 0; i < nr_; ++i) {
            f_[i] += eps_ * std::log(u_[i]);
        }
        if (!symmetric_) {
            for (std::size_t j = 0; j < nc_; ++j) {
                g_[j] += eps_ * std::log(v_[j]);
            }
        }
        u_.assign(nr_, 1.0);
        v_.assign(nc_, 1.0);
    }

    // Exact soft-min updates, used when the kernel has underflowed along a whole row or column.
    void log_domain_reset() {
        const double log_a = -std::log(static_cast<double>(nr_)), log_b = -std::log(static_cast<double>(nc_));
        if (symmetric_) {
            std::vector<double> next(nr_);
            softmin_update(cost_, f_, log_b, eps_, next, scratch_);
            for (std::size_t i = 0; i < nr_; ++i) {
                f_[i] = 0.5 * (f_[i] + next[i]);
            }
        } else {
            const Matrix cost_t = transpose(cost_);
            softmin_update(cost_t, f_, log_a, eps_, g_, scratch_);
            softmin_update(cost_, g_, log_b, eps_, f_, scratch_);
        }
        rebuild();
    }

    const Matrix& cost_;
    std::size_t nr_, nc_;
    bool symmetric_;
    double eps_ = 1;
    double error_ = 0;
    std::vector<double> f_, g_, u_, v_, col_, next_, scratch_;
    Matrix kernel_;
};

inline SinkhornResult solve(const CostMatrix& cost, const SinkhornOptions& options, bool symmetric) {
    const std::size_t nr = cost.rows(), nc = cost.cols();
    if (nr == 0 || nc == 0) {
        throw ArgumentError("sinkhorn: empty cost matrix");
    }
    if (!(options.epsilon > 0) || !std::isfinite(options.epsilon)) {
        throw ArgumentError("sinkhorn: epsilon must be positive");
    }
    if (options.max_iter == 0) {
        throw ArgumentError("sinkhorn: max_iter must be positive");
    }
    if (!(options.tol > 0)) {
        throw ArgumentError("sinkhorn: tol must be positive");
    }
    double max_cost = 0;
    for (double c : cost.values()) {
        if (!std::isfinite(c)) {
            throw NumericError("sinkhorn: non-finite cost entry");
        }
        max_cost = std::max(max_cost, c);
    }

    SinkhornResult out;
    ScalingSolver solver(cost, symmetric);
    if (options.anneal && max_cost > 100 * options.epsilon) {
        for (double eps = max_cost / 2; eps > options.epsilon; eps /= 2) {
            solver.run(eps, 10, 1e-3, out.iterations_used);
        }
    }
    out.converged = solver.run(options.epsilon, options.max_iter, options.tol, out.iterations_used);

    const auto& f = solver.f();
    const auto& g = solver.g();
    const double eps = options.epsilon;
    const double log_ab = -std::log(static_cast<double>(nr)) - std::log(static_cast<double>(nc));
    const double a = 1.0 / nr, b = 1.0 / nc;
    out.plan = Matrix(nr, nc);
    std::vector<double> col_sums(nc, 0.0);
    double row_err = 0;
    for (std::size_t i = 0; i < nr; ++i) {
        double row_sum = 0;
        for (std::size_t j = 0; j < nc; ++j) {
            const double c = cost(i, j);
            const double gamma = std::exp(log_ab + (f[i] + g[j] - c) / eps);
            out.plan(i, j) = gamma;
            row_sum += gamma;
            col_sums[j] += gamma;
            out.reg_cost += gamma * c;
            out.objective += gamma * (f[i] + g[j]);
        }
        row_err += std::abs(row_sum - a);
    }
    double col_err = 0;
    for (double s : col_sums) {
        col_err += std::abs(s - b);
    }
    out.marginal_error = std::max(row_err, col_err);
    out.potential_f = f;
    out.potential_g = g;
    return out;
}

}

/**
 * Entropic optimal transport between uniform marginals.
 *
 * Iterates on scaling vectors whose logarithms are periodically absorbed into the dual potentials,
 * so that small `epsilon` neither underflows nor overflows.
 * Column marginals are matched after every iteration; the iteration stops once the row marginals are within `tol` in L1.
 * If `max_iter` is reached first, the plan is returned with `converged = false`.
 */
inline SinkhornResult sinkhorn(const CostMatrix& cost, const SinkhornOptions& options) {
    return internal::solve(cost, options, false);
}

/**
 * Same as `sinkhorn()` for a symmetric cost between a point cloud and itself.
 * The averaged symmetric update converges in a handful of iterations where the alternating one can oscillate.
 */
inline SinkhornResult sinkhorn_symmetric(const CostMatrix& cost, const SinkhornOptions& options) {
    if (cost.rows() != cost.cols()) {
        throw DimensionError("sinkhorn_symmetric: cost matrix is not square");
    }
    return internal::solve(cost, options, true);
}

inline SinkhornResult sinkhorn(const CostMatrix& cost, double epsilon, std::size_t max_iter, double tol) {
    SinkhornOptions opt;
    opt.epsilon = epsilon;
    opt.max_iter = max_iter;
    opt.tol = tol;
    return sinkhorn(cost, opt);
}

/**
 * Median entry of a cost matrix.
 */
inline double median_cost(const CostMatrix& cost) {
    if (cost.empty()) {
        throw ArgumentError("median_cost: empty cost matrix");
    }
    std::vector<double> v = cost.values();
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + mid, v.end());
    double upper = v[mid];
    if (v.size() % 2 == 1) {
        return upper;
    }
    double lower = *std::max_element(v.begin(), v.begin() + mid);
    return 0.5 * (lower + upper);
}

/**
 * Data-driven regularization, 5% of the median cost.
 * Falls back to the mean cost, then to 1, when the median is zero.
 */
inline double auto_epsilon(const CostMatrix& cost) {
    double med = median_cost(cost);
    if (med > 0) {
        return 0.05 * med;
    }
    double mean = std::accumulate(cost.values().begin(), cost.values().end(), 0.0) / cost.size();
    return mean > 0 ? 0.05 * mean : 1.0;
}

inline SinkhornOptions sinkhorn_options(const CrotConfig& cfg, const CostMatrix& reference) {
    SinkhornOptions opt;
    opt.epsilon = cfg.epsilon ? *cfg.epsilon : auto_epsilon(reference);
    opt.max_iter = cfg.sinkhorn_max_iter;
    opt.tol = cfg.sinkhorn_tol;
    return opt;
}

/**
 * Transport cost `<plan, C>` of the converged entropic plan between the rows of `x` and `y`.
 */
inline double entropic_ot_cost(const Matrix& x, const Matrix& y, const CrotConfig& cfg) {
    auto cost = cost_matrix(x, y, cfg.p);
    return sinkhorn(cost, sinkhorn_options(cfg, cost)).reg_cost;
}

namespace internal {

/** Strict order on point clouds, used to pick one orientation for a cross problem. */
inline bool cloud_less(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
        return a.rows() < b.rows();
    }
    return std::lexicographical_compare(a.values().begin(), a.values().end(), b.values().begin(), b.values().end());
}

inline SinkhornResult transposed(SinkhornResult r) {
    r.plan = transpose(r.plan);
    std::swap(r.potential_f, r.potential_g);
    return r;
}

}

/**
 * @brief Sinkhorn divergence and its three constituent transport problems.
 */
struct DivergenceTerms {
    double value = 0;
    SinkhornResult cross;
    SinkhornResult self_x;
    SinkhornResult self_y;
    double epsilon = 0;
};

/**
 * Debiased divergence `OT(x, y) - (OT(x, x) + OT(y, y)) / 2`, with `OT` the regularized objective.
 * All three problems share one `epsilon`; when unset in `cfg`, it is derived from the cross costs.
 */
inline DivergenceTerms sinkhorn_divergence_terms(const Matrix& x, const Matrix& y, const CrotConfig& cfg) {
    if (x.cols() != y.cols()) {
        throw DimensionError("sinkhorn_divergence: " + std::to_string(x.cols()) + " vs " + std::to_string(y.cols()) + " columns");
    }
    DivergenceTerms out;
    auto cxy = cost_matrix(x, y, cfg.p);
    auto opt = sinkhorn_options(cfg, cxy);
    out.epsilon = opt.epsilon;
    // The cross problem is always solved in one orientation, which makes the divergence exactly symmetric,
    // and identical clouds reuse the self solver so that the divergence of a cloud with itself is exactly zero.
    if (x == y) {
        out.cross = sinkhorn_symmetric(cxy, opt);
    } else if (internal::cloud_less(y, x)) {
        out.cross = internal::transposed(sinkhorn(CostMatrix(internal::transpose(cxy)), opt));
    } else {
        out.cross = sinkhorn(cxy, opt);
    }
    out.self_x = sinkhorn_symmetric(cost_matrix(x, x, cfg.p), opt);
    out.self_y = sinkhorn_symmetric(cost_matrix(y, y, cfg.p), opt);
    out.value = out.cross.objective - 0.5 * (out.self_x.objective + out.self_y.objective);
    return out;
}

inline double sinkhorn_divergence(const Matrix& x, const Matrix& y, const CrotConfig& cfg) {
    return sinkhorn_divergence_terms(x, y, cfg).value;
}

/**
 * Gradient of the divergence with respect to the rows of `y`, given the converged plans in `terms`.
 *
 * Plans are held fixed (envelope theorem), so only the cost entries are differentiated.
 * The result has the shape of `y`; entries outside `mutable_rows` x `mutable_cols` are exactly zero.
 */
inline Matrix divergence_gradient(const Matrix& x, const Matrix& y, const DivergenceTerms& terms, std::span<const std::size_t> mutable_rows,
                                  std::span<const std::size_t> mutable_cols, int p) {
    if (mutable_rows.empty() || mutable_cols.empty()) {
        throw ArgumentError("sinkhorn_divergence_grad: empty mutable set");
    }
    for (auto j : mutable_rows) {
        if (j >= y.rows()) {
            throw std::out_of_range("mutable row " + std::to_string(j) + " out of range");
        }
    }
    for (auto c : mutable_cols) {
        if (c >= y.cols()) {
            throw std::out_of_range("mutable column " + std::to_string(c) + " out of range");
        }
    }

    Matrix out(y.rows(), y.cols());
    std::vector<double> full(y.cols());
    const auto& cross = terms.cross.plan;
    const auto& self = terms.self_y.plan;
    for (auto j : mutable_rows) {
        std::fill(full.begin(), full.end(), 0.0);
        auto yj = y.row(j);
        for (std::size_t i = 0; i < x.rows(); ++i) {
            internal::accumulate_cost_gradient(yj, x.row(i), p, cross(i, j), full);
        }
        // y appears in both slots of the self term, each weighted by -1/2.
        for (std::size_t i = 0; i < y.rows(); ++i) {
            internal::accumulate_cost_gradient(yj, y.row(i), p, -0.5 * (self(i, j) + self(j, i)), full);
        }
        for (auto c : mutable_cols) {
            out(j, c) = full[c];
        }
    }
    return out;
}

inline Matrix sinkhorn_divergence_grad(const Matrix& x, const Matrix& y, std::span<const std::size_t> mutable_rows,
                                       std::span<const std::size_t> mutable_cols, const CrotConfig& cfg) {
    auto terms = sinkhorn_divergence_terms(x, y, cfg);
    return divergence_gradient(x, y, terms, mutable_rows, mutable_cols, cfg.p);
}

/**
 * `{0, 1, ..., n - 1}`, handy for "every row" or "every column" mutable sets.
 */
inline std::vector<std::size_t> all_indices(std::size_t n) {
    std::vector<std::size_t> out(n);
    std::iota(out.begin(), out.end(), std::size_t{0});
    return out;
}

/**
 * Exact transport cost between two equally sized point clouds with uniform weights,
 * by enumerating every one-to-one assignment. Only meant as a test oracle for up to 8 points.
 */
inline double exact_ot_oracle(const Matrix& x, const Matrix& y, int p) {
    if (x.rows() != y.rows()) {
        throw ArgumentError("exact_ot_oracle: unequal point counts");
    }
    if (x.cols() != y.cols()) {
        throw DimensionError("exact_ot_oracle: column mismatch");
    }
    if (x.rows() > 8) {
        throw ArgumentError("exact_ot_oracle: refusing more than 8 points");
    }
    const std::size_t m = x.rows();
    if (m == 0) {
        throw ArgumentError("exact_ot_oracle: no points");
    }
    std::vector<std::size_t> perm(m);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    double best = std::numeric_limits<double>::infinity();
    do {
        double total = 0;
        for (std::size_t i = 0; i < m; ++i) {
            double d2 = 0;
            for (std::size_t c = 0; c < x.cols(); ++c) {
                double diff = x(i, c) - y(perm[i], c);
                d2 += diff * diff;
            }
            total += std::pow(std::sqrt(d2), p);
        }
        best = std::min(best, total);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best / static_cast<double>(m);
}

}

#endif
