#ifndef CROT_IMPUTER_HPP
#define CROT_IMPUTER_HPP

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "clustering.hpp"
#include "core.hpp"
#include "optim.hpp"
#include "ot.hpp"

/**
 * @file imputer.hpp
 * @brief Cluster-regularized optimal transport imputation of a missing column block.
 *
 * A complete reference matrix `x1` and a target matrix `x2` share the same columns,
 * but `x2` lacks every value in the masked columns.
 * The masked entries are initialized from the reference column means plus unit Gaussian noise,
 * then refined by Adam on random row batches to minimize
 *
 *     S(x1 batch, x2 batch) + alpha * S(x1 batch centroids, x2 batch centroids)
 *
 * where `S` is the Sinkhorn divergence and the centroids come from k-means run separately on each batch.
 */

namespace crot {

/**
 * Fill the masked entries of `x2` with `column_mean(x1, j)` plus a standard normal draw.
 * Every other entry is copied unchanged.
 */
inline DataMatrix initialize_missing(const DataMatrix& x1, const DataMatrix& x2, const MaskSpec& mask, RngStream& rng) {
    if (x1.cols() != x2.cols()) {
        throw DimensionError("initialize_missing: " + std::to_string(x1.cols()) + " vs " + std::to_string(x2.cols()) + " columns");
    }
    if (x1.rows() == 0) {
        throw ArgumentError("initialize_missing: reference matrix has no rows");
    }
    mask.validate(x2.rows(), x2.cols());

    DataMatrix out = x2;
    for (auto j : mask.missing_cols) {
        const double mean = column_mean(x1, j);
        for (std::size_t i = 0; i < x2.rows(); ++i) {
            if (mask.row_in_scope(i)) {
                out(i, j) = mean + rng.normal();
            }
        }
    }
    return out;
}

/**
 * @brief Loss value and gradient for one pair of batches.
 */
struct CrotLoss {
    double total = 0;
    double data_term = 0;
    double cluster_term = 0;

    /** Gradient of `total` with respect to the second batch; zero outside the mutable columns. */
    Matrix gradient;

    /** Whether the cluster term was skipped because a batch had fewer than two non-empty clusters. */
    bool cluster_term_skipped = false;

    /** Whether `k` had to be reduced to the batch size. */
    bool k_clamped = false;

    std::size_t k = 0;
};

/**
 * Loss and gradient with the cluster assignments of both batches given.
 *
 * Assignments are treated as constants: the centroid term reaches the rows of `x2_batch`
 * only through the averaging, each member row receiving `1 / |cluster|` of its centroid's gradient.
 * `cfg.epsilon` must be set.
 */
inline CrotLoss crot_loss_with_labels(const Matrix& x1_batch, const Matrix& x2_batch, std::span<const std::size_t> mutable_cols, const std::vector<std::size_t>& labels1,
                                      const std::vector<std::size_t>& labels2, std::size_t k, const CrotConfig& cfg) {
    if (!cfg.epsilon) {
        throw ArgumentError("crot_loss: epsilon must be resolved before evaluating the loss");
    }
    CrotLoss out;
    out.k = k;

    const auto rows = all_indices(x2_batch.rows());
    auto data = sinkhorn_divergence_terms(x1_batch, x2_batch, cfg);
    out.data_term = data.value;
    out.gradient = divergence_gradient(x1_batch, x2_batch, data, rows, mutable_cols, cfg.p);

    auto c1 = cluster_centroids(x1_batch, labels1, k);
    auto c2 = cluster_centroids(x2_batch, labels2, k);
    if (c1.cluster_ids.size() < 2 || c2.cluster_ids.size() < 2) {
        out.cluster_term_skipped = true;
    } else {
        auto centroid = sinkhorn_divergence_terms(c1.centroids, c2.centroids, cfg);
        out.cluster_term = centroid.value;
        if (cfg.alpha != 0) {
            auto cgrad = divergence_gradient(c1.centroids, c2.centroids, centroid, all_indices(c2.centroids.rows()), mutable_cols, cfg.p);
            std::vector<std::size_t> position(k, 0);
            for (std::size_t r = 0; r < c2.cluster_ids.size(); ++r) {
                position[c2.cluster_ids[r]] = r;
            }
            for (std::size_t i = 0; i < x2_batch.rows(); ++i) {
                const std::size_t r = position[labels2[i]];
                const double share = cfg.alpha / static_cast<double>(c2.sizes[r]);
                for (auto c : mutable_cols) {
                    out.gradient(i, c) += share * cgrad(r, c);
                }
            }
        }
    }

    out.total = out.data_term + cfg.alpha * out.cluster_term;
    return out;
}

/**
 * Loss and gradient for one pair of batches, clustering each batch independently with `k` clusters.
 * `k` is reduced to the smaller batch size when necessary (reported through `k_clamped`).
 */
inline CrotLoss crot_loss(const Matrix& x1_batch, const Matrix& x2_batch, std::span<const std::size_t> mutable_cols, std::size_t k, const CrotConfig& cfg,
                          const RngStream& rng) {
    if (x1_batch.cols() != x2_batch.cols()) {
        throw DimensionError("crot_loss: batches have different column counts");
    }
    std::size_t k_used = std::min({k, x1_batch.rows(), x2_batch.rows()});
    bool clamped = k_used != k;
    if (k_used == 0) {
        throw ArgumentError("crot_loss: empty batch");
    }

    auto r1 = rng.substream("kmeans1");
    auto r2 = rng.substream("kmeans2");
    auto labels1 = kmeans(x1_batch, k_used, r1).labels;
    auto labels2 = kmeans(x2_batch, k_used, r2).labels;
    auto out = crot_loss_with_labels(x1_batch, x2_batch, mutable_cols, labels1, labels2, k_used, cfg);
    out.k_clamped = clamped;
    return out;
}

/**
 * @brief Loss components recorded at one iteration.
 */
struct LossRecord {
    std::size_t iteration = 0;
    double data_term = 0;
    double cluster_term = 0;
    double total = 0;
};

enum class RunStatus { ok, numeric_abort };

/**
 * @brief Output of `crot_impute()`.
 */
struct ImputationRun {
    /** Completed target matrix; equal to the input outside the masked block. */
    DataMatrix x2_imputed;

    std::vector<LossRecord> loss_history;

    std::size_t k_used = 0;

    /** Iteration at which the smoothed loss stopped changing, if it did. */
    std::optional<std::size_t> converged_at;

    double wall_clock_ms = 0;

    /** Configuration with `epsilon`, `k` and `batch_size` resolved to the values used. */
    CrotConfig config_echo;

    RunStatus status = RunStatus::ok;

    /** Explanation when `status` is not `ok`. */
    std::string abort_reason;

    std::vector<std::string> warnings;
};

/**
 * @brief Hook called after every iteration, with the iteration number, the rows updated and the current matrix.
 */
using IterationObserver = std::function<void(std::size_t iteration, std::span<const std::size_t> batch_rows, const DataMatrix& current)>;

namespace internal {

/**
 * Batches of distinct indices drawn from successive shuffles of `[0, m)`, consumed in order.
 * When a batch straddles two passes, the indices already in the batch are moved to the back of the
 * new pass, so batches never repeat an index and after `d` draws every index has been drawn
 * at least `floor(d / m)` times.
 */
class EpochSampler {
public:
    EpochSampler(std::size_t m, RngStream rng) : m_(m), rng_(std::move(rng)), in_batch_(m, 0) {}

    std::vector<std::size_t> next(std::size_t l) {
        if (l > m_) {
            throw ArgumentError("EpochSampler: batch larger than population");
        }
        std::vector<std::size_t> batch;
        batch.reserve(l);
        while (batch.size() < l) {
            if (pos_ == order_.size()) {
                refill();
            }
            const auto idx = order_[pos_++];
            in_batch_[idx] = 1;
            batch.push_back(idx);
        }
        for (auto idx : batch) {
            in_batch_[idx] = 0;
        }
        return batch;
    }

private:
    void refill() {
        order_ = all_indices(m_);
        rng_.shuffle(order_);
        std::stable_partition(order_.begin(), order_.end(), [&](std::size_t i) { return !in_batch_[i]; });
        pos_ = 0;
    }

    std::size_t m_;
    RngStream rng_;
    std::vector<std::size_t> order_;
    std::size_t pos_ = 0;
    std::vector<char> in_batch_;
};

inline double window_mean(const std::vector<LossRecord>& history, std::size_t end, std::size_t window) {
    double sum = 0;
    for (std::size_t i = end - window; i < end; ++i) {
        sum += history[i].total;
    }
    return sum / static_cast<double>(window);
}

}

/**
 * Moving average of the total loss over the `window` records ending at (and including) position `end - 1`.
 */
inline double smoothed_loss(const std::vector<LossRecord>& history, std::size_t end, std::size_t window) {
    if (window == 0 || end < window || end > history.size()) {
        throw ArgumentError("smoothed_loss: window does not fit in the history");
    }
    return internal::window_mean(history, end, window);
}

/**
 * Impute the masked block of `x2` against the complete reference `x1`.
 *
 * Unset `cfg.k` is chosen by the elbow method on `x1`; unset `cfg.epsilon` is 5% of the median cost
 * between two random batches of `x1`. Rows of `x2` are drawn in shuffled passes so each is refined
 * roughly equally often; rows of `x1` are drawn afresh every iteration.
 * Adam moments are kept per row of `x2` and resume whenever the row is drawn again.
 *
 * The run stops after `cfg.iterations` iterations, or earlier once the mean loss over the last
 * `convergence_window` iterations differs from that over the preceding window by less than
 * `convergence_rel_tol` in relative terms.
 * A non-finite loss or gradient ends the run with `status = numeric_abort` and the last finite matrix.
 */
inline ImputationRun crot_impute(const DataMatrix& x1, const DataMatrix& x2, const MaskSpec& mask, const CrotConfig& cfg,
                                 const IterationObserver& observer = {}) {
    const auto start = std::chrono::steady_clock::now();
    cfg.validate();
    if (x1.cols() != x2.cols()) {
        throw DimensionError("crot_impute: reference has " + std::to_string(x1.cols()) + " columns, target has " + std::to_string(x2.cols()));
    }
    mask.validate(x2.rows(), x2.cols());

    ImputationRun run;
    run.config_echo = cfg;
    auto finish = [&]() {
        run.wall_clock_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        return std::move(run);
    };

    std::vector<std::size_t> mutable_rows;
    for (std::size_t i = 0; i < x2.rows(); ++i) {
        if (mask.row_in_scope(i)) {
            mutable_rows.push_back(i);
        }
    }
    if (mask.empty() || mutable_rows.empty()) {
        run.x2_imputed = x2;
        run.converged_at = 0;
        run.k_used = cfg.k.value_or(0);
        return finish();
    }
    if (x1.rows() == 0 || x2.rows() == 0) {
        throw ArgumentError("crot_impute: empty input matrix");
    }

    const RngStream root(cfg.seed, "crot");
    CrotConfig resolved = cfg;

    const std::size_t batch = std::min({cfg.batch_size, x1.rows(), x2.rows()});
    if (batch != cfg.batch_size) {
        run.warnings.push_back("batch_size " + std::to_string(cfg.batch_size) + " clamped to " + std::to_string(batch));
    }
    resolved.batch_size = batch;

    if (!cfg.k) {
        const std::size_t k_max = std::min(cfg.k_max, x1.rows());
        if (k_max < 3) {
            resolved.k = std::min<std::size_t>(2, x1.rows());
            run.warnings.push_back("too few reference rows for the elbow method; using k = " + std::to_string(*resolved.k));
        } else {
            resolved.k = elbow_select_k(x1, k_max, root.substream("elbow"));
        }
    }
    run.k_used = *resolved.k;

    if (!cfg.epsilon) {
        auto eps_rng = root.substream("epsilon");
        auto a = sample_indices(x1.rows(), batch, eps_rng);
        auto b = sample_indices(x1.rows(), batch, eps_rng);
        resolved.epsilon = auto_epsilon(cost_matrix(select_rows(x1, a), select_rows(x1, b), cfg.p));
    }
    run.config_echo = resolved;
    if (!std::isfinite(*resolved.epsilon)) {
        run.x2_imputed = x2;
        run.status = RunStatus::numeric_abort;
        run.abort_reason = "non-finite automatic epsilon";
        return finish();
    }

    auto init_rng = root.substream("init");
    DataMatrix current = initialize_missing(x1, x2, mask, init_rng);

    if (cfg.iterations * batch < x2.rows()) {
        run.warnings.push_back("iterations x batch_size < target rows; some rows will keep their initial values");
    }

    const auto& cols = mask.missing_cols;
    const auto hyper = AdamHyper::from_config(cfg);
    std::vector<AdamState> adam(x2.rows(), AdamState(cols.size(), hyper));

    auto k_rng = root.substream("batch_x1");
    internal::EpochSampler l_sampler(x2.rows(), root.substream("batch_x2"));
    const std::size_t window = cfg.convergence_window;
    bool warned_clamp = false;

    std::vector<double> grad(cols.size());
    for (std::size_t t = 1; t <= cfg.iterations; ++t) {
        auto k_idx = sample_indices(x1.rows(), batch, k_rng);
        auto l_idx = l_sampler.next(batch);
        auto x1b = select_rows(x1, k_idx);
        auto x2b = select_rows(current, l_idx);

        CrotLoss loss;
        try {
            loss = crot_loss(x1b, x2b, cols, *resolved.k, resolved, root.substream(t));
        } catch (const NumericError& e) {
            run.status = RunStatus::numeric_abort;
            run.abort_reason = std::string(e.what()) + " at iteration " + std::to_string(t);
            break;
        }
        if (loss.k_clamped && !warned_clamp) {
            run.warnings.push_back("k clamped to batch size " + std::to_string(loss.k));
            warned_clamp = true;
        }
        if (!std::isfinite(loss.total)) {
            run.status = RunStatus::numeric_abort;
            run.abort_reason = "non-finite loss at iteration " + std::to_string(t);
            break;
        }

        // Compute every update before touching the matrix so an abort leaves it consistent.
        struct Pending {
            std::size_t row;
            AdamState state;
            std::vector<double> delta;
        };
        std::vector<Pending> updates;
        updates.reserve(l_idx.size());
        try {
            for (std::size_t r = 0; r < l_idx.size(); ++r) {
                const std::size_t row = l_idx[r];
                if (!mask.row_in_scope(row)) {
                    continue;
                }
                for (std::size_t c = 0; c < cols.size(); ++c) {
                    grad[c] = loss.gradient(r, cols[c]);
                }
                AdamState next = adam[row];
                auto delta = adam_step(next, grad);
                updates.push_back({row, std::move(next), std::move(delta)});
            }
        } catch (const NumericError& e) {
            run.status = RunStatus::numeric_abort;
            run.abort_reason = std::string(e.what()) + " at iteration " + std::to_string(t);
            break;
        }
        for (auto& u : updates) {
            adam[u.row] = std::move(u.state);
            for (std::size_t c = 0; c < cols.size(); ++c) {
                current(u.row, cols[c]) -= u.delta[c];
            }
        }

        run.loss_history.push_back({t, loss.data_term, loss.cluster_term, loss.total});
        if (observer) {
            observer(t, l_idx, current);
        }

        if (window > 0 && run.loss_history.size() >= 2 * window) {
            const std::size_t n = run.loss_history.size();
            const double now = internal::window_mean(run.loss_history, n, window);
            const double before = internal::window_mean(run.loss_history, n - window, window);
            const double scale = std::max(std::abs(before), std::numeric_limits<double>::min());
            if (std::abs(before - now) / scale < cfg.convergence_rel_tol) {
                run.converged_at = t;
                break;
            }
        }
    }

    run.x2_imputed = std::move(current);
    return finish();
}

}

#endif
