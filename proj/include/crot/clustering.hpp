#ifndef CROT_CLUSTERING_HPP
#define CROT_CLUSTERING_HPP

#include <limits>
#include <vector>

#include "core.hpp"
#include "ot.hpp"

/**
 * @file clustering.hpp
 * @brief k-means with k-means++ seeding, centroid extraction and elbow selection of k.
 */

namespace crot {

/**
 * @brief Result of `kmeans()`.
 */
struct ClusterModel {
    std::size_t k = 0;

    /** Cluster id of each row, in `[0, k)`. */
    std::vector<std::size_t> labels;

    /**
     * One row per cluster. For an empty cluster this is its last position before it emptied.
     */
    Matrix centroids;

    /** Whether each cluster ended with no members. */
    std::vector<bool> empty;

    /** Within-cluster sum of squared distances to the centroids. */
    double wcss = 0;

    std::size_t iterations_used = 0;

    /** WCSS after each centroid update; non-increasing. */
    std::vector<double> wcss_history;
};

namespace internal {

inline std::vector<std::size_t> nearest_centroids(const Matrix& x, const Matrix& centroids) {
    std::vector<std::size_t> labels(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t which = 0;
        for (std::size_t s = 0; s < centroids.rows(); ++s) {
            double d = squared_distance(x.row(i), centroids.row(s));
            if (d < best) {
                best = d;
                which = s;
            }
        }
        labels[i] = which;
    }
    return labels;
}

inline double within_cluster_ss(const Matrix& x, const std::vector<std::size_t>& labels, const Matrix& centroids) {
    double out = 0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        out += squared_distance(x.row(i), centroids.row(labels[i]));
    }
    return out;
}

// Means of member rows; clusters without members keep their previous row.
inline std::vector<std::size_t> update_centroids(const Matrix& x, const std::vector<std::size_t>& labels, Matrix& centroids) {
    std::vector<std::size_t> counts(centroids.rows(), 0);
    Matrix sums(centroids.rows(), centroids.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        ++counts[labels[i]];
        auto dst = sums.row(labels[i]);
        auto src = x.row(i);
        for (std::size_t c = 0; c < x.cols(); ++c) {
            dst[c] += src[c];
        }
    }
    for (std::size_t s = 0; s < centroids.rows(); ++s) {
        if (counts[s] == 0) {
            continue;
        }
        for (std::size_t c = 0; c < centroids.cols(); ++c) {
            centroids(s, c) = sums(s, c) / static_cast<double>(counts[s]);
        }
    }
    return counts;
}

inline Matrix kmeanspp_seeds(const Matrix& x, std::size_t k, RngStream& rng) {
    const std::size_t m = x.rows();
    Matrix seeds(k, x.cols());
    std::vector<double> dist(m, std::numeric_limits<double>::infinity());

    std::size_t chosen = rng.uniform_index(m);
    for (std::size_t s = 0; s < k; ++s) {
        if (s > 0) {
            double total = 0;
            for (double d : dist) {
                total += d;
            }
            if (total > 0) {
                double target = rng.uniform() * total;
                chosen = m - 1;
                double running = 0;
                for (std::size_t i = 0; i < m; ++i) {
                    running += dist[i];
                    if (running > target && dist[i] > 0) {
                        chosen = i;
                        break;
                    }
                }
            } else {
                chosen = rng.uniform_index(m);
            }
        }
        auto src = x.row(chosen);
        std::copy(src.begin(), src.end(), seeds.row(s).begin());
        for (std::size_t i = 0; i < m; ++i) {
            dist[i] = std::min(dist[i], squared_distance(x.row(i), src));
        }
    }
    return seeds;
}

}

/**
 * Lloyd's algorithm from k-means++ seeds.
 *
 * Iterates until the assignment no longer changes or `max_iter` centroid updates have been made.
 * Ties between equidistant centroids go to the lowest cluster id.
 */
inline ClusterModel kmeans(const Matrix& x, std::size_t k, RngStream& rng, std::size_t max_iter = 100) {
    if (k == 0) {
        throw ArgumentError("kmeans: k must be positive");
    }
    if (k > x.rows()) {
        throw ArgumentError("kmeans: k = " + std::to_string(k) + " exceeds " + std::to_string(x.rows()) + " rows");
    }

    ClusterModel out;
    out.k = k;
    out.centroids = internal::kmeanspp_seeds(x, k, rng);
    out.labels = internal::nearest_centroids(x, out.centroids);

    for (std::size_t it = 0; it < max_iter; ++it) {
        internal::update_centroids(x, out.labels, out.centroids);
        out.wcss_history.push_back(internal::within_cluster_ss(x, out.labels, out.centroids));
        ++out.iterations_used;
        auto next = internal::nearest_centroids(x, out.centroids);
        if (next == out.labels) {
            break;
        }
        out.labels = std::move(next);
    }

    auto counts = internal::update_centroids(x, out.labels, out.centroids);
    out.wcss = internal::within_cluster_ss(x, out.labels, out.centroids);
    out.empty.resize(k);
    for (std::size_t s = 0; s < k; ++s) {
        out.empty[s] = counts[s] == 0;
    }
    return out;
}

/**
 * @brief Means of the non-empty clusters.
 */
struct CentroidSet {
    /** One row per surviving cluster, in increasing cluster id. */
    Matrix centroids;

    /** Cluster id of each row of `centroids`. */
    std::vector<std::size_t> cluster_ids;

    /** Member count of each surviving cluster. */
    std::vector<std::size_t> sizes;
};

/**
 * Per-cluster mean rows. Clusters without members are dropped rather than filled in.
 */
inline CentroidSet cluster_centroids(const Matrix& x, const std::vector<std::size_t>& labels, std::size_t k) {
    if (labels.size() != x.rows()) {
        throw DimensionError("cluster_centroids: " + std::to_string(labels.size()) + " labels for " + std::to_string(x.rows()) + " rows");
    }
    std::vector<std::size_t> counts(k, 0);
    for (auto l : labels) {
        if (l >= k) {
            throw ArgumentError("cluster_centroids: label " + std::to_string(l) + " is not below k = " + std::to_string(k));
        }
        ++counts[l];
    }

    CentroidSet out;
    std::vector<std::size_t> position(k);
    for (std::size_t s = 0; s < k; ++s) {
        if (counts[s]) {
            position[s] = out.cluster_ids.size();
            out.cluster_ids.push_back(s);
            out.sizes.push_back(counts[s]);
        }
    }

    out.centroids = Matrix(out.cluster_ids.size(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        auto dst = out.centroids.row(position[labels[i]]);
        auto src = x.row(i);
        for (std::size_t c = 0; c < x.cols(); ++c) {
            dst[c] += src[c];
        }
    }
    for (std::size_t r = 0; r < out.cluster_ids.size(); ++r) {
        for (auto& v : out.centroids.row(r)) {
            v /= static_cast<double>(out.sizes[r]);
        }
    }
    return out;
}

/**
 * WCSS of `kmeans()` for each `k = 1..k_max` (element `k - 1`).
 * Each `k` uses its own substream of `rng`.
 */
inline std::vector<double> wcss_curve(const Matrix& x, std::size_t k_max, const RngStream& rng) {
    if (x.rows() < k_max) {
        throw ArgumentError("wcss_curve: " + std::to_string(x.rows()) + " rows is fewer than k_max = " + std::to_string(k_max));
    }
    std::vector<double> out;
    out.reserve(k_max);
    for (std::size_t k = 1; k <= k_max; ++k) {
        auto sub = rng.substream("k" + std::to_string(k));
        out.push_back(kmeans(x, k, sub).wcss);
    }
    return out;
}

/**
 * Elbow of the WCSS curve: the `k` in `[2, k_max - 1]` with the largest second difference
 * `wcss(k - 1) - 2 wcss(k) + wcss(k + 1)`, the smaller `k` winning ties.
 */
inline std::size_t elbow_select_k(const Matrix& x, std::size_t k_max, const RngStream& rng) {
    if (k_max < 3) {
        throw ArgumentError("elbow_select_k: k_max must be at least 3");
    }
    auto curve = wcss_curve(x, k_max, rng);
    std::size_t best_k = 2;
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 2; k < k_max; ++k) {
        double second = curve[k - 2] - 2 * curve[k - 1] + curve[k];
        if (second > best) {
            best = second;
            best_k = k;
        }
    }
    return best_k;
}

}

#endif
