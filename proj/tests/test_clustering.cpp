#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "crot/clustering.hpp"
#include "crot/metrics.hpp"
#include "test_support.hpp"

using namespace crot;

namespace {

/** Blobs of `per_blob` points around each center, scale `sigma`. */
Matrix blobs(const std::vector<std::vector<double>>& centers, std::size_t per_blob, double sigma, RngStream& rng, std::vector<std::size_t>* labels = nullptr) {
    const std::size_t d = centers.front().size();
    Matrix x(centers.size() * per_blob, d);
    for (std::size_t s = 0; s < centers.size(); ++s) {
        for (std::size_t i = 0; i < per_blob; ++i) {
            for (std::size_t c = 0; c < d; ++c) {
                x(s * per_blob + i, c) = centers[s][c] + sigma * rng.normal();
            }
            if (labels) {
                labels->push_back(s);
            }
        }
    }
    return x;
}

double brute_wcss(const Matrix& x, const std::vector<std::size_t>& labels, std::size_t k) {
    double total = 0;
    for (std::size_t s = 0; s < k; ++s) {
        std::vector<double> mean(x.cols(), 0.0);
        double n = 0;
        for (std::size_t i = 0; i < x.rows(); ++i) {
            if (labels[i] == s) {
                n += 1;
                for (std::size_t c = 0; c < x.cols(); ++c) {
                    mean[c] += x(i, c);
                }
            }
        }
        for (std::size_t i = 0; i < x.rows() && n > 0; ++i) {
            if (labels[i] == s) {
                for (std::size_t c = 0; c < x.cols(); ++c) {
                    const double d = x(i, c) - mean[c] / n;
                    total += d * d;
                }
            }
        }
    }
    return total;
}

}

TEST(Kmeans, ExactCoverGivesZeroWcss) {
    auto x = Matrix::from_rows({{0, 0}, {3, 1}, {-2, 5}, {7, 7}});
    RngStream rng(1, "km");
    auto model = kmeans(x, 4, rng);
    EXPECT_EQ(std::set<std::size_t>(model.labels.begin(), model.labels.end()).size(), 4u);
    EXPECT_NEAR(model.wcss, 0.0, 1e-15);
}

TEST(Kmeans, TwoSeparatedPairs) {
    auto x = Matrix::from_rows({{0, 0}, {0.1, 0}, {10, 0}, {10.1, 0}});
    RngStream rng(2, "km");
    auto model = kmeans(x, 2, rng);
    EXPECT_NEAR(model.wcss, 0.01, 1e-12);
    EXPECT_EQ(model.labels[0], model.labels[1]);
    EXPECT_EQ(model.labels[2], model.labels[3]);
    EXPECT_NE(model.labels[0], model.labels[2]);
    std::vector<double> xs{model.centroids(0, 0), model.centroids(1, 0)};
    std::sort(xs.begin(), xs.end());
    EXPECT_NEAR(xs[0], 0.05, 1e-12);
    EXPECT_NEAR(xs[1], 10.05, 1e-12);
    EXPECT_NEAR(model.centroids(0, 1), 0.0, 1e-15);
}

TEST(Kmeans, SingleClusterIsColumnMeans) {
    RngStream data(3, "data");
    auto x = crot::testing::random_matrix(30, 3, data, 2.0, 1.0);
    RngStream rng(3, "km");
    auto model = kmeans(x, 1, rng);
    double total = 0;
    for (std::size_t c = 0; c < 3; ++c) {
        const double mean = column_mean(x, c);
        EXPECT_NEAR(model.centroids(0, c), mean, 1e-12);
        for (std::size_t i = 0; i < 30; ++i) {
            total += (x(i, c) - mean) * (x(i, c) - mean);
        }
    }
    EXPECT_NEAR(model.wcss, total, 1e-9);
}

TEST(Kmeans, InvariantsAndMonotoneDescent) {
    RngStream data(4, "data");
    for (int trial = 0; trial < 10; ++trial) {
        auto x = crot::testing::random_matrix(60, 4, data);
        const std::size_t k = 2 + data.uniform_index(6);
        RngStream rng(trial, "km");
        auto model = kmeans(x, k, rng);
        ASSERT_EQ(model.labels.size(), 60u);
        for (auto l : model.labels) {
            EXPECT_LT(l, k);
        }
        for (std::size_t i = 1; i < model.wcss_history.size(); ++i) {
            EXPECT_LE(model.wcss_history[i], model.wcss_history[i - 1] * (1 + 1e-12));
        }
        EXPECT_NEAR(model.wcss, brute_wcss(x, model.labels, k), 1e-9);
        for (std::size_t s = 0; s < k; ++s) {
            const bool used = std::find(model.labels.begin(), model.labels.end(), s) != model.labels.end();
            EXPECT_EQ(used, !model.empty[s]);
        }
        auto surviving = cluster_centroids(x, model.labels, k);
        for (std::size_t r = 0; r < surviving.cluster_ids.size(); ++r) {
            for (std::size_t c = 0; c < 4; ++c) {
                EXPECT_NEAR(surviving.centroids(r, c), model.centroids(surviving.cluster_ids[r], c), 1e-12);
            }
        }
    }
}

TEST(Kmeans, DeterministicForSeed) {
    RngStream data(5, "data");
    auto x = crot::testing::random_matrix(50, 3, data);
    RngStream a(9, "km"), b(9, "km");
    EXPECT_EQ(kmeans(x, 4, a).labels, kmeans(x, 4, b).labels);
}

TEST(Kmeans, RejectsBadK) {
    RngStream rng(0, "km");
    EXPECT_THROW(kmeans(Matrix(3, 2), 0, rng), ArgumentError);
    EXPECT_THROW(kmeans(Matrix(3, 2), 4, rng), ArgumentError);
}

TEST(Kmeans, DuplicatePointsFewerDistinctThanK) {
    auto x = Matrix::from_rows({{1, 1}, {1, 1}, {1, 1}, {2, 2}});
    RngStream rng(6, "km");
    auto model = kmeans(x, 3, rng);
    EXPECT_NEAR(model.wcss, 0.0, 1e-15);
    EXPECT_EQ(model.labels[0], model.labels[1]);
    EXPECT_EQ(model.labels[1], model.labels[2]);
}

TEST(ClusterCentroids, SingleCluster) {
    auto out = cluster_centroids(Matrix::from_rows({{0}, {2}}), {0, 0}, 1);
    ASSERT_EQ(out.centroids.rows(), 1u);
    EXPECT_DOUBLE_EQ(out.centroids(0, 0), 1.0);
}

TEST(ClusterCentroids, HandMeans) {
    auto out = cluster_centroids(Matrix::from_rows({{1, 1}, {3, 3}, {5, 5}}), {0, 0, 1}, 2);
    EXPECT_EQ(out.centroids, Matrix::from_rows({{2, 2}, {5, 5}}));
    EXPECT_EQ(out.cluster_ids, (std::vector<std::size_t>{0, 1}));
    EXPECT_EQ(out.sizes, (std::vector<std::size_t>{2, 1}));
}

TEST(ClusterCentroids, EmptyClustersDropped) {
    auto out = cluster_centroids(Matrix::from_rows({{1}, {2}, {3}}), {0, 0, 0}, 3);
    EXPECT_EQ(out.centroids.rows(), 1u);
    EXPECT_EQ(out.cluster_ids, (std::vector<std::size_t>{0}));
}

TEST(ClusterCentroids, PermutationEquivariant) {
    RngStream rng(7, "perm");
    auto x = crot::testing::random_matrix(20, 3, rng);
    std::vector<std::size_t> labels(20);
    for (auto& l : labels) {
        l = rng.uniform_index(4);
    }
    auto base = cluster_centroids(x, labels, 4);
    std::vector<std::size_t> order(20);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    Matrix xp(20, 3);
    std::vector<std::size_t> lp(20);
    for (std::size_t i = 0; i < 20; ++i) {
        std::copy(x.row(order[i]).begin(), x.row(order[i]).end(), xp.row(i).begin());
        lp[i] = labels[order[i]];
    }
    auto permuted = cluster_centroids(xp, lp, 4);
    EXPECT_EQ(permuted.cluster_ids, base.cluster_ids);
    for (std::size_t k = 0; k < base.centroids.size(); ++k) {
        EXPECT_NEAR(permuted.centroids.values()[k], base.centroids.values()[k], 1e-12);
    }
}

TEST(ClusterCentroids, RejectsOutOfRangeLabels) {
    EXPECT_THROW(cluster_centroids(Matrix(2, 1), {0, 2}, 2), ArgumentError);
    EXPECT_THROW(cluster_centroids(Matrix(2, 1), {0}, 2), DimensionError);
}

TEST(ElbowSelectK, ThreeBlobs) {
    RngStream data(8, "blobs");
    auto x = blobs({{0, 0}, {10, 0}, {0, 10}}, 50, 0.1, data);
    EXPECT_EQ(elbow_select_k(x, 8, RngStream(8, "elbow")), 3u);
}

TEST(ElbowSelectK, TwoBlobs) {
    RngStream data(9, "blobs");
    auto x = blobs({{0, 0, 0}, {12, 0, 0}}, 50, 0.1, data);
    EXPECT_EQ(elbow_select_k(x, 6, RngStream(9, "elbow")), 2u);
}

// Optimal quantizer distortions of a unit Gaussian (Max, 1960): 1, 0.3634, 0.1902, 0.1175.
// Their second differences peak at k = 2, so a single 1-D blob has no elbow beyond the first candidate.
TEST(ElbowSelectK, SingleBlobFallsToSmallestCandidate) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        RngStream data(seed, "blob");
        auto x = blobs({{0}}, 2000, 0.1, data);
        const auto curve = wcss_curve(x, 4, RngStream(seed, "curve"));
        EXPECT_NEAR(curve[1] / curve[0], 0.3634, 0.03);
        EXPECT_NEAR(curve[2] / curve[0], 0.1902, 0.03);
        EXPECT_NEAR(curve[3] / curve[0], 0.1175, 0.03);
        EXPECT_EQ(elbow_select_k(x, 8, RngStream(seed, "elbow")), 2u);
    }
}

TEST(ElbowSelectK, WithinRange) {
    RngStream data(11, "range");
    for (std::size_t k_max : {3u, 5u, 9u}) {
        auto x = crot::testing::random_matrix(40, 2, data);
        const auto k = elbow_select_k(x, k_max, RngStream(11, "elbow"));
        EXPECT_GE(k, 2u);
        EXPECT_LE(k, k_max - 1);
    }
    EXPECT_THROW(elbow_select_k(Matrix(10, 2), 2, RngStream(0, "e")), ArgumentError);
}

TEST(WcssCurve, NonIncreasingOnSeparatedData) {
    RngStream data(12, "curve");
    auto x = blobs({{0, 0}, {10, 0}, {0, 10}, {10, 10}}, 25, 0.2, data);
    auto curve = wcss_curve(x, 6, RngStream(12, "c"));
    ASSERT_EQ(curve.size(), 6u);
    for (std::size_t i = 0; i + 1 < 4; ++i) {
        EXPECT_GT(curve[i], curve[i + 1]);
    }
}

TEST(Kmeans, RecoversWellSeparatedLabels) {
    RngStream data(13, "recover");
    std::vector<std::size_t> truth;
    auto x = blobs({{0, 0}, {20, 0}, {0, 20}}, 40, 1.0, data, &truth);
    RngStream rng(13, "km");
    auto model = kmeans(x, 3, rng);
    EXPECT_DOUBLE_EQ(agreement_scores(truth, model.labels).ari, 1.0);
}
