#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "crot/ot.hpp"
#include "test_support.hpp"

using namespace crot;
using crot::testing::central_differences;
using crot::testing::max_relative_error;
using crot::testing::random_matrix;
using crot::testing::tight_config;

namespace {

CrotConfig with_epsilon(double eps, int p = 2) {
    CrotConfig cfg;
    cfg.epsilon = eps;
    cfg.p = p;
    return cfg;
}

double row_sum(const Matrix& m, std::size_t i) {
    double s = 0;
    for (double v : m.row(i)) {
        s += v;
    }
    return s;
}

double col_sum(const Matrix& m, std::size_t j) {
    double s = 0;
    for (std::size_t i = 0; i < m.rows(); ++i) {
        s += m(i, j);
    }
    return s;
}

}

TEST(CostMatrix, SinglePair) {
    auto c = cost_matrix(Matrix::from_rows({{0}}), Matrix::from_rows({{3}}), 2);
    ASSERT_EQ(c.rows(), 1u);
    EXPECT_DOUBLE_EQ(c(0, 0), 9.0);
}

TEST(CostMatrix, HandComputed) {
    auto c = cost_matrix(Matrix::from_rows({{0, 0}, {1, 0}}), Matrix::from_rows({{0, 1}}), 2);
    ASSERT_EQ(c.rows(), 2u);
    ASSERT_EQ(c.cols(), 1u);
    EXPECT_DOUBLE_EQ(c(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(c(1, 0), 2.0);
}

TEST(CostMatrix, EuclideanForPOne) {
    auto c = cost_matrix(Matrix::from_rows({{0, 0}}), Matrix::from_rows({{3, 4}}), 1);
    EXPECT_DOUBLE_EQ(c(0, 0), 5.0);
}

TEST(CostMatrix, ZeroDiagonalAndNonNegative) {
    RngStream rng(1, "cost");
    auto x = random_matrix(7, 3, rng);
    for (int p : {1, 2, 3}) {
        auto c = cost_matrix(x, x, p);
        for (std::size_t i = 0; i < 7; ++i) {
            EXPECT_EQ(c(i, i), 0.0);
            for (std::size_t j = 0; j < 7; ++j) {
                EXPECT_GE(c(i, j), 0.0);
                if (i != j) {
                    EXPECT_GT(c(i, j), 0.0);
                }
            }
        }
    }
}

TEST(CostMatrix, ColumnMismatchThrows) {
    EXPECT_THROW(cost_matrix(Matrix(1, 2), Matrix(1, 3), 2), DimensionError);
}

TEST(Sinkhorn, SingleEntryPlan) {
    CostMatrix c(Matrix::from_rows({{7.5}}));
    auto r = sinkhorn(c, 0.3, 200, 1e-9);
    EXPECT_NEAR(r.plan(0, 0), 1.0, 1e-12);
    EXPECT_NEAR(r.reg_cost, 7.5, 1e-12);
}

TEST(Sinkhorn, EqualCostsGiveIndependentCoupling) {
    CostMatrix c(Matrix::from_rows({{2, 2}, {2, 2}}));
    auto r = sinkhorn(c, 0.1, 200, 1e-9);
    for (std::size_t i = 0; i < 2; ++i) {
        for (std::size_t j = 0; j < 2; ++j) {
            EXPECT_NEAR(r.plan(i, j), 0.25, 1e-9);
        }
    }
}

TEST(Sinkhorn, SmallEpsilonApproachesMatching) {
    auto x = Matrix::from_rows({{0}, {1}});
    auto c = cost_matrix(x, x, 2);
    auto r = sinkhorn(c, 1e-3, 200, 1e-9);
    EXPECT_NEAR(r.plan(0, 0), 0.5, 1e-2);
    EXPECT_NEAR(r.plan(1, 1), 0.5, 1e-2);
    EXPECT_NEAR(r.plan(0, 1), 0.0, 1e-2);
    EXPECT_NEAR(r.reg_cost, 0.0, 1e-2);
    EXPECT_NEAR(exact_ot_oracle(x, x, 2), 0.0, 1e-15);
}

TEST(Sinkhorn, MarginalsWithinTolerance) {
    RngStream rng(2, "marg");
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t m = 3 + rng.uniform_index(20), n = 3 + rng.uniform_index(20);
        auto c = cost_matrix(random_matrix(m, 4, rng), random_matrix(n, 4, rng, 2.0, 1.0), 2);
        SinkhornOptions opt;
        opt.epsilon = 0.05 * median_cost(c);
        opt.max_iter = 5000;
        opt.tol = 1e-8;
        auto r = sinkhorn(c, opt);
        ASSERT_TRUE(r.converged);
        double row_err = 0, col_err = 0;
        for (std::size_t i = 0; i < m; ++i) {
            row_err += std::abs(row_sum(r.plan, i) - 1.0 / m);
        }
        for (std::size_t j = 0; j < n; ++j) {
            col_err += std::abs(col_sum(r.plan, j) - 1.0 / n);
        }
        EXPECT_LE(row_err, opt.tol);
        EXPECT_LE(col_err, opt.tol);
        EXPECT_LE(std::max(row_err, col_err), r.marginal_error + 1e-15);
        EXPECT_GE(r.reg_cost, 0.0);
        EXPECT_TRUE(std::all_of(r.plan.values().begin(), r.plan.values().end(), [](double v) { return v >= 0; }));
    }
}

TEST(Sinkhorn, PlanMatchesPotentials) {
    RngStream rng(3, "pot");
    auto c = cost_matrix(random_matrix(5, 2, rng), random_matrix(6, 2, rng), 2);
    SinkhornOptions opt;
    opt.epsilon = 0.5;
    opt.tol = 1e-12;
    opt.max_iter = 10000;
    auto r = sinkhorn(c, opt);
    for (std::size_t i = 0; i < 5; ++i) {
        for (std::size_t j = 0; j < 6; ++j) {
            const double expected = std::exp((r.potential_f[i] + r.potential_g[j] - c(i, j)) / opt.epsilon) / 30.0;
            EXPECT_NEAR(r.plan(i, j), expected, 1e-12);
        }
    }
}

TEST(Sinkhorn, TinyEpsilonStaysFinite) {
    RngStream rng(4, "tiny");
    auto c = cost_matrix(random_matrix(10, 3, rng, 10.0), random_matrix(10, 3, rng, 10.0), 2);
    SinkhornOptions opt;
    opt.epsilon = 1e-4 * median_cost(c);
    opt.max_iter = 2000;
    auto r = sinkhorn(c, opt);
    EXPECT_TRUE(std::isfinite(r.reg_cost));
    EXPECT_TRUE(std::all_of(r.plan.values().begin(), r.plan.values().end(), [](double v) { return std::isfinite(v); }));
}

TEST(Sinkhorn, SymmetricSolverAgreesWithGeneral) {
    RngStream rng(5, "sym");
    auto x = random_matrix(12, 3, rng);
    auto c = cost_matrix(x, x, 2);
    SinkhornOptions opt;
    opt.epsilon = 0.2;
    opt.tol = 1e-12;
    opt.max_iter = 100000;
    auto general = sinkhorn(c, opt);
    auto symmetric = sinkhorn_symmetric(c, opt);
    EXPECT_NEAR(general.objective, symmetric.objective, 1e-9);
    for (std::size_t k = 0; k < c.size(); ++k) {
        EXPECT_NEAR(general.plan.values()[k], symmetric.plan.values()[k], 1e-9);
    }
}

TEST(Sinkhorn, RejectsBadArguments) {
    CostMatrix c(Matrix::from_rows({{1}}));
    EXPECT_THROW(sinkhorn(c, 0.0, 10, 1e-6), ArgumentError);
    EXPECT_THROW(sinkhorn(c, 1.0, 0, 1e-6), ArgumentError);
    EXPECT_THROW(sinkhorn(CostMatrix(Matrix(0, 0)), 1.0, 10, 1e-6), ArgumentError);
}

TEST(EntropicOtCost, IdenticalSinglePoint) {
    auto x = Matrix::from_rows({{1.5, -2}});
    EXPECT_NEAR(entropic_ot_cost(x, x, with_epsilon(0.1)), 0.0, 1e-15);
}

TEST(EntropicOtCost, ForcedCoupling) {
    for (double eps : {1e-3, 0.1, 10.0}) {
        EXPECT_NEAR(entropic_ot_cost(Matrix::from_rows({{0}}), Matrix::from_rows({{2}}), with_epsilon(eps)), 4.0, 1e-12);
    }
}

TEST(EntropicOtCost, SmallEpsilonNearExact) {
    auto x = Matrix::from_rows({{0, 0}, {4, 0}});
    EXPECT_LE(entropic_ot_cost(x, x, with_epsilon(1e-3)), 0.05);
}

TEST(EntropicOtCost, AutoEpsilonWhenUnset) {
    RngStream rng(6, "auto");
    auto x = random_matrix(6, 2, rng), y = random_matrix(6, 2, rng);
    CrotConfig cfg;
    auto cost = cost_matrix(x, y, 2);
    EXPECT_DOUBLE_EQ(entropic_ot_cost(x, y, cfg), entropic_ot_cost(x, y, with_epsilon(auto_epsilon(cost))));
}

TEST(EntropicOtCost, EpsilonConsistencyAgainstOracle) {
    RngStream rng(7, "consistency");
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t m = 2 + rng.uniform_index(5), n = 1 + rng.uniform_index(4);
        const int p = trial % 2 == 0 ? 2 : 1;
        auto x = random_matrix(m, n, rng), y = random_matrix(m, n, rng);
        auto cost = cost_matrix(x, y, p);
        const double mean = std::accumulate(cost.values().begin(), cost.values().end(), 0.0) / cost.size();
        CrotConfig cfg = with_epsilon(1e-3 * mean, p);
        cfg.sinkhorn_max_iter = 10000;
        const double exact = exact_ot_oracle(x, y, p);
        EXPECT_NEAR(entropic_ot_cost(x, y, cfg), exact, 0.02 * exact) << "trial " << trial;
    }
}

TEST(MedianCost, OddAndEven) {
    EXPECT_DOUBLE_EQ(median_cost(CostMatrix(Matrix::from_rows({{3, 1, 2}}))), 2.0);
    EXPECT_DOUBLE_EQ(median_cost(CostMatrix(Matrix::from_rows({{4, 1}, {3, 2}}))), 2.5);
    EXPECT_DOUBLE_EQ(auto_epsilon(CostMatrix(Matrix::from_rows({{4, 1}, {3, 2}}))), 0.125);
}

TEST(AutoEpsilon, FallsBackWhenMedianIsZero) {
    EXPECT_DOUBLE_EQ(auto_epsilon(CostMatrix(Matrix::from_rows({{0, 0, 4}}))), 0.05 * 4.0 / 3.0);
    EXPECT_DOUBLE_EQ(auto_epsilon(CostMatrix(Matrix::from_rows({{0, 0}}))), 1.0);
}

TEST(SinkhornDivergence, SelfIsZero) {
    RngStream rng(8, "self");
    auto x = random_matrix(9, 3, rng);
    EXPECT_NEAR(sinkhorn_divergence(x, x, with_epsilon(0.3)), 0.0, 1e-8);
}

TEST(SinkhornDivergence, SinglePoints) {
    EXPECT_NEAR(sinkhorn_divergence(Matrix::from_rows({{0}}), Matrix::from_rows({{2}}), with_epsilon(0.5)), 4.0, 1e-12);
}

TEST(SinkhornDivergence, MonotoneInShift) {
    auto x = Matrix::from_rows({{-5, 0}, {-5.2, 0.1}, {-4.9, -0.2}, {5, 0}, {5.1, 0.2}, {4.8, -0.1}});
    auto shifted = [&](double dx) {
        Matrix y = x;
        for (std::size_t i = 0; i < y.rows(); ++i) {
            y(i, 0) += dx;
        }
        return y;
    };
    auto cfg = with_epsilon(0.01);
    const double near = sinkhorn_divergence(x, shifted(0.1), cfg);
    const double far = sinkhorn_divergence(x, shifted(1.0), cfg);
    EXPECT_GT(near, 0.0);
    EXPECT_LT(near, far);
}

TEST(SinkhornDivergence, AxiomsOnFuzzedPairs) {
    RngStream rng(9, "axioms");
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t m = 1 + rng.uniform_index(10), n = 1 + rng.uniform_index(10), d = 1 + rng.uniform_index(4);
        auto x = random_matrix(m, d, rng, 1.0 + rng.uniform() * 3);
        auto y = random_matrix(n, d, rng, 1.0 + rng.uniform() * 3, rng.normal());
        auto cfg = with_epsilon(0.05 + rng.uniform(), trial % 3 == 0 ? 1 : 2);
        const double xy = sinkhorn_divergence(x, y, cfg);
        const double yx = sinkhorn_divergence(y, x, cfg);
        EXPECT_GE(xy, -1e-8);
        EXPECT_NEAR(xy, yx, 1e-8);
        EXPECT_LE(sinkhorn_divergence(x, x, cfg), 1e-8);
    }
}

TEST(SinkhornDivergence, TranslationCostsSquaredNorm) {
    RngStream rng(10, "translate");
    auto x = random_matrix(25, 2, rng);
    const double t0 = 0.8, t1 = -0.6;
    Matrix y = x;
    for (std::size_t i = 0; i < y.rows(); ++i) {
        y(i, 0) += t0;
        y(i, 1) += t1;
    }
    const double norm2 = t0 * t0 + t1 * t1;
    EXPECT_NEAR(sinkhorn_divergence(x, y, with_epsilon(0.01)), norm2, 0.05 * norm2);
}

TEST(SinkhornDivergenceGrad, StationaryAtIdentity) {
    RngStream rng(11, "stationary");
    auto x = random_matrix(8, 3, rng);
    auto g = sinkhorn_divergence_grad(x, x, all_indices(8), all_indices(3), tight_config(0.5));
    for (double v : g.values()) {
        EXPECT_NEAR(v, 0.0, 1e-4);
    }
}

TEST(SinkhornDivergenceGrad, SinglePairDerivative) {
    auto g = sinkhorn_divergence_grad(Matrix::from_rows({{0}}), Matrix::from_rows({{2}}), all_indices(1), all_indices(1), with_epsilon(0.5));
    EXPECT_NEAR(g(0, 0), 4.0, 1e-12);
}

TEST(SinkhornDivergenceGrad, MatchesFiniteDifferences) {
    RngStream rng(12, "fd");
    auto x = random_matrix(8, 3, rng);
    auto y = random_matrix(8, 3, rng, 1.0, 0.5);
    auto cfg = tight_config(0.5);
    auto rows = all_indices(8), cols = all_indices(3);
    auto analytic = sinkhorn_divergence_grad(x, y, rows, cols, cfg);
    auto numeric = central_differences([&](const Matrix& yy) { return sinkhorn_divergence(x, yy, cfg); }, y, rows, cols, 1e-5);
    EXPECT_LE(max_relative_error(analytic, numeric), 1e-3);
}

TEST(SinkhornDivergenceGrad, MatchesFiniteDifferencesUnequalSizesAndP3) {
    RngStream rng(13, "fd3");
    auto x = random_matrix(6, 2, rng);
    auto y = random_matrix(9, 2, rng, 1.5);
    auto cfg = tight_config(0.4, 3);
    auto rows = all_indices(9), cols = all_indices(2);
    auto analytic = sinkhorn_divergence_grad(x, y, rows, cols, cfg);
    auto numeric = central_differences([&](const Matrix& yy) { return sinkhorn_divergence(x, yy, cfg); }, y, rows, cols, 1e-5);
    EXPECT_LE(max_relative_error(analytic, numeric), 1e-3);
}

TEST(SinkhornDivergenceGrad, ZeroOutsideMutableSet) {
    RngStream rng(14, "mask");
    auto x = random_matrix(5, 4, rng), y = random_matrix(6, 4, rng);
    std::vector<std::size_t> rows{1, 4}, cols{0, 3};
    auto g = sinkhorn_divergence_grad(x, y, rows, cols, with_epsilon(0.5));
    for (std::size_t i = 0; i < 6; ++i) {
        for (std::size_t c = 0; c < 4; ++c) {
            const bool inside = (i == 1 || i == 4) && (c == 0 || c == 3);
            if (!inside) {
                EXPECT_EQ(g(i, c), 0.0);
            } else {
                EXPECT_NE(g(i, c), 0.0);
            }
        }
    }
    EXPECT_THROW(sinkhorn_divergence_grad(x, y, {}, cols, with_epsilon(0.5)), ArgumentError);
}

TEST(ExactOtOracle, Examples) {
    auto x = Matrix::from_rows({{0}, {1}});
    EXPECT_DOUBLE_EQ(exact_ot_oracle(x, x, 2), 0.0);
    EXPECT_DOUBLE_EQ(exact_ot_oracle(x, Matrix::from_rows({{1}, {2}}), 1), 1.0);
    EXPECT_DOUBLE_EQ(exact_ot_oracle(Matrix::from_rows({{0}, {10}}), Matrix::from_rows({{10}, {0}}), 2), 0.0);
}

TEST(ExactOtOracle, Limits) {
    EXPECT_THROW(exact_ot_oracle(Matrix(2, 1), Matrix(3, 1), 2), ArgumentError);
    EXPECT_THROW(exact_ot_oracle(Matrix(9, 1), Matrix(9, 1), 2), ArgumentError);
}
