#ifndef CROT_CORE_HPP
#define CROT_CORE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

/**
 * @file core.hpp
 * @brief Matrices, masks, configuration and seeded random streams shared by every other header.
 */

namespace crot {

/**
 * @brief Invalid argument: bad shapes, empty sets, out-of-domain hyperparameters.
 */
class ArgumentError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/**
 * @brief Two matrices (or a matrix and a mask) disagree on their dimensions.
 */
class DimensionError : public ArgumentError {
public:
    using ArgumentError::ArgumentError;
};

/**
 * @brief Non-finite value met during a numerical procedure.
 */
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/**
 * @brief Dense row-major matrix of doubles.
 */
class Matrix {
public:
    Matrix() = default;

    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

    Matrix(std::size_t rows, std::size_t cols, std::vector<double> values) : rows_(rows), cols_(cols), values_(std::move(values)) {
        if (values_.size() != rows_ * cols_) {
            throw DimensionError("matrix storage has " + std::to_string(values_.size()) + " values, expected " +
                                 std::to_string(rows_ * cols_));
        }
    }

    /**
     * Build from nested rows, mostly for tests and small literals.
     * All rows must have the same length.
     */
    static Matrix from_rows(const std::vector<std::vector<double>>& rows) {
        const std::size_t nr = rows.size();
        const std::size_t nc = nr ? rows.front().size() : 0;
        std::vector<double> values;
        values.reserve(nr * nc);
        for (const auto& r : rows) {
            if (r.size() != nc) {
                throw DimensionError("ragged rows in matrix literal");
            }
            values.insert(values.end(), r.begin(), r.end());
        }
        return Matrix(nr, nc, std::move(values));
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return values_.size(); }
    bool empty() const { return values_.empty(); }

    double& operator()(std::size_t i, std::size_t j) { return values_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return values_[i * cols_ + j]; }

    std::span<double> row(std::size_t i) { return {values_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const { return {values_.data() + i * cols_, cols_}; }

    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> values_;
};

/**
 * @brief Samples-by-features data table with optional feature names and row identifiers.
 *
 * Rows are samples (cells) and columns are features.
 * Names, when present, have one entry per column and must be unique; row identifiers have one entry per row.
 */
class DataMatrix : public Matrix {
public:
    DataMatrix() = default;

    DataMatrix(Matrix values) : Matrix(std::move(values)) {}

    DataMatrix(std::size_t rows, std::size_t cols, double fill = 0.0) : Matrix(rows, cols, fill) {}

    DataMatrix(std::size_t rows, std::size_t cols, std::vector<double> values) : Matrix(rows, cols, std::move(values)) {}

    static DataMatrix from_rows(const std::vector<std::vector<double>>& rows) { return DataMatrix(Matrix::from_rows(rows)); }

    const std::vector<std::string>& col_names() const { return col_names_; }
    const std::vector<std::string>& row_ids() const { return row_ids_; }
    bool has_col_names() const { return !col_names_.empty(); }
    bool has_row_ids() const { return !row_ids_.empty(); }

    void set_col_names(std::vector<std::string> names) {
        if (!names.empty()) {
            if (names.size() != cols()) {
                throw DimensionError("expected " + std::to_string(cols()) + " column names, got " + std::to_string(names.size()));
            }
            std::unordered_set<std::string> seen;
            for (const auto& n : names) {
                if (!seen.insert(n).second) {
                    throw ArgumentError("duplicate column name '" + n + "'");
                }
            }
        }
        col_names_ = std::move(names);
    }

    void set_row_ids(std::vector<std::string> ids) {
        if (!ids.empty() && ids.size() != rows()) {
            throw DimensionError("expected " + std::to_string(rows()) + " row ids, got " + std::to_string(ids.size()));
        }
        row_ids_ = std::move(ids);
    }

    bool all_finite() const {
        return std::all_of(values().begin(), values().end(), [](double v) { return std::isfinite(v); });
    }

    bool operator==(const DataMatrix&) const = default;

private:
    std::vector<std::string> col_names_;
    std::vector<std::string> row_ids_;
};

/**
 * Copy the listed rows of `x` (in the listed order) into a new matrix.
 * Column names are carried over; row identifiers are not.
 */
inline DataMatrix select_rows(const DataMatrix& x, std::span<const std::size_t> indices) {
    DataMatrix out(indices.size(), x.cols());
    for (std::size_t r = 0; r < indices.size(); ++r) {
        if (indices[r] >= x.rows()) {
            throw std::out_of_range("row index " + std::to_string(indices[r]) + " out of range");
        }
        auto src = x.row(indices[r]);
        std::copy(src.begin(), src.end(), out.row(r).begin());
    }
    out.set_col_names(x.col_names());
    return out;
}

/**
 * @brief Half-open row interval `[begin, end)`.
 */
struct RowRange {
    std::size_t begin = 0;
    std::size_t end = 0;
    bool operator==(const RowRange&) const = default;
};

/**
 * @brief Block ("patch") of missing entries: a set of columns, over all rows or a row range.
 */
struct MaskSpec {
    /**
     * Sorted, duplicate-free column indices whose values are missing.
     */
    std::vector<std::size_t> missing_cols;

    /**
     * Affected rows; unset means every row of the annotated matrix.
     */
    std::optional<RowRange> scope;

    MaskSpec() = default;

    explicit MaskSpec(std::vector<std::size_t> cols, std::optional<RowRange> rows = std::nullopt) : missing_cols(std::move(cols)), scope(rows) {
        std::sort(missing_cols.begin(), missing_cols.end());
        missing_cols.erase(std::unique(missing_cols.begin(), missing_cols.end()), missing_cols.end());
    }

    bool empty() const { return missing_cols.empty(); }

    bool is_missing_col(std::size_t j) const { return std::binary_search(missing_cols.begin(), missing_cols.end(), j); }

    bool row_in_scope(std::size_t i) const { return !scope || (i >= scope->begin && i < scope->end); }

    /**
     * Check the mask against an `nrow` by `ncol` matrix.
     */
    void validate(std::size_t nrow, std::size_t ncol) const {
        for (auto j : missing_cols) {
            if (j >= ncol) {
                throw DimensionError("masked column " + std::to_string(j) + " is out of range for " + std::to_string(ncol) + " columns");
            }
        }
        if (scope && (scope->begin > scope->end || scope->end > nrow)) {
            throw DimensionError("mask row scope exceeds " + std::to_string(nrow) + " rows");
        }
    }

    bool operator==(const MaskSpec&) const = default;
};

/**
 * @brief Hyperparameters for cluster-regularized OT imputation.
 *
 * `epsilon` and `k` may be left unset to request automatic selection
 * (a fraction of the median pairwise cost and the elbow method, respectively).
 */
struct CrotConfig {
    /** Entropic regularization strength; unset selects it from the data at run start. */
    std::optional<double> epsilon;

    /** Exponent applied to the Euclidean ground distance. */
    int p = 2;

    /** Weight of the centroid-alignment term. */
    double alpha = 1.0;

    /** Maximum number of optimization iterations. */
    std::size_t iterations = 200;

    /** Rows sampled from each matrix per iteration. Clamped to the smaller matrix at run start. */
    std::size_t batch_size = 512;

    /** Cluster count; unset selects it by the elbow method on the complete matrix. */
    std::optional<std::size_t> k;

    /** Largest cluster count tried by the elbow method. */
    std::size_t k_max = 10;

    double learning_rate = 0.1;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    std::uint64_t seed = 0;

    std::size_t sinkhorn_max_iter = 200;
    double sinkhorn_tol = 1e-6;

    /** Moving-average window for early stopping; zero disables early stopping. */
    std::size_t convergence_window = 20;
    double convergence_rel_tol = 1e-4;

    void validate() const {
        if (epsilon && !(*epsilon > 0 && std::isfinite(*epsilon))) {
            throw ArgumentError("epsilon must be positive");
        }
        if (p < 1) {
            throw ArgumentError("p must be a positive integer");
        }
        if (!(alpha >= 0 && std::isfinite(alpha))) {
            throw ArgumentError("alpha must be non-negative");
        }
        if (iterations == 0) {
            throw ArgumentError("iterations must be positive");
        }
        if (batch_size == 0) {
            throw ArgumentError("batch_size must be positive");
        }
        if (k && *k == 0) {
            throw ArgumentError("k must be positive");
        }
        if (!k && k_max < 3) {
            throw ArgumentError("k_max must be at least 3 when k is selected automatically");
        }
        if (!(learning_rate > 0)) {
            throw ArgumentError("learning_rate must be positive");
        }
        if (!(adam_beta1 > 0 && adam_beta1 < 1) || !(adam_beta2 > 0 && adam_beta2 < 1)) {
            throw ArgumentError("adam betas must lie in (0, 1)");
        }
        if (!(adam_eps > 0)) {
            throw ArgumentError("adam_eps must be positive");
        }
        if (sinkhorn_max_iter == 0 || !(sinkhorn_tol > 0)) {
            throw ArgumentError("sinkhorn_max_iter and sinkhorn_tol must be positive");
        }
        if (!(convergence_rel_tol > 0)) {
            throw ArgumentError("convergence_rel_tol must be positive");
        }
    }
};

/**
 * @brief Named, seeded pseudo-random stream.
 *
 * The engine state is derived from `(seed, stream_id)` only, so the same pair always replays the same draws.
 * Integer and normal variates are produced here rather than by `<random>` distributions,
 * whose output is implementation-defined, so that results agree across standard libraries.
 */
class RngStream {
public:
    RngStream(std::uint64_t seed, std::string stream_id) : seed_(seed), stream_id_(std::move(stream_id)), engine_(derive_state(seed_, stream_id_)) {}

    std::uint64_t seed() const { return seed_; }
    const std::string& stream_id() const { return stream_id_; }

    /**
     * Independent child stream, e.g. one per iteration.
     */
    RngStream substream(const std::string& label) const { return RngStream(seed_, stream_id_ + "/" + label); }
    RngStream substream(std::uint64_t index) const { return substream(std::to_string(index)); }

    std::uint64_t next_u64() { return engine_(); }

    /** Uniform on [0, 1) with 53 random bits. */
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /** Uniform integer in [0, n), unbiased. */
    std::size_t uniform_index(std::size_t n) {
        if (n == 0) {
            throw ArgumentError("uniform_index needs a non-empty range");
        }
        const std::uint64_t bound = n;
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
        std::uint64_t draw;
        do {
            draw = engine_();
        } while (draw >= limit);
        return static_cast<std::size_t>(draw % bound);
    }

    /** Standard normal draw (Box-Muller, one variate per call). */
    double normal() {
        double u1;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    template<typename T>
    void shuffle(std::vector<T>& values) {
        for (std::size_t i = values.size(); i > 1; --i) {
            std::swap(values[i - 1], values[uniform_index(i)]);
        }
    }

private:
    static std::uint64_t splitmix(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    static std::uint64_t derive_state(std::uint64_t seed, const std::string& id) {
        std::uint64_t h = 0xcbf29ce484222325ULL; // FNV-1a
        for (unsigned char c : id) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
        return splitmix(splitmix(seed) ^ h);
    }

    std::uint64_t seed_;
    std::string stream_id_;
    std::mt19937_64 engine_;
};

/**
 * Arithmetic mean of column `j`.
 */
inline double column_mean(const Matrix& x, std::size_t j) {
    if (j >= x.cols()) {
        throw std::out_of_range("column index " + std::to_string(j) + " out of range for " + std::to_string(x.cols()) + " columns");
    }
    if (x.rows() == 0) {
        throw ArgumentError("column_mean needs at least one row");
    }
    double sum = 0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        sum += x(i, j);
    }
    return sum / static_cast<double>(x.rows());
}

/**
 * Draw `l` distinct indices from `[0, m)` uniformly without replacement (partial Fisher-Yates).
 * The result is in draw order, not sorted.
 */
inline std::vector<std::size_t> sample_indices(std::size_t m, std::size_t l, RngStream& rng) {
    if (l > m) {
        throw ArgumentError("cannot sample " + std::to_string(l) + " distinct indices from " + std::to_string(m));
    }
    std::vector<std::size_t> pool(m);
    for (std::size_t i = 0; i < m; ++i) {
        pool[i] = i;
    }
    for (std::size_t i = 0; i < l; ++i) {
        std::swap(pool[i], pool[i + rng.uniform_index(m - i)]);
    }
    pool.resize(l);
    return pool;
}

}

#endif
