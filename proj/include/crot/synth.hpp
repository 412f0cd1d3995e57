#ifndef CROT_SYNTH_HPP
#define CROT_SYNTH_HPP

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "core.hpp"
#include "ot.hpp"

/**
 * @file synth.hpp
 * @brief Gaussian-mixture batch pairs with a shared cluster structure, and patch masking.
 */

namespace crot {

class GenerationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/**
 * @brief Parameters of a synthetic pair of batches.
 *
 * Component centers are drawn uniformly from the cube `[-separation * sigma, separation * sigma]^n`,
 * rejecting any center closer than `separation * sigma` to an earlier one.
 * Each row picks a component uniformly and adds isotropic Gaussian noise of scale `sigma`.
 */
struct MixtureSpec {
    std::size_t k_true = 3;
    std::size_t n = 20;
    std::size_t m_per_batch = 600;
    double separation = 8;
    double sigma = 1;
    std::uint64_t seed = 0;

    void validate() const {
        if (k_true == 0 || n == 0 || m_per_batch == 0) {
            throw ArgumentError("mixture spec needs positive k_true, n and m_per_batch");
        }
        if (!(separation > 0) || !(sigma > 0)) {
            throw ArgumentError("mixture spec needs positive separation and sigma");
        }
    }
};

/**
 * Masked columns of the default benchmark: the last quarter of the features.
 */
inline std::vector<std::size_t> default_mask_cols(std::size_t n) {
    std::vector<std::size_t> out;
    for (std::size_t j = n - n / 4; j < n; ++j) {
        out.push_back(j);
    }
    return out;
}

/**
 * Feature names `f0, f1, ...`.
 */
inline std::vector<std::string> feature_names(std::size_t n) {
    std::vector<std::string> out;
    out.reserve(n);
    for (std::size_t j = 0; j < n; ++j) {
        out.push_back("f" + std::to_string(j));
    }
    return out;
}

struct BatchPair {
    DataMatrix x1;
    DataMatrix x2;
    std::vector<std::size_t> labels1;
    std::vector<std::size_t> labels2;
    Matrix centers;
};

/**
 * Two independent batches drawn from the same mixture, with their true component labels.
 */
inline BatchPair generate_batch_pair(const MixtureSpec& spec) {
    spec.validate();
    const RngStream root(spec.seed, "synth");
    auto center_rng = root.substream("centers");

    const double half_width = spec.separation * spec.sigma;
    const double min_dist2 = half_width * half_width;
    constexpr std::size_t max_attempts = 10000;

    BatchPair out;
    out.centers = Matrix(spec.k_true, spec.n);
    std::vector<double> candidate(spec.n);
    for (std::size_t s = 0; s < spec.k_true; ++s) {
        bool placed = false;
        for (std::size_t attempt = 0; attempt < max_attempts && !placed; ++attempt) {
            for (auto& v : candidate) {
                v = (2 * center_rng.uniform() - 1) * half_width;
            }
            placed = true;
            for (std::size_t r = 0; r < s; ++r) {
                if (internal::squared_distance(candidate, out.centers.row(r)) < min_dist2) {
                    placed = false;
                    break;
                }
            }
        }
        if (!placed) {
            throw GenerationError("could not place " + std::to_string(spec.k_true) + " centers " + std::to_string(spec.separation) +
                                  " sigma apart in " + std::to_string(spec.n) + " dimensions");
        }
        std::copy(candidate.begin(), candidate.end(), out.centers.row(s).begin());
    }

    auto draw = [&](const std::string& stream, std::vector<std::size_t>& labels) {
        auto rng = root.substream(stream);
        DataMatrix x(spec.m_per_batch, spec.n);
        labels.resize(spec.m_per_batch);
        for (std::size_t i = 0; i < spec.m_per_batch; ++i) {
            labels[i] = rng.uniform_index(spec.k_true);
            auto c = out.centers.row(labels[i]);
            auto row = x.row(i);
            for (std::size_t j = 0; j < spec.n; ++j) {
                row[j] = c[j] + spec.sigma * rng.normal();
            }
        }
        x.set_col_names(feature_names(spec.n));
        return x;
    };
    out.x1 = draw("batch1", out.labels1);
    out.x2 = draw("batch2", out.labels2);
    return out;
}

struct PatchMask {
    /** Input with the masked columns set to zero. */
    DataMatrix x_masked;
    MaskSpec mask;
    /** True values of the masked columns, one column per masked column in increasing order. */
    Matrix truth_patch;
};

/**
 * Hide whole columns of `x`: zero them and keep their values aside for scoring.
 */
inline PatchMask apply_patch_mask(const DataMatrix& x, const std::vector<std::size_t>& cols) {
    if (cols.empty()) {
        throw ArgumentError("apply_patch_mask: no columns to mask");
    }
    PatchMask out;
    out.mask = MaskSpec(cols);
    out.mask.validate(x.rows(), x.cols());
    out.x_masked = x;
    out.truth_patch = Matrix(x.rows(), out.mask.missing_cols.size());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        for (std::size_t c = 0; c < out.mask.missing_cols.size(); ++c) {
            const auto j = out.mask.missing_cols[c];
            out.truth_patch(i, c) = x(i, j);
            out.x_masked(i, j) = 0;
        }
    }
    return out;
}

/**
 * Put a patch extracted by `apply_patch_mask()` back into `x_masked`.
 */
inline DataMatrix restore_patch(const DataMatrix& x_masked, const MaskSpec& mask, const Matrix& patch) {
    if (patch.rows() != x_masked.rows() || patch.cols() != mask.missing_cols.size()) {
        throw DimensionError("restore_patch: patch shape does not match the mask");
    }
    DataMatrix out = x_masked;
    for (std::size_t i = 0; i < out.rows(); ++i) {
        for (std::size_t c = 0; c < mask.missing_cols.size(); ++c) {
            out(i, mask.missing_cols[c]) = patch(i, c);
        }
    }
    return out;
}

}

#endif
