#ifndef CROT_METRICS_HPP
#define CROT_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <vector>

#include "core.hpp"

/**
 * @file metrics.hpp
 * @brief Recovery error over a masked block, and agreement between two partitions.
 */

namespace crot {

/**
 * @brief Error of imputed values against the truth over the masked entries.
 */
struct RecoveryScores {
    double rmse = 0;
    double mae = 0;

    /** Pearson correlation; unset when either vector is constant. */
    std::optional<double> pcc;
};

/**
 * Sample Pearson correlation, or nothing if either input is constant.
 */
inline std::optional<double> pearson(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw DimensionError("pearson: length mismatch");
    }
    if (a.size() < 2) {
        return std::nullopt;
    }
    auto constant = [](std::span<const double> v) { return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); }); };
    if (constant(a) || constant(b)) {
        return std::nullopt;
    }
    const double n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma, db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0 || sbb == 0) {
        return std::nullopt;
    }
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

/**
 * The masked entries of `x`, row by row.
 */
inline std::vector<double> masked_entries(const Matrix& x, const MaskSpec& mask) {
    std::vector<double> out;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        if (!mask.row_in_scope(i)) {
            continue;
        }
        for (auto j : mask.missing_cols) {
            out.push_back(x(i, j));
        }
    }
    return out;
}

/**
 * RMSE, MAE and PCC between `truth` and `imputed` over the masked block only.
 */
inline RecoveryScores recovery_scores(const Matrix& truth, const Matrix& imputed, const MaskSpec& mask) {
    if (truth.rows() != imputed.rows() || truth.cols() != imputed.cols()) {
        throw DimensionError("recovery_scores: truth and imputed shapes differ");
    }
    if (mask.empty()) {
        throw ArgumentError("recovery_scores: empty mask");
    }
    mask.validate(truth.rows(), truth.cols());

    auto t = masked_entries(truth, mask);
    auto m = masked_entries(imputed, mask);
    if (t.empty()) {
        throw ArgumentError("recovery_scores: mask covers no rows");
    }
    RecoveryScores out;
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double d = m[i] - t[i];
        out.mae += std::abs(d);
        out.rmse += d * d;
    }
    out.mae /= static_cast<double>(t.size());
    out.rmse = std::sqrt(out.rmse / static_cast<double>(t.size()));
    out.pcc = pearson(t, m);
    return out;
}

/**
 * @brief Agreement between a reference partition and a predicted one.
 */
struct AgreementScores {
    double ari = 0;
    double nmi = 0;
    double purity = 0;
};

/**
 * ARI (permutation model), NMI normalized by the arithmetic mean of the two entropies, and purity
 * (fraction of points whose predicted cluster's majority class matches theirs).
 *
 * Any label types with `operator<` work, e.g. strings for classes and integers for clusters.
 * When both partitions are a single block the partitions match, and ARI and NMI are reported as 1.
 */
template<typename TrueLabel_, typename PredLabel_>
AgreementScores agreement_scores(const std::vector<TrueLabel_>& labels_true, const std::vector<PredLabel_>& labels_pred) {
    if (labels_true.size() != labels_pred.size()) {
        throw DimensionError("agreement_scores: label vectors differ in length");
    }
    if (labels_true.size() < 2) {
        throw ArgumentError("agreement_scores: need at least two points");
    }

    std::map<TrueLabel_, std::size_t> classes;
    std::map<PredLabel_, std::size_t> clusters;
    for (const auto& l : labels_true) {
        classes.emplace(l, classes.size());
    }
    for (const auto& l : labels_pred) {
        clusters.emplace(l, clusters.size());
    }
    const std::size_t nc = classes.size(), nk = clusters.size();
    std::vector<double> table(nc * nk, 0.0), class_totals(nc, 0.0), cluster_totals(nk, 0.0);
    for (std::size_t i = 0; i < labels_true.size(); ++i) {
        const auto a = classes.at(labels_true[i]);
        const auto b = clusters.at(labels_pred[i]);
        table[a * nk + b] += 1;
        class_totals[a] += 1;
        cluster_totals[b] += 1;
    }
    const double n = static_cast<double>(labels_true.size());
    auto pairs = [](double x) { return x * (x - 1) / 2; };

    AgreementScores out;

    double index = 0, sum_a = 0, sum_b = 0;
    for (double v : table) {
        index += pairs(v);
    }
    for (double v : class_totals) {
        sum_a += pairs(v);
    }
    for (double v : cluster_totals) {
        sum_b += pairs(v);
    }
    const double expected = sum_a * sum_b / pairs(n);
    const double max_index = 0.5 * (sum_a + sum_b);
    out.ari = max_index == expected ? 1.0 : (index - expected) / (max_index - expected);

    double h_true = 0, h_pred = 0, mi = 0;
    for (double v : class_totals) {
        h_true -= (v / n) * std::log(v / n);
    }
    for (double v : cluster_totals) {
        h_pred -= (v / n) * std::log(v / n);
    }
    for (std::size_t a = 0; a < nc; ++a) {
        for (std::size_t b = 0; b < nk; ++b) {
            const double v = table[a * nk + b];
            if (v > 0) {
                mi += (v / n) * std::log(v * n / (class_totals[a] * cluster_totals[b]));
            }
        }
    }
    const double norm = 0.5 * (h_true + h_pred);
    out.nmi = norm == 0 ? 1.0 : std::clamp(mi / norm, 0.0, 1.0);

    double majority = 0;
    for (std::size_t b = 0; b < nk; ++b) {
        double best = 0;
        for (std::size_t a = 0; a < nc; ++a) {
            best = std::max(best, table[a * nk + b]);
        }
        majority += best;
    }
    out.purity = majority / n;
    return out;
}

}

#endif
