#ifndef CROT_OPTIM_HPP
#define CROT_OPTIM_HPP

#include <cmath>
#include <span>
#include <vector>

#include "core.hpp"

/**
 * @file optim.hpp
 * @brief Adam updates for the imputed entries.
 */

namespace crot {

struct AdamHyper {
    double learning_rate = 0.1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamHyper from_config(const CrotConfig& cfg) { return {cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps}; }
};

/**
 * @brief Moment accumulators for a fixed-size block of parameters.
 */
struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::size_t t = 0;
    AdamHyper hyper;

    AdamState() = default;
    AdamState(std::size_t n, AdamHyper h) : m(n, 0.0), v(n, 0.0), hyper(h) {}

    std::size_t size() const { return m.size(); }
};

/**
 * Advance `state` by one step with gradient `grad` and return the update to subtract from the parameters.
 * `state` is left untouched if the gradient has the wrong length or a non-finite entry.
 *
 * A constant gradient yields steps of at most `learning_rate`. In general the step is only bounded by
 * `adam_step_bound()`, which exceeds `learning_rate` when gradients grow from step to step.
 */
inline std::vector<double> adam_step(AdamState& state, std::span<const double> grad) {
    if (grad.size() != state.size()) {
        throw ArgumentError("adam_step: gradient has " + std::to_string(grad.size()) + " entries, state has " + std::to_string(state.size()));
    }
    for (double g : grad) {
        if (!std::isfinite(g)) {
            throw NumericError("adam_step: non-finite gradient");
        }
    }

    const auto& h = state.hyper;
    ++state.t;
    const double correct1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.t));
    const double correct2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.t));

    std::vector<double> delta(grad.size());
    for (std::size_t i = 0; i < grad.size(); ++i) {
        state.m[i] = h.beta1 * state.m[i] + (1 - h.beta1) * grad[i];
        state.v[i] = h.beta2 * state.v[i] + (1 - h.beta2) * grad[i] * grad[i];
        const double mhat = state.m[i] / correct1;
        const double vhat = state.v[i] / correct2;
        delta[i] = h.learning_rate * mhat / (std::sqrt(vhat) + h.eps);
    }
    return delta;
}

/**
 * Upper bound on `|delta|` at step `t` for any gradient history (Cauchy-Schwarz on the moment sums).
 */
inline double adam_step_bound(const AdamHyper& h, std::size_t t) {
    const double ratio = h.beta1 * h.beta1 / h.beta2;
    double series = 0, term = 1;
    for (std::size_t k = 0; k < t; ++k) {
        series += term;
        term *= ratio;
    }
    const double td = static_cast<double>(t);
    return h.learning_rate * (1 - h.beta1) * std::sqrt(series * (1 - std::pow(h.beta2, td)) / (1 - h.beta2)) / (1 - std::pow(h.beta1, td));
}

}

#endif
