// Impute a masked column block of a synthetic batch and score the result.
#include <cstdio>

#include <crot/crot.hpp>

int main() {
    crot::MixtureSpec spec;
    spec.n = 8;
    spec.m_per_batch = 200;
    auto pair = crot::generate_batch_pair(spec);
    auto masked = crot::apply_patch_mask(pair.x2, crot::default_mask_cols(spec.n));

    crot::CrotConfig cfg;
    cfg.iterations = 60;
    cfg.batch_size = 128;
    auto run = crot::crot_impute(pair.x1, masked.x_masked, masked.mask, cfg);
    if (run.status != crot::RunStatus::ok) {
        std::fprintf(stderr, "aborted: %s\n", run.abort_reason.c_str());
        return 1;
    }

    auto scores = crot::recovery_scores(pair.x2, run.x2_imputed, masked.mask);
    std::printf("k = %zu, iterations = %zu, rmse = %.4f\n", run.k_used, run.loss_history.size(), scores.rmse);
    return 0;
}
