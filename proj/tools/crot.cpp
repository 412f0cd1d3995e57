#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "crot/commands.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Cluster-regularized optimal-transport imputation of missing column blocks"};
    app.set_version_flag("--version", crot::tool_version);
    app.require_subcommand(1);

    crot::ImputeArgs impute;
    auto* impute_cmd = app.add_subcommand("impute", "Impute the masked columns of X2 using X1 as reference");
    impute_cmd->add_option("--x1", impute.x1_path, "Reference matrix (CSV)")->required();
    impute_cmd->add_option("--x2", impute.x2_path, "Target matrix with masked columns (CSV)")->required();
    impute_cmd->add_option("--mask", impute.mask_path, "Mask file (JSON)")->required();
    impute_cmd->add_option("--config", impute.config_path, "Configuration file (key = value)");
    impute_cmd->add_option("--out", impute.out_dir, "Output directory")->required();

    std::string spec_path, sim_out;
    auto* simulate_cmd = app.add_subcommand("simulate", "Generate a synthetic reference/target pair with masked columns");
    simulate_cmd->add_option("--spec", spec_path, "Mixture spec file (key = value)")->required();
    simulate_cmd->add_option("--out", sim_out, "Output directory")->required();

    crot::EvaluateArgs evaluate;
    auto* evaluate_cmd = app.add_subcommand("evaluate", "Score an imputed matrix against the truth");
    evaluate_cmd->add_option("--truth", evaluate.truth_path, "Complete matrix (CSV)")->required();
    evaluate_cmd->add_option("--imputed", evaluate.imputed_path, "Imputed matrix (CSV)")->required();
    evaluate_cmd->add_option("--mask", evaluate.mask_path, "Mask file (JSON)")->required();
    evaluate_cmd->add_option("--labels", evaluate.labels_path, "True labels of the rows (CSV with a header)");
    evaluate_cmd->add_flag("--cluster", evaluate.cluster, "Require clustering metrics");
    evaluate_cmd->add_option("--seed", evaluate.seed, "Seed of the k-means run");

    crot::BenchArgs bench;
    auto* bench_cmd = app.add_subcommand("bench", "Time imputation at increasing sizes");
    bench_cmd->add_option("--sizes", bench.sizes, "Ascending sizes")->required()->delimiter(',');
    bench_cmd->add_option("--config", bench.config_path, "Configuration file (key = value)");
    bench_cmd->add_option("--vary", bench.vary, "Quantity to vary: m1 (reference rows) or l (batch size)")->capture_default_str();
    bench_cmd->add_option("--rows", bench.fixed_rows, "Rows of the batches held fixed")->capture_default_str();
    bench_cmd->add_option("--repeats", bench.repeats, "Runs per size; the fastest is reported")->capture_default_str();
    bench_cmd->add_option("--seed", bench.seed, "Seed of the synthetic data")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        crot::emit_diagnostic(std::cerr, "error", e.what());
        return crot::exit_code::usage;
    }

    if (*impute_cmd) {
        return crot::cmd_impute(impute);
    }
    if (*simulate_cmd) {
        return crot::cmd_simulate(spec_path, sim_out);
    }
    if (*evaluate_cmd) {
        return crot::cmd_evaluate(evaluate);
    }
    return crot::cmd_bench(bench);
}
