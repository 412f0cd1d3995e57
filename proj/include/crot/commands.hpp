#ifndef CROT_COMMANDS_HPP
#define CROT_COMMANDS_HPP

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "clustering.hpp"
#include "imputer.hpp"
#include "io.hpp"
#include "metrics.hpp"
#include "synth.hpp"

/**
 * @file commands.hpp
 * @brief The batch commands behind the `crot` executable.
 *
 * Each command returns a process exit code and never throws. Results go to files or to `out`;
 * diagnostics go to `err` as one JSON object per line.
 */

namespace crot {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int usage = 2;
inline constexpr int dimension = 3;
inline constexpr int numeric = 4;
}

/**
 * Write one diagnostic line, e.g. `{"level":"error","message":"...","file":"x.csv","line":3,"column":7}`.
 */
inline void emit_diagnostic(std::ostream& err, const std::string& level, const std::string& message, nlohmann::json extra = nlohmann::json::object()) {
    extra["level"] = level;
    extra["message"] = message;
    err << extra.dump() << '\n';
}

inline void emit_parse_error(std::ostream& err, const ParseError& e) {
    nlohmann::json extra;
    if (!e.source().empty()) {
        extra["file"] = e.source();
    }
    if (e.line() > 0) {
        extra["line"] = e.line();
    }
    if (e.column() > 0) {
        extra["column"] = e.column();
    }
    emit_diagnostic(err, "error", e.what(), extra);
}

/**
 * @brief Record of one command invocation, written as `manifest.json` in the output directory.
 */
struct RunManifest {
    std::string command;
    std::vector<std::pair<std::string, std::filesystem::path>> inputs;
    std::filesystem::path out_dir;
    std::string started_at;
    std::string finished_at;

    nlohmann::json to_json() const {
        nlohmann::json in = nlohmann::json::object();
        for (const auto& [role, path] : inputs) {
            in[role] = path.string();
        }
        return {{"command", command}, {"inputs", in}, {"out_dir", out_dir.string()}, {"tool_version", tool_version},
                {"started_at", started_at}, {"finished_at", finished_at}};
    }
};

namespace internal {

inline std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/**
 * Report missing inputs and planned outputs that would clobber an input. Returns false on any problem.
 */
inline bool check_paths(const RunManifest& manifest, const std::vector<std::string>& outputs, std::ostream& err) {
    namespace fs = std::filesystem;
    bool ok = true;
    for (const auto& [role, path] : manifest.inputs) {
        if (!fs::is_regular_file(path)) {
            emit_diagnostic(err, "error", "input file does not exist", {{"file", path.string()}, {"role", role}});
            ok = false;
        }
    }
    if (!ok) {
        return false;
    }
    for (const auto& name : outputs) {
        const auto target = manifest.out_dir / name;
        std::error_code ec;
        if (!fs::exists(target, ec)) {
            continue;
        }
        for (const auto& [role, path] : manifest.inputs) {
            if (fs::equivalent(target, path, ec)) {
                emit_diagnostic(err, "error", "output would overwrite an input", {{"file", target.string()}, {"role", role}});
                ok = false;
            }
        }
    }
    return ok;
}

inline void write_manifest(RunManifest manifest) {
    manifest.finished_at = utc_timestamp();
    write_file(manifest.out_dir / "manifest.json", manifest.to_json().dump(2) + "\n");
}

}

/**
 * @brief Paths for `cmd_impute()`. An empty `config_path` means default settings.
 */
struct ImputeArgs {
    std::filesystem::path x1_path;
    std::filesystem::path x2_path;
    std::filesystem::path mask_path;
    std::filesystem::path config_path;
    std::filesystem::path out_dir;
};

/**
 * Impute the masked columns of X2 from X1. Writes `x2_imputed.csv`, `report.json` and `manifest.json`.
 *
 * Exit codes: 2 for unreadable or malformed input, 3 for inconsistent shapes or an empty mask,
 * 4 when the optimization hit a non-finite value (outputs then hold the last finite state).
 */
inline int cmd_impute(const ImputeArgs& args, std::ostream& err = std::cerr) {
    RunManifest manifest;
    manifest.command = "impute";
    manifest.inputs = {{"x1", args.x1_path}, {"x2", args.x2_path}, {"mask", args.mask_path}};
    if (!args.config_path.empty()) {
        manifest.inputs.emplace_back("config", args.config_path);
    }
    manifest.out_dir = args.out_dir;
    manifest.started_at = internal::utc_timestamp();
    if (!internal::check_paths(manifest, {"x2_imputed.csv", "report.json", "manifest.json"}, err)) {
        return exit_code::usage;
    }

    try {
        const auto x1 = read_csv(args.x1_path);
        const auto x2 = read_csv(args.x2_path);
        const auto cfg = args.config_path.empty() ? CrotConfig{} : read_config(args.config_path);
        cfg.validate();

        if (x1.cols() != x2.cols()) {
            emit_diagnostic(err, "error", "x1 and x2 have different column counts", {{"x1_cols", x1.cols()}, {"x2_cols", x2.cols()}});
            return exit_code::dimension;
        }
        if (x1.col_names() != x2.col_names()) {
            emit_diagnostic(err, "error", "x1 and x2 headers differ");
            return exit_code::dimension;
        }
        const auto mask = read_mask(args.mask_path, x2.col_names());
        if (mask.empty()) {
            emit_diagnostic(err, "error", "mask lists no columns", {{"file", args.mask_path.string()}});
            return exit_code::dimension;
        }
        mask.validate(x2.rows(), x2.cols());

        std::filesystem::create_directories(args.out_dir);
        const auto run = crot_impute(x1, x2, mask, cfg);
        for (const auto& w : run.warnings) {
            emit_diagnostic(err, "warning", w);
        }
        write_csv(run.x2_imputed, args.out_dir / "x2_imputed.csv");
        internal::write_file(args.out_dir / "report.json", report_to_json(run).dump(2) + "\n");
        internal::write_manifest(manifest);
        if (run.status != RunStatus::ok) {
            emit_diagnostic(err, "error", run.abort_reason, {{"iterations_completed", run.loss_history.size()}});
            return exit_code::numeric;
        }
        return exit_code::ok;
    } catch (const ParseError& e) {
        emit_parse_error(err, e);
        return exit_code::usage;
    } catch (const DimensionError& e) {
        emit_diagnostic(err, "error", e.what());
        return exit_code::dimension;
    } catch (const ArgumentError& e) {
        emit_diagnostic(err, "error", e.what());
        return exit_code::usage;
    } catch (const NumericError& e) {
        emit_diagnostic(err, "error", e.what());
        return exit_code::numeric;
    } catch (const std::exception& e) {
        emit_diagnostic(err, "error", e.what());
        return exit_code::usage;
    }
}

/**
 * Generate a synthetic pair with hidden columns. Writes `X1.csv`, `X2_masked.csv`, `mask.json`,
 * `truth.csv` (X2 before masking), `labels.csv` (component of each X2 row) and `manifest.json`.
 * An invalid or unsatisfiable spec exits with 2.
 */
inline int cmd_simulate(const std::filesystem::path& spec_path, const std::filesystem::path& out_dir, std::ostream& err = std::cerr) {
    RunManifest manifest;
    manifest.command = "simulate";
    manifest.inputs = {{"spec", spec_path}};
    manifest.out_dir = out_dir;
    manifest.started_at = internal::utc_timestamp();
    if (!internal::check_paths(manifest, {"X1.csv", "X2_masked.csv", "mask.json", "truth.csv", "labels.csv", "manifest.json"}, err)) {
        return exit_code::usage;
    }
    try {
        const auto spec = parse_simulation_spec(internal::read_file(spec_path), spec_path.string());
        const auto pair = generate_batch_pair(spec.mixture);
        const auto patch = apply_patch_mask(pair.x2, spec.mask_cols);

        std::filesystem::create_directories(out_dir);
        write_csv(pair.x1, out_dir / "X1.csv");
        write_csv(patch.x_masked, out_dir / "X2_masked.csv");
        write_csv(pair.x2, out_dir / "truth.csv");
        internal::write_file(out_dir / "mask.json", format_mask(patch.mask, pair.x2.col_names()));
        internal::write_file(out_dir / "labels.csv", format_labels(pair.labels2));
        internal::write_manifest(manifest);
        return exit_code::ok;
    } catch (const ParseError& e) {
        emit_parse_error(err, e);
        return exit_code::usage;
    } catch (const std::exception& e) {
        emit_diagnostic(err, "error", e.what());
        return exit_code::usage;
    }
}

/**
 * @brief Inputs of `cmd_evaluate()`.
 */
struct EvaluateArgs {
    std::filesystem::path truth_path;
    std::filesystem::path imputed_path;
    std::filesystem::path mask_path;

    /** True component labels of the rows; empty for recovery metrics only. */
    std::filesystem::path labels_path;

    /** Demand clustering metrics even if no labels are given (which is then an error). */
    bool cluster = false;

    /** Seed of the k-means run on the imputed matrix. */
    std::uint64_t seed = 0;
};

/**
 * Print `{"rmse", "mae", "pcc"}` over the masked block, plus `ari`, `nmi` and `purity` of a k-means
 * clustering of the imputed matrix (k = number of distinct true labels) when labels are given.
 */
inline int cmd_evaluate(const EvaluateArgs& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    if (args.cluster && args.labels_path.empty()) {
        emit_diagnostic(err, "error", "clustering metrics requested but no labels file given");
        return exit_code::usage;
    }
    RunManifest manifest;
    manifest.command = "evaluate";
    manifest.inputs = {{"truth", args.truth_path}, {"imputed", args.imputed_path}, {"mask", args.mask_path}};
    if (!args.labels_path.empty()) {
        manifest.inputs.emplace_back("labels", args.labels_path);
    }
    if (!internal::check_paths(manifest, {}, err)) {
        return exit_code::usage;
    }

    try {
        const auto truth = read_csv(args.truth_path);
        const auto imputed = read_csv(args.imputed_path);
        if (truth.rows() != imputed.rows() || truth.cols() != imputed.cols()) {
            emit_diagnostic(err, "error", "truth and imputed shapes differ",
                            {{"truth", {truth.rows(), truth.cols()}}, {"imputed", {imputed.rows(), imputed.cols()}}});
            return exit_code::dimension;
        }
        const auto mask = read_mask(args.mask_path, truth.col_names());
        if (mask.empty()) {
            emit_diagnostic(err, "error", "mask lists no columns", {{"file", args.mask_path.string()}});
            return exit_code::dimension;
        }
        const auto scores = recovery_scores(truth, imputed, mask);

        nlohmann::json result;
        result["rmse"] = scores.rmse;
        result["mae"] = scores.mae;
        result["pcc"] = scores.pcc ? nlohmann::json(*scores.pcc) : nlohmann::json(nullptr);

        if (!args.labels_path.empty()) {
            const auto labels = read_labels(args.labels_path);
            if (labels.size() != imputed.rows()) {
                emit_diagnostic(err, "error", "labels file length differs from the number of rows", {{"labels", labels.size()}, {"rows", imputed.rows()}});
                return exit_code::dimension;
            }
            const std::set<std::string> distinct(labels.begin(), labels.end());
            RngStream rng(args.seed, "evaluate");
            const auto model = kmeans(imputed, distinct.size(), rng);
            const auto agreement = agreement_scores(labels, model.labels);
            result["ari"] = agreement.ari;
            result["nmi"] = agreement.nmi;
            result["purity"] = agreement.purity;
        }
        out << result.dump(2) << '\n';
        return exit_code::ok;
    } catch (const ParseError& e) {
        emit_parse_error(err, e);
        return exit_code::usage;
    } catch (const DimensionError& e) {
        emit_diagnostic(err, "error", e.what());
        return exit_code::dimension;
    } catch (const std::exception& e) {
        emit_diagnostic(err, "error", e.what());
        return exit_code::usage;
    }
}

/**
 * @brief Inputs of `cmd_bench()`.
 *
 * With `vary = "m1"`, each size is the number of reference rows, and the target has `fixed_rows` rows.
 * With `vary = "l"`, each size is the batch size, and both batches have `fixed_rows` rows.
 * Without a config file the run uses 50 iterations and batches of 256. Early stopping is always off.
 */
struct BenchArgs {
    std::vector<std::size_t> sizes;
    std::filesystem::path config_path;
    std::string vary = "m1";
    std::size_t fixed_rows = 2000;
    std::size_t repeats = 3;
    std::uint64_t seed = 0;
};

/**
 * Time `crot_impute()` on synthetic data at each size and print a table with the ratio of each time
 * to the previous one. The fastest of `repeats` runs is reported.
 */
inline int cmd_bench(const BenchArgs& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    if (args.sizes.empty() || !std::is_sorted(args.sizes.begin(), args.sizes.end()) ||
        std::adjacent_find(args.sizes.begin(), args.sizes.end()) != args.sizes.end()) {
        emit_diagnostic(err, "error", "sizes must be a non-empty strictly ascending list");
        return exit_code::usage;
    }
    if (args.vary != "m1" && args.vary != "l") {
        emit_diagnostic(err, "error", "vary must be 'm1' or 'l'", {{"vary", args.vary}});
        return exit_code::usage;
    }
    if (args.repeats == 0 || args.fixed_rows == 0 || args.sizes.front() == 0) {
        emit_diagnostic(err, "error", "sizes, repeats and fixed_rows must be positive");
        return exit_code::usage;
    }

    try {
        CrotConfig cfg;
        if (args.config_path.empty()) {
            cfg.iterations = 50;
            cfg.batch_size = 256;
        } else {
            cfg = read_config(args.config_path);
        }
        cfg.convergence_window = 0;
        cfg.validate();

        MixtureSpec base;
        base.seed = args.seed;
        const auto mask = MaskSpec(default_mask_cols(base.n));

        nlohmann::json rows = nlohmann::json::array();
        double previous = 0;
        for (auto size : args.sizes) {
            MixtureSpec ref_spec = base, target_spec = base;
            CrotConfig run_cfg = cfg;
            if (args.vary == "m1") {
                ref_spec.m_per_batch = size;
                target_spec.m_per_batch = args.fixed_rows;
            } else {
                ref_spec.m_per_batch = args.fixed_rows;
                target_spec.m_per_batch = args.fixed_rows;
                run_cfg.batch_size = size;
            }
            // Both specs share the seed, so the two batches come from the same mixture components.
            const auto x1 = generate_batch_pair(ref_spec).x1;
            const auto x2 = apply_patch_mask(generate_batch_pair(target_spec).x2, mask.missing_cols).x_masked;

            double best = std::numeric_limits<double>::infinity();
            std::size_t k_used = 0;
            for (std::size_t r = 0; r < args.repeats; ++r) {
                const auto run = crot_impute(x1, x2, mask, run_cfg);
                best = std::min(best, run.wall_clock_ms);
                k_used = run.k_used;
            }
            rows.push_back({{"size", size},
                            {"m1", x1.rows()},
                            {"m2", x2.rows()},
                            {"batch_size", std::min({run_cfg.batch_size, x1.rows(), x2.rows()})},
                            {"k_used", k_used},
                            {"wall_clock_ms", best},
                            {"ratio", previous > 0 ? best / previous : 1.0}});
            previous = best;
        }

        nlohmann::json result{{"vary", args.vary}, {"iterations", cfg.iterations}, {"repeats", args.repeats}, {"rows", rows}};
        if (args.vary == "m1") {
            result["batch_size"] = cfg.batch_size;
        }
        out << result.dump(2) << '\n';
        return exit_code::ok;
    } catch (const ParseError& e) {
        emit_parse_error(err, e);
        return exit_code::usage;
    } catch (const std::exception& e) {
        emit_diagnostic(err, "error", e.what());
        return exit_code::usage;
    }
}

}

#endif
