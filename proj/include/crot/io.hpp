#ifndef CROT_IO_HPP
#define CROT_IO_HPP

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <nlohmann/json.hpp>

#include "core.hpp"
#include "imputer.hpp"
#include "synth.hpp"

/**
 * @file io.hpp
 * @brief On-disk formats: CSV matrices, label files, mask JSON, key-value configs and the run report.
 *
 * CSV files are comma-separated with LF line endings. The first line holds feature names;
 * a first column named `row_id` holds row identifiers. Numbers are written with 17 significant digits,
 * so every double survives a write/read cycle unchanged.
 */

namespace crot {

inline constexpr const char* tool_version = "0.1.0";

/**
 * @brief Malformed input, with a 1-based position when one is known (0 otherwise).
 */
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& message, std::string source = {}, std::size_t line = 0, std::size_t column = 0)
        : std::runtime_error(message), source_(std::move(source)), line_(line), column_(column) {}

    const std::string& source() const { return source_; }
    std::size_t line() const { return line_; }
    std::size_t column() const { return column_; }

private:
    std::string source_;
    std::size_t line_;
    std::size_t column_;
};

namespace internal {

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ParseError("cannot open file", path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& contents) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out << contents;
    if (!out) {
        throw std::runtime_error("failed writing " + path.string());
    }
}

inline std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start < text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos) {
            end = text.size();
        }
        auto line = text.substr(start, end - start);
        if (!line.empty() && line.back() == '\r') {
            line.remove_suffix(1);
        }
        lines.push_back(line);
        start = end + 1;
    }
    while (!lines.empty() && lines.back().empty()) {
        lines.pop_back();
    }
    return lines;
}

struct Field {
    std::string_view text;
    std::size_t column;
};

inline std::vector<Field> split_fields(std::string_view line) {
    std::vector<Field> out;
    std::size_t start = 0;
    while (true) {
        auto end = line.find(',', start);
        if (end == std::string_view::npos) {
            out.push_back({line.substr(start), start + 1});
            break;
        }
        out.push_back({line.substr(start, end - start), start + 1});
        start = end + 1;
    }
    return out;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) {
        s.remove_suffix(1);
    }
    return s;
}

inline std::optional<double> parse_double(std::string_view s) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') {
        s.remove_prefix(1);
    }
    double value = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
        return std::nullopt;
    }
    return value;
}

template<typename Int_>
std::optional<Int_> parse_integer(std::string_view s) {
    s = trim(s);
    Int_ value = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
        return std::nullopt;
    }
    return value;
}

}

/**
 * Shortest-round-trip-safe decimal form of `value` with 17 significant digits.
 */
inline std::string format_double(double value) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::general, 17);
    if (ec != std::errc()) {
        throw std::runtime_error("cannot format number");
    }
    return std::string(buf, ptr);
}

/**
 * Parse CSV text into a matrix; `source` only labels error messages.
 */
inline DataMatrix parse_csv(std::string_view text, const std::string& source = "<csv>") {
    auto lines = internal::split_lines(text);
    if (lines.empty()) {
        throw ParseError("empty CSV, expected a header line", source, 1, 1);
    }

    auto header = internal::split_fields(lines.front());
    const bool has_ids = !header.empty() && internal::trim(header.front().text) == "row_id";
    std::vector<std::string> names;
    for (std::size_t f = has_ids ? 1 : 0; f < header.size(); ++f) {
        auto name = internal::trim(header[f].text);
        if (name.empty()) {
            throw ParseError("empty column name", source, 1, header[f].column);
        }
        names.emplace_back(name);
    }
    const std::size_t ncol = names.size();
    const std::size_t nrow = lines.size() - 1;

    DataMatrix out(nrow, ncol);
    std::vector<std::string> ids;
    for (std::size_t r = 0; r < nrow; ++r) {
        const std::size_t line_no = r + 2;
        auto fields = internal::split_fields(lines[r + 1]);
        if (fields.size() != header.size()) {
            throw ParseError("expected " + std::to_string(header.size()) + " fields, found " + std::to_string(fields.size()), source, line_no, 1);
        }
        std::size_t offset = 0;
        if (has_ids) {
            ids.emplace_back(internal::trim(fields.front().text));
            offset = 1;
        }
        for (std::size_t c = 0; c < ncol; ++c) {
            const auto& field = fields[c + offset];
            auto value = internal::parse_double(field.text);
            if (!value) {
                throw ParseError("invalid number '" + std::string(field.text) + "'", source, line_no, field.column);
            }
            if (!std::isfinite(*value)) {
                throw ParseError("non-finite value '" + std::string(field.text) + "'", source, line_no, field.column);
            }
            out(r, c) = *value;
        }
    }

    try {
        out.set_col_names(std::move(names));
    } catch (const ArgumentError& e) {
        throw ParseError(e.what(), source, 1, 1);
    }
    if (has_ids) {
        out.set_row_ids(std::move(ids));
    }
    return out;
}

inline DataMatrix read_csv(const std::filesystem::path& path) {
    return parse_csv(internal::read_file(path), path.string());
}

/**
 * CSV text for `x`. Missing column names are written as `c0, c1, ...`.
 */
inline std::string format_csv(const DataMatrix& x) {
    std::string out;
    out.reserve(x.size() * 24 + 64);
    const bool ids = x.has_row_ids();
    if (ids) {
        out += "row_id";
    }
    for (std::size_t c = 0; c < x.cols(); ++c) {
        if (ids || c > 0) {
            out += ',';
        }
        out += x.has_col_names() ? x.col_names()[c] : "c" + std::to_string(c);
    }
    out += '\n';
    for (std::size_t r = 0; r < x.rows(); ++r) {
        if (ids) {
            out += x.row_ids()[r];
        }
        for (std::size_t c = 0; c < x.cols(); ++c) {
            if (ids || c > 0) {
                out += ',';
            }
            out += format_double(x(r, c));
        }
        out += '\n';
    }
    return out;
}

inline void write_csv(const DataMatrix& x, const std::filesystem::path& path) {
    internal::write_file(path, format_csv(x));
}

/**
 * Labels file: a header line followed by one label per line.
 */
inline std::vector<std::string> parse_labels(std::string_view text, const std::string& source = "<labels>") {
    auto lines = internal::split_lines(text);
    if (lines.empty()) {
        throw ParseError("empty labels file, expected a header line", source, 1, 1);
    }
    std::vector<std::string> out;
    for (std::size_t r = 1; r < lines.size(); ++r) {
        auto label = internal::trim(lines[r]);
        if (label.empty() || label.find(',') != std::string_view::npos) {
            throw ParseError("expected exactly one non-empty label", source, r + 1, 1);
        }
        out.emplace_back(label);
    }
    return out;
}

inline std::vector<std::string> read_labels(const std::filesystem::path& path) {
    return parse_labels(internal::read_file(path), path.string());
}

template<typename Label_>
std::string format_labels(const std::vector<Label_>& labels) {
    std::ostringstream out;
    out << "label\n";
    for (const auto& l : labels) {
        out << l << '\n';
    }
    return out.str();
}

/**
 * Parse `{"missing_cols": [...]}`. Entries are column names, resolved against `col_names`,
 * or integer indices. Range checks against the matrix are left to `MaskSpec::validate()`.
 */
inline MaskSpec parse_mask(std::string_view text, const std::vector<std::string>& col_names, const std::string& source = "<mask>") {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("invalid JSON: ") + e.what(), source, 0, e.byte);
    }
    if (!doc.is_object() || !doc.contains("missing_cols") || !doc["missing_cols"].is_array()) {
        throw ParseError("expected an object with a \"missing_cols\" array", source);
    }
    std::map<std::string, std::size_t> lookup;
    for (std::size_t c = 0; c < col_names.size(); ++c) {
        lookup.emplace(col_names[c], c);
    }
    std::vector<std::size_t> cols;
    for (const auto& entry : doc["missing_cols"]) {
        if (entry.is_number_unsigned()) {
            cols.push_back(entry.get<std::size_t>());
        } else if (entry.is_string()) {
            auto it = lookup.find(entry.get<std::string>());
            if (it == lookup.end()) {
                throw DimensionError("masked column '" + entry.get<std::string>() + "' is not in the header");
            }
            cols.push_back(it->second);
        } else {
            throw ParseError("missing_cols entries must be names or non-negative integers", source);
        }
    }
    return MaskSpec(std::move(cols));
}

inline MaskSpec read_mask(const std::filesystem::path& path, const std::vector<std::string>& col_names) {
    return parse_mask(internal::read_file(path), col_names, path.string());
}

/**
 * Mask JSON listing column names when `col_names` is non-empty, indices otherwise.
 */
inline std::string format_mask(const MaskSpec& mask, const std::vector<std::string>& col_names) {
    nlohmann::json cols = nlohmann::json::array();
    for (auto j : mask.missing_cols) {
        if (col_names.empty()) {
            cols.push_back(j);
        } else {
            cols.push_back(col_names.at(j));
        }
    }
    return nlohmann::json{{"missing_cols", cols}}.dump(2) + "\n";
}

namespace internal {

/**
 * `key = value` lines; `#` starts a comment. Every key may appear once.
 * `apply` returns false for unknown keys and throws `ParseError` (without position) for bad values.
 */
template<typename Apply_>
void parse_key_values(std::string_view text, const std::string& source, Apply_ apply) {
    auto lines = split_lines(text);
    std::map<std::string, std::size_t> seen;
    for (std::size_t n = 0; n < lines.size(); ++n) {
        std::string_view line = lines[n];
        if (auto hash = line.find('#'); hash != std::string_view::npos) {
            line = line.substr(0, hash);
        }
        if (trim(line).empty()) {
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ParseError("expected 'key = value'", source, n + 1, 1);
        }
        std::string key(trim(line.substr(0, eq)));
        auto raw = line.substr(eq + 1);
        auto value = trim(raw);
        const auto lead = raw.find_first_not_of(" \t");
        const std::size_t value_col = eq + 2 + (lead == std::string_view::npos ? 0 : lead);
        if (!seen.emplace(key, n + 1).second) {
            throw ParseError("duplicate key '" + key + "'", source, n + 1, 1);
        }
        try {
            if (!apply(key, value)) {
                throw ParseError("unknown key '" + key + "'", source, n + 1, 1);
            }
        } catch (const ParseError& e) {
            if (e.line() != 0) {
                throw;
            }
            throw ParseError(e.what(), source, n + 1, value_col);
        }
    }
}

template<typename T_>
T_ require_integer(std::string_view key, std::string_view value) {
    auto v = parse_integer<T_>(value);
    if (!v) {
        throw ParseError("'" + std::string(key) + "' expects an integer, got '" + std::string(value) + "'");
    }
    return *v;
}

inline double require_double(std::string_view key, std::string_view value) {
    auto v = parse_double(value);
    if (!v || !std::isfinite(*v)) {
        throw ParseError("'" + std::string(key) + "' expects a number, got '" + std::string(value) + "'");
    }
    return *v;
}

}

/**
 * Parse a configuration whose keys are exactly the `CrotConfig` field names.
 * `epsilon` and `k` also accept `auto`. Omitted keys keep their defaults; unknown keys are rejected.
 */
inline CrotConfig parse_config(std::string_view text, const std::string& source = "<config>") {
    using internal::require_double;
    using internal::require_integer;
    CrotConfig cfg;
    internal::parse_key_values(text, source, [&](const std::string& key, std::string_view value) {
        if (key == "epsilon") {
            cfg.epsilon = value == "auto" ? std::nullopt : std::optional<double>(require_double(key, value));
        } else if (key == "p") {
            cfg.p = require_integer<int>(key, value);
        } else if (key == "alpha") {
            cfg.alpha = require_double(key, value);
        } else if (key == "iterations") {
            cfg.iterations = require_integer<std::size_t>(key, value);
        } else if (key == "batch_size") {
            cfg.batch_size = require_integer<std::size_t>(key, value);
        } else if (key == "k") {
            cfg.k = value == "auto" ? std::nullopt : std::optional<std::size_t>(require_integer<std::size_t>(key, value));
        } else if (key == "k_max") {
            cfg.k_max = require_integer<std::size_t>(key, value);
        } else if (key == "learning_rate") {
            cfg.learning_rate = require_double(key, value);
        } else if (key == "adam_beta1") {
            cfg.adam_beta1 = require_double(key, value);
        } else if (key == "adam_beta2") {
            cfg.adam_beta2 = require_double(key, value);
        } else if (key == "adam_eps") {
            cfg.adam_eps = require_double(key, value);
        } else if (key == "seed") {
            cfg.seed = require_integer<std::uint64_t>(key, value);
        } else if (key == "sinkhorn_max_iter") {
            cfg.sinkhorn_max_iter = require_integer<std::size_t>(key, value);
        } else if (key == "sinkhorn_tol") {
            cfg.sinkhorn_tol = require_double(key, value);
        } else if (key == "convergence_window") {
            cfg.convergence_window = require_integer<std::size_t>(key, value);
        } else if (key == "convergence_rel_tol") {
            cfg.convergence_rel_tol = require_double(key, value);
        } else {
            return false;
        }
        return true;
    });
    return cfg;
}

inline CrotConfig read_config(const std::filesystem::path& path) {
    return parse_config(internal::read_file(path), path.string());
}

inline std::string format_config(const CrotConfig& cfg) {
    std::ostringstream out;
    out << "epsilon = " << (cfg.epsilon ? format_double(*cfg.epsilon) : "auto") << '\n'
        << "p = " << cfg.p << '\n'
        << "alpha = " << format_double(cfg.alpha) << '\n'
        << "iterations = " << cfg.iterations << '\n'
        << "batch_size = " << cfg.batch_size << '\n'
        << "k = " << (cfg.k ? std::to_string(*cfg.k) : "auto") << '\n'
        << "k_max = " << cfg.k_max << '\n'
        << "learning_rate = " << format_double(cfg.learning_rate) << '\n'
        << "adam_beta1 = " << format_double(cfg.adam_beta1) << '\n'
        << "adam_beta2 = " << format_double(cfg.adam_beta2) << '\n'
        << "adam_eps = " << format_double(cfg.adam_eps) << '\n'
        << "seed = " << cfg.seed << '\n'
        << "sinkhorn_max_iter = " << cfg.sinkhorn_max_iter << '\n'
        << "sinkhorn_tol = " << format_double(cfg.sinkhorn_tol) << '\n'
        << "convergence_window = " << cfg.convergence_window << '\n'
        << "convergence_rel_tol = " << format_double(cfg.convergence_rel_tol) << '\n';
    return out.str();
}

/**
 * @brief Input of the `simulate` command: a mixture and the columns to hide in the second batch.
 */
struct SimulationSpec {
    MixtureSpec mixture;
    std::vector<std::size_t> mask_cols;
};

/**
 * Same key-value syntax as `parse_config()`, with keys `k_true`, `n`, `m_per_batch`, `separation`,
 * `sigma`, `seed` and `mask_cols` (comma-separated indices; default: the last quarter of the columns).
 */
inline SimulationSpec parse_simulation_spec(std::string_view text, const std::string& source = "<spec>") {
    using internal::require_double;
    using internal::require_integer;
    SimulationSpec spec;
    bool have_mask = false;
    internal::parse_key_values(text, source, [&](const std::string& key, std::string_view value) {
        if (key == "k_true") {
            spec.mixture.k_true = require_integer<std::size_t>(key, value);
        } else if (key == "n") {
            spec.mixture.n = require_integer<std::size_t>(key, value);
        } else if (key == "m_per_batch") {
            spec.mixture.m_per_batch = require_integer<std::size_t>(key, value);
        } else if (key == "separation") {
            spec.mixture.separation = require_double(key, value);
        } else if (key == "sigma") {
            spec.mixture.sigma = require_double(key, value);
        } else if (key == "seed") {
            spec.mixture.seed = require_integer<std::uint64_t>(key, value);
        } else if (key == "mask_cols") {
            have_mask = true;
            for (const auto& field : internal::split_fields(value)) {
                spec.mask_cols.push_back(require_integer<std::size_t>(key, field.text));
            }
        } else {
            return false;
        }
        return true;
    });
    try {
        spec.mixture.validate();
    } catch (const ArgumentError& e) {
        throw ParseError(e.what(), source);
    }
    if (!have_mask) {
        spec.mask_cols = default_mask_cols(spec.mixture.n);
    }
    if (spec.mask_cols.empty()) {
        throw ParseError("mask_cols selects no columns", source);
    }
    for (auto j : spec.mask_cols) {
        if (j >= spec.mixture.n) {
            throw ParseError("mask column " + std::to_string(j) + " is out of range for n = " + std::to_string(spec.mixture.n), source);
        }
    }
    return spec;
}

inline nlohmann::json config_to_json(const CrotConfig& cfg) {
    nlohmann::json out;
    out["epsilon"] = cfg.epsilon ? nlohmann::json(*cfg.epsilon) : nlohmann::json("auto");
    out["p"] = cfg.p;
    out["alpha"] = cfg.alpha;
    out["iterations"] = cfg.iterations;
    out["batch_size"] = cfg.batch_size;
    out["k"] = cfg.k ? nlohmann::json(*cfg.k) : nlohmann::json("auto");
    out["k_max"] = cfg.k_max;
    out["learning_rate"] = cfg.learning_rate;
    out["adam_beta1"] = cfg.adam_beta1;
    out["adam_beta2"] = cfg.adam_beta2;
    out["adam_eps"] = cfg.adam_eps;
    out["seed"] = cfg.seed;
    out["sinkhorn_max_iter"] = cfg.sinkhorn_max_iter;
    out["sinkhorn_tol"] = cfg.sinkhorn_tol;
    out["convergence_window"] = cfg.convergence_window;
    out["convergence_rel_tol"] = cfg.convergence_rel_tol;
    return out;
}

/**
 * The run report written next to the imputed matrix.
 */
inline nlohmann::json report_to_json(const ImputationRun& run) {
    nlohmann::json out;
    out["tool_version"] = tool_version;
    out["status"] = run.status == RunStatus::ok ? "ok" : "numeric_abort";
    if (run.status != RunStatus::ok) {
        out["abort_reason"] = run.abort_reason;
    }
    out["k_used"] = run.k_used;
    out["converged_at"] = run.converged_at ? nlohmann::json(*run.converged_at) : nlohmann::json(nullptr);
    out["iterations_run"] = run.loss_history.size();
    out["wall_clock_ms"] = run.wall_clock_ms;
    out["config"] = config_to_json(run.config_echo);
    auto history = nlohmann::json::array();
    for (const auto& rec : run.loss_history) {
        history.push_back({{"iteration", rec.iteration}, {"data_term", rec.data_term}, {"cluster_term", rec.cluster_term}, {"total", rec.total}});
    }
    out["loss_history"] = std::move(history);
    out["warnings"] = run.warnings;
    return out;
}

}

#endif
