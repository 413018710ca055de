#pragma once

// Experiment configuration, execution and CSV emission for the limuon CLI.
//
// Config documents are JSON with a `schema_version` field; see
// docs/config_schema.md. Unknown keys are rejected at every level.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <thread>
#include <tuple>
#include <unistd.h>
#include <utility>
#include <vector>

#include "json.hpp"
#include "limuon/metrics.hpp"
#include "limuon/objectives.hpp"
#include "limuon/optimizer.hpp"

namespace limuon::harness {

using nlohmann::json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitInsufficientData = 3;
inline constexpr int kExitDiverged = 4;

inline constexpr int kSchemaVersion = 1;
inline constexpr std::string_view kCsvHeader =
    "experiment,variant,T,seed,t,loss,grad_fro,grad_nuc,est_err,state_elems,wall_ms";

/// Invalid configuration or command-line usage.
class config_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Not enough data to produce a report.
class insufficient_data : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class ProblemKind { noisy_quadratic, quartic, lowrank_target };

inline ProblemKind parse_problem_kind(std::string_view name)
{
    if (name == "noisy_quadratic") {
        return ProblemKind::noisy_quadratic;
    }
    if (name == "quartic") {
        return ProblemKind::quartic;
    }
    if (name == "lowrank_target") {
        return ProblemKind::lowrank_target;
    }
    throw config_error("unknown problem kind '" + std::string(name) + "'");
}

inline std::string_view to_string(ProblemKind kind)
{
    switch (kind) {
    case ProblemKind::noisy_quadratic:
        return "noisy_quadratic";
    case ProblemKind::quartic:
        return "quartic";
    default:
        return "lowrank_target";
    }
}

struct ProblemSpec {
    ProblemKind kind = ProblemKind::noisy_quadratic;
    std::size_t m = 16;
    std::size_t n = 8;
    std::size_t samples = 64;
    double noise_scale = 0.01;
    std::size_t true_rank = 2;
    std::uint64_t seed = 0;
};

struct ExperimentSpec {
    std::string experiment = "experiment";
    ProblemSpec problem;
    /// Shared settings; `variant` and `horizon` are overwritten per sweep entry.
    OptimizerConfig optimizer;
    std::vector<OptimizerVariant> variants;
    std::vector<std::size_t> horizons;
    std::size_t repeats = 1;
    std::filesystem::path output = "results.csv";
    bool timing = false;
};

inline StochasticOracle build_oracle(const ProblemSpec& p)
{
    Rng rng(p.seed);
    switch (p.kind) {
    case ProblemKind::noisy_quadratic:
        return noisy_quadratic(p.m, p.n, p.samples, p.noise_scale, rng);
    case ProblemKind::quartic: {
        const Matrix center = gaussian_matrix(p.m, p.n, rng);
        return quartic_oracle(center, p.samples, p.noise_scale, rng);
    }
    default:
        return lowrank_target_oracle(p.m, p.n, p.true_rank, p.samples, p.noise_scale, rng);
    }
}

namespace detail {

inline void reject_unknown_keys(const json& obj, std::initializer_list<std::string_view> allowed, std::string_view where)
{
    if (!obj.is_object()) {
        throw config_error(std::string(where) + " must be a JSON object");
    }
    for (const auto& [key, _] : obj.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            throw config_error("unknown key '" + key + "' in " + std::string(where));
        }
    }
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback)
{
    if (!obj.contains(key)) {
        return fallback;
    }
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw config_error(std::string("bad value for '") + key + "': " + e.what());
    }
}

inline std::size_t get_size(const json& obj, const char* key, std::size_t fallback)
{
    if (!obj.contains(key)) {
        return fallback;
    }
    const json& v = obj.at(key);
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
        throw config_error(std::string("'") + key + "' must be a non-negative integer");
    }
    return v.get<std::size_t>();
}

inline std::vector<std::size_t> get_sizes(const json& obj, const char* key, std::size_t fallback)
{
    if (!obj.contains(key)) {
        return {fallback};
    }
    const json& v = obj.at(key);
    if (!v.is_array()) {
        return {get_size(obj, key, fallback)};
    }
    std::vector<std::size_t> out;
    for (const auto& item : v) {
        if (!item.is_number_integer() || item.get<std::int64_t>() < 0) {
            throw config_error(std::string("'") + key + "' entries must be non-negative integers");
        }
        out.push_back(item.get<std::size_t>());
    }
    if (out.empty()) {
        throw config_error(std::string("'") + key + "' must not be empty");
    }
    return out;
}

inline OptimizerVariant parse_variant(std::string_view name, const json& opt)
{
    if (name == "muon") {
        return Muon{get_or(opt, "momentum", 0.9)};
    }
    if (name == "limuon_opt1") {
        return LiMuonOpt1{};
    }
    if (name == "limuon_opt2") {
        return LiMuonOpt2{RsvdParams{get_size(opt, "rank", 8), get_size(opt, "oversampling", 5)}};
    }
    throw config_error("unknown optimizer variant '" + std::string(name) + "'");
}

}  // namespace detail

/// Parses and validates an experiment document.
inline ExperimentSpec parse_spec(const json& doc)
{
    using detail::get_or;
    using detail::get_size;
    detail::reject_unknown_keys(doc, {"schema_version", "experiment", "problem", "optimizer", "repeats", "output", "timing"},
                                "config");
    if (!doc.contains("schema_version") || !doc.at("schema_version").is_number_integer() ||
        doc.at("schema_version").get<int>() != kSchemaVersion) {
        throw config_error("config: schema_version must be " + std::to_string(kSchemaVersion));
    }

    ExperimentSpec spec;
    spec.experiment = get_or<std::string>(doc, "experiment", spec.experiment);
    if (spec.experiment.empty() || spec.experiment.find_first_of(",\n\r\"") != std::string::npos) {
        throw config_error("experiment name must be non-empty and free of commas, quotes and newlines");
    }
    spec.repeats = get_size(doc, "repeats", 1);
    spec.output = get_or<std::string>(doc, "output", spec.output.string());
    spec.timing = get_or(doc, "timing", false);

    const json problem = doc.value("problem", json::object());
    detail::reject_unknown_keys(problem, {"kind", "m", "n", "samples", "noise_scale", "true_rank", "seed"}, "problem");
    ProblemSpec& p = spec.problem;
    p.kind = parse_problem_kind(get_or<std::string>(problem, "kind", "noisy_quadratic"));
    p.m = get_size(problem, "m", p.m);
    p.n = get_size(problem, "n", p.n);
    p.samples = get_size(problem, "samples", p.samples);
    p.noise_scale = get_or(problem, "noise_scale", p.noise_scale);
    p.true_rank = get_size(problem, "true_rank", p.true_rank);
    p.seed = get_or<std::uint64_t>(problem, "seed", p.seed);

    const json opt = doc.value("optimizer", json::object());
    detail::reject_unknown_keys(opt,
                                {"variant", "momentum", "rank", "oversampling", "eta0", "beta0", "horizon", "schedule",
                                 "orthogonalizer", "ns_iters", "seed"},
                                "optimizer");
    OptimizerConfig& c = spec.optimizer;
    c = default_config(p.m == 0 ? 1 : p.m, p.n == 0 ? 1 : p.n);
    c.eta0 = get_or(opt, "eta0", c.eta0);
    c.beta0 = get_or(opt, "beta0", c.beta0);
    c.seed = get_or<std::uint64_t>(opt, "seed", c.seed);

    const std::string schedule = get_or<std::string>(opt, "schedule", "two_thirds_power");
    if (schedule == "constant") {
        c.schedule = Schedule::constant;
    } else if (schedule == "two_thirds_power") {
        c.schedule = Schedule::two_thirds_power;
    } else {
        throw config_error("unknown schedule '" + schedule + "'");
    }

    const std::string orth = get_or<std::string>(opt, "orthogonalizer", "svd");
    if (orth == "svd") {
        c.orthogonalizer = ExactSvd{};
    } else if (orth == "newton_schulz") {
        c.orthogonalizer = NewtonSchulz{static_cast<int>(get_size(opt, "ns_iters", 30))};
    } else {
        throw config_error("unknown orthogonalizer '" + orth + "'");
    }

    const json variant = opt.value("variant", json("limuon_opt1"));
    if (variant.is_string()) {
        spec.variants.push_back(detail::parse_variant(variant.get<std::string>(), opt));
    } else if (variant.is_array() && !variant.empty()) {
        for (const auto& v : variant) {
            if (!v.is_string()) {
                throw config_error("optimizer.variant entries must be strings");
            }
            spec.variants.push_back(detail::parse_variant(v.get<std::string>(), opt));
        }
    } else {
        throw config_error("optimizer.variant must be a string or a non-empty array of strings");
    }
    spec.horizons = detail::get_sizes(opt, "horizon", 100);

    // Semantic checks.
    if (p.m < 1 || p.n < 1) {
        throw config_error("problem dimensions must be positive");
    }
    if (p.samples < 1) {
        throw config_error("problem.samples must be at least 1");
    }
    if (!(p.noise_scale >= 0.0)) {
        throw config_error("problem.noise_scale must be non-negative");
    }
    if (p.kind == ProblemKind::lowrank_target && (p.true_rank < 1 || p.true_rank > std::min(p.m, p.n))) {
        throw config_error("problem.true_rank must lie in [1, min(m, n)]");
    }
    if (spec.repeats < 1) {
        throw config_error("repeats must be at least 1");
    }
    for (const auto& v : spec.variants) {
        OptimizerConfig probe = c;
        probe.variant = v;
        try {
            limuon::detail::validate_config(probe, p.m, p.n);
        } catch (const std::invalid_argument& e) {
            throw config_error(e.what());
        }
    }
    return spec;
}

/// Applies `path.to.key=value`. The value is parsed as JSON when possible and
/// taken as a string otherwise.
inline void apply_override(json& doc, std::string_view assignment)
{
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos || eq == 0) {
        throw config_error("override must look like key=value: '" + std::string(assignment) + "'");
    }
    const std::string key(assignment.substr(0, eq));
    const std::string raw(assignment.substr(eq + 1));
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) {
        value = raw;
    }
    json* node = &doc;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) {
            throw config_error("override key has an empty component: '" + key + "'");
        }
        if (!node->is_object()) {
            throw config_error("override path '" + key + "' crosses a non-object value");
        }
        if (dot == std::string::npos) {
            (*node)[part] = std::move(value);
            return;
        }
        node = &(*node)[part];
        if (node->is_null()) {
            *node = json::object();
        }
        start = dot + 1;
    }
}

inline json load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw config_error("cannot open config '" + path.string() + "'");
    }
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) {
        throw config_error("config '" + path.string() + "' is not valid JSON");
    }
    return doc;
}

/// Shortest round-trip decimal form.
inline std::string format_double(double x)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

struct RunRows {
    std::string text;
    bool diverged = false;
};

/// CSV rows for one (variant, horizon, seed) run.
inline RunRows run_rows(const ExperimentSpec& spec, const StochasticOracle& oracle, const OptimizerConfig& config)
{
    const RunOutcome outcome = run_optimizer(config, oracle, Matrix(spec.problem.m, spec.problem.n));
    const std::string prefix = spec.experiment + "," + std::string(variant_name(config.variant)) + "," +
                               std::to_string(config.horizon) + "," + std::to_string(config.seed) + ",";
    std::string text;
    for (const auto& r : outcome.records) {
        text += prefix;
        text += std::to_string(r.t) + ",";
        text += format_double(r.loss) + ",";
        text += format_double(r.grad_frobenius) + ",";
        text += format_double(r.grad_nuclear) + ",";
        text += format_double(r.estimator_error) + ",";
        text += std::to_string(r.state_elements) + ",";
        text += spec.timing ? format_double(r.wall_ms) : std::string("0");
        text += '\n';
    }
    if (outcome.diverged_at) {
        text += prefix + std::to_string(*outcome.diverged_at) + ",diverged,,,,,\n";
    }
    return {std::move(text), outcome.diverged_at.has_value()};
}

/// Writes `content` to a sibling temp file and renames it over `path`.
inline void write_atomically(const std::filesystem::path& path, std::string_view content)
{
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::filesystem::path tmp = path;
    tmp += ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw std::runtime_error("cannot write '" + tmp.string() + "'");
        }
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) {
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            throw std::runtime_error("write failed for '" + tmp.string() + "'");
        }
    }
    std::filesystem::rename(tmp, path);
}

/// Output path for one variant: the configured path itself when there is a
/// single variant, otherwise `<stem>.<variant><ext>` next to it.
inline std::filesystem::path output_path_for(const ExperimentSpec& spec, const OptimizerVariant& variant)
{
    if (spec.variants.size() == 1) {
        return spec.output;
    }
    std::filesystem::path p = spec.output;
    const std::string ext = p.extension().string();
    p.replace_filename(p.stem().string() + "." + std::string(variant_name(variant)) + (ext.empty() ? ".csv" : ext));
    return p;
}

struct ExperimentResult {
    std::vector<std::filesystem::path> files;
    bool diverged = false;
};

/// Runs every (variant, horizon, seed) combination. Repeats use seeds
/// seed, seed+1, …; runs execute on worker threads and their rows are
/// concatenated in (horizon, seed) order, so the file does not depend on
/// scheduling.
inline ExperimentResult run_experiment(const ExperimentSpec& spec, unsigned workers = 0)
{
    const StochasticOracle oracle = build_oracle(spec.problem);
    ExperimentResult result;

    for (const auto& variant : spec.variants) {
        std::vector<OptimizerConfig> jobs;
        for (std::size_t horizon : spec.horizons) {
            for (std::size_t k = 0; k < spec.repeats; ++k) {
                OptimizerConfig c = spec.optimizer;
                c.variant = variant;
                c.horizon = horizon;
                c.seed = spec.optimizer.seed + k;
                jobs.push_back(c);
            }
        }
        std::vector<RunRows> rows(jobs.size());
        std::atomic<std::size_t> next{0};
        auto work = [&] {
            for (std::size_t j = next++; j < jobs.size(); j = next++) {
                rows[j] = run_rows(spec, oracle, jobs[j]);
            }
        };
        unsigned count = workers != 0 ? workers : std::max(1u, std::thread::hardware_concurrency());
        count = static_cast<unsigned>(std::min<std::size_t>(count, jobs.size()));
        if (count <= 1) {
            work();
        } else {
            std::vector<std::jthread> pool;
            for (unsigned i = 0; i < count; ++i) {
                pool.emplace_back(work);
            }
        }

        std::string content(kCsvHeader);
        content += '\n';
        for (const auto& r : rows) {
            content += r.text;
            result.diverged = result.diverged || r.diverged;
        }
        const auto path = output_path_for(spec, variant);
        write_atomically(path, content);
        result.files.push_back(path);
    }
    return result;
}

struct GradcheckReport {
    ProblemKind kind;
    std::vector<double> relative_errors;
    double max_relative_error = 0.0;
};

inline constexpr double kGradcheckStep = 1e-5;
inline constexpr double kGradcheckThreshold = 1e-4;

/// Compares full_grad against central differences at five seeded probe
/// points. Relative error is ‖fd − g‖_F / max(1, ‖g‖_F).
inline GradcheckReport gradcheck(const ProblemSpec& problem)
{
    const StochasticOracle oracle = build_oracle(problem);
    Rng probe_rng(mix_seed(problem.seed ^ 0x67726164ULL));
    GradcheckReport report{problem.kind, {}, 0.0};
    for (int k = 0; k < 5; ++k) {
        const Matrix w = oracle.target_mean() + gaussian_matrix(problem.m, problem.n, probe_rng);
        const Matrix exact = oracle.full_grad(w);
        const Matrix fd = finite_diff_grad(oracle, w, kGradcheckStep);
        const double rel = frobenius_norm(fd - exact) / std::max(1.0, frobenius_norm(exact));
        report.relative_errors.push_back(rel);
        report.max_relative_error = std::max(report.max_relative_error, rel);
    }
    return report;
}

namespace detail {

inline std::vector<std::string_view> split_csv(std::string_view line)
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos) {
            return out;
        }
        start = comma + 1;
    }
}

template <typename T>
T parse_number(std::string_view s, const std::string& where)
{
    T value{};
    const auto res = std::from_chars(s.data(), s.data() + s.size(), value);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw config_error("malformed number '" + std::string(s) + "' in " + where);
    }
    return value;
}

}  // namespace detail

/// Reads result CSVs, averages grad_nuc over each run (experiment, variant,
/// T, seed), averages runs per T and fits the log-log slope. Diverged runs
/// are skipped.
inline RateFit rate_report(const std::vector<std::filesystem::path>& files)
{
    using RunKey = std::tuple<std::string, std::string, std::size_t, std::uint64_t>;
    std::map<RunKey, std::pair<double, std::size_t>> runs;
    std::map<RunKey, bool> diverged;

    for (const auto& path : files) {
        std::ifstream in(path);
        if (!in) {
            throw config_error("cannot open '" + path.string() + "'");
        }
        std::string line;
        if (!std::getline(in, line)) {
            continue;
        }
        if (line != kCsvHeader) {
            throw config_error("'" + path.string() + "' does not carry the expected header");
        }
        while (std::getline(in, line)) {
            if (line.empty()) {
                continue;
            }
            const auto f = detail::split_csv(line);
            if (f.size() != 11) {
                throw config_error("malformed row in '" + path.string() + "'");
            }
            RunKey key{std::string(f[0]), std::string(f[1]), detail::parse_number<std::size_t>(f[2], path.string()),
                       detail::parse_number<std::uint64_t>(f[3], path.string())};
            if (f[5] == "diverged") {
                diverged[key] = true;
                continue;
            }
            auto& [sum, count] = runs[key];
            sum += detail::parse_number<double>(f[7], path.string());
            ++count;
        }
    }

    std::map<std::size_t, std::pair<double, std::size_t>> by_horizon;
    for (const auto& [key, acc] : runs) {
        if (diverged.contains(key) || acc.second == 0) {
            continue;
        }
        auto& [sum, count] = by_horizon[std::get<2>(key)];
        sum += acc.first / static_cast<double>(acc.second);
        ++count;
    }
    if (by_horizon.size() < 3) {
        throw insufficient_data("rate report needs at least three horizons, found " + std::to_string(by_horizon.size()));
    }
    std::vector<RatePoint> points;
    for (const auto& [horizon, acc] : by_horizon) {
        points.push_back({static_cast<double>(horizon), acc.first / static_cast<double>(acc.second), acc.second});
    }
    return fit_power_law(std::move(points));
}

inline json rate_fit_json(const RateFit& fit)
{
    json points = json::array();
    for (const auto& p : fit.points) {
        points.push_back({{"T", p.horizon}, {"avg_nuclear", p.avg_nuclear}, {"runs", p.runs}});
    }
    return {{"slope", fit.slope}, {"intercept", fit.intercept}, {"r_squared", fit.r_squared}, {"points", points}};
}

/// State-memory figures per variant: the closed form and the element count
/// measured after one optimizer step on an m×n quadratic.
inline json memory_report(std::size_t m, std::size_t n, const RsvdParams& params)
{
    try {
        params.validate(m, n);
    } catch (const std::invalid_argument& e) {
        throw config_error(e.what());
    }
    Rng rng(0);
    const StochasticOracle oracle = noisy_quadratic(m, n, 2, 0.1, rng);
    json rows = json::array();
    for (const OptimizerVariant& v : {OptimizerVariant{Muon{}}, OptimizerVariant{LiMuonOpt1{}}, OptimizerVariant{LiMuonOpt2{params}}}) {
        OptimizerConfig c = default_config(m, n);
        c.variant = v;
        c.horizon = 1;
        const RunOutcome out = run_optimizer(c, oracle, Matrix(m, n));
        rows.push_back({{"variant", variant_name(v)},
                        {"formula", state_memory(c, m, n)},
                        {"measured", out.records.front().state_elements}});
    }
    return {{"m", m}, {"n", n}, {"rank", params.rank}, {"oversampling", params.oversampling}, {"variants", rows}};
}

}  // namespace limuon::harness
