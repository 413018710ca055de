// limuon: run experiments, check gradients, and report rates and memory.

#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "limuon/harness.hpp"

namespace {

using limuon::harness::json;
namespace h = limuon::harness;

json base_document(const std::string& config_path, const std::vector<std::string>& overrides)
{
    json doc = config_path.empty() ? json{{"schema_version", h::kSchemaVersion}} : h::load_config(config_path);
    for (const auto& o : overrides) {
        h::apply_override(doc, o);
    }
    return doc;
}

int cmd_run(const std::string& config, const std::vector<std::string>& overrides, const std::string& out,
            std::optional<std::size_t> seeds, bool timing)
{
    json doc = base_document(config, overrides);
    if (!out.empty()) {
        doc["output"] = out;
    }
    if (seeds) {
        doc["repeats"] = *seeds;
    }
    if (timing) {
        doc["timing"] = true;
    }
    const h::ExperimentSpec spec = h::parse_spec(doc);
    const h::ExperimentResult result = h::run_experiment(spec);
    for (const auto& f : result.files) {
        std::cout << f.string() << '\n';
    }
    if (result.diverged) {
        std::cerr << "limuon: at least one run diverged (see 'diverged' rows)\n";
        return h::kExitDiverged;
    }
    return h::kExitOk;
}

int cmd_gradcheck(const std::string& config, const std::vector<std::string>& overrides, const std::string& problem)
{
    json doc = base_document(config, overrides);
    if (!problem.empty()) {
        doc["problem"]["kind"] = problem;
    }
    const h::ExperimentSpec spec = h::parse_spec(doc);
    const h::GradcheckReport report = h::gradcheck(spec.problem);
    std::cout << json{{"problem", h::to_string(report.kind)},
                      {"relative_errors", report.relative_errors},
                      {"max_relative_error", report.max_relative_error},
                      {"threshold", h::kGradcheckThreshold}}
                     .dump(2)
              << '\n';
    return report.max_relative_error > h::kGradcheckThreshold ? h::kExitCheckFailed : h::kExitOk;
}

int cmd_rate_report(const std::vector<std::string>& files)
{
    std::vector<std::filesystem::path> paths(files.begin(), files.end());
    std::cout << h::rate_fit_json(h::rate_report(paths)).dump(2) << '\n';
    return h::kExitOk;
}

int cmd_memory_report(const std::string& config, const std::vector<std::string>& overrides)
{
    const json doc = base_document(config, overrides);
    const h::ExperimentSpec spec = h::parse_spec(doc);
    const json opt = doc.value("optimizer", json::object());
    const limuon::RsvdParams params{opt.value("rank", std::size_t{8}), opt.value("oversampling", std::size_t{5})};
    std::cout << h::memory_report(spec.problem.m, spec.problem.n, params).dump(2) << '\n';
    return h::kExitOk;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"limuon: Muon / LiMuon experiment harness"};
    app.require_subcommand(1);

    std::string config;
    std::vector<std::string> overrides;
    std::string out;
    std::optional<std::size_t> seeds;
    bool timing = false;
    std::string problem;
    std::vector<std::string> files;

    auto* run = app.add_subcommand("run", "Run an experiment and write per-step CSV rows");
    run->add_option("--config", config, "JSON experiment document");
    run->add_option("--set", overrides, "Override a config field, e.g. optimizer.horizon=300");
    run->add_option("--out", out, "Output CSV path");
    run->add_option("--seeds", seeds, "Number of seeds (repeats)");
    run->add_flag("--timing", timing, "Record wall-clock milliseconds per step");

    auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of a problem's gradient");
    grad->add_option("--config", config, "JSON experiment document");
    grad->add_option("--set", overrides, "Override a config field");
    grad->add_option("--problem", problem, "noisy_quadratic | quartic | lowrank_target");

    auto* rate = app.add_subcommand("rate-report", "Fit the log-log decay of avg nuclear norm over horizons");
    rate->add_option("files", files, "Result CSV files")->required();

    auto* mem = app.add_subcommand("memory-report", "Report optimizer state memory per variant");
    mem->add_option("--config", config, "JSON experiment document");
    mem->add_option("--set", overrides, "Override a config field, e.g. problem.m=64");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return h::kExitUsage;
    }

    try {
        if (run->parsed()) {
            return cmd_run(config, overrides, out, seeds, timing);
        }
        if (grad->parsed()) {
            return cmd_gradcheck(config, overrides, problem);
        }
        if (rate->parsed()) {
            return cmd_rate_report(files);
        }
        return cmd_memory_report(config, overrides);
    } catch (const h::config_error& e) {
        std::cerr << "limuon: " << e.what() << '\n';
        return h::kExitUsage;
    } catch (const h::insufficient_data& e) {
        std::cerr << "limuon: " << e.what() << '\n';
        return h::kExitInsufficientData;
    } catch (const std::exception& e) {
        std::cerr << "limuon: " << e.what() << '\n';
        return h::kExitCheckFailed;
    }
}
