#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>

#include "CLI11.hpp"
#include "scale_scribe/errors.hpp"
#include "scale_scribe/gateway.hpp"
#include "scale_scribe/report.hpp"
#include "scale_scribe/response.hpp"
#include "scale_scribe/runner.hpp"

namespace ss = scale_scribe;

namespace {

struct GlobalOptions {
    std::string backend = "live";
    std::optional<std::uint64_t> seed;
    std::optional<std::string> cache_dir;
    std::optional<std::string> dump_prompts;
    std::optional<std::string> output_dir;
    bool force = false;
};

// Owns whichever backend chain the flags describe.
struct BackendStack {
    std::unique_ptr<ss::Backend> upstream;
    std::unique_ptr<ss::CachingBackend> cache;

    ss::Backend& active() { return cache ? static_cast<ss::Backend&>(*cache) : *upstream; }
};

BackendStack make_backend(const GlobalOptions& opts, const ss::RunManifest& manifest, const ss::RunInputs& inputs) {
    BackendStack stack;
    if (opts.backend == "replay") {
        if (!opts.cache_dir) throw ss::ValidationError("--backend replay needs --cache-dir");
        stack.cache = std::make_unique<ss::CachingBackend>(*opts.cache_dir, ss::CachingBackend::Mode::replay);
        return stack;
    }
    if (opts.backend == "live") {
        stack.upstream = std::make_unique<ss::HttpBackend>();
    } else if (opts.backend == "scripted") {
        stack.upstream = std::make_unique<ss::ScriptedRater>(ss::all_assessments(inputs.corpus),
                                                             manifest.scripted_noise, inputs.scale);
    } else {
        throw ss::ValidationError("unknown backend '" + opts.backend + "'");
    }
    if (opts.cache_dir) {
        const ss::ScaleDefinition& scale = inputs.scale;
        auto accept = [&scale](const std::string& raw) {
            try {
                ss::parse_output(raw, scale);
                return true;
            } catch (const ss::OutputError&) {
                return false;
            }
        };
        stack.cache = std::make_unique<ss::CachingBackend>(*opts.cache_dir, ss::CachingBackend::Mode::record,
                                                           stack.upstream.get(), accept);
    }
    return stack;
}

ss::RunManifest manifest_with_overrides(const std::string& path, const GlobalOptions& opts) {
    ss::RunManifest manifest = ss::load_manifest(path);
    if (opts.seed) {
        manifest.seed = *opts.seed;
        manifest.metrics.seed = *opts.seed;
        manifest.scripted_noise.seed = *opts.seed;
    }
    if (opts.output_dir) manifest.output_dir = std::filesystem::absolute(*opts.output_dir);
    manifest.model.validate();
    return manifest;
}

int run_experiment(const std::string& manifest_path, const GlobalOptions& opts, bool longitudinal) {
    const ss::RunManifest manifest = manifest_with_overrides(manifest_path, opts);
    const auto run_dir = manifest.run_dir();
    if (std::filesystem::exists(run_dir) && !opts.force)
        throw ss::ValidationError("run directory " + run_dir.string() + " exists; pass --force to overwrite");

    const ss::RunInputs inputs = ss::load_inputs(manifest);
    BackendStack backend = make_backend(opts, manifest, inputs);
    ss::Runner runner(manifest, inputs, backend.active());
    if (opts.dump_prompts) runner.set_prompt_dump_dir(*opts.dump_prompts);

    const ss::RunResult result = longitudinal ? runner.run_longitudinal() : runner.run_zero_shot();
    if (opts.force) std::filesystem::remove_all(run_dir);
    ss::write_run(result, manifest, run_dir);
    for (auto format : {ss::ReportFormat::json, ss::ReportFormat::csv, ss::ReportFormat::table})
        ss::emit_report(result, format, run_dir);

    std::cout << ss::text_report(result);
    std::cout << "\nwrote " << run_dir.string() << " (" << result.gateway_calls << " backend calls, "
              << result.elapsed_seconds << " s)\n";
    return 0;
}

int ingest(const std::vector<std::string>& files, const std::optional<std::string>& out_path) {
    const ss::Corpus corpus = ss::Corpus::ingest({files.begin(), files.end()});
    std::cout << corpus.encounter_count() << " encounters, " << corpus.transcript_count() << " transcripts, "
              << corpus.assessment_count() << " assessments\n";
    if (out_path) {
        std::ofstream out(*out_path, std::ios::binary | std::ios::trunc);
        if (!out) throw ss::Error("cannot write " + *out_path);
        corpus.export_jsonl(out);
        std::cout << "wrote " << *out_path << "\n";
    }
    return 0;
}

int validate(const std::vector<std::string>& files) {
    const ss::Corpus corpus = ss::Corpus::ingest({files.begin(), files.end()});
    std::size_t scorable = 0;
    for (const auto& [key, enc] : corpus.encounters()) {
        const bool has_text = enc.open || enc.psychs;
        if (has_text && enc.assessment) {
            ++scorable;
        } else if (!enc.assessment) {
            std::cout << "note: patient " << key.first << " visit " << key.second << " has no assessment\n";
        } else {
            std::cout << "note: patient " << key.first << " visit " << key.second << " has no transcript\n";
        }
    }
    std::cout << "ok: " << corpus.encounter_count() << " encounters, " << scorable << " scorable\n";
    return 0;
}

int report(const std::string& run_dir, const std::string& format_text, const std::optional<std::string>& out_dir) {
    const ss::ReportFormat format = ss::report_format_from_string(format_text);
    const ss::RunResult result = ss::load_run(run_dir);
    const auto written = ss::emit_report(result, format, std::filesystem::path(out_dir.value_or(run_dir)));
    if (format == ss::ReportFormat::table) std::cout << ss::text_report(result);
    for (const auto& path : written) std::cout << "wrote " << path.string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Score interview transcripts on the BPRS-E with a language model and evaluate the ratings."};
    app.require_subcommand(1);

    GlobalOptions opts;
    app.add_option("--backend", opts.backend, "live, scripted or replay")
        ->check(CLI::IsMember({"live", "scripted", "replay"}));
    app.add_option("--seed", opts.seed, "Override the manifest seed");
    app.add_option("--cache-dir", opts.cache_dir, "Response cache (recorded for live/scripted, read for replay)");
    app.add_option("--dump-prompts", opts.dump_prompts, "Write every prompt bundle as text under this directory");
    app.add_option("--output-dir", opts.output_dir, "Override the manifest output directory");
    app.add_flag("--force", opts.force, "Overwrite an existing run directory");

    std::vector<std::string> ingest_files;
    std::optional<std::string> ingest_out;
    auto* ingest_cmd = app.add_subcommand("ingest", "Load JSONL corpus files and report counts");
    ingest_cmd->add_option("files", ingest_files)->required()->check(CLI::ExistingFile);
    ingest_cmd->add_option("--out", ingest_out, "Write the merged corpus as JSONL");

    std::vector<std::string> validate_files;
    auto* validate_cmd = app.add_subcommand("validate", "Check corpus files");
    validate_cmd->add_option("corpus", validate_files)->required()->check(CLI::ExistingFile);

    std::string manifest_path;
    auto* score_cmd = app.add_subcommand("score", "Zero-shot scoring of every selected case");
    score_cmd->add_option("--manifest", manifest_path)->required()->check(CLI::ExistingFile);
    auto* longitudinal_cmd = app.add_subcommand("longitudinal", "Compare context strategies on each patient's latest visit");
    longitudinal_cmd->add_option("--manifest", manifest_path)->required()->check(CLI::ExistingFile);

    std::string run_dir;
    std::string format = "table";
    std::optional<std::string> report_out;
    auto* report_cmd = app.add_subcommand("report", "Recompute metrics for a run directory and emit a report");
    report_cmd->add_option("--run", run_dir)->required()->check(CLI::ExistingDirectory);
    report_cmd->add_option("--format", format)->check(CLI::IsMember({"table", "csv", "json"}));
    report_cmd->add_option("--out", report_out, "Directory for report files (default: the run directory)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*ingest_cmd) return ingest(ingest_files, ingest_out);
        if (*validate_cmd) return validate(validate_files);
        if (*score_cmd) return run_experiment(manifest_path, opts, false);
        if (*longitudinal_cmd) return run_experiment(manifest_path, opts, true);
        if (*report_cmd) return report(run_dir, format, report_out);
    } catch (const ss::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
