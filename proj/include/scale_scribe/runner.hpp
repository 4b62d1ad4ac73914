#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "scale_scribe/corpus.hpp"
#include "scale_scribe/gateway.hpp"
#include "scale_scribe/metrics.hpp"
#include "scale_scribe/prompt.hpp"
#include "scale_scribe/scale.hpp"

namespace scale_scribe {

struct RunManifest {
    std::string run_id;
    std::filesystem::path scale_path = bundled_scale_path();
    std::vector<std::filesystem::path> corpus_paths;
    Selection selection;
    int min_points = 1;
    std::vector<ContextStrategy> strategies{ContextStrategy::zero_shot()};
    ModelConfig model;
    std::uint64_t seed = 0;
    std::string prompt_version = kPromptVersion;
    std::filesystem::path output_dir = "runs";
    bool pooled = false;  // also report open and psychs together
    MetricsConfig metrics;
    NoiseModel scripted_noise;  // only read by the scripted backend

    std::filesystem::path run_dir() const { return output_dir / run_id; }
};

// Relative paths resolve against `base_dir`.
RunManifest manifest_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir);
RunManifest load_manifest(const std::filesystem::path& path);
nlohmann::ordered_json to_json(const RunManifest& manifest);

enum class RunKind { zero_shot, longitudinal };
const char* to_string(RunKind kind);

struct CasePrediction {
    std::string patient_id;
    int visit_index = 0;
    TranscriptKind kind = TranscriptKind::open;
    std::string language;
    std::optional<Ratings> predicted;
    std::string fingerprint;                // model predictions
    std::optional<int> carried_from_visit;  // last_score predictions
    std::string error;                      // set when the prediction failed
    int attempts = 0;

    bool ok() const { return predicted.has_value(); }
};

struct StrategyRun {
    ContextStrategy strategy;
    std::vector<CasePrediction> predictions;
    std::size_t n_scored = 0;  // cases entering the metrics
    std::optional<double> rmse;
    std::optional<double> rmse_bootstrap_se;
    std::map<std::string, MetricsReport> reports;  // keyed by case group
};

struct RunResult {
    std::string run_id;
    RunKind kind = RunKind::zero_shot;
    std::string prompt_version;
    std::vector<StrategyRun> strategies;
    std::vector<std::string> excluded;  // targets left out of every strategy, with reasons
    std::vector<std::string> notes;

    // Bookkeeping, kept out of the report files.
    std::size_t gateway_calls = 0;
    std::size_t total_attempts = 0;
    double elapsed_seconds = 0;
};

struct RunInputs {
    ScaleDefinition scale;
    Corpus corpus;
};

RunInputs load_inputs(const RunManifest& manifest);

// Every assessment in the corpus, for building a scripted rater.
std::vector<AssessmentRecord> all_assessments(const Corpus& corpus);

class Runner {
public:
    Runner(RunManifest manifest, const RunInputs& inputs, Backend& backend);

    // Scores every selected case with the 0-shot prompt. Reports are split
    // by transcript kind and by kind/language.
    RunResult run_zero_shot();

    // Targets the most recent case of each timeline. All strategies are
    // scored on the same target set.
    RunResult run_longitudinal();

    void set_prompt_dump_dir(std::filesystem::path dir) { dump_dir_ = std::move(dir); }
    const Gateway& gateway() const { return gateway_; }

private:
    struct Job {
        PatientTimeline timeline;  // truncated so the target is last
        std::size_t strategy_slot = 0;
        std::size_t prediction_slot = 0;
    };

    void score(std::vector<Job>& jobs, RunResult& result);
    void dump_prompt(const PromptBundle& bundle);

    RunManifest manifest_;
    const RunInputs& inputs_;
    Gateway gateway_;
    std::optional<std::filesystem::path> dump_dir_;
};

// Fills n_scored, rmse, rmse_bootstrap_se and reports from the predictions.
void compute_metrics(RunResult& result, const RunInputs& inputs, const RunManifest& manifest);

// Writes manifest.json, predictions_<strategy>.jsonl and run_stats.json.
void write_run(const RunResult& result, const RunManifest& manifest, const std::filesystem::path& run_dir);

// Reads a run directory back and recomputes its metrics.
RunResult load_run(const std::filesystem::path& run_dir);

std::string prediction_file_name(const ContextStrategy& strategy);

}  // namespace scale_scribe
