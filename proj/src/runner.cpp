#include "scale_scribe/runner.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <sstream>
#include <thread>
#include <tuple>

#include "scale_scribe/errors.hpp"

namespace scale_scribe {

namespace {

using TargetKey = std::tuple<std::string, int, TranscriptKind>;

TargetKey target_key(const CasePrediction& p) { return {p.patient_id, p.visit_index, p.kind}; }

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << content;
}

nlohmann::json parse_json_file(const std::filesystem::path& path) {
    try {
        return nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

std::string target_text(const std::string& patient_id, int visit_index) {
    return "patient " + patient_id + " visit " + std::to_string(visit_index);
}

std::string file_safe(const std::string& text) {
    std::string out = text;
    for (char& c : out)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' && c != '+') c = '_';
    return out;
}

CasePrediction prediction_for(const EvalCase& target) {
    CasePrediction p;
    p.patient_id = target.patient_id();
    p.visit_index = target.visit_index();
    p.kind = target.transcript.kind;
    p.language = target.transcript.language;
    return p;
}

std::string prediction_to_jsonl(const CasePrediction& p, const ContextStrategy& strategy) {
    nlohmann::ordered_json j;
    j["patient_id"] = p.patient_id;
    j["visit_index"] = p.visit_index;
    j["kind"] = to_string(p.kind);
    j["language"] = p.language;
    j["strategy"] = strategy.label();
    j["status"] = p.ok() ? "ok" : "failed";
    if (p.predicted) {
        j["ratings"] = *p.predicted;
        j["total"] = total_of(*p.predicted);
    }
    if (!p.fingerprint.empty()) j["fingerprint"] = p.fingerprint;
    if (p.carried_from_visit) j["carried_from_visit"] = *p.carried_from_visit;
    if (!p.error.empty()) j["error"] = p.error;
    return j.dump();
}

CasePrediction prediction_from_json(const nlohmann::json& j) {
    CasePrediction p;
    p.patient_id = j.at("patient_id").get<std::string>();
    p.visit_index = j.at("visit_index").get<int>();
    const auto kind = transcript_kind_from_string(j.at("kind").get<std::string>());
    if (!kind) throw ParseError("prediction has unknown kind");
    p.kind = *kind;
    p.language = j.at("language").get<std::string>();
    if (j.contains("ratings")) p.predicted = j.at("ratings").get<Ratings>();
    p.fingerprint = j.value("fingerprint", std::string{});
    if (j.contains("carried_from_visit")) p.carried_from_visit = j.at("carried_from_visit").get<int>();
    p.error = j.value("error", std::string{});
    return p;
}

}  // namespace

// ---- manifest -------------------------------------------------------------

RunManifest manifest_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir) {
    if (!doc.is_object()) throw ParseError("manifest must be a JSON object");
    const auto resolve = [&](const std::string& p) {
        const std::filesystem::path path(p);
        return std::filesystem::absolute(path.is_absolute() ? path : base_dir / path).lexically_normal();
    };

    RunManifest m;
    try {
        m.run_id = doc.at("run_id").get<std::string>();
        if (m.run_id.empty() || m.run_id.find('/') != std::string::npos)
            throw ValidationError("run_id must be a non-empty name without '/'");
        if (doc.contains("scale")) m.scale_path = resolve(doc.at("scale").get<std::string>());
        for (const auto& p : doc.at("corpus")) m.corpus_paths.push_back(resolve(p.get<std::string>()));

        if (doc.contains("selection")) {
            const auto& sel = doc.at("selection");
            if (sel.contains("kinds")) {
                m.selection.kinds.clear();
                for (const auto& k : sel.at("kinds")) {
                    auto kind = transcript_kind_from_string(k.get<std::string>());
                    if (!kind) throw ValidationError("unknown transcript kind '" + k.get<std::string>() + "'");
                    m.selection.kinds.insert(*kind);
                }
            }
            if (sel.contains("languages") && !(sel.at("languages").is_string() && sel.at("languages") == "all"))
                m.selection.languages = sel.at("languages").get<std::set<std::string>>();
            m.min_points = sel.value("min_points", 1);
        }
        if (m.min_points < 1) throw ValidationError("selection.min_points must be >= 1");

        if (doc.contains("strategies")) {
            m.strategies.clear();
            for (const auto& s : doc.at("strategies")) m.strategies.push_back(ContextStrategy::parse(s.get<std::string>()));
        }
        if (doc.contains("model")) m.model = model_config_from_json(doc.at("model"));
        m.seed = doc.value("seed", std::uint64_t{0});
        m.prompt_version = doc.value("prompt_version", std::string(kPromptVersion));
        if (doc.contains("output_dir")) m.output_dir = resolve(doc.at("output_dir").get<std::string>());
        else m.output_dir = resolve("runs");
        m.pooled = doc.value("pooled", false);
        if (doc.contains("metrics")) {
            const auto& metrics = doc.at("metrics");
            m.metrics.threshold = metrics.value("threshold", m.metrics.threshold);
            m.metrics.bootstrap_resamples = metrics.value("bootstrap_resamples", m.metrics.bootstrap_resamples);
        }
        m.metrics.seed = m.seed;
        if (doc.contains("scripted")) m.scripted_noise = noise_model_from_json(doc.at("scripted"));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("manifest: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw ValidationError(std::string("manifest: ") + e.what());
    }

    if (m.prompt_version != kPromptVersion)
        warn("manifest prompt_version '" + m.prompt_version + "' differs from the built-in prompt '" + kPromptVersion +
             "'");
    return m;
}

RunManifest load_manifest(const std::filesystem::path& path) {
    return manifest_from_json(parse_json_file(path), std::filesystem::absolute(path).parent_path());
}

nlohmann::ordered_json to_json(const RunManifest& m) {
    nlohmann::ordered_json doc;
    doc["run_id"] = m.run_id;
    doc["scale"] = m.scale_path.string();
    auto& corpus = doc["corpus"] = nlohmann::ordered_json::array();
    for (const auto& p : m.corpus_paths) corpus.push_back(p.string());
    auto& sel = doc["selection"];
    sel["kinds"] = nlohmann::ordered_json::array();
    for (TranscriptKind k : m.selection.kinds) sel["kinds"].push_back(to_string(k));
    if (m.selection.languages) sel["languages"] = *m.selection.languages;
    else sel["languages"] = "all";
    sel["min_points"] = m.min_points;
    auto& strategies = doc["strategies"] = nlohmann::ordered_json::array();
    for (const auto& s : m.strategies) strategies.push_back(s.label());
    doc["model"] = to_json(m.model);
    doc["seed"] = m.seed;
    doc["prompt_version"] = m.prompt_version;
    doc["output_dir"] = m.output_dir.string();
    doc["pooled"] = m.pooled;
    doc["metrics"] = {{"threshold", m.metrics.threshold}, {"bootstrap_resamples", m.metrics.bootstrap_resamples}};
    doc["scripted"] = to_json(m.scripted_noise);
    return doc;
}

const char* to_string(RunKind kind) { return kind == RunKind::zero_shot ? "zero_shot" : "longitudinal"; }

RunInputs load_inputs(const RunManifest& manifest) {
    return RunInputs{load_scale(manifest.scale_path), Corpus::ingest(manifest.corpus_paths)};
}

std::vector<AssessmentRecord> all_assessments(const Corpus& corpus) {
    std::vector<AssessmentRecord> out;
    for (const auto& [key, enc] : corpus.encounters())
        if (enc.assessment) out.push_back(*enc.assessment);
    return out;
}

std::string prediction_file_name(const ContextStrategy& strategy) {
    return "predictions_" + file_safe(strategy.label()) + ".jsonl";
}

// ---- runner ---------------------------------------------------------------

Runner::Runner(RunManifest manifest, const RunInputs& inputs, Backend& backend)
    : manifest_(std::move(manifest)), inputs_(inputs), gateway_(backend, manifest_.model, inputs_.scale) {}

void Runner::dump_prompt(const PromptBundle& bundle) {
    if (!dump_dir_) return;
    const auto dir = *dump_dir_ / file_safe(bundle.strategy.label());
    std::filesystem::create_directories(dir);
    write_file(dir / (file_safe(bundle.target.patient_id) + "_v" + std::to_string(bundle.target.visit_index) + ".txt"),
               format_bundle(bundle));
}

void Runner::score(std::vector<Job>& jobs, RunResult& result) {
    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> attempts{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) {
            Job& job = jobs[i];
            StrategyRun& run = result.strategies[job.strategy_slot];
            CasePrediction& out = run.predictions[job.prediction_slot];
            try {
                const PromptBundle bundle = build_prompt(inputs_.scale, job.timeline, run.strategy);
                dump_prompt(bundle);
                ValidatedCompletion done = gateway_.complete(bundle);
                out.predicted = done.assessment.ratings();
                out.fingerprint = done.completion.request_fingerprint;
                out.attempts = done.completion.attempts;
                attempts += static_cast<std::size_t>(done.completion.attempts);
            } catch (const std::exception& e) {
                out.error = e.what();
            }
        }
    };

    const auto workers = std::min<std::size_t>(static_cast<std::size_t>(manifest_.model.max_concurrent_requests),
                                               jobs.size());
    std::vector<std::jthread> pool;
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
    if (!jobs.empty()) worker();
    pool.clear();  // joins

    result.gateway_calls = gateway_.backend_calls();
    result.total_attempts += attempts.load();
}

RunResult Runner::run_zero_shot() {
    const auto start = std::chrono::steady_clock::now();
    RunResult result;
    result.run_id = manifest_.run_id;
    result.kind = RunKind::zero_shot;
    result.prompt_version = manifest_.prompt_version;
    result.strategies.push_back(StrategyRun{ContextStrategy::zero_shot(), {}, 0, {}, {}, {}});

    // One pass per kind, so encounters with both transcripts are scored twice.
    std::vector<Job> jobs;
    for (TranscriptKind kind : manifest_.selection.kinds) {
        Selection only_kind = manifest_.selection;
        only_kind.kinds = {kind};
        for (EvalCase& c : eval_cases(inputs_.corpus, only_kind)) {
            result.strategies[0].predictions.push_back(prediction_for(c));
            jobs.push_back(Job{PatientTimeline{c.patient_id(), {std::move(c)}}, 0, jobs.size()});
        }
    }
    score(jobs, result);
    compute_metrics(result, inputs_, manifest_);
    result.elapsed_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

RunResult Runner::run_longitudinal() {
    if (manifest_.strategies.empty()) throw ValidationError("longitudinal run needs at least one strategy");
    const auto start = std::chrono::steady_clock::now();
    RunResult result;
    result.run_id = manifest_.run_id;
    result.kind = RunKind::longitudinal;
    result.prompt_version = manifest_.prompt_version;

    int max_history = 0;
    for (const auto& s : manifest_.strategies) {
        max_history = std::max(max_history, s.required_history());
        result.strategies.push_back(StrategyRun{s, {}, 0, {}, {}, {}});
    }

    std::vector<PatientTimeline> eligible;
    for (PatientTimeline& t : timelines(inputs_.corpus, manifest_.min_points, manifest_.selection)) {
        if (t.cases.size() < static_cast<std::size_t>(max_history) + 1) {
            const EvalCase& target = t.cases.back();
            result.excluded.push_back(target_text(target.patient_id(), target.visit_index()) + ": " +
                                      std::to_string(t.cases.size() - 1) + " prior cases, strategies need " +
                                      std::to_string(max_history));
            continue;
        }
        eligible.push_back(std::move(t));
    }

    std::vector<Job> jobs;
    for (std::size_t s = 0; s < result.strategies.size(); ++s) {
        StrategyRun& run = result.strategies[s];
        const auto needed = static_cast<std::size_t>(run.strategy.required_history()) + 1;
        for (const PatientTimeline& t : eligible) {
            CasePrediction p = prediction_for(t.cases.back());
            if (!run.strategy.needs_model()) {
                const EvalCase& previous = t.cases[t.cases.size() - 2];
                p.predicted = previous.truth.ratings;
                p.carried_from_visit = previous.visit_index();
                run.predictions.push_back(std::move(p));
                continue;
            }
            run.predictions.push_back(std::move(p));
            PatientTimeline window{t.patient_id, {t.cases.end() - static_cast<std::ptrdiff_t>(needed), t.cases.end()}};
            jobs.push_back(Job{std::move(window), s, run.predictions.size() - 1});
        }
    }
    score(jobs, result);
    compute_metrics(result, inputs_, manifest_);
    result.elapsed_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

// ---- metrics over a run ---------------------------------------------------

void compute_metrics(RunResult& result, const RunInputs& inputs, const RunManifest& manifest) {
    result.notes.clear();

    auto case_for = [&](const CasePrediction& p) -> std::optional<EvalCase> {
        auto it = inputs.corpus.encounters().find({p.patient_id, p.visit_index});
        if (it == inputs.corpus.encounters().end() || !it->second.assessment) return std::nullopt;
        const auto& doc = it->second.transcript(p.kind);
        if (!doc) return std::nullopt;
        return EvalCase{*doc, *it->second.assessment};
    };

    // Targets every strategy predicted successfully.
    std::map<TargetKey, int> ok_count;
    for (const StrategyRun& run : result.strategies) {
        for (const CasePrediction& p : run.predictions) {
            if (p.ok()) {
                ++ok_count[target_key(p)];
            } else {
                result.notes.push_back(run.strategy.label() + " failed for " + target_text(p.patient_id, p.visit_index) +
                                       ": " + p.error);
            }
        }
    }
    const auto n_strategies = static_cast<int>(result.strategies.size());
    for (const auto& [key, count] : ok_count) {
        if (count != n_strategies)
            result.notes.push_back(target_text(std::get<0>(key), std::get<1>(key)) +
                                   " left out of every strategy's metrics: not all strategies succeeded");
    }

    for (StrategyRun& run : result.strategies) {
        run.reports.clear();
        run.rmse.reset();
        run.rmse_bootstrap_se.reset();

        std::map<std::string, std::vector<ScoredCase>> groups;
        std::vector<ScoredCase> scored;
        for (const CasePrediction& p : run.predictions) {
            if (!p.ok() || ok_count[target_key(p)] != n_strategies) continue;
            auto truth_case = case_for(p);
            if (!truth_case) {
                result.notes.push_back(target_text(p.patient_id, p.visit_index) + " is not in the corpus");
                continue;
            }
            ScoredCase sc{std::move(*truth_case), *p.predicted};
            if (result.kind == RunKind::zero_shot) {
                const std::string kind = to_string(p.kind);
                groups[kind].push_back(sc);
                groups[kind + "/" + p.language].push_back(sc);
                if (manifest.pooled) groups["pooled"].push_back(sc);
            } else {
                groups["all"].push_back(sc);
            }
            scored.push_back(std::move(sc));
        }
        std::sort(scored.begin(), scored.end(), [](const ScoredCase& a, const ScoredCase& b) {
            return std::tie(a.truth_case.truth.patient_id, a.truth_case.truth.visit_index, a.truth_case.transcript.kind) <
                   std::tie(b.truth_case.truth.patient_id, b.truth_case.truth.visit_index, b.truth_case.transcript.kind);
        });

        run.n_scored = scored.size();
        if (!scored.empty()) {
            PairedTotals<double> totals(static_cast<Eigen::Index>(scored.size()), 2);
            for (std::size_t i = 0; i < scored.size(); ++i) {
                totals(static_cast<Eigen::Index>(i), 0) = scored[i].truth_case.truth.total();
                totals(static_cast<Eigen::Index>(i), 1) = total_of(scored[i].predicted);
            }
            run.rmse = rmse(totals);
            run.rmse_bootstrap_se =
                bootstrap_rmse_se(totals, manifest.metrics.bootstrap_resamples, manifest.metrics.seed);
        }

        for (auto& [label, cases] : groups) {
            if (cases.size() < 2) {
                result.notes.push_back(run.strategy.label() + " group '" + label + "' has " +
                                       std::to_string(cases.size()) + " case(s); no report");
                continue;
            }
            run.reports.emplace(label, full_report(std::move(cases), inputs.scale, manifest.metrics));
        }
    }
}

// ---- persistence ----------------------------------------------------------

void write_run(const RunResult& result, const RunManifest& manifest, const std::filesystem::path& run_dir) {
    std::filesystem::create_directories(run_dir);
    write_file(run_dir / "manifest.json", to_json(manifest).dump(2) + "\n");

    nlohmann::ordered_json run;
    run["run_id"] = result.run_id;
    run["kind"] = to_string(result.kind);
    run["prompt_version"] = result.prompt_version;
    run["strategies"] = nlohmann::ordered_json::array();
    for (const auto& s : result.strategies) run["strategies"].push_back(s.strategy.label());
    run["excluded"] = result.excluded;
    write_file(run_dir / "run.json", run.dump(2) + "\n");

    for (const StrategyRun& s : result.strategies) {
        std::string lines;
        for (const CasePrediction& p : s.predictions) lines += prediction_to_jsonl(p, s.strategy) + "\n";
        write_file(run_dir / prediction_file_name(s.strategy), lines);
    }

    nlohmann::ordered_json stats;
    stats["gateway_calls"] = result.gateway_calls;
    stats["total_attempts"] = result.total_attempts;
    stats["elapsed_seconds"] = result.elapsed_seconds;
    write_file(run_dir / "run_stats.json", stats.dump(2) + "\n");
}

RunResult load_run(const std::filesystem::path& run_dir) {
    const RunManifest manifest = load_manifest(run_dir / "manifest.json");
    const nlohmann::json run = parse_json_file(run_dir / "run.json");

    RunResult result;
    try {
        result.run_id = run.at("run_id").get<std::string>();
        result.kind = run.at("kind").get<std::string>() == "zero_shot" ? RunKind::zero_shot : RunKind::longitudinal;
        result.prompt_version = run.at("prompt_version").get<std::string>();
        result.excluded = run.at("excluded").get<std::vector<std::string>>();
        for (const auto& label : run.at("strategies")) {
            StrategyRun s{ContextStrategy::parse(label.get<std::string>()), {}, 0, {}, {}, {}};
            std::istringstream lines(read_file(run_dir / prediction_file_name(s.strategy)));
            std::string line;
            while (std::getline(lines, line))
                if (!line.empty()) s.predictions.push_back(prediction_from_json(nlohmann::json::parse(line)));
            result.strategies.push_back(std::move(s));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(run_dir.string() + ": " + e.what());
    }

    const RunInputs inputs = load_inputs(manifest);
    compute_metrics(result, inputs, manifest);
    return result;
}

}  // namespace scale_scribe
