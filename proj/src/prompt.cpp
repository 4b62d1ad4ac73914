#include "scale_scribe/prompt.hpp"

#include <sstream>

#include "scale_scribe/errors.hpp"
#include "scale_scribe/response.hpp"

namespace scale_scribe {

namespace {

constexpr const char* kManualBegin = "=== BEGIN RATING SCALE MANUAL ===";
constexpr const char* kManualEnd = "=== END RATING SCALE MANUAL ===";

int parse_count(const std::string& text, const std::string& label) {
    try {
        std::size_t used = 0;
        const int n = std::stoi(text, &used);
        if (used == text.size()) return n;
    } catch (const std::exception&) {
    }
    throw std::invalid_argument("unrecognised strategy '" + label + "'");
}

std::string relative_label(std::size_t steps_back) { return "t=-" + std::to_string(steps_back); }

}  // namespace

ContextStrategy ContextStrategy::plus_scores(int n) {
    if (n < 1) throw std::invalid_argument("0-shot+n-score needs n >= 1");
    return {Kind::zero_shot_plus_scores, n};
}

ContextStrategy ContextStrategy::plus_transcripts(int n) {
    if (n < 1) throw std::invalid_argument("0-shot+n-transcript needs n >= 1");
    return {Kind::zero_shot_plus_transcripts, n};
}

ContextStrategy ContextStrategy::n_shot(int n) {
    if (n < 1) throw std::invalid_argument("n-shot needs n >= 1");
    return {Kind::n_shot, n};
}

ContextStrategy ContextStrategy::parse(const std::string& label) {
    if (label == "0-shot") return zero_shot();
    if (label == "last_score") return last_score();
    const std::string prefix = "0-shot+";
    if (label.starts_with(prefix)) {
        const std::string rest = label.substr(prefix.size());
        for (const auto& [suffix, kind] : {std::pair{std::string("-score"), Kind::zero_shot_plus_scores},
                                           std::pair{std::string("-transcript"), Kind::zero_shot_plus_transcripts}}) {
            if (rest.ends_with(suffix)) {
                const int n = parse_count(rest.substr(0, rest.size() - suffix.size()), label);
                return kind == Kind::zero_shot_plus_scores ? plus_scores(n) : plus_transcripts(n);
            }
        }
    }
    if (label.ends_with("-shot")) return n_shot(parse_count(label.substr(0, label.size() - 5), label));
    throw std::invalid_argument("unrecognised strategy '" + label + "'");
}

std::string ContextStrategy::label() const {
    switch (kind) {
        case Kind::zero_shot:
            return "0-shot";
        case Kind::zero_shot_plus_scores:
            return "0-shot+" + std::to_string(n) + "-score";
        case Kind::zero_shot_plus_transcripts:
            return "0-shot+" + std::to_string(n) + "-transcript";
        case Kind::n_shot:
            return std::to_string(n) + "-shot";
        case Kind::last_score:
            return "last_score";
    }
    return "unknown";
}

int ContextStrategy::required_history() const {
    switch (kind) {
        case Kind::zero_shot:
            return 0;
        case Kind::last_score:
            return 1;
        default:
            return n;
    }
}

const char* to_string(Role role) { return role == Role::user ? "user" : "assistant"; }

const std::string& task_instructions() {
    static const std::string text =
        "TASK: You are an experienced clinical rater. The user will give you the transcript of a clinical "
        "interview. Rate the patient on every one of the 24 items of the Expanded Brief Psychiatric Rating Scale "
        "(BPRS-E) using the rating scale manual. For each item, first write a short explanation that cites the "
        "evidence in the transcript, then give an integer rating from 1 to 7. A rating of 1 means the symptom is "
        "not present. Rate every item, even when the transcript gives little information about it. Transcripts "
        "may be in any language; always follow these English instructions.";
    return text;
}

std::string build_system_instructions(const ScaleDefinition& scale) {
    if (scale.manual_text.empty()) warn("scale " + scale.scale_id + " has empty manual_text");

    std::ostringstream out;
    out << task_instructions() << "\n\n";

    out << kManualBegin << "\n";
    out << scale.manual_text << "\n\n";
    for (const ScaleItem& item : scale.items) {
        out << "Item " << item.index << ". " << item.name << "\n";
        if (!item.definition.empty()) out << item.definition << "\n";
        out << "  " << scale.rating_min << " = " << item.not_present_anchor << "\n";
        for (const auto& [rating, text] : item.anchors) out << "  " << rating << " = " << text << "\n";
        out << "\n";
    }
    out << kManualEnd << "\n\n";

    out << "OUTPUT FORMAT: Respond with a single JSON object and nothing else. The object has one key, \"items\", "
           "whose value is an array of exactly 24 entries in item order. Each entry has the keys \"index\" (item "
           "number), \"name\" (the item name exactly as listed below), \"explanation\" (your reasoning), and "
           "\"rating\" (an integer from "
        << scale.rating_min << " to " << scale.rating_max << "). The 24 item names are:\n";
    for (const ScaleItem& item : scale.items) out << "  " << item.index << ". " << item.name << "\n";
    out << "\n";

    out << task_instructions() << "\n";
    return out.str();
}

PromptBundle build_prompt(const ScaleDefinition& scale, const PatientTimeline& timeline, const ContextStrategy& strategy) {
    if (!strategy.needs_model())
        throw StrategyNeedsNoPrompt("strategy " + strategy.label() + " carries the previous score forward");
    if (timeline.cases.empty()) throw InsufficientHistory("patient " + timeline.patient_id + " has no cases");

    const std::size_t history = static_cast<std::size_t>(strategy.required_history());
    if (timeline.cases.size() < history + 1)
        throw InsufficientHistory("strategy " + strategy.label() + " needs " + std::to_string(history) +
                                  " prior cases, patient " + timeline.patient_id + " has " +
                                  std::to_string(timeline.cases.size() - 1));

    const EvalCase& target = timeline.cases.back();
    const std::size_t first_prior = timeline.cases.size() - 1 - history;

    PromptBundle bundle;
    bundle.system_text = build_system_instructions(scale);
    bundle.strategy = strategy;
    bundle.scale_id = scale.scale_id;
    bundle.target = {target.patient_id(), target.visit_index()};

    // Oldest first; steps_back counts positions in the timeline, not visit numbers.
    auto steps_back = [&](std::size_t pos) { return timeline.cases.size() - 1 - pos; };

    switch (strategy.kind) {
        case ContextStrategy::Kind::zero_shot:
            break;
        case ContextStrategy::Kind::n_shot:
            for (std::size_t pos = first_prior; pos + 1 < timeline.cases.size(); ++pos) {
                const EvalCase& prior = timeline.cases[pos];
                bundle.messages.push_back({Role::user, prior.transcript.text});
                bundle.messages.push_back({Role::assistant, render_output(prior.truth, scale)});
            }
            break;
        case ContextStrategy::Kind::zero_shot_plus_transcripts:
            for (std::size_t pos = first_prior; pos + 1 < timeline.cases.size(); ++pos) {
                std::string content = "Earlier interview with the same patient (" + relative_label(steps_back(pos)) +
                                      "), provided as context only. Do not rate it.\n\n" +
                                      timeline.cases[pos].transcript.text;
                bundle.messages.push_back({Role::user, std::move(content)});
            }
            break;
        case ContextStrategy::Kind::zero_shot_plus_scores: {
            std::ostringstream table;
            table << "Clinician BPRS-E ratings of the same patient at earlier visits, provided as context only. "
                     "Rate only the interview that follows.\n\nItem";
            for (std::size_t pos = first_prior; pos + 1 < timeline.cases.size(); ++pos)
                table << " | " << relative_label(steps_back(pos));
            table << "\n";
            for (const ScaleItem& item : scale.items) {
                table << item.index << ". " << item.name;
                for (std::size_t pos = first_prior; pos + 1 < timeline.cases.size(); ++pos)
                    table << " | " << timeline.cases[pos].truth.ratings[static_cast<std::size_t>(item.index - 1)];
                table << "\n";
            }
            table << "Total";
            for (std::size_t pos = first_prior; pos + 1 < timeline.cases.size(); ++pos)
                table << " | " << timeline.cases[pos].truth.total();
            table << "\n";
            bundle.messages.push_back({Role::user, table.str()});
            break;
        }
        case ContextStrategy::Kind::last_score:
            break;
    }

    bundle.messages.push_back({Role::user, target.transcript.text});
    return bundle;
}

std::string format_bundle(const PromptBundle& bundle) {
    std::ostringstream out;
    out << "# strategy: " << bundle.strategy.label() << "\n"
        << "# scale: " << bundle.scale_id << "\n"
        << "# target: patient " << bundle.target.patient_id << " visit " << bundle.target.visit_index << "\n\n"
        << "----- system -----\n"
        << bundle.system_text << "\n";
    for (const Message& m : bundle.messages) out << "----- " << to_string(m.role) << " -----\n" << m.content << "\n\n";
    return out.str();
}

}  // namespace scale_scribe
