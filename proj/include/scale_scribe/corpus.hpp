#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "scale_scribe/scale.hpp"

namespace scale_scribe {

enum class TranscriptKind { open, psychs };

const char* to_string(TranscriptKind kind);
std::optional<TranscriptKind> transcript_kind_from_string(const std::string& text);

struct TranscriptDoc {
    std::string patient_id;
    int visit_index = 0;
    TranscriptKind kind = TranscriptKind::open;
    std::string language;
    std::string text;

    bool operator==(const TranscriptDoc&) const = default;
};

struct AssessmentRecord {
    std::string patient_id;
    int visit_index = 0;
    Ratings ratings{};

    int total() const { return total_of(ratings); }
    bool operator==(const AssessmentRecord&) const = default;
};

struct Encounter {
    std::string patient_id;
    int visit_index = 0;
    std::optional<TranscriptDoc> open;
    std::optional<TranscriptDoc> psychs;
    std::optional<AssessmentRecord> assessment;

    const std::optional<TranscriptDoc>& transcript(TranscriptKind kind) const {
        return kind == TranscriptKind::open ? open : psychs;
    }
};

struct EvalCase {
    TranscriptDoc transcript;
    AssessmentRecord truth;

    const std::string& patient_id() const { return truth.patient_id; }
    int visit_index() const { return truth.visit_index; }
};

struct PatientTimeline {
    std::string patient_id;
    std::vector<EvalCase> cases;  // ascending visit_index; the last one is the target
};

struct Selection {
    std::set<TranscriptKind> kinds{TranscriptKind::open, TranscriptKind::psychs};
    std::optional<std::set<std::string>> languages;  // nullopt selects every language

    bool accepts(const TranscriptDoc& doc) const;
};

// Immutable once built. Encounters are keyed and iterated in
// (patient_id, visit_index) order.
class Corpus {
public:
    using Key = std::pair<std::string, int>;

    static Corpus ingest(const std::vector<std::filesystem::path>& paths);

    // `source` names the stream in error messages.
    void ingest_stream(std::istream& in, const std::string& source);

    std::size_t encounter_count() const { return encounters_.size(); }
    std::size_t transcript_count() const;
    std::size_t assessment_count() const;
    const std::map<Key, Encounter>& encounters() const { return encounters_; }

    // One record per line, same format as ingest. Records are written in
    // key order, transcripts (open, psychs) before the assessment.
    void export_jsonl(std::ostream& out) const;

private:
    void add_transcript(TranscriptDoc doc, const std::string& where);
    void add_assessment(AssessmentRecord record, const std::string& where);

    std::map<Key, Encounter> encounters_;
};

std::vector<EvalCase> eval_cases(const Corpus& corpus, const Selection& selection);
std::vector<PatientTimeline> timelines(const Corpus& corpus, int min_points, const Selection& selection);

// JSONL record helpers, shared with the runner's prediction files.
std::string to_jsonl(const TranscriptDoc& doc);
std::string to_jsonl(const AssessmentRecord& record);

}  // namespace scale_scribe
