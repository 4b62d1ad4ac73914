#include "scale_scribe/corpus.hpp"

#include <fstream>
#include <istream>
#include <ostream>

#include "scale_scribe/errors.hpp"

namespace scale_scribe {

namespace {

std::string key_text(const std::string& patient_id, int visit_index) {
    return "patient " + patient_id + " visit " + std::to_string(visit_index);
}

template <typename T>
T field(const nlohmann::json& obj, const char* key, const std::string& where, std::size_t line) {
    auto it = obj.find(key);
    if (it == obj.end()) throw ParseError(where + ": missing field '" + key + "'", line);
    try {
        return it->get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ParseError(where + ": field '" + key + "' has the wrong type", line);
    }
}

int integer_field(const nlohmann::json& obj, const char* key, const std::string& where, std::size_t line) {
    auto it = obj.find(key);
    if (it == obj.end()) throw ParseError(where + ": missing field '" + key + "'", line);
    if (!it->is_number_integer()) throw ParseError(where + ": field '" + key + "' must be an integer", line);
    return it->get<int>();
}

}  // namespace

const char* to_string(TranscriptKind kind) {
    return kind == TranscriptKind::open ? "open" : "psychs";
}

std::optional<TranscriptKind> transcript_kind_from_string(const std::string& text) {
    if (text == "open") return TranscriptKind::open;
    if (text == "psychs") return TranscriptKind::psychs;
    return std::nullopt;
}

bool Selection::accepts(const TranscriptDoc& doc) const {
    if (!kinds.contains(doc.kind)) return false;
    return !languages || languages->contains(doc.language);
}

Corpus Corpus::ingest(const std::vector<std::filesystem::path>& paths) {
    Corpus corpus;
    for (const auto& path : paths) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw ParseError("cannot open corpus file " + path.string());
        corpus.ingest_stream(in, path.string());
    }
    return corpus;
}

void Corpus::ingest_stream(std::istream& in, const std::string& source) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;

        nlohmann::json record;
        try {
            record = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(source + ": invalid JSON (" + e.what() + ")", line_no);
        }
        if (!record.is_object()) throw ParseError(source + ": record must be a JSON object", line_no);

        const std::string where = source;
        const auto type = field<std::string>(record, "type", where, line_no);
        if (type == "transcript") {
            TranscriptDoc doc;
            doc.patient_id = field<std::string>(record, "patient_id", where, line_no);
            doc.visit_index = integer_field(record, "visit_index", where, line_no);
            const auto kind_text = field<std::string>(record, "kind", where, line_no);
            auto kind = transcript_kind_from_string(kind_text);
            if (!kind) throw ParseError(where + ": unknown transcript kind '" + kind_text + "'", line_no);
            doc.kind = *kind;
            doc.language = field<std::string>(record, "language", where, line_no);
            doc.text = field<std::string>(record, "text", where, line_no);
            add_transcript(std::move(doc), where + ":" + std::to_string(line_no));
        } else if (type == "assessment") {
            AssessmentRecord rec;
            rec.patient_id = field<std::string>(record, "patient_id", where, line_no);
            rec.visit_index = integer_field(record, "visit_index", where, line_no);
            auto ratings = record.find("ratings");
            if (ratings == record.end() || !ratings->is_array())
                throw ParseError(where + ": 'ratings' must be an array", line_no);
            if (ratings->size() != static_cast<std::size_t>(kItemCount))
                throw ValidationError(where + ":" + std::to_string(line_no) + ": " +
                                      key_text(rec.patient_id, rec.visit_index) + ": expected " +
                                      std::to_string(kItemCount) + " ratings, found " +
                                      std::to_string(ratings->size()));
            for (int i = 0; i < kItemCount; ++i) {
                const auto& value = (*ratings)[static_cast<std::size_t>(i)];
                if (!value.is_number_integer())
                    throw ParseError(where + ": rating for item " + std::to_string(i + 1) + " must be an integer",
                                     line_no);
                rec.ratings[static_cast<std::size_t>(i)] = value.get<int>();
            }
            add_assessment(std::move(rec), where + ":" + std::to_string(line_no));
        } else {
            throw ParseError(where + ": unknown record type '" + type + "'", line_no);
        }
    }
}

void Corpus::add_transcript(TranscriptDoc doc, const std::string& where) {
    if (doc.patient_id.empty()) throw ValidationError(where + ": empty patient_id");
    if (doc.visit_index < 0) throw ValidationError(where + ": negative visit_index");
    if (doc.language.empty()) throw ValidationError(where + ": empty language");
    if (doc.text.empty()) throw ValidationError(where + ": empty transcript text");

    Encounter& enc = encounters_[{doc.patient_id, doc.visit_index}];
    enc.patient_id = doc.patient_id;
    enc.visit_index = doc.visit_index;
    auto& slot = doc.kind == TranscriptKind::open ? enc.open : enc.psychs;
    if (slot)
        throw DuplicateRecord(where + ": second " + to_string(doc.kind) + " transcript for " +
                              key_text(doc.patient_id, doc.visit_index));
    slot = std::move(doc);
}

void Corpus::add_assessment(AssessmentRecord record, const std::string& where) {
    if (record.patient_id.empty()) throw ValidationError(where + ": empty patient_id");
    if (record.visit_index < 0) throw ValidationError(where + ": negative visit_index");
    for (int i = 0; i < kItemCount; ++i) {
        const int r = record.ratings[static_cast<std::size_t>(i)];
        if (r < kRatingMin || r > kRatingMax)
            throw RatingOutOfRange(where + ": " + key_text(record.patient_id, record.visit_index) + " item " +
                                   std::to_string(i + 1) + " rating " + std::to_string(r) + " outside [" +
                                   std::to_string(kRatingMin) + ", " + std::to_string(kRatingMax) + "]");
    }

    Encounter& enc = encounters_[{record.patient_id, record.visit_index}];
    enc.patient_id = record.patient_id;
    enc.visit_index = record.visit_index;
    if (enc.assessment)
        throw DuplicateRecord(where + ": second assessment for " + key_text(record.patient_id, record.visit_index));
    enc.assessment = std::move(record);
}

std::size_t Corpus::transcript_count() const {
    std::size_t n = 0;
    for (const auto& [key, enc] : encounters_) n += (enc.open ? 1 : 0) + (enc.psychs ? 1 : 0);
    return n;
}

std::size_t Corpus::assessment_count() const {
    std::size_t n = 0;
    for (const auto& [key, enc] : encounters_) n += enc.assessment ? 1 : 0;
    return n;
}

std::string to_jsonl(const TranscriptDoc& doc) {
    nlohmann::ordered_json j;
    j["type"] = "transcript";
    j["patient_id"] = doc.patient_id;
    j["visit_index"] = doc.visit_index;
    j["kind"] = to_string(doc.kind);
    j["language"] = doc.language;
    j["text"] = doc.text;
    return j.dump();
}

std::string to_jsonl(const AssessmentRecord& record) {
    nlohmann::ordered_json j;
    j["type"] = "assessment";
    j["patient_id"] = record.patient_id;
    j["visit_index"] = record.visit_index;
    j["ratings"] = record.ratings;
    return j.dump();
}

void Corpus::export_jsonl(std::ostream& out) const {
    for (const auto& [key, enc] : encounters_) {
        if (enc.open) out << to_jsonl(*enc.open) << '\n';
        if (enc.psychs) out << to_jsonl(*enc.psychs) << '\n';
        if (enc.assessment) out << to_jsonl(*enc.assessment) << '\n';
    }
}

std::vector<EvalCase> eval_cases(const Corpus& corpus, const Selection& selection) {
    std::vector<EvalCase> cases;
    for (const auto& [key, enc] : corpus.encounters()) {
        if (!enc.assessment) continue;
        // Same-day PSYCHS wins over the open interview.
        const TranscriptDoc* chosen = nullptr;
        for (TranscriptKind kind : {TranscriptKind::psychs, TranscriptKind::open}) {
            const auto& doc = enc.transcript(kind);
            if (doc && selection.accepts(*doc)) {
                chosen = &*doc;
                break;
            }
        }
        if (!chosen) continue;
        cases.push_back(EvalCase{*chosen, *enc.assessment});
    }
    return cases;
}

std::vector<PatientTimeline> timelines(const Corpus& corpus, int min_points, const Selection& selection) {
    if (min_points < 1) throw std::invalid_argument("min_points must be >= 1");
    std::vector<PatientTimeline> out;
    // eval_cases is already ordered by (patient_id, visit_index).
    for (EvalCase& c : eval_cases(corpus, selection)) {
        if (out.empty() || out.back().patient_id != c.patient_id()) out.push_back({c.patient_id(), {}});
        out.back().cases.push_back(std::move(c));
    }
    std::erase_if(out, [&](const PatientTimeline& t) { return t.cases.size() < static_cast<std::size_t>(min_points); });
    return out;
}

}  // namespace scale_scribe
