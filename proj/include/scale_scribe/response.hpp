#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "scale_scribe/corpus.hpp"
#include "scale_scribe/scale.hpp"

namespace scale_scribe {

struct ItemRating {
    int item_index = 0;
    int rating = 0;
    std::string explanation;

    bool operator==(const ItemRating&) const = default;
};

struct PredictedAssessment {
    std::string patient_id;
    int visit_index = 0;
    std::vector<ItemRating> items;  // exactly kItemCount, ordered by item_index
    std::string provenance;         // request fingerprint

    Ratings ratings() const;
    int total() const { return total_of(ratings()); }
};

// Validates raw model output against the scale. Items are matched by
// normalized name (case, whitespace and punctuation ignored), falling back
// to an "index" field. Throws OutputError; never anything else.
PredictedAssessment parse_output(std::string_view raw_text, const ScaleDefinition& scale);

// Canonical structured output: {"items":[{"index","name","explanation","rating"} x24]}.
// parse_output(render_output(a)) reproduces a's ratings.
std::string render_output(const PredictedAssessment& assessment, const ScaleDefinition& scale);
std::string render_output(const AssessmentRecord& record, const ScaleDefinition& scale);

// JSON schema of the canonical output, sent to providers in schema mode.
nlohmann::json output_schema();

// Lower-cased alphanumerics only.
std::string normalize_item_name(std::string_view name);

}  // namespace scale_scribe
