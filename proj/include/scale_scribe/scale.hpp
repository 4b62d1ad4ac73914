#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace scale_scribe {

// The BPRS-E has 24 items rated 1..7; totals range over [24, 168].
inline constexpr int kItemCount = 24;
inline constexpr int kRatingMin = 1;
inline constexpr int kRatingMax = 7;
inline constexpr int kTotalMin = kItemCount * kRatingMin;
inline constexpr int kTotalMax = kItemCount * kRatingMax;

using Ratings = std::array<int, kItemCount>;

inline int total_of(const Ratings& ratings) {
    int sum = 0;
    for (int r : ratings) sum += r;
    return sum;
}

enum class SourceTag { self_reported, observed, dual };

const char* to_string(SourceTag tag);
std::optional<SourceTag> source_tag_from_string(const std::string& text);

struct ScaleItem {
    int index = 0;  // 1-based
    std::string name;
    std::string definition;
    std::map<int, std::string> anchors;  // rating 2..max -> text
    std::string not_present_anchor;      // rating 1
    std::optional<SourceTag> source_tag;
    std::string factor_label;  // empty when unlabeled

    bool operator==(const ScaleItem&) const = default;
};

struct ScaleDefinition {
    std::string scale_id;
    std::string version;
    int rating_min = kRatingMin;
    int rating_max = kRatingMax;
    std::string manual_text;
    std::vector<ScaleItem> items;  // ordered by index

    // Items are stored contiguously by index, so this is items[index - 1].
    const ScaleItem& item(int index) const;

    bool operator==(const ScaleDefinition&) const = default;
};

ScaleDefinition load_scale(const std::filesystem::path& path);
ScaleDefinition parse_scale(const nlohmann::json& doc);
ScaleDefinition parse_scale_text(const std::string& text);
nlohmann::ordered_json to_json(const ScaleDefinition& scale);

// Throws ValidationError naming the offending item.
void validate(const ScaleDefinition& scale);

// Path of the bundled BPRS-E definition.
std::filesystem::path bundled_scale_path();

enum class Grouping { source, factor };

// Source grouping yields "self_reported" and "observed"; dual items go to
// observed. Factor grouping is a partition keyed by factor label.
std::map<std::string, std::vector<int>> item_groups(const ScaleDefinition& scale, Grouping grouping);

}  // namespace scale_scribe
