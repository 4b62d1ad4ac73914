#include "scale_scribe/response.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <map>
#include <optional>

#include "scale_scribe/errors.hpp"

namespace scale_scribe {

namespace {

using Kind = OutputError::Kind;

constexpr const char* kTruthExplanation = "Clinician rating recorded for this visit.";

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

std::optional<nlohmann::json> try_parse(std::string_view text) {
    auto doc = nlohmann::json::parse(text.begin(), text.end(), nullptr, /*allow_exceptions=*/false);
    if (doc.is_discarded()) return std::nullopt;
    return doc;
}

// Accepts bare JSON, JSON wrapped in a markdown fence, or JSON embedded in
// surrounding prose.
nlohmann::json parse_document(std::string_view raw) {
    std::string_view text = trim(raw);
    if (text.starts_with("```")) {
        const auto newline = text.find('\n');
        text = newline == std::string_view::npos ? std::string_view{} : text.substr(newline + 1);
        if (const auto fence = text.rfind("```"); fence != std::string_view::npos) text = text.substr(0, fence);
        text = trim(text);
    }
    if (auto doc = try_parse(text)) return *doc;
    const auto open = text.find('{');
    const auto close = text.rfind('}');
    if (open != std::string_view::npos && close != std::string_view::npos && close > open) {
        if (auto doc = try_parse(text.substr(open, close - open + 1))) return *doc;
    }
    throw OutputError(Kind::malformed_json, "", "", "output is not valid JSON");
}

std::string value_text(const nlohmann::json& value) {
    return value.is_string() ? value.get<std::string>() : value.dump();
}

int check_range(double value, const std::string& item, const std::string& shown) {
    if (value < kRatingMin || value > kRatingMax)
        throw OutputError(Kind::rating_out_of_range, item, shown,
                          "rating " + shown + " for '" + item + "' outside [" + std::to_string(kRatingMin) + ", " +
                              std::to_string(kRatingMax) + "]");
    return static_cast<int>(value);
}

[[noreturn]] void non_integer(const std::string& item, const std::string& shown) {
    throw OutputError(Kind::non_integer_rating, item, shown, "rating " + shown + " for '" + item + "' is not an integer");
}

int coerce_rating(const nlohmann::json& value, const std::string& item) {
    const std::string shown = value_text(value);
    if (value.is_number_integer()) {
        if (value.is_number_unsigned()) {
            const auto u = value.get<std::uint64_t>();
            return check_range(u > 1000 ? 1000.0 : static_cast<double>(u), item, shown);
        }
        const auto i = value.get<std::int64_t>();
        return check_range(std::clamp<std::int64_t>(i, -1000, 1000), item, shown);
    }
    if (value.is_number_float()) {
        const double d = value.get<double>();
        if (!std::isfinite(d) || d != std::floor(d)) non_integer(item, shown);
        return check_range(d, item, shown);
    }
    if (value.is_string()) {
        const std::string_view text = trim(value.get_ref<const std::string&>());
        if (text.empty()) non_integer(item, shown);
        long long parsed = 0;
        const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), parsed);
        if (ec == std::errc{} && ptr == text.data() + text.size())
            return check_range(static_cast<double>(std::clamp<long long>(parsed, -1000, 1000)), item, shown);
        double d = 0;
        const auto [dptr, dec] = std::from_chars(text.data(), text.data() + text.size(), d);
        if (dec == std::errc{} && dptr == text.data() + text.size() && std::isfinite(d) && d == std::floor(d))
            return check_range(d, item, shown);
        non_integer(item, shown);
    }
    non_integer(item, shown);
}

std::optional<int> index_field(const nlohmann::json& entry) {
    auto it = entry.find("index");
    if (it == entry.end()) return std::nullopt;
    if (it->is_number_integer()) {
        if (it->is_number_unsigned()) {
            const auto u = it->get<std::uint64_t>();
            return u <= static_cast<std::uint64_t>(kItemCount) ? std::optional<int>(static_cast<int>(u)) : -1;
        }
        const auto i = it->get<std::int64_t>();
        return (i >= 1 && i <= kItemCount) ? std::optional<int>(static_cast<int>(i)) : -1;
    }
    return -1;
}

const nlohmann::json& items_array(const nlohmann::json& doc) {
    if (doc.is_array()) return doc;
    if (doc.is_object()) {
        auto it = doc.find("items");
        if (it != doc.end() && it->is_array()) return *it;
    }
    throw OutputError(Kind::malformed_json, "", "", "output has no 'items' array");
}

}  // namespace

Ratings PredictedAssessment::ratings() const {
    Ratings out{};
    for (const ItemRating& item : items) {
        if (item.item_index >= 1 && item.item_index <= kItemCount)
            out[static_cast<std::size_t>(item.item_index - 1)] = item.rating;
    }
    return out;
}

std::string normalize_item_name(std::string_view name) {
    std::string out;
    out.reserve(name.size());
    for (char c : name) {
        const auto u = static_cast<unsigned char>(c);
        if (u >= 0x80 || std::isalnum(u)) out.push_back(static_cast<char>(u < 0x80 ? std::tolower(u) : u));
    }
    return out;
}

namespace {

PredictedAssessment parse_checked(std::string_view raw_text, const ScaleDefinition& scale) {
    const nlohmann::json doc = parse_document(raw_text);
    const nlohmann::json& entries = items_array(doc);

    std::map<std::string, int> by_name;
    for (const ScaleItem& item : scale.items) by_name.emplace(normalize_item_name(item.name), item.index);

    std::vector<std::optional<ItemRating>> slots(static_cast<std::size_t>(kItemCount));
    for (const auto& entry : entries) {
        if (!entry.is_object()) throw OutputError(Kind::malformed_json, "", "", "item entry is not an object");

        std::optional<int> index;
        std::string label;
        auto name_it = entry.find("name");
        const bool has_name = name_it != entry.end() && name_it->is_string();
        if (has_name) {
            label = name_it->get<std::string>();
            if (auto hit = by_name.find(normalize_item_name(label)); hit != by_name.end()) index = hit->second;
        }
        if (!index) {
            const auto from_index = index_field(entry);
            if (from_index && *from_index > 0) {
                index = *from_index;
                if (label.empty()) label = scale.item(*index).name;
            } else if (has_name) {
                throw OutputError(Kind::unknown_item, label, "", "'" + label + "' is not an item of " + scale.scale_id);
            } else if (from_index) {
                throw OutputError(Kind::unknown_item, value_text(entry.at("index")), "",
                                  "index " + value_text(entry.at("index")) + " is not an item of " + scale.scale_id);
            } else {
                throw OutputError(Kind::malformed_json, "", "", "item entry has neither name nor index");
            }
        }

        auto& slot = slots[static_cast<std::size_t>(*index - 1)];
        if (slot) throw OutputError(Kind::duplicate_item, label, "", "'" + label + "' rated more than once");

        auto rating_it = entry.find("rating");
        if (rating_it == entry.end()) non_integer(label, "missing");
        ItemRating rated;
        rated.item_index = *index;
        rated.rating = coerce_rating(*rating_it, label);
        if (auto ex = entry.find("explanation"); ex != entry.end() && !ex->is_null()) rated.explanation = value_text(*ex);
        slot = std::move(rated);
    }

    PredictedAssessment out;
    out.items.reserve(slots.size());
    for (std::size_t i = 0; i < slots.size(); ++i) {
        if (!slots[i]) {
            const std::string& name = scale.items[i].name;
            throw OutputError(Kind::missing_item, name, "", "no rating for '" + name + "'");
        }
        out.items.push_back(std::move(*slots[i]));
    }
    return out;
}

}  // namespace

PredictedAssessment parse_output(std::string_view raw_text, const ScaleDefinition& scale) {
    try {
        return parse_checked(raw_text, scale);
    } catch (const OutputError&) {
        throw;
    } catch (const std::exception& e) {
        throw OutputError(Kind::malformed_json, "", "", e.what());
    }
}

std::string render_output(const PredictedAssessment& assessment, const ScaleDefinition& scale) {
    nlohmann::ordered_json doc;
    auto& items = doc["items"] = nlohmann::ordered_json::array();
    for (const ItemRating& rated : assessment.items) {
        nlohmann::ordered_json entry;
        entry["index"] = rated.item_index;
        entry["name"] = scale.item(rated.item_index).name;
        entry["explanation"] = rated.explanation;
        entry["rating"] = rated.rating;
        items.push_back(std::move(entry));
    }
    return doc.dump(2);
}

std::string render_output(const AssessmentRecord& record, const ScaleDefinition& scale) {
    PredictedAssessment as_output;
    as_output.patient_id = record.patient_id;
    as_output.visit_index = record.visit_index;
    for (int i = 0; i < kItemCount; ++i)
        as_output.items.push_back({i + 1, record.ratings[static_cast<std::size_t>(i)], kTruthExplanation});
    return render_output(as_output, scale);
}

nlohmann::json output_schema() {
    nlohmann::json item = {
        {"type", "object"},
        {"properties",
         {{"index", {{"type", "integer"}}},
          {"name", {{"type", "string"}}},
          {"explanation", {{"type", "string"}}},
          {"rating", {{"type", "integer"}, {"minimum", kRatingMin}, {"maximum", kRatingMax}}}}},
        {"required", {"index", "name", "explanation", "rating"}},
        {"additionalProperties", false},
    };
    return {
        {"type", "object"},
        {"properties", {{"items", {{"type", "array"}, {"minItems", kItemCount}, {"maxItems", kItemCount}, {"items", item}}}}},
        {"required", {"items"}},
        {"additionalProperties", false},
    };
}

}  // namespace scale_scribe
