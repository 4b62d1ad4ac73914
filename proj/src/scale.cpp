#include "scale_scribe/scale.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "scale_scribe/errors.hpp"

namespace scale_scribe {

namespace {

std::string describe(const ScaleItem& item) {
    std::string out = "item " + std::to_string(item.index);
    if (!item.name.empty()) out += " (" + item.name + ")";
    return out;
}

template <typename T>
T required(const nlohmann::json& obj, const char* key, const std::string& where) {
    auto it = obj.find(key);
    if (it == obj.end()) throw ParseError(where + ": missing field '" + key + "'");
    try {
        return it->get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ParseError(where + ": field '" + key + "' has the wrong type");
    }
}

}  // namespace

const char* to_string(SourceTag tag) {
    switch (tag) {
        case SourceTag::self_reported:
            return "self_reported";
        case SourceTag::observed:
            return "observed";
        case SourceTag::dual:
            return "dual";
    }
    return "unknown";
}

std::optional<SourceTag> source_tag_from_string(const std::string& text) {
    if (text == "self_reported") return SourceTag::self_reported;
    if (text == "observed") return SourceTag::observed;
    if (text == "dual") return SourceTag::dual;
    return std::nullopt;
}

const ScaleItem& ScaleDefinition::item(int index) const {
    if (index < 1 || index > static_cast<int>(items.size()))
        throw std::out_of_range("scale item index " + std::to_string(index));
    return items[static_cast<std::size_t>(index - 1)];
}

ScaleDefinition parse_scale(const nlohmann::json& doc) {
    if (!doc.is_object()) throw ParseError("scale definition must be a JSON object");

    ScaleDefinition scale;
    scale.scale_id = required<std::string>(doc, "scale_id", "scale");
    scale.version = required<std::string>(doc, "version", "scale");
    scale.rating_min = required<int>(doc, "rating_min", "scale");
    scale.rating_max = required<int>(doc, "rating_max", "scale");
    scale.manual_text = doc.value("manual_text", std::string{});

    auto items_it = doc.find("items");
    if (items_it == doc.end() || !items_it->is_array()) throw ParseError("scale: 'items' must be an array");

    for (std::size_t i = 0; i < items_it->size(); ++i) {
        const auto& raw = (*items_it)[i];
        const std::string where = "scale item #" + std::to_string(i + 1);
        if (!raw.is_object()) throw ParseError(where + ": must be an object");

        ScaleItem item;
        item.index = required<int>(raw, "index", where);
        item.name = required<std::string>(raw, "name", where);
        item.definition = raw.value("definition", std::string{});
        item.not_present_anchor = raw.value("not_present_anchor", std::string{});
        item.factor_label = raw.value("factor_label", std::string{});
        if (auto tag = raw.find("source_tag"); tag != raw.end() && !tag->is_null()) {
            if (!tag->is_string()) throw ParseError(where + ": 'source_tag' must be a string");
            item.source_tag = source_tag_from_string(tag->get<std::string>());
            if (!item.source_tag) throw ParseError(where + ": unknown source_tag '" + tag->get<std::string>() + "'");
        }
        if (auto anchors = raw.find("anchors"); anchors != raw.end()) {
            if (!anchors->is_object()) throw ParseError(where + ": 'anchors' must be an object");
            for (const auto& [key, text] : anchors->items()) {
                int rating = 0;
                try {
                    std::size_t used = 0;
                    rating = std::stoi(key, &used);
                    if (used != key.size()) throw std::invalid_argument(key);
                } catch (const std::exception&) {
                    throw ParseError(where + ": anchor key '" + key + "' is not an integer rating");
                }
                if (!text.is_string()) throw ParseError(where + ": anchor " + key + " must be text");
                item.anchors[rating] = text.get<std::string>();
            }
        }
        scale.items.push_back(std::move(item));
    }

    validate(scale);
    return scale;
}

void validate(const ScaleDefinition& scale) {
    if (scale.rating_min != kRatingMin || scale.rating_max != kRatingMax)
        throw ValidationError("rating range must be [" + std::to_string(kRatingMin) + ", " +
                              std::to_string(kRatingMax) + "]");
    if (scale.items.size() != static_cast<std::size_t>(kItemCount))
        throw ValidationError("expected " + std::to_string(kItemCount) + " items, found " +
                              std::to_string(scale.items.size()));

    std::set<int> seen;
    for (std::size_t pos = 0; pos < scale.items.size(); ++pos) {
        const ScaleItem& item = scale.items[pos];
        if (item.index < 1 || item.index > kItemCount)
            throw ValidationError(describe(item) + ": index outside 1.." + std::to_string(kItemCount));
        if (!seen.insert(item.index).second) throw ValidationError(describe(item) + ": duplicate index");
        if (item.index != static_cast<int>(pos) + 1)
            throw ValidationError(describe(item) + ": items must be listed in index order");
        if (item.name.empty()) throw ValidationError(describe(item) + ": empty name");
        if (item.not_present_anchor.empty())
            throw ValidationError(describe(item) + ": missing not_present_anchor");
        for (int r = scale.rating_min + 1; r <= scale.rating_max; ++r) {
            auto it = item.anchors.find(r);
            if (it == item.anchors.end() || it->second.empty())
                throw ValidationError(describe(item) + ": missing anchor for rating " + std::to_string(r));
        }
        for (const auto& [rating, text] : item.anchors) {
            if (rating <= scale.rating_min || rating > scale.rating_max)
                throw ValidationError(describe(item) + ": anchor for rating " + std::to_string(rating) +
                                      " outside " + std::to_string(scale.rating_min + 1) + ".." +
                                      std::to_string(scale.rating_max));
        }
    }
}

ScaleDefinition parse_scale_text(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("scale definition is not valid JSON: ") + e.what());
    }
    return parse_scale(doc);
}

ScaleDefinition load_scale(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open scale definition " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_scale_text(buffer.str());
}

nlohmann::ordered_json to_json(const ScaleDefinition& scale) {
    nlohmann::ordered_json doc;
    doc["scale_id"] = scale.scale_id;
    doc["version"] = scale.version;
    doc["rating_min"] = scale.rating_min;
    doc["rating_max"] = scale.rating_max;
    doc["manual_text"] = scale.manual_text;
    auto& items = doc["items"] = nlohmann::ordered_json::array();
    for (const ScaleItem& item : scale.items) {
        nlohmann::ordered_json entry;
        entry["index"] = item.index;
        entry["name"] = item.name;
        if (!item.definition.empty()) entry["definition"] = item.definition;
        if (item.source_tag) entry["source_tag"] = to_string(*item.source_tag);
        if (!item.factor_label.empty()) entry["factor_label"] = item.factor_label;
        entry["not_present_anchor"] = item.not_present_anchor;
        auto& anchors = entry["anchors"] = nlohmann::ordered_json::object();
        for (const auto& [rating, text] : item.anchors) anchors[std::to_string(rating)] = text;
        items.push_back(std::move(entry));
    }
    return doc;
}

std::filesystem::path bundled_scale_path() {
    return std::filesystem::path(SCALE_SCRIBE_ASSET_DIR) / "bprs-e-24.json";
}

std::map<std::string, std::vector<int>> item_groups(const ScaleDefinition& scale, Grouping grouping) {
    std::map<std::string, std::vector<int>> groups;
    for (const ScaleItem& item : scale.items) {
        if (grouping == Grouping::source) {
            if (!item.source_tag) throw MissingMetadata(describe(item) + ": no source_tag");
            const bool observed = *item.source_tag != SourceTag::self_reported;
            groups[observed ? "observed" : "self_reported"].push_back(item.index);
        } else {
            if (item.factor_label.empty()) throw MissingMetadata(describe(item) + ": no factor_label");
            groups[item.factor_label].push_back(item.index);
        }
    }
    return groups;
}

}  // namespace scale_scribe
