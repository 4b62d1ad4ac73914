#include "scale_scribe/errors.hpp"

#include <iostream>
#include <mutex>

namespace scale_scribe {

ParseError::ParseError(const std::string& what, std::optional<std::size_t> line)
    : Error(line ? "line " + std::to_string(*line) + ": " + what : what), line_(line) {}

RateLimited::RateLimited(const std::string& what, std::optional<std::chrono::milliseconds> retry_after)
    : TransportError(what), retry_after_(retry_after) {}

OutputError::OutputError(Kind kind, std::string item, std::string value, const std::string& what)
    : Error(std::string(to_string(kind)) + ": " + what),
      kind_(kind),
      item_(std::move(item)),
      value_(std::move(value)) {}

const char* to_string(OutputError::Kind kind) {
    switch (kind) {
        case OutputError::Kind::malformed_json:
            return "MalformedJson";
        case OutputError::Kind::missing_item:
            return "MissingItem";
        case OutputError::Kind::unknown_item:
            return "UnknownItem";
        case OutputError::Kind::duplicate_item:
            return "DuplicateItem";
        case OutputError::Kind::rating_out_of_range:
            return "RatingOutOfRange";
        case OutputError::Kind::non_integer_rating:
            return "NonIntegerRating";
    }
    return "Unknown";
}

OutputRejected::OutputRejected(const std::string& what, OutputError last)
    : Error(what + " (last error: " + last.what() + ")"), last_(std::move(last)) {}

MetricsError::MetricsError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

namespace {
std::mutex g_sink_mutex;
WarningSink g_sink;
}  // namespace

void set_warning_sink(WarningSink sink) {
    std::lock_guard lock(g_sink_mutex);
    g_sink = std::move(sink);
}

void warn(const std::string& message) {
    std::lock_guard lock(g_sink_mutex);
    if (g_sink) {
        g_sink(message);
    } else {
        std::cerr << "warning: " << message << '\n';
    }
}

}  // namespace scale_scribe
