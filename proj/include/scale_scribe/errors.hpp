#pragma once

#include <chrono>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>

namespace scale_scribe {

// Root of every error the library throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input text or file could not be parsed. `line` is 1-based when known.
class ParseError : public Error {
public:
    explicit ParseError(const std::string& what, std::optional<std::size_t> line = std::nullopt);
    std::optional<std::size_t> line() const noexcept { return line_; }

private:
    std::optional<std::size_t> line_;
};

// Parsed input violates a domain invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

class MissingMetadata : public Error {
public:
    using Error::Error;
};

class DuplicateRecord : public Error {
public:
    using Error::Error;
};

class RatingOutOfRange : public Error {
public:
    using Error::Error;
};

class InsufficientHistory : public Error {
public:
    using Error::Error;
};

class StrategyNeedsNoPrompt : public Error {
public:
    using Error::Error;
};

class TransportError : public Error {
public:
    using Error::Error;
};

// Replay cache has no response for a request. Not worth retrying.
class CacheMiss : public TransportError {
public:
    using TransportError::TransportError;
};

class RateLimited : public TransportError {
public:
    RateLimited(const std::string& what, std::optional<std::chrono::milliseconds> retry_after);
    std::optional<std::chrono::milliseconds> retry_after() const noexcept { return retry_after_; }

private:
    std::optional<std::chrono::milliseconds> retry_after_;
};

// Model output failed structural validation.
class OutputError : public Error {
public:
    enum class Kind {
        malformed_json,
        missing_item,
        unknown_item,
        duplicate_item,
        rating_out_of_range,
        non_integer_rating,
    };

    OutputError(Kind kind, std::string item, std::string value, const std::string& what);

    Kind kind() const noexcept { return kind_; }
    const std::string& item() const noexcept { return item_; }
    const std::string& value() const noexcept { return value_; }

private:
    Kind kind_;
    std::string item_;
    std::string value_;
};

const char* to_string(OutputError::Kind kind);

// Every attempt produced output that failed validation.
class OutputRejected : public Error {
public:
    OutputRejected(const std::string& what, OutputError last);
    const OutputError& last_error() const noexcept { return last_; }

private:
    OutputError last_;
};

class MetricsError : public Error {
public:
    enum class Kind { empty_input, degenerate_variance, degenerate, ties_in_exact_mode, invalid_argument };

    MetricsError(Kind kind, const std::string& what);
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

// Warnings go to stderr unless a sink is installed.
using WarningSink = std::function<void(const std::string&)>;
void set_warning_sink(WarningSink sink);
void warn(const std::string& message);

}  // namespace scale_scribe
