#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>

#include "json.hpp"
#include "scale_scribe/corpus.hpp"
#include "scale_scribe/prompt.hpp"
#include "scale_scribe/response.hpp"
#include "scale_scribe/scale.hpp"

namespace scale_scribe {

inline constexpr const char* kApiKeyEnv = "SCALE_SCRIBE_API_KEY";

// json_schema sends the canonical output schema; json_object only asks
// for JSON. Local validation applies either way.
enum class OutputMode { json_schema, json_object };

struct ModelConfig {
    std::string endpoint_url = "https://api.openai.com/v1/chat/completions";
    std::string model_name = "o3-mini-2025-01-31";
    // Merged into the request body verbatim. Nothing else is sent: no
    // temperature or other sampling defaults are injected.
    nlohmann::json extra_params = nlohmann::json::object();
    int max_retries = 3;
    std::chrono::milliseconds timeout{std::chrono::seconds(300)};
    int max_concurrent_requests = 4;
    OutputMode output_mode = OutputMode::json_schema;
    std::chrono::milliseconds initial_backoff{std::chrono::seconds(1)};

    void validate() const;
};

ModelConfig model_config_from_json(const nlohmann::json& doc);
nlohmann::ordered_json to_json(const ModelConfig& config);

enum class BackendKind { live, scripted, replay };
const char* to_string(BackendKind kind);

struct CompletionResult {
    std::string raw_text;
    std::string request_fingerprint;
    int attempts = 1;
    BackendKind backend = BackendKind::live;
};

// SHA-256 (hex) over the canonical JSON of system text, messages, model
// name and extra params.
std::string request_fingerprint(const PromptBundle& bundle, const ModelConfig& config);

// Chat-completion request body: model, system + bundle messages,
// response_format, then extra_params.
nlohmann::json build_request_body(const PromptBundle& bundle, const ModelConfig& config);

// One raw attempt; no retries, no validation.
class Backend {
public:
    virtual ~Backend() = default;
    virtual CompletionResult complete(const PromptBundle& bundle, const ModelConfig& config) = 0;
    virtual BackendKind kind() const = 0;
};

// POSTs to config.endpoint_url with bearer auth from SCALE_SCRIBE_API_KEY.
class HttpBackend : public Backend {
public:
    explicit HttpBackend(std::optional<std::string> api_key = std::nullopt);

    CompletionResult complete(const PromptBundle& bundle, const ModelConfig& config) override;
    BackendKind kind() const override { return BackendKind::live; }

    std::size_t requests_sent() const { return requests_.load(); }

private:
    std::string api_key_;
    std::atomic<std::size_t> requests_{0};
};

struct NoiseModel {
    enum class Kind { none, uniform, item_bias };

    Kind kind = Kind::none;
    int magnitude = 0;             // uniform: integer noise in [-magnitude, magnitude]
    std::map<int, int> item_bias;  // item_bias: item index -> additive offset
    std::uint64_t seed = 0;

    static NoiseModel none() { return {}; }
    static NoiseModel uniform(int magnitude, std::uint64_t seed);
    static NoiseModel biased(std::map<int, int> bias);

    std::string describe() const;
};

NoiseModel noise_model_from_json(const nlohmann::json& doc);
nlohmann::ordered_json to_json(const NoiseModel& noise);

// Applies `noise` to `truth` and clips to [1, 7]. The noise draw depends
// only on the seed and the record's (patient_id, visit_index).
Ratings perturb(const AssessmentRecord& truth, const NoiseModel& noise);

// Synthetic rater answering from known true ratings, keyed by the bundle's
// target. Emits canonical structured output with placeholder explanations.
class ScriptedRater : public Backend {
public:
    ScriptedRater(std::vector<AssessmentRecord> truths, NoiseModel noise, const ScaleDefinition& scale);

    CompletionResult complete(const PromptBundle& bundle, const ModelConfig& config) override;
    BackendKind kind() const override { return BackendKind::scripted; }

    std::size_t calls() const { return calls_.load(); }

private:
    std::map<std::pair<std::string, int>, AssessmentRecord> truths_;
    NoiseModel noise_;
    ScaleDefinition scale_;
    std::atomic<std::size_t> calls_{0};
};

std::unique_ptr<ScriptedRater> scripted_rater(const AssessmentRecord& truth, NoiseModel noise,
                                              const ScaleDefinition& scale);

// Content-addressed response cache: <dir>/<fingerprint>.json holding
// {request, raw_text, timestamp}.
//   record: hits are served from disk, misses go upstream and are
//           persisted when they pass `accept`.
//   replay: offline; a miss is a TransportError.
class CachingBackend : public Backend {
public:
    enum class Mode { record, replay };
    using Acceptor = std::function<bool(const std::string& raw_text)>;

    CachingBackend(std::filesystem::path dir, Mode mode, Backend* upstream = nullptr, Acceptor accept = {});

    CompletionResult complete(const PromptBundle& bundle, const ModelConfig& config) override;
    BackendKind kind() const override { return BackendKind::replay; }

    std::size_t upstream_calls() const { return upstream_calls_.load(); }
    std::size_t hits() const { return hits_.load(); }
    std::filesystem::path entry_path(const std::string& fingerprint) const;

private:
    std::optional<std::string> lookup(const std::string& fingerprint) const;
    void store(const std::string& fingerprint, const nlohmann::json& request, const std::string& raw_text);

    std::filesystem::path dir_;
    Mode mode_;
    Backend* upstream_;
    Acceptor accept_;
    std::mutex write_mutex_;
    std::atomic<std::size_t> upstream_calls_{0};
    std::atomic<std::size_t> hits_{0};
};

struct ValidatedCompletion {
    CompletionResult completion;
    PredictedAssessment assessment;
};

// Retries, backoff, local validation and the in-flight request limit.
class Gateway {
public:
    Gateway(Backend& backend, ModelConfig config, const ScaleDefinition& scale);

    // Throws TransportError / RateLimited when the transport keeps failing
    // and OutputRejected when every attempt fails validation.
    ValidatedCompletion complete(const PromptBundle& bundle);

    const ModelConfig& config() const { return config_; }
    std::size_t backend_calls() const { return backend_calls_.load(); }
    std::size_t peak_in_flight() const { return peak_in_flight_.load(); }

    // Test hook; the default sleeps the current thread.
    void set_sleeper(std::function<void(std::chrono::milliseconds)> sleeper) { sleeper_ = std::move(sleeper); }

private:
    CompletionResult call_backend(const PromptBundle& bundle);

    Backend& backend_;
    ModelConfig config_;
    const ScaleDefinition& scale_;
    std::counting_semaphore<> slots_;
    std::atomic<int> in_flight_{0};
    std::atomic<std::size_t> peak_in_flight_{0};
    std::atomic<std::size_t> backend_calls_{0};
    std::function<void(std::chrono::milliseconds)> sleeper_;
};

}  // namespace scale_scribe
