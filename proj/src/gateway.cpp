#include "scale_scribe/gateway.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#include "scale_scribe/errors.hpp"
#include "scale_scribe/rng.hpp"

namespace scale_scribe {

namespace {

std::string sha256_hex(const std::string& data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int length = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &length, EVP_sha256(), nullptr) != 1)
        throw Error("SHA-256 digest failed");
    std::ostringstream hex;
    for (unsigned int i = 0; i < length; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return hex.str();
}

std::uint64_t fnv1a64(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream out;
    out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return out.str();
}

}  // namespace

void ModelConfig::validate() const {
    if (max_retries < 0) throw ValidationError("model.max_retries must be >= 0");
    if (max_concurrent_requests < 1) throw ValidationError("model.max_concurrent_requests must be >= 1");
    if (!extra_params.is_object()) throw ValidationError("model.extra_params must be an object");
}

ModelConfig model_config_from_json(const nlohmann::json& doc) {
    ModelConfig config;
    if (!doc.is_object()) throw ParseError("model config must be an object");
    config.endpoint_url = doc.value("endpoint_url", config.endpoint_url);
    config.model_name = doc.value("model_name", config.model_name);
    if (doc.contains("extra_params")) config.extra_params = doc.at("extra_params");
    config.max_retries = doc.value("max_retries", config.max_retries);
    config.max_concurrent_requests = doc.value("max_concurrent_requests", config.max_concurrent_requests);
    if (doc.contains("timeout_ms")) config.timeout = std::chrono::milliseconds(doc.at("timeout_ms").get<std::int64_t>());
    if (doc.contains("initial_backoff_ms"))
        config.initial_backoff = std::chrono::milliseconds(doc.at("initial_backoff_ms").get<std::int64_t>());
    const std::string mode = doc.value("output_mode", std::string("json_schema"));
    if (mode == "json_schema") {
        config.output_mode = OutputMode::json_schema;
    } else if (mode == "json_object") {
        config.output_mode = OutputMode::json_object;
    } else {
        throw ParseError("unknown output_mode '" + mode + "'");
    }
    config.validate();
    return config;
}

nlohmann::ordered_json to_json(const ModelConfig& config) {
    nlohmann::ordered_json doc;
    doc["endpoint_url"] = config.endpoint_url;
    doc["model_name"] = config.model_name;
    doc["extra_params"] = config.extra_params;
    doc["max_retries"] = config.max_retries;
    doc["timeout_ms"] = config.timeout.count();
    doc["max_concurrent_requests"] = config.max_concurrent_requests;
    doc["output_mode"] = config.output_mode == OutputMode::json_schema ? "json_schema" : "json_object";
    doc["initial_backoff_ms"] = config.initial_backoff.count();
    return doc;
}

const char* to_string(BackendKind kind) {
    switch (kind) {
        case BackendKind::live:
            return "live";
        case BackendKind::scripted:
            return "scripted";
        case BackendKind::replay:
            return "replay";
    }
    return "unknown";
}

std::string request_fingerprint(const PromptBundle& bundle, const ModelConfig& config) {
    nlohmann::json canonical;  // std::map-backed: keys serialize sorted
    canonical["system"] = bundle.system_text;
    canonical["model"] = config.model_name;
    canonical["extra_params"] = config.extra_params;
    auto& messages = canonical["messages"] = nlohmann::json::array();
    for (const Message& m : bundle.messages) messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
    return sha256_hex(canonical.dump());
}

nlohmann::json build_request_body(const PromptBundle& bundle, const ModelConfig& config) {
    nlohmann::json body;
    body["model"] = config.model_name;
    auto& messages = body["messages"] = nlohmann::json::array();
    messages.push_back({{"role", "system"}, {"content", bundle.system_text}});
    for (const Message& m : bundle.messages) messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
    if (config.output_mode == OutputMode::json_schema) {
        body["response_format"] = {
            {"type", "json_schema"},
            {"json_schema", {{"name", "scale_assessment"}, {"strict", true}, {"schema", output_schema()}}},
        };
    } else {
        body["response_format"] = {{"type", "json_object"}};
    }
    for (const auto& [key, value] : config.extra_params.items()) body[key] = value;
    return body;
}

// ---- scripted rater -------------------------------------------------------

NoiseModel NoiseModel::uniform(int magnitude, std::uint64_t seed) {
    if (magnitude < 0) throw ValidationError("uniform noise magnitude must be >= 0");
    NoiseModel noise;
    noise.kind = Kind::uniform;
    noise.magnitude = magnitude;
    noise.seed = seed;
    return noise;
}

NoiseModel NoiseModel::biased(std::map<int, int> bias) {
    for (const auto& [item, offset] : bias) {
        (void)offset;
        if (item < 1 || item > kItemCount) throw ValidationError("item_bias names unknown item " + std::to_string(item));
    }
    NoiseModel noise;
    noise.kind = Kind::item_bias;
    noise.item_bias = std::move(bias);
    return noise;
}

std::string NoiseModel::describe() const {
    switch (kind) {
        case Kind::none:
            return "none";
        case Kind::uniform:
            return "uniform+-" + std::to_string(magnitude);
        case Kind::item_bias:
            return "item_bias";
    }
    return "unknown";
}

NoiseModel noise_model_from_json(const nlohmann::json& doc) {
    if (!doc.is_object()) throw ParseError("scripted noise must be an object");
    const std::string kind = doc.value("noise", std::string("none"));
    const auto seed = doc.value("seed", std::uint64_t{0});
    if (kind == "none") return NoiseModel::none();
    if (kind == "uniform") return NoiseModel::uniform(doc.value("magnitude", 1), seed);
    if (kind == "item_bias") {
        std::map<int, int> bias;
        for (const auto& [key, value] : doc.at("item_bias").items()) bias[std::stoi(key)] = value.get<int>();
        return NoiseModel::biased(std::move(bias));
    }
    throw ParseError("unknown scripted noise kind '" + kind + "'");
}

nlohmann::ordered_json to_json(const NoiseModel& noise) {
    nlohmann::ordered_json doc;
    switch (noise.kind) {
        case NoiseModel::Kind::none:
            doc["noise"] = "none";
            break;
        case NoiseModel::Kind::uniform:
            doc["noise"] = "uniform";
            doc["magnitude"] = noise.magnitude;
            doc["seed"] = noise.seed;
            break;
        case NoiseModel::Kind::item_bias: {
            doc["noise"] = "item_bias";
            auto& bias = doc["item_bias"] = nlohmann::ordered_json::object();
            for (const auto& [item, offset] : noise.item_bias) bias[std::to_string(item)] = offset;
            break;
        }
    }
    return doc;
}

Ratings perturb(const AssessmentRecord& truth, const NoiseModel& noise) {
    Ratings out = truth.ratings;
    switch (noise.kind) {
        case NoiseModel::Kind::none:
            break;
        case NoiseModel::Kind::uniform: {
            Pcg32 rng(noise.seed, fnv1a64(truth.patient_id + "#" + std::to_string(truth.visit_index)));
            const auto span = static_cast<std::uint32_t>(2 * noise.magnitude + 1);
            for (int& r : out) r += static_cast<int>(rng.bounded(span)) - noise.magnitude;
            break;
        }
        case NoiseModel::Kind::item_bias:
            for (const auto& [item, offset] : noise.item_bias) out[static_cast<std::size_t>(item - 1)] += offset;
            break;
    }
    for (int& r : out) r = std::clamp(r, kRatingMin, kRatingMax);
    return out;
}

ScriptedRater::ScriptedRater(std::vector<AssessmentRecord> truths, NoiseModel noise, const ScaleDefinition& scale)
    : noise_(std::move(noise)), scale_(scale) {
    for (auto& t : truths) {
        auto key = std::pair(t.patient_id, t.visit_index);
        truths_.insert_or_assign(std::move(key), std::move(t));
    }
}

CompletionResult ScriptedRater::complete(const PromptBundle& bundle, const ModelConfig& config) {
    ++calls_;
    auto it = truths_.find({bundle.target.patient_id, bundle.target.visit_index});
    if (it == truths_.end())
        throw TransportError("scripted rater has no assessment for patient " + bundle.target.patient_id + " visit " +
                             std::to_string(bundle.target.visit_index));

    const Ratings ratings = perturb(it->second, noise_);
    PredictedAssessment out;
    out.patient_id = bundle.target.patient_id;
    out.visit_index = bundle.target.visit_index;
    for (int i = 0; i < kItemCount; ++i)
        out.items.push_back({i + 1, ratings[static_cast<std::size_t>(i)],
                             "Scripted rating derived from the recorded assessment (noise: " + noise_.describe() + ")."});

    CompletionResult result;
    result.raw_text = render_output(out, scale_);
    result.request_fingerprint = request_fingerprint(bundle, config);
    result.backend = BackendKind::scripted;
    return result;
}

std::unique_ptr<ScriptedRater> scripted_rater(const AssessmentRecord& truth, NoiseModel noise,
                                              const ScaleDefinition& scale) {
    return std::make_unique<ScriptedRater>(std::vector<AssessmentRecord>{truth}, std::move(noise), scale);
}

// ---- cache ----------------------------------------------------------------

CachingBackend::CachingBackend(std::filesystem::path dir, Mode mode, Backend* upstream, Acceptor accept)
    : dir_(std::move(dir)), mode_(mode), upstream_(upstream), accept_(std::move(accept)) {
    if (mode_ == Mode::record) {
        if (!upstream_) throw std::invalid_argument("record mode needs an upstream backend");
        std::filesystem::create_directories(dir_);
    }
}

std::filesystem::path CachingBackend::entry_path(const std::string& fingerprint) const {
    return dir_ / (fingerprint + ".json");
}

std::optional<std::string> CachingBackend::lookup(const std::string& fingerprint) const {
    std::ifstream in(entry_path(fingerprint), std::ios::binary);
    if (!in) return std::nullopt;
    std::ostringstream buffer;
    buffer << in.rdbuf();
    auto doc = nlohmann::json::parse(buffer.str(), nullptr, false);
    if (doc.is_discarded() || !doc.contains("raw_text") || !doc.at("raw_text").is_string()) {
        warn("ignoring unreadable cache entry " + entry_path(fingerprint).string());
        return std::nullopt;
    }
    return doc.at("raw_text").get<std::string>();
}

void CachingBackend::store(const std::string& fingerprint, const nlohmann::json& request, const std::string& raw_text) {
    nlohmann::ordered_json entry;
    entry["request"] = request;
    entry["raw_text"] = raw_text;
    entry["timestamp"] = utc_timestamp();

    std::lock_guard lock(write_mutex_);
    const auto final_path = entry_path(fingerprint);
    const auto tmp_path = dir_ / (fingerprint + ".json.tmp");
    {
        std::ofstream out(tmp_path, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write cache entry " + tmp_path.string());
        out << entry.dump(2) << '\n';
    }
    std::filesystem::rename(tmp_path, final_path);
}

CompletionResult CachingBackend::complete(const PromptBundle& bundle, const ModelConfig& config) {
    const std::string fingerprint = request_fingerprint(bundle, config);
    if (auto cached = lookup(fingerprint)) {
        ++hits_;
        return CompletionResult{std::move(*cached), fingerprint, 1, BackendKind::replay};
    }
    if (mode_ == Mode::replay) throw CacheMiss("no cached response for " + fingerprint);

    ++upstream_calls_;
    CompletionResult result = upstream_->complete(bundle, config);
    result.request_fingerprint = fingerprint;
    if (!accept_ || accept_(result.raw_text)) store(fingerprint, build_request_body(bundle, config), result.raw_text);
    return result;
}

// ---- gateway --------------------------------------------------------------

Gateway::Gateway(Backend& backend, ModelConfig config, const ScaleDefinition& scale)
    : backend_(backend),
      config_(std::move(config)),
      scale_(scale),
      slots_((config_.validate(), config_.max_concurrent_requests)),
      sleeper_([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }) {}

CompletionResult Gateway::call_backend(const PromptBundle& bundle) {
    slots_.acquire();
    struct Release {
        Gateway& g;
        ~Release() {
            --g.in_flight_;
            g.slots_.release();
        }
    } release{*this};

    const auto now = static_cast<std::size_t>(++in_flight_);
    std::size_t peak = peak_in_flight_.load();
    while (now > peak && !peak_in_flight_.compare_exchange_weak(peak, now)) {
    }
    ++backend_calls_;
    return backend_.complete(bundle, config_);
}

ValidatedCompletion Gateway::complete(const PromptBundle& bundle) {
    const int max_attempts = config_.max_retries + 1;
    std::optional<OutputError> last_output_error;
    std::chrono::milliseconds wait{0};

    for (int attempt = 1; attempt <= max_attempts; ++attempt) {
        if (attempt > 1) {
            const std::chrono::milliseconds backoff = config_.initial_backoff * (1LL << std::min(attempt - 2, 20));
            sleeper_(std::max(wait, backoff));
            wait = std::chrono::milliseconds{0};
        }

        CompletionResult result;
        try {
            result = call_backend(bundle);
        } catch (const CacheMiss&) {
            throw;
        } catch (const RateLimited& e) {
            if (attempt == max_attempts) throw;
            wait = e.retry_after().value_or(std::chrono::milliseconds{0});
            continue;
        } catch (const TransportError& e) {
            if (attempt == max_attempts)
                throw TransportError(std::string(e.what()) + " (after " + std::to_string(attempt) + " attempts)");
            continue;
        }

        try {
            PredictedAssessment assessment = parse_output(result.raw_text, scale_);
            assessment.patient_id = bundle.target.patient_id;
            assessment.visit_index = bundle.target.visit_index;
            assessment.provenance = result.request_fingerprint;
            result.attempts = attempt;
            return ValidatedCompletion{std::move(result), std::move(assessment)};
        } catch (const OutputError& e) {
            last_output_error = e;
        }
    }
    throw OutputRejected("all " + std::to_string(max_attempts) + " attempts failed validation", *last_output_error);
}

}  // namespace scale_scribe
