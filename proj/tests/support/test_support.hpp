#pragma once

// Shared fixtures for the unit and acceptance tests: synthetic corpora,
// instrumented backends, temp directories and independent oracles. The
// oracles deliberately avoid the library's own numeric code.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <unistd.h>
#include <vector>

#include "json.hpp"
#include "scale_scribe/corpus.hpp"
#include "scale_scribe/gateway.hpp"
#include "scale_scribe/prompt.hpp"
#include "scale_scribe/runner.hpp"
#include "scale_scribe/scale.hpp"

namespace test_support {

namespace ss = scale_scribe;

inline const ss::ScaleDefinition& bprs() {
    static const ss::ScaleDefinition scale = ss::load_scale(ss::bundled_scale_path());
    return scale;
}

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("scale_scribe_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

// ---- synthetic corpora ----------------------------------------------------

struct SyntheticSpec {
    int patients = 10;
    int visits = 1;
    std::uint64_t seed = 1;
    std::vector<std::string> kinds{"psychs"};
    std::vector<std::string> languages{"en"};  // assigned round-robin by patient
};

inline nlohmann::json transcript_record(const std::string& pid, int visit, const std::string& kind,
                                        const std::string& language, const std::string& text) {
    return {{"type", "transcript"}, {"patient_id", pid}, {"visit_index", visit},
            {"kind", kind},         {"language", language}, {"text", text}};
}

inline nlohmann::json assessment_record(const std::string& pid, int visit, const std::vector<int>& ratings) {
    return {{"type", "assessment"}, {"patient_id", pid}, {"visit_index", visit}, {"ratings", ratings}};
}

// Ratings are drawn independently per item and visit from 1..7.
inline std::string synthetic_corpus_jsonl(const SyntheticSpec& spec) {
    std::mt19937_64 gen(spec.seed);
    std::uniform_int_distribution<int> rating(1, 7);
    std::uniform_int_distribution<int> word(0, 5);
    static const char* words[] = {"worried", "sleep", "voices", "tired", "friends", "school"};
    std::ostringstream out;
    for (int p = 0; p < spec.patients; ++p) {
        char pid[16];
        std::snprintf(pid, sizeof pid, "P%03d", p);
        const std::string& language = spec.languages[static_cast<std::size_t>(p) % spec.languages.size()];
        for (int v = 0; v < spec.visits; ++v) {
            for (const auto& kind : spec.kinds) {
                std::string text = "Interviewer: How are you?\nParticipant:";
                for (int w = 0; w < 8; ++w) text += std::string(" ") + words[word(gen)];
                text += "\n(" + std::string(pid) + " visit " + std::to_string(v) + " " + kind + ")";
                out << transcript_record(pid, v, kind, language, text).dump() << "\n";
            }
            std::vector<int> ratings(24);
            for (int& r : ratings) r = rating(gen);
            out << assessment_record(pid, v, ratings).dump() << "\n";
        }
    }
    return out.str();
}

inline ss::Corpus corpus_from_text(const std::string& jsonl) {
    ss::Corpus corpus;
    std::istringstream in(jsonl);
    corpus.ingest_stream(in, "<memory>");
    return corpus;
}

inline ss::Corpus synthetic_corpus(const SyntheticSpec& spec) { return corpus_from_text(synthetic_corpus_jsonl(spec)); }

inline ss::Ratings uniform_ratings(int value) {
    ss::Ratings r;
    r.fill(value);
    return r;
}

// A corpus file on disk plus a manifest pointing at it.
struct RunFixture {
    TempDir dir;
    ss::RunManifest manifest;
    ss::RunInputs inputs;

    RunFixture(const std::string& corpus_jsonl, const std::string& run_id,
               std::vector<ss::ContextStrategy> strategies = {ss::ContextStrategy::zero_shot()}) {
        const auto corpus_path = dir / "corpus.jsonl";
        std::ofstream(corpus_path, std::ios::binary) << corpus_jsonl;
        manifest.run_id = run_id;
        manifest.corpus_paths = {corpus_path};
        manifest.strategies = std::move(strategies);
        manifest.output_dir = dir / "runs";
        manifest.model.initial_backoff = std::chrono::milliseconds(0);
        manifest.metrics.bootstrap_resamples = 200;
        inputs = ss::load_inputs(manifest);
    }
};

// ---- instrumented backends ------------------------------------------------

// Delegates to `inner` and keeps a copy of every bundle it sees.
class RecordingBackend : public ss::Backend {
public:
    explicit RecordingBackend(ss::Backend& inner) : inner_(inner) {}

    ss::CompletionResult complete(const ss::PromptBundle& bundle, const ss::ModelConfig& config) override {
        {
            std::lock_guard lock(mutex_);
            bundles_.push_back(bundle);
        }
        return inner_.complete(bundle, config);
    }
    ss::BackendKind kind() const override { return inner_.kind(); }

    std::vector<ss::PromptBundle> bundles() const {
        std::lock_guard lock(mutex_);
        return bundles_;
    }

private:
    ss::Backend& inner_;
    mutable std::mutex mutex_;
    std::vector<ss::PromptBundle> bundles_;
};

// Returns canned responses in order; each entry is either raw text or an
// exception factory. The last entry repeats.
class ScriptedSequenceBackend : public ss::Backend {
public:
    using Step = std::function<std::string()>;

    explicit ScriptedSequenceBackend(std::vector<Step> steps) : steps_(std::move(steps)) {}

    ss::CompletionResult complete(const ss::PromptBundle& bundle, const ss::ModelConfig& config) override {
        const std::size_t i = std::min(calls_++, steps_.size() - 1);
        ss::CompletionResult result;
        result.raw_text = steps_[i]();
        result.request_fingerprint = ss::request_fingerprint(bundle, config);
        result.backend = ss::BackendKind::scripted;
        return result;
    }
    ss::BackendKind kind() const override { return ss::BackendKind::scripted; }
    std::size_t calls() const { return calls_.load(); }

private:
    std::vector<Step> steps_;
    std::atomic<std::size_t> calls_{0};
};

// Sleeps inside complete() and records the highest observed concurrency.
class SlowBackend : public ss::Backend {
public:
    SlowBackend(ss::Backend& inner, std::chrono::milliseconds delay) : inner_(inner), delay_(delay) {}

    ss::CompletionResult complete(const ss::PromptBundle& bundle, const ss::ModelConfig& config) override {
        const int now = ++active_;
        int seen = peak_.load();
        while (now > seen && !peak_.compare_exchange_weak(seen, now)) {
        }
        std::this_thread::sleep_for(delay_);
        --active_;
        return inner_.complete(bundle, config);
    }
    ss::BackendKind kind() const override { return inner_.kind(); }
    int peak() const { return peak_.load(); }

private:
    ss::Backend& inner_;
    std::chrono::milliseconds delay_;
    std::atomic<int> active_{0};
    std::atomic<int> peak_{0};
};

// ---- oracles --------------------------------------------------------------

namespace oracle {

// Reference PCG32 (setseq 64/32 XSH-RR), written the way the C reference
// spells it, with no shared code.
struct pcg32_random_t {
    std::uint64_t state;
    std::uint64_t inc;
};

inline std::uint32_t pcg32_random_r(pcg32_random_t* rng) {
    std::uint64_t oldstate = rng->state;
    rng->state = oldstate * 6364136223846793005ULL + rng->inc;
    std::uint32_t xorshifted = static_cast<std::uint32_t>(((oldstate >> 18u) ^ oldstate) >> 27u);
    std::uint32_t rot = static_cast<std::uint32_t>(oldstate >> 59u);
    return (xorshifted >> rot) | (xorshifted << ((~rot + 1u) & 31));
}

inline void pcg32_srandom_r(pcg32_random_t* rng, std::uint64_t initstate, std::uint64_t initseq) {
    rng->state = 0U;
    rng->inc = (initseq << 1u) | 1u;
    pcg32_random_r(rng);
    rng->state += initstate;
    pcg32_random_r(rng);
}

inline std::uint32_t pcg32_boundedrand_r(pcg32_random_t* rng, std::uint32_t bound) {
    std::uint32_t threshold = (0x100000000ULL - bound) % bound;
    for (;;) {
        std::uint32_t r = pcg32_random_r(rng);
        if (r >= threshold) return r % bound;
    }
}

// Bootstrap SE of RMSE: B resamples, b-major / i-minor index draws from
// the stream (seed, 0x5353), population standard deviation (two-pass).
inline double bootstrap_rmse_se(const std::vector<std::pair<double, double>>& pairs, int B, std::uint64_t seed) {
    pcg32_random_t rng;
    pcg32_srandom_r(&rng, seed, 0x5353);
    const auto n = static_cast<std::uint32_t>(pairs.size());
    std::vector<double> stats;
    for (int b = 0; b < B; ++b) {
        double sum_sq = 0;
        for (std::uint32_t i = 0; i < n; ++i) {
            const auto& p = pairs[pcg32_boundedrand_r(&rng, n)];
            sum_sq += (p.first - p.second) * (p.first - p.second);
        }
        stats.push_back(std::sqrt(sum_sq / n));
    }
    double mean = 0;
    for (double s : stats) mean += s;
    mean /= B;
    double var = 0;
    for (double s : stats) var += (s - mean) * (s - mean);
    return std::sqrt(var / B);
}

inline double rmse(const std::vector<std::pair<double, double>>& pairs) {
    double sum_sq = 0;
    for (const auto& [t, p] : pairs) sum_sq += (t - p) * (t - p);
    return std::sqrt(sum_sq / static_cast<double>(pairs.size()));
}

// Two-way ANOVA by the textbook subtraction route:
// SS_E = SS_total - SS_rows - SS_cols.
inline double icc3k(const std::vector<std::vector<double>>& table) {
    const std::size_t n = table.size();
    const std::size_t k = table.front().size();
    double grand = 0;
    for (const auto& row : table)
        for (double v : row) grand += v;
    grand /= static_cast<double>(n * k);

    double ss_total = 0;
    for (const auto& row : table)
        for (double v : row) ss_total += (v - grand) * (v - grand);

    double ss_rows = 0;
    for (const auto& row : table) {
        double m = 0;
        for (double v : row) m += v;
        m /= static_cast<double>(k);
        ss_rows += static_cast<double>(k) * (m - grand) * (m - grand);
    }

    double ss_cols = 0;
    for (std::size_t j = 0; j < k; ++j) {
        double m = 0;
        for (const auto& row : table) m += row[j];
        m /= static_cast<double>(n);
        ss_cols += static_cast<double>(n) * (m - grand) * (m - grand);
    }

    const double ss_error = ss_total - ss_rows - ss_cols;
    const double ms_rows = ss_rows / static_cast<double>(n - 1);
    const double ms_error = ss_error / static_cast<double>((n - 1) * (k - 1));
    return (ms_rows - ms_error) / ms_rows;
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
    }
    const double mx = sx / n, my = sy / n;
    double cov = 0, vx = 0, vy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        cov += (x[i] - mx) * (y[i] - my);
        vx += (x[i] - mx) * (x[i] - mx);
        vy += (y[i] - my) * (y[i] - my);
    }
    cov /= n - 1;
    return cov / (std::sqrt(vx / (n - 1)) * std::sqrt(vy / (n - 1)));
}

// Counts |t - p| <= 1 per column with a plain double loop.
inline std::vector<double> concordance(const std::vector<std::vector<int>>& truth,
                                       const std::vector<std::vector<int>>& pred) {
    const std::size_t n = truth.size();
    const std::size_t items = truth.front().size();
    std::vector<double> out(items);
    for (std::size_t j = 0; j < items; ++j) {
        int within = 0;
        for (std::size_t i = 0; i < n; ++i)
            if (std::abs(truth[i][j] - pred[i][j]) <= 1) ++within;
        out[j] = static_cast<double>(within) / static_cast<double>(n);
    }
    return out;
}

inline double sorted_median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline int count_below(const std::vector<double>& v, double threshold) {
    int c = 0;
    for (double x : v) c += x < threshold ? 1 : 0;
    return c;
}

// U of x counted pairwise: x > y scores 1, ties 1/2.
inline double mann_whitney_u(const std::vector<double>& x, const std::vector<double>& y) {
    double u = 0;
    for (double a : x)
        for (double b : y) u += a > b ? 1.0 : (a == b ? 0.5 : 0.0);
    return u;
}

// Exact two-sided p by enumerating every assignment of the pooled ranks to
// the first sample: 2 * min(P(U <= u), P(U >= u)), capped at 1.
inline double mann_whitney_exact_p(const std::vector<double>& x, const std::vector<double>& y) {
    const int n = static_cast<int>(x.size());
    const int total = n + static_cast<int>(y.size());
    const double u_obs = mann_whitney_u(x, y);
    long long below = 0, above = 0, count = 0;
    for (unsigned mask = 0; mask < (1u << total); ++mask) {
        if (__builtin_popcount(mask) != n) continue;
        std::vector<double> a, b;
        for (int r = 0; r < total; ++r) ((mask >> r) & 1u ? a : b).push_back(r);
        const double u = mann_whitney_u(a, b);
        ++count;
        if (u <= u_obs) ++below;
        if (u >= u_obs) ++above;
    }
    const double p = 2.0 * static_cast<double>(std::min(below, above)) / static_cast<double>(count);
    return std::min(1.0, p);
}

// Normal approximation with tie and continuity corrections, computed from
// the pairwise U and a direct tie count over the pooled sample.
inline double mann_whitney_normal_p(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size()), m = static_cast<double>(y.size());
    const double u1 = mann_whitney_u(x, y);
    const double u = std::max(u1, n * m - u1);
    std::vector<double> pooled(x);
    pooled.insert(pooled.end(), y.begin(), y.end());
    std::sort(pooled.begin(), pooled.end());
    double tie_term = 0;
    for (std::size_t i = 0; i < pooled.size();) {
        std::size_t j = i;
        while (j < pooled.size() && pooled[j] == pooled[i]) ++j;
        const double t = static_cast<double>(j - i);
        tie_term += t * t * t - t;
        i = j;
    }
    const double total = n + m;
    const double sigma = std::sqrt(n * m / 12.0 * ((total + 1) - tie_term / (total * (total - 1))));
    const double z = (u - n * m / 2.0 - 0.5) / sigma;
    return std::min(1.0, std::erfc(z / std::sqrt(2.0)));
}

}  // namespace oracle

}  // namespace test_support
