#pragma once

#include <string>
#include <vector>

#include "scale_scribe/corpus.hpp"
#include "scale_scribe/scale.hpp"

namespace scale_scribe {

// Stamped into run manifests so results name the prompt they were produced with.
inline constexpr const char* kPromptVersion = "scale-scribe-prompt/1";

// How much of a patient's history goes into the context window.
//   zero_shot                    f(x0)
//   zero_shot_plus_scores(n)     f(x0, s-n..s-1)
//   zero_shot_plus_transcripts(n) f(x0, x-n..x-1)
//   n_shot(n)                    f(x0, [x-n, s-n] .. [x-1, s-1])
//   last_score                   s-1, no model call
struct ContextStrategy {
    enum class Kind { zero_shot, zero_shot_plus_scores, zero_shot_plus_transcripts, n_shot, last_score };

    Kind kind = Kind::zero_shot;
    int n = 0;

    static ContextStrategy zero_shot() { return {Kind::zero_shot, 0}; }
    static ContextStrategy plus_scores(int n);
    static ContextStrategy plus_transcripts(int n);
    static ContextStrategy n_shot(int n);
    static ContextStrategy last_score() { return {Kind::last_score, 1}; }

    // "0-shot", "0-shot+1-score", "0-shot+2-transcript", "1-shot", "last_score".
    static ContextStrategy parse(const std::string& label);
    std::string label() const;

    // Prior cases needed before the target.
    int required_history() const;
    bool needs_model() const { return kind != Kind::last_score; }

    bool operator==(const ContextStrategy&) const = default;
};

enum class Role { user, assistant };
const char* to_string(Role role);

struct Message {
    Role role = Role::user;
    std::string content;

    bool operator==(const Message&) const = default;
};

struct PromptTarget {
    std::string patient_id;
    int visit_index = 0;

    bool operator==(const PromptTarget&) const = default;
};

struct PromptBundle {
    std::string system_text;
    std::vector<Message> messages;
    ContextStrategy strategy;
    std::string scale_id;
    PromptTarget target;
};

// The scoring-task block placed both above and below the manual.
const std::string& task_instructions();

std::string build_system_instructions(const ScaleDefinition& scale);

// The target is the last case of the timeline. Uses the most recent
// required_history() prior cases.
PromptBundle build_prompt(const ScaleDefinition& scale, const PatientTimeline& timeline, const ContextStrategy& strategy);

// Readable dump for auditing.
std::string format_bundle(const PromptBundle& bundle);

}  // namespace scale_scribe
