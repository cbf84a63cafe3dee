#pragma once

// Prompt assembly and reply parsing for the model-backed roles.
//
// Reply grammars are line-tagged:
//   operator / explorer   Thought: ... / Action: {json} / Description: ...
//   reflectors            VERDICT: OK|ERROR|INCOMPLETE, explanation, Suggestion: ...
//   progressor            Progress: ...
//   summary               "- item" lines, or NONE
//   critic                free text

#include <mobileuse/gateway.hpp>
#include <mobileuse/knowledge_store.hpp>
#include <mobileuse/templates.hpp>
#include <mobileuse/types.hpp>

#include <atomic>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mobileuse {

// r^t: feedback produced during one step.
struct FeedbackBundle {
    std::optional<ReflectionFeedback> action;
    std::optional<ReflectionFeedback> trajectory;
    std::optional<ReflectionFeedback> global;

    bool empty() const noexcept { return !action && !trajectory && !global; }
    static FeedbackBundle from_step(const StepRecord& step);
};

struct AgentLimits {
    int max_history_actions = 10;
    int max_images_per_call = 2;
    int global_max_images = 4;
};

using WarningSink = std::function<void(const std::string&)>;

// Rendering helpers shared with tests and the trace tools.
std::string render_feedback(const FeedbackBundle& feedback);
std::string render_progress(const Progress& progress);
std::string render_knowledge(const std::vector<KnowledgeItem>& items);
std::string render_history(std::span<const StepRecord> steps, int max_actions, bool with_reflections);

struct ParsedOperatorReply {
    ActionOutput output;
    ByteSpan action_type_span;  // into the full reply text
};

// Throws Error{parse_error} with the reason.
ParsedOperatorReply parse_operator_reply(std::string_view text);

// Fails open: returns nullopt when no usable VERDICT line exists.
std::optional<ReflectionFeedback> parse_reflection_reply(std::string_view text, ReflectionLevel level, int step_index);

std::vector<KnowledgeItem> parse_summary_reply(std::string_view text, const std::string& app, bool* parsed = nullptr);

struct OperatorInput {
    AgentRole persona = AgentRole::operator_agent;
    std::string instruction;
    std::vector<KnowledgeItem> knowledge;
    std::string guidance;  // explorer only
    Screenshot screenshot;
    std::span<const StepRecord> history;
    FeedbackBundle feedback;  // r^{t-1}
    Progress progress;        // p^{t-1}
};

struct OperatorResult {
    ActionOutput output;
    std::optional<ConfidenceScore> confidence;  // absent when logprobs are unusable
    std::string raw_reply;
    int attempts = 1;
};

class Agents {
public:
    Agents(ModelGateway& gateway, std::shared_ptr<const TemplateCatalog> templates, AgentLimits limits = {},
           WarningSink warn = {});

    // Errors: unparseable_after_retry, gateway errors.
    OperatorResult run_operator(const OperatorInput& input);

    // history = steps before the latest one.
    Progress run_progressor(const std::string& instruction, std::span<const StepRecord> history,
                            const Progress& previous, const ActionOutput& latest, const FeedbackBundle& feedback);

    ReflectionFeedback run_action_reflector(const std::string& instruction, const Screenshot& before,
                                            const Screenshot& annotated_after, const ActionOutput& action,
                                            int step_index);

    // `window` ends with the current step.
    ReflectionFeedback run_trajectory_reflector(const std::string& instruction, const Progress& previous,
                                                std::span<const StepRecord> window, int step_index);

    // `history` ends with the terminate step; `screens` = s^j..s^t.
    ReflectionFeedback run_global_reflector(const std::string& instruction, std::span<const StepRecord> history,
                                            const std::vector<Screenshot>& screens, int step_index);

    // Throws Error{invalid_argument} for segments shorter than 2 steps.
    std::vector<KnowledgeItem> run_summary_agent(const std::string& app, std::span<const StepRecord> segment,
                                                 const KnowledgeSource& source);

    std::string run_critic_agent(const std::string& app, const Screenshot& screen,
                                 const std::vector<KnowledgeItem>& knowledge);

    const AgentLimits& limits() const noexcept { return limits_; }

private:
    ChatRequest make_request(AgentRole role, const std::map<std::string, std::string>& slots,
                             std::vector<Screenshot> images, int max_images) const;
    ReflectionFeedback reflect(AgentRole role, ReflectionLevel level, ChatRequest request, int step_index);
    void warn(const std::string& message) const;

    ModelGateway& gateway_;
    std::shared_ptr<const TemplateCatalog> templates_;
    AgentLimits limits_;
    WarningSink warn_;
    std::atomic<bool> logprobs_supported_{true};
};

}  // namespace mobileuse
