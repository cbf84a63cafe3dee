#pragma once

// Ordered events emitted by one run. Serialized (trace lines and the SSE
// stream) as one flat JSON object:
//
//   {"v": 1, "run_id": "...", "seq": 0, "ts": 1718000000123, "type": "step_started", "step": 0, ...}

#include <mobileuse/perception.hpp>
#include <mobileuse/reflection_gate.hpp>
#include <mobileuse/types.hpp>

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace mobileuse {

inline constexpr int kTraceVersion = 1;

// Relative path of screenshot n inside a trace directory ("shots/0003.png").
std::string shot_path(int n);

namespace ev {

struct RunStarted {
    std::string instruction;
    std::optional<std::string> app_hint;
    int width = 0;
    int height = 0;
    std::string device_id;
    std::vector<std::string> knowledge_ids;
    nlohmann::json config;
};

struct StepStarted {
    int step = 0;
    int shot = 0;
};

struct OperatorOutput {
    int step = 0;
    ActionOutput output;
    std::optional<ConfidenceScore> confidence;
    int attempts = 1;
};

struct ConfidenceGated {
    int step = 0;
    std::optional<double> confidence;
    double theta = 0.0;
    bool reflect = false;
};

struct ActionExecuted {
    int step = 0;
    ExecutionReport report;
    int shot_after = 0;
    std::vector<BoundingBox> changed_regions;
};

struct Reflection {
    int step = 0;
    ReflectionFeedback feedback;
    std::vector<TrajectoryTrigger> triggers;  // trajectory level only
};

struct TerminateIntercepted {
    int step = 0;
    TerminateStatus status = TerminateStatus::success;
    Verdict verdict = Verdict::ok;
    bool accepted = true;
    bool reflected = true;  // false when the global reflector is disabled
    int rejections = 0;
};

struct ProgressUpdated {
    int step = 0;
    Progress progress;
};

struct RunFinished {
    RunStatus status = RunStatus::failure;
    int steps = 0;
    std::optional<std::string> answer;
    std::optional<FailureType> failure_label;
};

struct Warning {
    std::optional<int> step;
    std::string text;
};

}  // namespace ev

using RunEventBody = std::variant<ev::RunStarted, ev::StepStarted, ev::OperatorOutput, ev::ConfidenceGated,
                                  ev::ActionExecuted, ev::Reflection, ev::TerminateIntercepted,
                                  ev::ProgressUpdated, ev::RunFinished, ev::Warning>;

struct RunEvent {
    std::string run_id;
    std::int64_t seq = 0;
    std::int64_t ts = 0;  // wall clock, milliseconds since epoch
    RunEventBody body;

    std::string_view type() const noexcept;
};

nlohmann::json to_json(const RunEvent& event);

// Checks envelope and per-type required fields. Returns an error message,
// or an empty string when valid.
std::string validate_event_json(const nlohmann::json& j);

// Reads an events.jsonl file (or the events.jsonl inside a run directory).
// Every line must parse and validate, seq must count up from 0, and the
// trace must end with run_finished. Throws Error{schema_error} naming the
// line, or Error{invalid_argument} if the file cannot be read.
std::vector<nlohmann::json> load_trace(const std::string& path);

// One human-readable line for a serialized event.
std::string describe_event(const nlohmann::json& j);

nlohmann::json feedback_to_json(const ReflectionFeedback& f);
nlohmann::json progress_to_json(const Progress& p);
nlohmann::json action_output_to_json(const ActionOutput& a);

}  // namespace mobileuse
