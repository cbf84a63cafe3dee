#pragma once

#include <mobileuse/action.hpp>

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace mobileuse {

struct Instruction {
    std::string text;
    std::optional<std::string> app_hint;

    // Throws Error{invalid_argument} if text is blank.
    static Instruction make(std::string text, std::optional<std::string> app_hint = std::nullopt);
};

// Row-major RGB raster. Pixel storage is shared and never mutated after
// construction, so copies are cheap.
class Screenshot {
public:
    Screenshot() = default;
    Screenshot(int width, int height, std::vector<std::uint8_t> rgb, int step_index = 0,
               std::chrono::steady_clock::time_point captured_at = std::chrono::steady_clock::now());

    // Solid color raster.
    static Screenshot filled(int width, int height, std::uint8_t r, std::uint8_t g, std::uint8_t b);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    bool empty() const noexcept { return !pixels_; }
    int step_index() const noexcept { return step_index_; }
    std::chrono::steady_clock::time_point captured_at() const noexcept { return captured_at_; }

    const std::vector<std::uint8_t>& pixels() const;
    const std::uint8_t* pixel(int x, int y) const { return pixels().data() + (static_cast<std::size_t>(y) * width_ + x) * 3; }

    Screenshot with_step_index(int step_index) const;

    // Byte-wise raster equality; ignores timestamps and step index.
    bool same_raster(const Screenshot& other) const;

private:
    int width_ = 0;
    int height_ = 0;
    std::shared_ptr<const std::vector<std::uint8_t>> pixels_;
    int step_index_ = 0;
    std::chrono::steady_clock::time_point captured_at_{};
};

enum class ReflectionLevel { action, trajectory, global };
enum class Verdict { ok, error, incomplete };

std::string_view to_string(ReflectionLevel level) noexcept;
std::string_view to_string(Verdict verdict) noexcept;
std::optional<ReflectionLevel> parse_reflection_level(std::string_view s) noexcept;
std::optional<Verdict> parse_verdict(std::string_view s) noexcept;

struct ReflectionFeedback {
    ReflectionLevel level = ReflectionLevel::action;
    Verdict verdict = Verdict::ok;
    std::string explanation;
    std::optional<std::string> suggestion;
    int step_index = 0;

    // Global feedback never says "error"; non-ok verdicts must explain.
    bool valid() const noexcept;
};

struct Progress {
    std::string summary;
    std::vector<std::string> noted_facts;
    std::optional<std::string> answer;
};

struct TokenLogprob {
    std::string text;
    double logprob = 0.0;
};

// Mean natural-log probability over the tokens of the predicted action type.
struct ConfidenceScore {
    double value = 0.0;
    std::vector<TokenLogprob> tokens;

    std::size_t token_count() const noexcept { return tokens.size(); }

    // Throws Error{invalid_argument} on an empty list or a positive logprob.
    static ConfidenceScore from_tokens(std::vector<TokenLogprob> tokens);
};

enum class ExecutionOutcome { applied, no_effect, rejected };
std::string_view to_string(ExecutionOutcome outcome) noexcept;

struct ExecutionReport {
    ExecutionOutcome outcome = ExecutionOutcome::no_effect;
    std::string detail;
};

struct StepRecord {
    int index = 0;
    Screenshot screenshot_before;
    ActionOutput action_output;
    std::optional<ConfidenceScore> confidence;
    std::optional<ExecutionReport> execution;
    std::optional<Screenshot> screenshot_after;  // absent only for non-executed terminate steps
    std::vector<ReflectionFeedback> reflections;  // at most one per level
    Progress progress_after;

    const ReflectionFeedback* reflection(ReflectionLevel level) const noexcept;
    // Replaces any existing feedback of the same level.
    void set_reflection(ReflectionFeedback feedback);
};

enum class FailureType { planning, navigation, interaction, perception, grounding, other };
std::string_view to_string(FailureType type) noexcept;
std::optional<FailureType> parse_failure_type(std::string_view s) noexcept;

enum class RunStatus { success, failure, aborted, max_steps_exceeded };
std::string_view to_string(RunStatus status) noexcept;
std::optional<RunStatus> parse_run_status(std::string_view s) noexcept;

struct RunResult {
    RunStatus status = RunStatus::failure;
    std::vector<StepRecord> steps;
    std::optional<std::string> answer;
    std::optional<FailureType> failure_label;
};

}  // namespace mobileuse
