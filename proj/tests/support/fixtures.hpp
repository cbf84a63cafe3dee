#pragma once

#include <mobileuse/action.hpp>
#include <mobileuse/gateway.hpp>
#include <mobileuse/types.hpp>

#include <unistd.h>

#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace fixtures {

using namespace mobileuse;

inline std::string source_path(const std::string& rel) { return std::string(MOBILEUSE_SOURCE_DIR) + "/" + rel; }

// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("mobileuse-" + name + "-" + std::to_string(::getpid()));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline Screenshot with_rect(const Screenshot& base, int x, int y, int w, int h, std::uint8_t r, std::uint8_t g,
                            std::uint8_t b) {
    auto px = base.pixels();
    for (int yy = y; yy < y + h; ++yy) {
        for (int xx = x; xx < x + w; ++xx) {
            auto* p = px.data() + (static_cast<std::size_t>(yy) * base.width() + xx) * 3;
            p[0] = r;
            p[1] = g;
            p[2] = b;
        }
    }
    return Screenshot(base.width(), base.height(), std::move(px), base.step_index());
}

// An operator reply and its tokens; the action_type value token carries `logprob`.
inline ScriptEntry operator_entry(const Action& action, double logprob, const std::string& description = "step",
                                  const std::string& matcher = "") {
    const auto action_text = render_action(action);
    const std::string head = "Thought: proceed.\nAction: ";
    const std::string tail = "\nDescription: " + description;
    const auto span = *find_action_type_span(action_text);
    std::vector<TokenLogprob> toks{
        {head + action_text.substr(0, span.begin), -0.02},
        {action_text.substr(span.begin, span.end - span.begin), logprob},
        {action_text.substr(span.end) + tail, -0.01},
    };
    return ScriptEntry{matcher, head + action_text + tail, toks};
}

inline ScriptEntry reply(const std::string& text, const std::string& matcher = "") {
    return ScriptEntry{matcher, text, std::nullopt};
}

inline StepRecord step(int index, const Action& action, const Screenshot& before, const Screenshot& after) {
    StepRecord s;
    s.index = index;
    s.screenshot_before = before;
    s.screenshot_after = after;
    s.action_output = ActionOutput{"t", action, "d"};
    s.execution = ExecutionReport{ExecutionOutcome::applied, ""};
    return s;
}

}  // namespace fixtures

namespace fixtures {

// Substrings that pick out each role's user prompt in a script.
inline constexpr const char* kOperatorPrompt = "Relevant knowledge:";
inline constexpr const char* kActionPrompt = "Action taken:";
inline constexpr const char* kTrajectoryPrompt = "Recent steps with step-level feedback";
inline constexpr const char* kGlobalPrompt = "Steps taken:";
inline constexpr const char* kProgressPrompt = "Latest action:";
inline constexpr const char* kSummaryPrompt = "Trajectory:";
inline constexpr const char* kCriticPrompt = "Knowledge gathered so far";
inline constexpr const char* kExplorerPrompt = "Guidance from the critic";

}  // namespace fixtures
