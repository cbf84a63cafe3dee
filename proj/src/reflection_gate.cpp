#include <mobileuse/perception.hpp>
#include <mobileuse/reflection_gate.hpp>

#include <cmath>

namespace mobileuse {

void GateConfig::validate() const {
    if (std::isnan(theta) || theta > 0.0) throw Error(Errc::invalid_argument, "theta must be <= 0");
    if (repeat_action_count < 2 || repeat_screen_count < 2 || accumulated_error_count < 2) {
        throw Error(Errc::invalid_argument, "trigger counts must be >= 2");
    }
    if (trajectory_window < repeat_action_count || trajectory_window < repeat_screen_count ||
        trajectory_window < accumulated_error_count) {
        throw Error(Errc::invalid_argument, "trajectory_window must be >= every trigger count");
    }
    if (screen_same_threshold < 0.0 || screen_same_threshold > 1.0) {
        throw Error(Errc::invalid_argument, "screen_same_threshold must lie in [0,1]");
    }
}

ConfidenceScore compute_confidence(const Completion& completion, ByteSpan span) {
    if (span.end <= span.begin) throw Error(Errc::no_token_overlap, "empty action-type span");
    std::vector<TokenLogprob> selected;
    for (const auto& tok : completion.tokens) {
        const std::size_t begin = tok.byte_offset;
        const std::size_t end = tok.byte_offset + tok.text.size();
        if (begin < span.end && span.begin < end) selected.push_back(TokenLogprob{tok.text, tok.logprob});
    }
    if (selected.empty()) throw Error(Errc::no_token_overlap, "no token overlaps the action-type span");
    return ConfidenceScore::from_tokens(std::move(selected));
}

bool should_reflect_action(const std::optional<ConfidenceScore>& confidence, const GateConfig& config) {
    if (!confidence) return true;
    return confidence->value <= config.theta;
}

std::string_view to_string(TrajectoryTrigger trigger) noexcept {
    switch (trigger) {
        case TrajectoryTrigger::repeated_actions: return "repeated_actions";
        case TrajectoryTrigger::repeated_screens: return "repeated_screens";
        case TrajectoryTrigger::accumulated_errors: return "accumulated_errors";
    }
    return "repeated_actions";
}

namespace {

const Screenshot& after_screen(const StepRecord& step) {
    return step.screenshot_after ? *step.screenshot_after : step.screenshot_before;
}

}  // namespace

TrajectoryDecision should_reflect_trajectory(std::span<const StepRecord> recent, const GateConfig& config) {
    TrajectoryDecision decision;
    const auto n = static_cast<int>(recent.size());

    if (n >= config.repeat_action_count) {
        const auto tail = recent.subspan(static_cast<std::size_t>(n - config.repeat_action_count));
        bool all_same = true;
        for (std::size_t i = 1; i < tail.size() && all_same; ++i) {
            all_same = action_equals(tail[0].action_output.action, tail[i].action_output.action);
        }
        if (all_same) decision.fired.insert(TrajectoryTrigger::repeated_actions);
    }

    if (n >= config.repeat_screen_count) {
        const auto tail = recent.subspan(static_cast<std::size_t>(n - config.repeat_screen_count));
        bool all_same = true;
        for (std::size_t i = 0; i < tail.size() && all_same; ++i) {
            for (std::size_t j = i + 1; j < tail.size() && all_same; ++j) {
                const auto& a = after_screen(tail[i]);
                const auto& b = after_screen(tail[j]);
                all_same = a.same_raster(b) ||
                           (a.width() == b.width() && a.height() == b.height() &&
                            changed_fraction(a, b) <= config.screen_same_threshold);
            }
        }
        if (all_same) decision.fired.insert(TrajectoryTrigger::repeated_screens);
    }

    const int window = std::min(n, config.trajectory_window);
    int errors = 0;
    for (const auto& step : recent.subspan(static_cast<std::size_t>(n - window))) {
        const auto* r = step.reflection(ReflectionLevel::action);
        if (r && r->verdict == Verdict::error) ++errors;
    }
    if (errors >= config.accumulated_error_count) decision.fired.insert(TrajectoryTrigger::accumulated_errors);

    decision.reflect = !decision.fired.empty();
    return decision;
}

}  // namespace mobileuse
