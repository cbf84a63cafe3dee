#pragma once

// Deterministic rules deciding when each reflector runs.

#include <mobileuse/action.hpp>
#include <mobileuse/gateway.hpp>
#include <mobileuse/types.hpp>

#include <limits>
#include <optional>
#include <set>
#include <span>

namespace mobileuse {

struct GateConfig {
    double theta = -0.001;  // reflect when confidence <= theta
    int trajectory_window = 5;
    int repeat_action_count = 3;
    int repeat_screen_count = 3;
    double screen_same_threshold = 0.001;  // changed_fraction at or below this means "same screen"
    int accumulated_error_count = 2;

    // theta <= 0 (may be -inf), counts >= 2, window >= every count.
    // Throws Error{invalid_argument}.
    void validate() const;
};

// Mean logprob of the completion tokens whose byte range overlaps `span`.
// Throws Error{no_token_overlap} when no token overlaps.
ConfidenceScore compute_confidence(const Completion& completion, ByteSpan span);

// True iff confidence <= theta. Unknown confidence always reflects.
bool should_reflect_action(const std::optional<ConfidenceScore>& confidence, const GateConfig& config);

enum class TrajectoryTrigger { repeated_actions, repeated_screens, accumulated_errors };
std::string_view to_string(TrajectoryTrigger trigger) noexcept;

struct TrajectoryDecision {
    bool reflect = false;
    std::set<TrajectoryTrigger> fired;
};

// `recent` is ordered by step index; only its tail matters. Steps without an
// after-screenshot fall back to their before-screenshot.
TrajectoryDecision should_reflect_trajectory(std::span<const StepRecord> recent, const GateConfig& config);

// First screenshot index shown to the Global Reflector for a terminate at t.
inline int global_window_start(int t) { return t > 3 ? t - 3 : 0; }

}  // namespace mobileuse
