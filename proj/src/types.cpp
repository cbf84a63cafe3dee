#include <mobileuse/types.hpp>

#include <algorithm>
#include <array>
#include <cctype>

namespace mobileuse {

std::string_view errc_name(Errc code) noexcept {
    switch (code) {
        case Errc::invalid_argument: return "invalid-argument";
        case Errc::missing_parameter: return "missing-parameter";
        case Errc::out_of_bounds: return "out-of-bounds";
        case Errc::unknown_action_type: return "unknown-action-type";
        case Errc::parse_error: return "parse-error";
        case Errc::transport_failure: return "transport-failure";
        case Errc::provider_rejected: return "provider-rejected";
        case Errc::logprobs_unavailable: return "logprobs-unavailable";
        case Errc::script_exhausted: return "script-exhausted";
        case Errc::script_mismatch: return "script-mismatch";
        case Errc::dimension_mismatch: return "dimension-mismatch";
        case Errc::device_disconnected: return "device-disconnected";
        case Errc::capture_decode_failure: return "capture-decode-failure";
        case Errc::unknown_app: return "unknown-app";
        case Errc::unparseable_after_retry: return "unparseable-after-retry";
        case Errc::no_token_overlap: return "no-token-overlap";
        case Errc::storage_failure: return "storage-failure";
        case Errc::unknown_run: return "unknown-run";
        case Errc::device_busy: return "device-busy";
        case Errc::no_device: return "no-device";
        case Errc::schema_error: return "schema-error";
    }
    return "unknown";
}

Instruction Instruction::make(std::string text, std::optional<std::string> app_hint) {
    const bool blank = std::all_of(text.begin(), text.end(),
                                   [](unsigned char c) { return std::isspace(c) != 0; });
    if (blank) throw Error(Errc::invalid_argument, "instruction text is empty");
    return Instruction{std::move(text), std::move(app_hint)};
}

Screenshot::Screenshot(int width, int height, std::vector<std::uint8_t> rgb, int step_index,
                       std::chrono::steady_clock::time_point captured_at)
    : width_(width), height_(height), step_index_(step_index), captured_at_(captured_at) {
    if (width <= 0 || height <= 0) throw Error(Errc::invalid_argument, "screenshot dimensions must be positive");
    if (rgb.size() != static_cast<std::size_t>(width) * height * 3) {
        throw Error(Errc::invalid_argument, "raster length does not match width*height*3");
    }
    pixels_ = std::make_shared<const std::vector<std::uint8_t>>(std::move(rgb));
}

Screenshot Screenshot::filled(int width, int height, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    std::vector<std::uint8_t> rgb(static_cast<std::size_t>(width) * height * 3);
    for (std::size_t i = 0; i < rgb.size(); i += 3) {
        rgb[i] = r;
        rgb[i + 1] = g;
        rgb[i + 2] = b;
    }
    return Screenshot(width, height, std::move(rgb));
}

const std::vector<std::uint8_t>& Screenshot::pixels() const {
    static const std::vector<std::uint8_t> kEmpty;
    return pixels_ ? *pixels_ : kEmpty;
}

Screenshot Screenshot::with_step_index(int step_index) const {
    Screenshot copy = *this;
    copy.step_index_ = step_index;
    return copy;
}

bool Screenshot::same_raster(const Screenshot& other) const {
    if (width_ != other.width_ || height_ != other.height_) return false;
    if (pixels_ == other.pixels_) return true;
    return pixels() == other.pixels();
}

std::string_view to_string(ReflectionLevel level) noexcept {
    switch (level) {
        case ReflectionLevel::action: return "action";
        case ReflectionLevel::trajectory: return "trajectory";
        case ReflectionLevel::global: return "global";
    }
    return "action";
}

std::string_view to_string(Verdict verdict) noexcept {
    switch (verdict) {
        case Verdict::ok: return "ok";
        case Verdict::error: return "error";
        case Verdict::incomplete: return "incomplete";
    }
    return "ok";
}

std::optional<ReflectionLevel> parse_reflection_level(std::string_view s) noexcept {
    if (s == "action") return ReflectionLevel::action;
    if (s == "trajectory") return ReflectionLevel::trajectory;
    if (s == "global") return ReflectionLevel::global;
    return std::nullopt;
}

std::optional<Verdict> parse_verdict(std::string_view s) noexcept {
    if (s == "ok") return Verdict::ok;
    if (s == "error") return Verdict::error;
    if (s == "incomplete") return Verdict::incomplete;
    return std::nullopt;
}

bool ReflectionFeedback::valid() const noexcept {
    if (level == ReflectionLevel::global && verdict == Verdict::error) return false;
    if (verdict != Verdict::ok && explanation.empty()) return false;
    return true;
}

ConfidenceScore ConfidenceScore::from_tokens(std::vector<TokenLogprob> tokens) {
    if (tokens.empty()) throw Error(Errc::invalid_argument, "confidence needs at least one token");
    double sum = 0.0;
    for (const auto& t : tokens) {
        if (t.logprob > 0.0) throw Error(Errc::invalid_argument, "logprob must be <= 0");
        sum += t.logprob;
    }
    ConfidenceScore score;
    score.value = sum / static_cast<double>(tokens.size());
    score.tokens = std::move(tokens);
    return score;
}

std::string_view to_string(ExecutionOutcome outcome) noexcept {
    switch (outcome) {
        case ExecutionOutcome::applied: return "applied";
        case ExecutionOutcome::no_effect: return "no_effect";
        case ExecutionOutcome::rejected: return "rejected";
    }
    return "no_effect";
}

const ReflectionFeedback* StepRecord::reflection(ReflectionLevel level) const noexcept {
    for (const auto& r : reflections) {
        if (r.level == level) return &r;
    }
    return nullptr;
}

void StepRecord::set_reflection(ReflectionFeedback feedback) {
    for (auto& r : reflections) {
        if (r.level == feedback.level) {
            r = std::move(feedback);
            return;
        }
    }
    reflections.push_back(std::move(feedback));
    std::stable_sort(reflections.begin(), reflections.end(),
                     [](const auto& a, const auto& b) { return a.level < b.level; });
}

namespace {
constexpr std::array<std::string_view, 6> kFailureNames = {
    "planning", "navigation", "interaction", "perception", "grounding", "other"};
constexpr std::array<std::string_view, 4> kStatusNames = {
    "success", "failure", "aborted", "max_steps_exceeded"};
}  // namespace

std::string_view to_string(FailureType type) noexcept {
    return kFailureNames[static_cast<std::size_t>(type)];
}

std::optional<FailureType> parse_failure_type(std::string_view s) noexcept {
    for (std::size_t i = 0; i < kFailureNames.size(); ++i) {
        if (kFailureNames[i] == s) return static_cast<FailureType>(i);
    }
    return std::nullopt;
}

std::string_view to_string(RunStatus status) noexcept {
    return kStatusNames[static_cast<std::size_t>(status)];
}

std::optional<RunStatus> parse_run_status(std::string_view s) noexcept {
    for (std::size_t i = 0; i < kStatusNames.size(); ++i) {
        if (kStatusNames[i] == s) return static_cast<RunStatus>(i);
    }
    return std::nullopt;
}

}  // namespace mobileuse
