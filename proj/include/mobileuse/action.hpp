#pragma once

// Device-level action vocabulary and its canonical one-line serialization:
//
//   {"action_type": "swipe", "coordinate": [120, 400], "coordinate2": [120, 1200]}
//
// Parameters are emitted in the fixed per-type order below, separated by
// ", " with ": " after keys. Parsing is whitespace-tolerant but rejects keys
// that do not belong to the action type.
//
//   key            text
//   click          coordinate
//   long_press     coordinate, time
//   swipe          coordinate, coordinate2
//   type           text
//   clear_text     -
//   system_button  button        (Back | Home | Menu | Enter)
//   open           text
//   wait           time
//   take_note      text
//   answer         text
//   terminate      status        (success | failure)

#include <mobileuse/error.hpp>

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace mobileuse {

enum class ActionType {
    key,
    click,
    long_press,
    swipe,
    type,
    clear_text,
    system_button,
    open,
    wait,
    take_note,
    answer,
    terminate,
};

inline constexpr std::array<ActionType, 12> kAllActionTypes = {
    ActionType::key,        ActionType::click,         ActionType::long_press,
    ActionType::swipe,      ActionType::type,          ActionType::clear_text,
    ActionType::system_button, ActionType::open,       ActionType::wait,
    ActionType::take_note,  ActionType::answer,        ActionType::terminate,
};

std::string_view to_string(ActionType type) noexcept;
std::optional<ActionType> parse_action_type(std::string_view name) noexcept;

enum class SystemButton { back, home, menu, enter };
std::string_view to_string(SystemButton button) noexcept;
std::optional<SystemButton> parse_system_button(std::string_view name) noexcept;

enum class TerminateStatus { success, failure };
std::string_view to_string(TerminateStatus status) noexcept;
std::optional<TerminateStatus> parse_terminate_status(std::string_view name) noexcept;

struct Point {
    int x = 0;
    int y = 0;
    bool operator==(const Point&) const = default;
};

// Parameter names an action type requires, in canonical order.
std::span<const std::string_view> required_params(ActionType type) noexcept;

struct Action {
    ActionType type = ActionType::wait;
    std::optional<Point> coordinate;
    std::optional<Point> coordinate2;
    std::optional<std::string> text;
    std::optional<double> time;  // seconds
    std::optional<SystemButton> button;
    std::optional<TerminateStatus> status;

    bool operator==(const Action&) const = default;

    static Action key(std::string name);
    static Action click(int x, int y);
    static Action long_press(int x, int y, double seconds);
    static Action swipe(Point from, Point to);
    static Action type_text(std::string text);
    static Action clear_text();
    static Action system_button(SystemButton b);
    static Action open(std::string app);
    static Action wait(double seconds);
    static Action take_note(std::string note);
    static Action answer(std::string text);
    static Action terminate(TerminateStatus s);
};

// Thought, structured action and one-sentence description produced by the
// Operator for a single step.
struct ActionOutput {
    std::string thought;
    Action action;
    std::string description;
};

std::string render_action(const Action& action);

// Throws Error{parse_error} for malformed text and Error{unknown_action_type}
// for an unrecognised "action_type" value.
Action parse_action(std::string_view text);

// Byte range of the action_type value (without quotes) inside a rendered or
// model-produced action object. Returns nullopt when not found.
struct ByteSpan {
    std::size_t begin = 0;
    std::size_t end = 0;  // exclusive
    bool operator==(const ByteSpan&) const = default;
};
std::optional<ByteSpan> find_action_type_span(std::string_view action_text) noexcept;

struct ValidationResult {
    std::optional<Errc> error;
    std::string message;

    bool ok() const noexcept { return !error.has_value(); }
    static ValidationResult success() { return {}; }
    static ValidationResult failure(Errc code, std::string msg) { return {code, std::move(msg)}; }
};

// Checks required parameters, coordinate bounds against the half-open screen
// rectangle [0,width) x [0,height) and strictly positive times.
ValidationResult validate_action(const Action& action, int width, int height);

// Structural identity of type and parameters. Thought and description live
// on ActionOutput and never participate.
inline bool action_equals(const Action& a, const Action& b) { return a == b; }

// Short human-readable rendering, e.g. "click at (540, 1200)".
std::string describe_action(const Action& action);

}  // namespace mobileuse
