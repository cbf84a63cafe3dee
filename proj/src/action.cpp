#include <mobileuse/action.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

namespace mobileuse {

namespace {

using nlohmann::json;

constexpr std::array<std::string_view, 12> kTypeNames = {
    "key", "click", "long_press", "swipe", "type", "clear_text",
    "system_button", "open", "wait", "take_note", "answer", "terminate",
};

constexpr std::string_view kText[] = {"text"};
constexpr std::string_view kCoord[] = {"coordinate"};
constexpr std::string_view kCoordTime[] = {"coordinate", "time"};
constexpr std::string_view kCoordPair[] = {"coordinate", "coordinate2"};
constexpr std::string_view kButton[] = {"button"};
constexpr std::string_view kTime[] = {"time"};
constexpr std::string_view kStatus[] = {"status"};

std::string render_number(double v) {
    if (std::isfinite(v) && std::floor(v) == v && std::fabs(v) < 1e15) {
        return std::to_string(static_cast<long long>(v));
    }
    std::array<char, 64> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), ptr);
}

std::string render_point(const Point& p) {
    return "[" + std::to_string(p.x) + ", " + std::to_string(p.y) + "]";
}

std::string quote(const std::string& s) { return json(s).dump(); }

[[noreturn]] void parse_fail(const std::string& what) {
    throw Error(Errc::parse_error, "action parse: " + what);
}

Point parse_point(const json& j, std::string_view key) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number_integer() || !j[1].is_number_integer()) {
        parse_fail(std::string(key) + " must be an array of two integers");
    }
    return Point{j[0].get<int>(), j[1].get<int>()};
}

std::string parse_string(const json& j, std::string_view key) {
    if (!j.is_string()) parse_fail(std::string(key) + " must be a string");
    return j.get<std::string>();
}

}  // namespace

std::string_view to_string(ActionType type) noexcept {
    return kTypeNames[static_cast<std::size_t>(type)];
}

std::optional<ActionType> parse_action_type(std::string_view name) noexcept {
    for (std::size_t i = 0; i < kTypeNames.size(); ++i) {
        if (kTypeNames[i] == name) return static_cast<ActionType>(i);
    }
    return std::nullopt;
}

std::string_view to_string(SystemButton button) noexcept {
    switch (button) {
        case SystemButton::back: return "Back";
        case SystemButton::home: return "Home";
        case SystemButton::menu: return "Menu";
        case SystemButton::enter: return "Enter";
    }
    return "Back";
}

std::optional<SystemButton> parse_system_button(std::string_view name) noexcept {
    if (name == "Back") return SystemButton::back;
    if (name == "Home") return SystemButton::home;
    if (name == "Menu") return SystemButton::menu;
    if (name == "Enter") return SystemButton::enter;
    return std::nullopt;
}

std::string_view to_string(TerminateStatus status) noexcept {
    return status == TerminateStatus::success ? "success" : "failure";
}

std::optional<TerminateStatus> parse_terminate_status(std::string_view name) noexcept {
    if (name == "success") return TerminateStatus::success;
    if (name == "failure") return TerminateStatus::failure;
    return std::nullopt;
}

std::span<const std::string_view> required_params(ActionType type) noexcept {
    switch (type) {
        case ActionType::key:
        case ActionType::type:
        case ActionType::open:
        case ActionType::take_note:
        case ActionType::answer: return kText;
        case ActionType::click: return kCoord;
        case ActionType::long_press: return kCoordTime;
        case ActionType::swipe: return kCoordPair;
        case ActionType::clear_text: return {};
        case ActionType::system_button: return kButton;
        case ActionType::wait: return kTime;
        case ActionType::terminate: return kStatus;
    }
    return {};
}

Action Action::key(std::string name) { Action a; a.type = ActionType::key; a.text = std::move(name); return a; }
Action Action::click(int x, int y) { Action a; a.type = ActionType::click; a.coordinate = Point{x, y}; return a; }
Action Action::long_press(int x, int y, double seconds) {
    Action a; a.type = ActionType::long_press; a.coordinate = Point{x, y}; a.time = seconds; return a;
}
Action Action::swipe(Point from, Point to) {
    Action a; a.type = ActionType::swipe; a.coordinate = from; a.coordinate2 = to; return a;
}
Action Action::type_text(std::string text) { Action a; a.type = ActionType::type; a.text = std::move(text); return a; }
Action Action::clear_text() { Action a; a.type = ActionType::clear_text; return a; }
Action Action::system_button(SystemButton b) { Action a; a.type = ActionType::system_button; a.button = b; return a; }
Action Action::open(std::string app) { Action a; a.type = ActionType::open; a.text = std::move(app); return a; }
Action Action::wait(double seconds) { Action a; a.type = ActionType::wait; a.time = seconds; return a; }
Action Action::take_note(std::string note) { Action a; a.type = ActionType::take_note; a.text = std::move(note); return a; }
Action Action::answer(std::string text) { Action a; a.type = ActionType::answer; a.text = std::move(text); return a; }
Action Action::terminate(TerminateStatus s) { Action a; a.type = ActionType::terminate; a.status = s; return a; }

std::string render_action(const Action& action) {
    std::string out = "{\"action_type\": \"";
    out += to_string(action.type);
    out += '"';
    for (std::string_view param : required_params(action.type)) {
        out += ", \"";
        out += param;
        out += "\": ";
        if (param == "text") {
            out += quote(action.text.value_or(""));
        } else if (param == "coordinate") {
            out += render_point(action.coordinate.value_or(Point{}));
        } else if (param == "coordinate2") {
            out += render_point(action.coordinate2.value_or(Point{}));
        } else if (param == "time") {
            out += render_number(action.time.value_or(0.0));
        } else if (param == "button") {
            out += quote(std::string(to_string(action.button.value_or(SystemButton::back))));
        } else if (param == "status") {
            out += quote(std::string(to_string(action.status.value_or(TerminateStatus::failure))));
        }
    }
    out += '}';
    return out;
}

Action parse_action(std::string_view text) {
    json j;
    try {
        j = json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
        parse_fail(std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) parse_fail("expected an object");
    auto type_it = j.find("action_type");
    if (type_it == j.end()) throw Error(Errc::missing_parameter, "action parse: missing action_type");
    if (!type_it->is_string()) parse_fail("action_type must be a string");
    const auto name = type_it->get<std::string>();
    const auto type = parse_action_type(name);
    if (!type) throw Error(Errc::unknown_action_type, "unknown action type '" + name + "'");

    Action action;
    action.type = *type;
    const auto params = required_params(*type);
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& key = it.key();
        if (key == "action_type") continue;
        if (std::find(params.begin(), params.end(), key) == params.end()) {
            parse_fail("unexpected parameter '" + key + "' for " + name);
        }
        const json& v = it.value();
        if (key == "coordinate") {
            action.coordinate = parse_point(v, key);
        } else if (key == "coordinate2") {
            action.coordinate2 = parse_point(v, key);
        } else if (key == "text") {
            action.text = parse_string(v, key);
        } else if (key == "time") {
            if (!v.is_number()) parse_fail("time must be a number");
            action.time = v.get<double>();
        } else if (key == "button") {
            auto b = parse_system_button(parse_string(v, key));
            if (!b) parse_fail("button must be one of Back, Home, Menu, Enter");
            action.button = *b;
        } else if (key == "status") {
            auto s = parse_terminate_status(parse_string(v, key));
            if (!s) parse_fail("status must be success or failure");
            action.status = *s;
        }
    }
    return action;
}

std::optional<ByteSpan> find_action_type_span(std::string_view action_text) noexcept {
    constexpr std::string_view key = "\"action_type\"";
    const auto k = action_text.find(key);
    if (k == std::string_view::npos) return std::nullopt;
    auto pos = k + key.size();
    while (pos < action_text.size() && (action_text[pos] == ' ' || action_text[pos] == '\t')) ++pos;
    if (pos >= action_text.size() || action_text[pos] != ':') return std::nullopt;
    ++pos;
    while (pos < action_text.size() && (action_text[pos] == ' ' || action_text[pos] == '\t')) ++pos;
    if (pos >= action_text.size() || action_text[pos] != '"') return std::nullopt;
    const auto begin = pos + 1;
    const auto end = action_text.find('"', begin);
    if (end == std::string_view::npos || end == begin) return std::nullopt;
    return ByteSpan{begin, end};
}

ValidationResult validate_action(const Action& action, int width, int height) {
    if (width <= 0 || height <= 0) {
        return ValidationResult::failure(Errc::invalid_argument, "screen dimensions must be positive");
    }
    const auto params = required_params(action.type);
    auto required = [&](std::string_view p) {
        return std::find(params.begin(), params.end(), p) != params.end();
    };
    struct Slot { std::string_view name; bool present; };
    const Slot slots[] = {
        {"coordinate", action.coordinate.has_value()},
        {"coordinate2", action.coordinate2.has_value()},
        {"text", action.text.has_value()},
        {"time", action.time.has_value()},
        {"button", action.button.has_value()},
        {"status", action.status.has_value()},
    };
    for (const auto& slot : slots) {
        if (required(slot.name) && !slot.present) {
            return ValidationResult::failure(
                Errc::missing_parameter,
                std::string(to_string(action.type)) + " requires '" + std::string(slot.name) + "'");
        }
        if (!required(slot.name) && slot.present) {
            return ValidationResult::failure(
                Errc::invalid_argument,
                std::string(to_string(action.type)) + " does not take '" + std::string(slot.name) + "'");
        }
    }
    auto in_bounds = [&](const Point& p) { return p.x >= 0 && p.y >= 0 && p.x < width && p.y < height; };
    for (const auto* p : {&action.coordinate, &action.coordinate2}) {
        if (p->has_value() && !in_bounds(**p)) {
            std::ostringstream msg;
            msg << "coordinate (" << (*p)->x << ", " << (*p)->y << ") outside [0," << width << ")x[0,"
                << height << ")";
            return ValidationResult::failure(Errc::out_of_bounds, msg.str());
        }
    }
    if (action.time && !(*action.time > 0.0)) {
        return ValidationResult::failure(Errc::invalid_argument, "time must be > 0");
    }
    return ValidationResult::success();
}

std::string describe_action(const Action& action) {
    std::ostringstream out;
    out << to_string(action.type);
    switch (action.type) {
        case ActionType::click:
            out << " at (" << action.coordinate->x << ", " << action.coordinate->y << ")";
            break;
        case ActionType::long_press:
            out << " at (" << action.coordinate->x << ", " << action.coordinate->y << ") for "
                << render_number(*action.time) << "s";
            break;
        case ActionType::swipe:
            out << " from (" << action.coordinate->x << ", " << action.coordinate->y << ") to ("
                << action.coordinate2->x << ", " << action.coordinate2->y << ")";
            break;
        case ActionType::key:
        case ActionType::type:
        case ActionType::open:
        case ActionType::take_note:
        case ActionType::answer:
            out << " \"" << action.text.value_or("") << "\"";
            break;
        case ActionType::system_button:
            out << " " << to_string(action.button.value_or(SystemButton::back));
            break;
        case ActionType::wait:
            out << " " << render_number(action.time.value_or(0)) << "s";
            break;
        case ActionType::terminate:
            out << " (" << to_string(action.status.value_or(TerminateStatus::failure)) << ")";
            break;
        case ActionType::clear_text:
            break;
    }
    return out.str();
}

}  // namespace mobileuse
