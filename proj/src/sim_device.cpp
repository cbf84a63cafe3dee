#include <mobileuse/sim_device.hpp>

#include "bitmap_font.hpp"

#include <algorithm>
#include <cstdlib>

namespace mobileuse {

std::string_view to_string(DeviceBackend backend) noexcept {
    return backend == DeviceBackend::adb ? "adb" : "sim";
}

namespace {

struct Canvas {
    int width;
    int height;
    std::vector<std::uint8_t> rgb;

    void fill(int x0, int y0, int w, int h, Color c) {
        const int x1 = std::min(width, x0 + w);
        const int y1 = std::min(height, y0 + h);
        for (int y = std::max(0, y0); y < y1; ++y) {
            std::uint8_t* row = rgb.data() + static_cast<std::size_t>(y) * width * 3;
            for (int x = std::max(0, x0); x < x1; ++x) {
                row[x * 3] = c.r;
                row[x * 3 + 1] = c.g;
                row[x * 3 + 2] = c.b;
            }
        }
    }

    void border(const BoundingBox& b, Color c) {
        fill(b.x, b.y, b.width, 1, c);
        fill(b.x, b.y + b.height - 1, b.width, 1, c);
        fill(b.x, b.y, 1, b.height, c);
        fill(b.x + b.width - 1, b.y, 1, b.height, c);
    }

    // Text clipped to `clip`.
    void text(std::string_view s, int x, int y, int scale, Color c, const BoundingBox& clip) {
        for (char ch : s) {
            const auto& g = detail::glyph(ch);
            for (int gy = 0; gy < 8; ++gy) {
                for (int gx = 0; gx < 8; ++gx) {
                    if (!(g[gy] & (1u << gx))) continue;
                    for (int sy = 0; sy < scale; ++sy) {
                        for (int sx = 0; sx < scale; ++sx) {
                            const int px = x + gx * scale + sx;
                            const int py = y + gy * scale + sy;
                            if (clip.contains(px, py) && px < width && py < height) {
                                std::uint8_t* p = rgb.data() + (static_cast<std::size_t>(py) * width + px) * 3;
                                p[0] = c.r;
                                p[1] = c.g;
                                p[2] = c.b;
                            }
                        }
                    }
                }
            }
            x += 8 * scale;
        }
    }
};

Color fill_color(const Element& e, const StateMap& state) {
    switch (e.kind) {
        case ElementKind::button: return {220, 228, 245};
        case ElementKind::text_field: return {255, 255, 255};
        case ElementKind::list_item: return {250, 250, 250};
        case ElementKind::toggle: {
            auto it = state.find(*e.binding);
            const bool on = it != state.end() && std::holds_alternative<bool>(it->second) && std::get<bool>(it->second);
            return on ? Color{214, 240, 214} : Color{240, 220, 220};
        }
        case ElementKind::static_text: return {0, 0, 0};
    }
    return {255, 255, 255};
}

std::string substitute(const std::string& label, const StateMap& state) {
    std::string out;
    std::size_t pos = 0;
    while (pos < label.size()) {
        const auto open = label.find("{{", pos);
        if (open == std::string::npos) break;
        const auto close = label.find("}}", open + 2);
        if (close == std::string::npos) break;
        out.append(label, pos, open - pos);
        auto it = state.find(label.substr(open + 2, close - open - 2));
        if (it != state.end()) out += state_value_text(it->second);
        pos = close + 2;
    }
    out.append(label, pos, std::string::npos);
    return out;
}

std::string swipe_direction(Point from, Point to) {
    const int dx = to.x - from.x;
    const int dy = to.y - from.y;
    if (dx == 0 && dy == 0) return {};
    if (std::abs(dy) >= std::abs(dx)) return dy < 0 ? "up" : "down";
    return dx < 0 ? "left" : "right";
}

}  // namespace

SimDevice::SimDevice(std::shared_ptr<const AppGraph> graph, std::string device_id)
    : graph_(std::move(graph)), device_id_(std::move(device_id)) {
    if (!graph_) throw Error(Errc::invalid_argument, "SimDevice needs an app graph");
    reset();
}

void SimDevice::reset(const StateMap& overrides) {
    std::lock_guard lock(mutex_);
    now_ = Snapshot{};
    now_.screen = kLauncherScreen;
    now_.state = graph_->state;
    for (const auto& [k, v] : overrides) now_.state[k] = v;
}

void SimDevice::set_connected(bool connected) {
    std::lock_guard lock(mutex_);
    connected_ = connected;
}

void SimDevice::require_connected() const {
    if (!connected_) throw Error(Errc::device_disconnected, "sim device " + device_id_ + " is disconnected");
}

DeviceInfo SimDevice::info() const {
    return DeviceInfo{graph_->width, graph_->height, device_id_, DeviceBackend::sim};
}

StateMap SimDevice::state() const {
    std::lock_guard lock(mutex_);
    return now_.state;
}

std::string SimDevice::current_screen() const {
    std::lock_guard lock(mutex_);
    return now_.screen;
}

std::optional<std::string> SimDevice::focused_element() const {
    std::lock_guard lock(mutex_);
    return now_.focus;
}

double SimDevice::clock_seconds() const {
    std::lock_guard lock(mutex_);
    return now_.clock;
}

const Screen& SimDevice::screen() const { return graph_->screens.at(now_.screen); }

const Element* SimDevice::hit_test(Point p) const {
    const auto& elements = screen().elements;
    for (auto it = elements.rbegin(); it != elements.rend(); ++it) {
        if (it->bounds.contains(p.x, p.y)) return &*it;
    }
    return nullptr;
}

void SimDevice::go_to(const std::string& target) {
    if (target == now_.screen) return;
    now_.history.push_back(now_.screen);
    now_.screen = target;
    now_.focus.reset();
}

void SimDevice::apply(const Transition& t) {
    for (const auto& [k, v] : t.set) now_.state[k] = v;
    if (t.target) go_to(*t.target);
}

ExecutionReport SimDevice::dispatch(const Action& action) {
    const Screen& scr = screen();
    switch (action.type) {
        case ActionType::click: {
            const Element* el = hit_test(*action.coordinate);
            if (!el) return {ExecutionOutcome::no_effect, "no element at the tap position"};
            if (el->kind == ElementKind::text_field) now_.focus = el->id;
            if (el->kind == ElementKind::toggle) {
                auto& slot = now_.state[*el->binding];
                const bool on = std::holds_alternative<bool>(slot) && std::get<bool>(slot);
                slot = !on;
            }
            if (el->on_click) apply(*el->on_click);
            return {ExecutionOutcome::applied, "tapped " + el->id};
        }
        case ActionType::long_press: {
            const Element* el = hit_test(*action.coordinate);
            if (!el || !el->on_long_press) return {ExecutionOutcome::no_effect, "nothing responds to a long press here"};
            apply(*el->on_long_press);
            return {ExecutionOutcome::applied, "long-pressed " + el->id};
        }
        case ActionType::swipe: {
            const auto dir = swipe_direction(*action.coordinate, *action.coordinate2);
            if (dir.empty()) return {ExecutionOutcome::no_effect, "zero-length swipe"};
            if (const Element* el = hit_test(*action.coordinate)) {
                auto it = el->on_swipe.find(dir);
                if (it != el->on_swipe.end()) {
                    apply(it->second);
                    return {ExecutionOutcome::applied, "swiped " + dir + " on " + el->id};
                }
            }
            auto it = scr.on_swipe.find(dir);
            if (it == scr.on_swipe.end()) return {ExecutionOutcome::no_effect, "screen does not scroll " + dir};
            apply(it->second);
            return {ExecutionOutcome::applied, "swiped " + dir};
        }
        case ActionType::type: {
            if (!now_.focus) return {ExecutionOutcome::no_effect, "no focused input field"};
            for (const auto& el : scr.elements) {
                if (el.id != *now_.focus) continue;
                auto& slot = now_.state[*el.binding];
                std::string current = std::holds_alternative<std::string>(slot) ? std::get<std::string>(slot) : "";
                slot = current + *action.text;
                return {ExecutionOutcome::applied, "typed into " + el.id};
            }
            return {ExecutionOutcome::no_effect, "focused field is not on screen"};
        }
        case ActionType::clear_text: {
            if (!now_.focus) return {ExecutionOutcome::no_effect, "no focused input field"};
            for (const auto& el : scr.elements) {
                if (el.id != *now_.focus) continue;
                now_.state[*el.binding] = std::string{};
                return {ExecutionOutcome::applied, "cleared " + el.id};
            }
            return {ExecutionOutcome::no_effect, "focused field is not on screen"};
        }
        case ActionType::system_button: {
            const std::string name(to_string(*action.button));
            auto it = scr.on_key.find(name);
            if (it != scr.on_key.end()) {
                apply(it->second);
                return {ExecutionOutcome::applied, "pressed " + name};
            }
            if (*action.button == SystemButton::back && !now_.history.empty()) {
                now_.screen = now_.history.back();
                now_.history.pop_back();
                now_.focus.reset();
                return {ExecutionOutcome::applied, "navigated back"};
            }
            return {ExecutionOutcome::no_effect, name + " has no handler on this screen"};
        }
        case ActionType::key: {
            auto it = scr.on_key.find(*action.text);
            if (it == scr.on_key.end()) return {ExecutionOutcome::no_effect, "key " + *action.text + " not handled"};
            apply(it->second);
            return {ExecutionOutcome::applied, "key " + *action.text};
        }
        case ActionType::open: {
            const AppSpec* app = graph_->find_app(*action.text);
            if (!app) throw Error(Errc::unknown_app, "no app named '" + *action.text + "'");
            now_.history.assign(1, kLauncherScreen);
            now_.screen = app->home;
            now_.focus.reset();
            return {ExecutionOutcome::applied, "opened " + app->name};
        }
        case ActionType::wait:
            now_.clock += *action.time;
            return {ExecutionOutcome::applied, "waited"};
        case ActionType::take_note:
        case ActionType::answer:
        case ActionType::terminate:
            return {ExecutionOutcome::no_effect, "handled by the orchestrator"};
    }
    return {ExecutionOutcome::no_effect, ""};
}

ExecutionReport SimDevice::execute(const Action& action) {
    std::lock_guard lock(mutex_);
    require_connected();
    const auto v = validate_action(action, graph_->width, graph_->height);
    if (!v.ok()) return {ExecutionOutcome::rejected, v.message};
    const Snapshot before = now_;
    ExecutionReport report;
    try {
        report = dispatch(action);
    } catch (...) {
        now_ = before;
        throw;
    }
    if (report.outcome != ExecutionOutcome::applied) {
        now_ = before;
    } else if (now_ == before) {
        report.outcome = ExecutionOutcome::no_effect;
    }
    return report;
}

Screenshot SimDevice::capture() {
    std::lock_guard lock(mutex_);
    require_connected();
    return render().with_step_index(capture_count_++);
}

Screenshot SimDevice::render() const {
    const Screen& scr = screen();
    Canvas canvas{graph_->width, graph_->height, {}};
    canvas.rgb.resize(static_cast<std::size_t>(canvas.width) * canvas.height * 3);
    canvas.fill(0, 0, canvas.width, canvas.height, scr.background);
    const bool dark = scr.background.r + scr.background.g + scr.background.b < 384;
    for (const auto& el : scr.elements) {
        const auto& b = el.bounds;
        const int scale = std::clamp((b.height - 4) / 16, 1, 4);
        std::string label = substitute(el.label, now_.state);
        Color text_color{20, 20, 20};
        if (el.kind != ElementKind::static_text) {
            canvas.fill(b.x, b.y, b.width, b.height, fill_color(el, now_.state));
            const bool focused = now_.focus && *now_.focus == el.id;
            canvas.border(b, focused ? Color{26, 115, 232} : Color{90, 90, 90});
        } else if (dark) {
            text_color = Color{235, 235, 235};
        }
        if (el.kind == ElementKind::text_field) {
            auto it = now_.state.find(*el.binding);
            const std::string value = it == now_.state.end() ? "" : state_value_text(it->second);
            if (value.empty()) {
                text_color = Color{150, 150, 150};
            } else {
                label = value;
            }
        } else if (el.kind == ElementKind::toggle) {
            auto it = now_.state.find(*el.binding);
            const bool on = it != now_.state.end() && std::holds_alternative<bool>(it->second) && std::get<bool>(it->second);
            label += on ? " [ON]" : " [OFF]";
        }
        const int tx = b.x + 2 * scale + 2;
        const int ty = b.y + (b.height - 8 * scale) / 2;
        canvas.text(label, tx, ty, scale, text_color, b);
    }
    return Screenshot(canvas.width, canvas.height, std::move(canvas.rgb));
}

}  // namespace mobileuse
