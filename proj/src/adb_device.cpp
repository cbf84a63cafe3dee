#include <mobileuse/adb_device.hpp>
#include <mobileuse/image_codec.hpp>

#include <poll.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstring>
#include <regex>
#include <thread>

extern char** environ;

namespace mobileuse {

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

bool looks_disconnected(const CommandResult& r) {
    const std::string text = lower(r.err + r.out);
    for (const char* marker : {"not found", "offline", "no devices", "unauthorized", "device still authorizing",
                               "closed", "failed to connect", "cannot connect"}) {
        if (text.find(marker) != std::string::npos) return true;
    }
    return r.exit_code == 127;
}

// Repo-maintained name -> keycode table (android.view.KeyEvent constants).
const std::map<std::string, int>& keycode_table() {
    static const std::map<std::string, int> table = {
        {"home", 3}, {"back", 4}, {"call", 5}, {"endcall", 6},
        {"dpad_up", 19}, {"dpad_down", 20}, {"dpad_left", 21}, {"dpad_right", 22}, {"dpad_center", 23},
        {"volume_up", 24}, {"volume_down", 25}, {"power", 26}, {"camera", 27}, {"clear", 28},
        {"tab", 61}, {"space", 62}, {"enter", 66}, {"del", 67}, {"delete", 67}, {"backspace", 67},
        {"menu", 82}, {"notification", 83}, {"search", 84},
        {"media_play_pause", 85}, {"media_stop", 86}, {"media_next", 87}, {"media_previous", 88},
        {"page_up", 92}, {"page_down", 93}, {"escape", 111}, {"forward_del", 112},
        {"move_home", 122}, {"move_end", 123}, {"volume_mute", 164}, {"app_switch", 187},
        {"brightness_down", 220}, {"brightness_up", 221}, {"sleep", 223}, {"wakeup", 224},
    };
    return table;
}

constexpr std::string_view kShellSpecial = "\\'\"`$&|;<>()*?~#![]{}^";

}  // namespace

// ============================================================================
// ProcessRunner
// ============================================================================

CommandResult ProcessRunner::run(const std::vector<std::string>& argv) {
    if (argv.empty()) throw Error(Errc::invalid_argument, "empty command");
    int out_pipe[2], err_pipe[2];
    if (pipe(out_pipe) != 0 || pipe(err_pipe) != 0) throw Error(Errc::device_disconnected, "pipe() failed");

    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, out_pipe[1], STDOUT_FILENO);
    posix_spawn_file_actions_adddup2(&actions, err_pipe[1], STDERR_FILENO);
    posix_spawn_file_actions_addclose(&actions, out_pipe[0]);
    posix_spawn_file_actions_addclose(&actions, err_pipe[0]);

    std::vector<char*> args;
    for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);

    pid_t pid = 0;
    const int rc = posix_spawnp(&pid, args[0], &actions, nullptr, args.data(), environ);
    posix_spawn_file_actions_destroy(&actions);
    close(out_pipe[1]);
    close(err_pipe[1]);
    if (rc != 0) {
        close(out_pipe[0]);
        close(err_pipe[0]);
        return CommandResult{127, "", std::string("cannot spawn ") + argv[0] + ": " + std::strerror(rc)};
    }

    CommandResult result;
    std::array<pollfd, 2> fds{{{out_pipe[0], POLLIN, 0}, {err_pipe[0], POLLIN, 0}}};
    std::array<char, 65536> buf{};
    int open_fds = 2;
    while (open_fds > 0) {
        if (poll(fds.data(), fds.size(), -1) < 0) {
            if (errno == EINTR) continue;
            break;
        }
        for (std::size_t i = 0; i < fds.size(); ++i) {
            if (fds[i].fd < 0 || !(fds[i].revents & (POLLIN | POLLHUP | POLLERR))) continue;
            const ssize_t n = read(fds[i].fd, buf.data(), buf.size());
            if (n > 0) {
                (i == 0 ? result.out : result.err).append(buf.data(), static_cast<std::size_t>(n));
            } else {
                close(fds[i].fd);
                fds[i].fd = -1;
                --open_fds;
            }
        }
    }
    int status = 0;
    waitpid(pid, &status, 0);
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : 128;
    return result;
}

std::string join_command(const std::vector<std::string>& argv) {
    std::string out;
    for (const auto& a : argv) {
        if (!out.empty()) out += ' ';
        out += a;
    }
    return out;
}

std::optional<int> keycode_for(std::string_view name) {
    if (name.empty()) return std::nullopt;
    if (std::all_of(name.begin(), name.end(), [](unsigned char c) { return std::isdigit(c) != 0; })) {
        return std::stoi(std::string(name));
    }
    std::string key = lower(name);
    if (key.rfind("keycode_", 0) == 0) key = key.substr(8);
    const auto& table = keycode_table();
    if (auto it = table.find(key); it != table.end()) return it->second;
    if (key.size() == 1 && key[0] >= 'a' && key[0] <= 'z') return 29 + (key[0] - 'a');
    if (key.size() == 1 && key[0] >= '0' && key[0] <= '9') return 7 + (key[0] - '0');
    return std::nullopt;
}

std::optional<std::string> escape_input_text(std::string_view text) {
    std::string out;
    for (char ch : text) {
        const auto u = static_cast<unsigned char>(ch);
        if (u < 0x20 || u > 0x7E) return std::nullopt;
        if (ch == ' ') {
            out += "%s";
        } else if (kShellSpecial.find(ch) != std::string_view::npos) {
            out += '\\';
            out += ch;
        } else {
            out += ch;
        }
    }
    return out;
}

// ============================================================================
// AdbDevice
// ============================================================================

AdbDevice::AdbDevice(AdbConfig config, std::shared_ptr<CommandRunner> runner, Sleeper sleeper)
    : config_(std::move(config)), runner_(std::move(runner)), sleeper_(std::move(sleeper)) {
    if (!runner_) runner_ = std::make_shared<ProcessRunner>();
    if (!sleeper_) sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
    if (config_.serial.empty()) throw Error(Errc::invalid_argument, "adb device serial is empty");
    std::map<std::string, std::string> packages;
    for (const auto& [name, pkg] : config_.packages) packages[lower(name)] = pkg;
    config_.packages = std::move(packages);

    const auto r = run_checked(adb({"shell", "wm", "size"}));
    static const std::regex size_re(R"((\d+)x(\d+))");
    // "Override size" (when present) is what input coordinates use.
    std::smatch m;
    std::string text = r.out;
    const auto override_pos = text.find("Override size");
    if (override_pos != std::string::npos) text = text.substr(override_pos);
    if (!std::regex_search(text, m, size_re)) {
        throw Error(Errc::device_disconnected, "cannot read screen size from `wm size`: " + r.out);
    }
    width_ = std::stoi(m[1]);
    height_ = std::stoi(m[2]);
}

std::vector<std::string> AdbDevice::adb(std::initializer_list<std::string> args) const {
    std::vector<std::string> argv{config_.adb_path, "-s", config_.serial};
    argv.insert(argv.end(), args.begin(), args.end());
    return argv;
}

CommandResult AdbDevice::run_checked(const std::vector<std::string>& argv) {
    auto r = runner_->run(argv);
    if (r.exit_code != 0 && looks_disconnected(r)) {
        throw Error(Errc::device_disconnected, "device " + config_.serial + " unavailable: " + r.err);
    }
    return r;
}

DeviceInfo AdbDevice::info() const {
    std::lock_guard lock(mutex_);
    return DeviceInfo{width_, height_, config_.serial, DeviceBackend::adb};
}

Screenshot AdbDevice::capture() {
    std::lock_guard lock(mutex_);
    const auto r = run_checked(adb({"exec-out", "screencap", "-p"}));
    if (r.exit_code != 0) throw Error(Errc::device_disconnected, "screencap failed: " + r.err);
    const auto* data = reinterpret_cast<const std::uint8_t*>(r.out.data());
    return decode_png(std::span<const std::uint8_t>(data, r.out.size())).with_step_index(capture_count_++);
}

std::vector<std::vector<std::string>> AdbDevice::commands_for(const Action& action) const {
    const auto xy = [](const Point& p) { return std::pair{std::to_string(p.x), std::to_string(p.y)}; };
    switch (action.type) {
        case ActionType::click: {
            auto [x, y] = xy(*action.coordinate);
            return {adb({"shell", "input", "tap", x, y})};
        }
        case ActionType::long_press: {
            auto [x, y] = xy(*action.coordinate);
            const auto ms = std::to_string(static_cast<long long>(std::llround(*action.time * 1000.0)));
            return {adb({"shell", "input", "swipe", x, y, x, y, ms})};
        }
        case ActionType::swipe: {
            auto [x1, y1] = xy(*action.coordinate);
            auto [x2, y2] = xy(*action.coordinate2);
            return {adb({"shell", "input", "swipe", x1, y1, x2, y2, std::to_string(config_.swipe_duration.count())})};
        }
        case ActionType::type: {
            // Newlines and tabs go through keyevents; everything else through `input text`.
            std::vector<std::vector<std::string>> cmds;
            std::string segment;
            auto flush = [&] {
                if (segment.empty()) return;
                auto escaped = escape_input_text(segment);
                if (!escaped) throw Error(Errc::invalid_argument, "text contains characters adb cannot type");
                cmds.push_back(adb({"shell", "input", "text", *escaped}));
                segment.clear();
            };
            for (char ch : *action.text) {
                if (ch == '\n' || ch == '\t') {
                    flush();
                    cmds.push_back(adb({"shell", "input", "keyevent", ch == '\n' ? "66" : "61"}));
                } else {
                    segment += ch;
                }
            }
            flush();
            return cmds;
        }
        case ActionType::clear_text:
            // Ctrl+A then DEL. keycombination needs Android 12+.
            return {adb({"shell", "input", "keycombination", "113", "29"}), adb({"shell", "input", "keyevent", "67"})};
        case ActionType::key: {
            const auto code = keycode_for(*action.text);
            if (!code) throw Error(Errc::invalid_argument, "unknown key name '" + *action.text + "'");
            return {adb({"shell", "input", "keyevent", std::to_string(*code)})};
        }
        case ActionType::system_button: {
            int code = 4;
            switch (*action.button) {
                case SystemButton::back: code = 4; break;
                case SystemButton::home: code = 3; break;
                case SystemButton::menu: code = 82; break;
                case SystemButton::enter: code = 66; break;
            }
            return {adb({"shell", "input", "keyevent", std::to_string(code)})};
        }
        case ActionType::open: {
            auto it = config_.packages.find(lower(*action.text));
            if (it == config_.packages.end()) throw Error(Errc::unknown_app, "no package mapped for app '" + *action.text + "'");
            return {adb({"shell", "monkey", "-p", it->second, "-c", "android.intent.category.LAUNCHER", "1"})};
        }
        case ActionType::wait:
        case ActionType::take_note:
        case ActionType::answer:
        case ActionType::terminate:
            return {};
    }
    return {};
}

ExecutionReport AdbDevice::execute(const Action& action) {
    std::lock_guard lock(mutex_);
    const auto v = validate_action(action, width_, height_);
    if (!v.ok()) return {ExecutionOutcome::rejected, v.message};
    if (action.type == ActionType::take_note || action.type == ActionType::answer ||
        action.type == ActionType::terminate) {
        return {ExecutionOutcome::no_effect, "handled by the orchestrator"};
    }
    if (action.type == ActionType::wait) {
        sleeper_(std::chrono::milliseconds(static_cast<long long>(std::llround(*action.time * 1000.0))));
        return {ExecutionOutcome::applied, "waited"};
    }
    std::vector<std::vector<std::string>> cmds;
    try {
        cmds = commands_for(action);
    } catch (const Error& e) {
        if (e.code() == Errc::unknown_app) throw;
        return {ExecutionOutcome::rejected, e.what()};
    }
    for (const auto& cmd : cmds) {
        const auto r = run_checked(cmd);
        if (r.exit_code != 0) return {ExecutionOutcome::rejected, join_command(cmd) + " failed: " + r.err};
    }
    return {ExecutionOutcome::applied, cmds.empty() ? "" : join_command(cmds.front())};
}

}  // namespace mobileuse
