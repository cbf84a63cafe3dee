#pragma once

// Real Android device over the adb command-line tool.
//
//   capture       adb -s <id> exec-out screencap -p
//   click         adb -s <id> shell input tap <x> <y>
//   long_press    adb -s <id> shell input swipe <x> <y> <x> <y> <ms>
//   swipe         adb -s <id> shell input swipe <x1> <y1> <x2> <y2> 300
//   type          adb -s <id> shell input text <escaped>
//   key           adb -s <id> shell input keyevent <KEYCODE>
//   system_button Back/Home/Menu/Enter -> keyevent 4/3/82/66
//   open          adb -s <id> shell monkey -p <package> -c android.intent.category.LAUNCHER 1

#include <mobileuse/device.hpp>

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace mobileuse {

struct CommandResult {
    int exit_code = 0;
    std::string out;
    std::string err;
};

class CommandRunner {
public:
    virtual ~CommandRunner() = default;
    virtual CommandResult run(const std::vector<std::string>& argv) = 0;
};

// Spawns the process directly (no shell) and collects stdout/stderr.
class ProcessRunner final : public CommandRunner {
public:
    CommandResult run(const std::vector<std::string>& argv) override;
};

std::string join_command(const std::vector<std::string>& argv);

// Key name (as written in a key action) to Android keycode. Accepts
// names like "volume_up", "KEYCODE_VOLUME_UP" and bare integers.
std::optional<int> keycode_for(std::string_view name);

// Argument for `input text`: spaces become %s and shell metacharacters are
// backslash-escaped. Returns nullopt for characters `input text` cannot pass
// (control characters and non-ASCII).
std::optional<std::string> escape_input_text(std::string_view text);

struct AdbConfig {
    std::string adb_path = "adb";
    std::string serial;
    std::map<std::string, std::string> packages;  // app name (case-insensitive) -> package
    std::chrono::milliseconds swipe_duration{300};
};

class AdbDevice final : public Device {
public:
    using Sleeper = std::function<void(std::chrono::milliseconds)>;

    // Queries `wm size`; throws Error{device_disconnected} if unreachable.
    AdbDevice(AdbConfig config, std::shared_ptr<CommandRunner> runner, Sleeper sleeper = {});

    DeviceInfo info() const override;
    Screenshot capture() override;
    ExecutionReport execute(const Action& action) override;

    // Commands an action maps to, without running them.
    std::vector<std::vector<std::string>> commands_for(const Action& action) const;

private:
    std::vector<std::string> adb(std::initializer_list<std::string> args) const;
    CommandResult run_checked(const std::vector<std::string>& argv);

    AdbConfig config_;
    std::shared_ptr<CommandRunner> runner_;
    Sleeper sleeper_;
    mutable std::mutex mutex_;
    int width_ = 0;
    int height_ = 0;
    int capture_count_ = 0;
};

}  // namespace mobileuse
