#include <mobileuse/adb_device.hpp>
#include <mobileuse/error.hpp>
#include <mobileuse/image_codec.hpp>

#include <gtest/gtest.h>

#include <deque>

using namespace mobileuse;

namespace {

class FakeRunner final : public CommandRunner {
public:
    CommandResult run(const std::vector<std::string>& argv) override {
        commands.push_back(join_command(argv));
        if (!queued.empty()) {
            auto r = queued.front();
            queued.pop_front();
            return r;
        }
        if (argv.size() > 4 && argv[3] == "shell" && argv[4] == "wm") return {0, size_output, ""};
        return {0, "", ""};
    }

    std::vector<std::string> commands;
    std::deque<CommandResult> queued;
    std::string size_output = "Physical size: 1080x2400\n";
};

struct Rig {
    std::shared_ptr<FakeRunner> runner = std::make_shared<FakeRunner>();
    std::vector<long> sleeps;
    std::unique_ptr<AdbDevice> device;

    explicit Rig(std::map<std::string, std::string> packages = {{"Tasks", "org.tasks"}}) {
        AdbConfig c;
        c.serial = "emulator-5554";
        c.packages = std::move(packages);
        device = std::make_unique<AdbDevice>(c, runner, [this](std::chrono::milliseconds d) { sleeps.push_back(d.count()); });
        runner->commands.clear();
    }
};

}  // namespace

TEST(AdbDevice, ReadsScreenSize) {
    Rig rig;
    const auto info = rig.device->info();
    EXPECT_EQ(info.width, 1080);
    EXPECT_EQ(info.height, 2400);
    EXPECT_EQ(info.backend, DeviceBackend::adb);
    EXPECT_EQ(info.device_id, "emulator-5554");
}

TEST(AdbDevice, OverrideSizeWins) {
    auto runner = std::make_shared<FakeRunner>();
    runner->size_output = "Physical size: 1440x3120\nOverride size: 1080x2340\n";
    AdbConfig c;
    c.serial = "x";
    AdbDevice d(c, runner);
    EXPECT_EQ(d.info().width, 1080);
    EXPECT_EQ(d.info().height, 2340);
}

TEST(AdbDevice, ExactCommands) {
    Rig rig;
    auto& d = *rig.device;
    d.execute(Action::click(540, 1200));
    d.execute(Action::long_press(10, 20, 1.5));
    d.execute(Action::swipe({540, 1800}, {540, 600}));
    d.execute(Action::type_text("hi there"));
    d.execute(Action::clear_text());
    d.execute(Action::key("volume_up"));
    d.execute(Action::system_button(SystemButton::back));
    d.execute(Action::system_button(SystemButton::home));
    d.execute(Action::system_button(SystemButton::menu));
    d.execute(Action::system_button(SystemButton::enter));
    d.execute(Action::open("tasks"));
    const std::string p = "adb -s emulator-5554 ";
    EXPECT_EQ(rig.runner->commands, (std::vector<std::string>{
                                        p + "shell input tap 540 1200",
                                        p + "shell input swipe 10 20 10 20 1500",
                                        p + "shell input swipe 540 1800 540 600 300",
                                        p + "shell input text hi%sthere",
                                        p + "shell input keycombination 113 29",
                                        p + "shell input keyevent 67",
                                        p + "shell input keyevent 24",
                                        p + "shell input keyevent 4",
                                        p + "shell input keyevent 3",
                                        p + "shell input keyevent 82",
                                        p + "shell input keyevent 66",
                                        p + "shell monkey -p org.tasks -c android.intent.category.LAUNCHER 1",
                                    }));
}

TEST(AdbDevice, TypeSplitsNewlines) {
    Rig rig;
    rig.device->execute(Action::type_text("a\nb"));
    EXPECT_EQ(rig.runner->commands, (std::vector<std::string>{"adb -s emulator-5554 shell input text a",
                                                              "adb -s emulator-5554 shell input keyevent 66",
                                                              "adb -s emulator-5554 shell input text b"}));
}

TEST(AdbDevice, LocalActionsRunNoCommands) {
    Rig rig;
    EXPECT_EQ(rig.device->execute(Action::wait(0.25)).outcome, ExecutionOutcome::applied);
    EXPECT_EQ(rig.sleeps, (std::vector<long>{250}));
    EXPECT_EQ(rig.device->execute(Action::take_note("x")).outcome, ExecutionOutcome::no_effect);
    EXPECT_TRUE(rig.runner->commands.empty());
}

TEST(AdbDevice, RejectionsAndErrors) {
    Rig rig;
    auto& d = *rig.device;
    EXPECT_EQ(d.execute(Action::click(1080, 5)).outcome, ExecutionOutcome::rejected);
    EXPECT_EQ(d.execute(Action::type_text("caf\xc3\xa9")).outcome, ExecutionOutcome::rejected);
    EXPECT_EQ(d.execute(Action::key("no_such_key")).outcome, ExecutionOutcome::rejected);
    EXPECT_TRUE(rig.runner->commands.empty());
    try {
        d.execute(Action::open("Camera"));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::unknown_app);
    }
    rig.runner->queued.push_back({1, "", "error: device 'emulator-5554' not found"});
    try {
        d.execute(Action::click(1, 1));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::device_disconnected);
    }
    rig.runner->queued.push_back({1, "", "Error: bad argument"});
    EXPECT_EQ(d.execute(Action::click(1, 1)).outcome, ExecutionOutcome::rejected);
}

TEST(AdbDevice, CaptureDecodesPng) {
    Rig rig;
    const auto png = encode_png(Screenshot::filled(4, 3, 10, 20, 30));
    rig.runner->queued.push_back({0, std::string(png.begin(), png.end()), ""});
    const auto shot = rig.device->capture();
    EXPECT_EQ(rig.runner->commands.back(), "adb -s emulator-5554 exec-out screencap -p");
    EXPECT_EQ(shot.width(), 4);
    EXPECT_EQ(shot.pixel(3, 2)[2], 30);

    rig.runner->queued.push_back({0, "garbage", ""});
    try {
        rig.device->capture();
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::capture_decode_failure);
    }
}

TEST(AdbDevice, UnreachableAtConstruction) {
    auto runner = std::make_shared<FakeRunner>();
    runner->queued.push_back({1, "", "adb: device offline"});
    AdbConfig c;
    c.serial = "x";
    EXPECT_THROW(AdbDevice(c, runner), Error);
}

TEST(AdbHelpers, KeycodesAndEscaping) {
    EXPECT_EQ(keycode_for("volume_up"), 24);
    EXPECT_EQ(keycode_for("KEYCODE_VOLUME_UP"), 24);
    EXPECT_EQ(keycode_for("66"), 66);
    EXPECT_EQ(keycode_for("a"), 29);
    EXPECT_FALSE(keycode_for("nonsense"));
    EXPECT_EQ(escape_input_text("a b"), "a%sb");
    EXPECT_EQ(escape_input_text("it's $5"), "it\\'s%s\\$5");
    EXPECT_FALSE(escape_input_text("tab\there"));
}

TEST(ProcessRunner, RunsWithoutShell) {
    ProcessRunner r;
    const auto res = r.run({"/bin/echo", "a b", "$HOME"});
    EXPECT_EQ(res.exit_code, 0);
    EXPECT_EQ(res.out, "a b $HOME\n");
    EXPECT_NE(r.run({"/bin/sh", "-c", "exit 3"}).exit_code, 0);
}
