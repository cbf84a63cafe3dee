#include <mobileuse/config.hpp>
#include <mobileuse/error.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>

#include "support/fixtures.hpp"

using namespace mobileuse;

namespace {

std::string error_text(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::invalid_argument);
        return e.what();
    }
    ADD_FAILURE() << "no error";
    return {};
}

}  // namespace

TEST(Settings, ParsesCommentsAndBlankLines) {
    Settings s;
    s.parse("# model\nMODEL_NAME = gpt-x  # trailing\n\n  RUN_MAX_STEPS=12\n");
    EXPECT_EQ(s.get("MODEL_NAME"), "gpt-x");
    EXPECT_EQ(s.get_or("RUN_MAX_STEPS", "0"), "12");
    EXPECT_FALSE(s.get("MODEL_API_KEY"));
}

TEST(Settings, BadLinesNameTheLine) {
    Settings s;
    const auto unknown = error_text([&] { s.parse("RUN_MAX_STEPS=3\nNOT_A_KEY=1\n", "cfg.env"); });
    EXPECT_NE(unknown.find("cfg.env:2:"), std::string::npos) << unknown;
    EXPECT_NE(unknown.find("NOT_A_KEY"), std::string::npos);
    const auto malformed = error_text([&] { s.parse("\n\nRUN_MAX_STEPS\n", "x"); });
    EXPECT_NE(malformed.find("x:3:"), std::string::npos) << malformed;
}

TEST(Settings, LaterSourcesWin) {
    const auto dir = fixtures::temp_dir("settings");
    std::ofstream(dir / "a.env") << "RUN_MAX_STEPS=4\nMODEL_NAME=file-model\n";
    Settings s;
    s.load_file((dir / "a.env").string());
    ::setenv("MODEL_NAME", "env-model", 1);
    s.load_environment();
    ::unsetenv("MODEL_NAME");
    EXPECT_EQ(s.get("MODEL_NAME"), "env-model");
    s.set("RUN_MAX_STEPS", "9");
    RunConfig c;
    s.apply(c);
    EXPECT_EQ(c.max_steps, 9);
    EXPECT_THROW(s.load_file((dir / "missing.env").string()), Error);
}

TEST(Settings, AppliesRunConfig) {
    Settings s;
    s.parse(
        "GATE_THETA=-inf\nGATE_TRAJECTORY_WINDOW=4\nGATE_REPEAT_ACTION_COUNT=2\nGATE_SCREEN_SAME_THRESHOLD=0.01\n"
        "RUN_KNOWLEDGE_LIMIT=0\nRUN_GLOBAL_REFLECTOR=off\nRUN_ACTION_REFLECTOR=yes\nMAX_IMAGES_PER_CALL=2\n"
        "TRACE_DIR=/tmp/t\n");
    RunConfig c;
    s.apply(c);
    EXPECT_TRUE(std::isinf(c.gate.theta) && c.gate.theta < 0);
    EXPECT_EQ(c.gate.trajectory_window, 4);
    EXPECT_EQ(c.gate.repeat_action_count, 2);
    EXPECT_DOUBLE_EQ(c.gate.screen_same_threshold, 0.01);
    EXPECT_EQ(c.knowledge_limit, 0u);
    EXPECT_FALSE(c.enable_global_reflector);
    EXPECT_TRUE(c.enable_action_reflector);
    EXPECT_EQ(c.limits.max_images_per_call, 2);
    EXPECT_EQ(c.trace_dir, "/tmp/t");

    Settings bad;
    bad.set("RUN_MAX_STEPS", "ten");
    EXPECT_NE(error_text([&] { bad.apply(c); }).find("RUN_MAX_STEPS"), std::string::npos);
    bad = Settings();
    bad.set("RUN_KNOWLEDGE_LIMIT", "-1");
    EXPECT_THROW(bad.apply(c), Error);
}

TEST(Settings, ExplorationGatewayAndAdb) {
    Settings s;
    s.parse("EXPLORE_EPISODES=2\nEXPLORE_SUMMARY_STRIDE=3\nMODEL_BASE_URL=http://h:1/v1\nMODEL_TIMEOUT_SECS=7\n"
            "ADB_PATH=/opt/adb\nADB_PACKAGES=Tasks=org.tasks, Camera = com.android.camera2\n");
    ExplorationConfig e;
    s.apply(e);
    EXPECT_EQ(e.episodes_per_app, 2);
    EXPECT_EQ(e.summary_stride, 3);
    const auto g = s.gateway_config();
    EXPECT_EQ(g.base_url, "http://h:1/v1");
    EXPECT_EQ(g.timeout, std::chrono::seconds(7));
    const auto a = s.adb_config("emu");
    EXPECT_EQ(a.serial, "emu");
    EXPECT_EQ(a.adb_path, "/opt/adb");
    EXPECT_EQ(a.packages, (std::map<std::string, std::string>{{"Camera", "com.android.camera2"}, {"Tasks", "org.tasks"}}));

    s.set("ADB_PACKAGES", "Tasks");
    EXPECT_THROW(s.adb_config("emu"), Error);
    s.set("MODEL_TIMEOUT_SECS", "0");
    EXPECT_THROW(s.gateway_config(), Error);
}

TEST(SettingValues, Parsers) {
    EXPECT_DOUBLE_EQ(parse_double_setting("k", " -0.001 "), -0.001);
    EXPECT_TRUE(std::isinf(parse_double_setting("k", "-Infinity")));
    EXPECT_THROW(parse_double_setting("k", "1.5x"), Error);
    EXPECT_EQ(parse_int_setting("k", "42"), 42);
    EXPECT_THROW(parse_int_setting("k", "4.2"), Error);
    EXPECT_TRUE(parse_bool_setting("k", "TRUE"));
    EXPECT_FALSE(parse_bool_setting("k", "0"));
    EXPECT_THROW(parse_bool_setting("k", "maybe"), Error);
}
