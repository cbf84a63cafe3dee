#include <mobileuse/app_graph.hpp>
#include <mobileuse/error.hpp>
#include <mobileuse/perception.hpp>
#include <mobileuse/sim_device.hpp>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "support/fixtures.hpp"

using namespace mobileuse;
using nlohmann::json;

namespace {

json small_world() {
    return json::parse(R"({
      "device": {"width": 400, "height": 600},
      "apps": [{"name": "Notes", "home": "list"}],
      "screens": [
        {"id": "list", "app": "Notes", "on_swipe": {"up": {"target": "more"}},
         "on_key": {"Menu": {"set": {"menu": true}}}},
        {"id": "more", "app": "Notes", "background": [200, 220, 240]},
        {"id": "edit", "app": "Notes"}
      ],
      "elements": [
        {"id": "title", "screen": "list", "bounds": [10, 10, 380, 40], "label": "Notes", "kind": "static"},
        {"id": "note", "screen": "list", "bounds": [10, 100, 380, 60], "label": "{{body}}", "kind": "list_item",
         "on_click": {"target": "edit"}, "on_long_press": {"set": {"pinned": true}}},
        {"id": "pin", "screen": "list", "bounds": [10, 200, 380, 60], "label": "Pinned", "kind": "toggle",
         "binding": "pinned"},
        {"id": "body", "screen": "edit", "bounds": [10, 100, 380, 60], "label": "Body", "kind": "text_field",
         "binding": "body"}
      ],
      "state": {"body": "milk", "pinned": false, "menu": false},
      "tasks": [{"id": "edit_note", "instruction": "Change the note to eggs", "difficulty": "easy",
                 "initial_state": {"body": "bread"},
                 "success": [{"var": "body", "equals": "eggs"}, {"answer": "done"}]}]
    })");
}

std::shared_ptr<const AppGraph> graph_of(const json& j) { return std::make_shared<const AppGraph>(parse_app_graph(j.dump())); }

Errc code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error thrown";
    return Errc::invalid_argument;
}

}  // namespace

TEST(AppGraph, ParsesWorld) {
    const auto g = parse_app_graph(small_world().dump());
    EXPECT_EQ(g.width, 400);
    EXPECT_EQ(g.screens.at("list").elements.size(), 3u);
    EXPECT_EQ(g.screens.at("more").background, (Color{200, 220, 240}));
    ASSERT_NE(g.find_app("notes"), nullptr);
    ASSERT_NE(g.find_task("edit_note"), nullptr);
    EXPECT_EQ(g.find_task("edit_note")->difficulty, Difficulty::easy);
    EXPECT_TRUE(g.screens.count(kLauncherScreen));
}

TEST(AppGraph, RejectsUnknownKeysAndDanglingReferences) {
    auto w = small_world();
    w["elements"][0]["colour"] = "red";
    EXPECT_EQ(code_of([&] { parse_app_graph(w.dump()); }), Errc::schema_error);

    w = small_world();
    w["elements"][1]["on_click"]["target"] = "nowhere";
    EXPECT_EQ(code_of([&] { parse_app_graph(w.dump()); }), Errc::schema_error);

    w = small_world();
    w["elements"][3]["binding"] = nullptr;
    w["elements"][3].erase("binding");
    EXPECT_EQ(code_of([&] { parse_app_graph(w.dump()); }), Errc::schema_error);

    EXPECT_EQ(code_of([] { parse_app_graph("{"); }), Errc::schema_error);
}

TEST(AppGraph, BundledWorldsLoad) {
    const auto suite = load_app_graph(fixtures::source_path("worlds/recovery_suite.json"));
    EXPECT_EQ(suite.tasks.size(), 12u);
    const auto files = load_app_graph(fixtures::source_path("worlds/files.json"));
    EXPECT_NE(files.find_task("rename_file"), nullptr);
}

TEST(CheckSuccess, StateAndAnswer) {
    const auto g = parse_app_graph(small_world().dump());
    const auto& task = *g.find_task("edit_note");
    StateMap s = g.state;
    s["body"] = std::string("eggs");
    EXPECT_TRUE(check_success(task, s, std::optional<std::string>("Done")));
    EXPECT_FALSE(check_success(task, s, std::optional<std::string>("no")));
    EXPECT_FALSE(check_success(task, s, std::optional<std::string>()));
    s["body"] = std::string("ham");
    EXPECT_FALSE(check_success(task, s, std::optional<std::string>("done")));
}

TEST(SimDevice, StartsOnLauncherAndOpensApps) {
    SimDevice d(graph_of(small_world()));
    EXPECT_EQ(d.current_screen(), kLauncherScreen);
    EXPECT_EQ(d.execute(Action::open("notes")).outcome, ExecutionOutcome::applied);
    EXPECT_EQ(d.current_screen(), "list");
    EXPECT_EQ(code_of([&] { d.execute(Action::open("Camera")); }), Errc::unknown_app);
    EXPECT_EQ(d.current_screen(), "list");
}

TEST(SimDevice, TapsTogglesAndTextEntry) {
    SimDevice d(graph_of(small_world()));
    d.execute(Action::open("Notes"));
    EXPECT_EQ(d.execute(Action::click(200, 230)).outcome, ExecutionOutcome::applied);
    EXPECT_EQ(std::get<bool>(d.state().at("pinned")), true);
    EXPECT_EQ(d.execute(Action::click(5, 500)).outcome, ExecutionOutcome::no_effect);

    d.execute(Action::click(200, 130));
    EXPECT_EQ(d.current_screen(), "edit");
    EXPECT_EQ(d.execute(Action::type_text("x")).outcome, ExecutionOutcome::no_effect);
    d.execute(Action::click(200, 130));
    EXPECT_EQ(d.focused_element(), "body");
    d.execute(Action::type_text(" and eggs"));
    EXPECT_EQ(std::get<std::string>(d.state().at("body")), "milk and eggs");
    d.execute(Action::clear_text());
    d.execute(Action::type_text("eggs"));
    EXPECT_EQ(std::get<std::string>(d.state().at("body")), "eggs");

    EXPECT_EQ(d.execute(Action::system_button(SystemButton::back)).outcome, ExecutionOutcome::applied);
    EXPECT_EQ(d.current_screen(), "list");
    EXPECT_FALSE(d.focused_element());
}

TEST(SimDevice, SwipesKeysLongPressAndWait) {
    SimDevice d(graph_of(small_world()));
    d.execute(Action::open("Notes"));
    EXPECT_EQ(d.execute(Action::long_press(200, 130, 1.0)).outcome, ExecutionOutcome::applied);
    EXPECT_EQ(std::get<bool>(d.state().at("pinned")), true);
    EXPECT_EQ(d.execute(Action::system_button(SystemButton::menu)).outcome, ExecutionOutcome::applied);
    EXPECT_EQ(std::get<bool>(d.state().at("menu")), true);
    // Setting a value that is already set changes nothing.
    EXPECT_EQ(d.execute(Action::system_button(SystemButton::menu)).outcome, ExecutionOutcome::no_effect);
    EXPECT_EQ(d.execute(Action::swipe({200, 500}, {200, 100})).outcome, ExecutionOutcome::applied);
    EXPECT_EQ(d.current_screen(), "more");
    EXPECT_EQ(d.execute(Action::swipe({200, 100}, {200, 500})).outcome, ExecutionOutcome::no_effect);
    d.execute(Action::wait(2));
    EXPECT_DOUBLE_EQ(d.clock_seconds(), 2.0);
}

TEST(SimDevice, InvalidActionsAreRejectedWithoutStateChange) {
    SimDevice d(graph_of(small_world()));
    d.execute(Action::open("Notes"));
    const auto before = d.state();
    EXPECT_EQ(d.execute(Action::click(400, 10)).outcome, ExecutionOutcome::rejected);
    EXPECT_EQ(d.state(), before);
    EXPECT_EQ(d.current_screen(), "list");
}

TEST(SimDevice, RenderingIsDeterministicAndReflectsState) {
    SimDevice a(graph_of(small_world())), b(graph_of(small_world()));
    for (auto* d : {&a, &b}) {
        d->execute(Action::open("Notes"));
        d->execute(Action::click(200, 230));
    }
    const auto sa = a.capture(), sb = b.capture();
    EXPECT_TRUE(sa.same_raster(sb));
    EXPECT_EQ(sa.width(), 400);
    EXPECT_EQ(sa.height(), 600);
    a.execute(Action::click(200, 230));
    EXPECT_GT(changed_fraction(sa, a.capture()), 0.0);
}

TEST(SimDevice, ResetAppliesOverridesAndReturnsToLauncher) {
    SimDevice d(graph_of(small_world()));
    const auto launcher = d.capture();
    d.execute(Action::open("Notes"));
    d.reset({{"body", std::string("bread")}});
    EXPECT_EQ(d.current_screen(), kLauncherScreen);
    EXPECT_EQ(std::get<std::string>(d.state().at("body")), "bread");
    EXPECT_EQ(std::get<bool>(d.state().at("pinned")), false);
    EXPECT_TRUE(d.capture().same_raster(launcher));
}

TEST(SimDevice, LauncherButtonsOpenApps) {
    SimDevice d(graph_of(small_world()));
    const int h = 600;
    const int top = h / 8, height = std::max(24, h / 16);
    EXPECT_EQ(d.execute(Action::click(200, top + height / 2)).outcome, ExecutionOutcome::applied);
    EXPECT_EQ(d.current_screen(), "list");
}

TEST(SimDevice, Disconnected) {
    SimDevice d(graph_of(small_world()));
    d.set_connected(false);
    EXPECT_EQ(code_of([&] { d.capture(); }), Errc::device_disconnected);
    EXPECT_EQ(code_of([&] { d.execute(Action::wait(1)); }), Errc::device_disconnected);
    d.set_connected(true);
    EXPECT_NO_THROW(d.capture());
}

TEST(SimDevice, ReplayedActionsReachIdenticalState) {
    const auto world = std::make_shared<const AppGraph>(load_app_graph(fixtures::source_path("worlds/files.json")));
    const std::vector<Action> script{Action::open("Files"), Action::click(270, 160), Action::click(270, 260),
                                     Action::click(270, 160), Action::clear_text(), Action::type_text("a.txt"),
                                     Action::click(140, 280)};
    SimDevice a(world), b(world);
    for (const auto& act : script) {
        a.execute(act);
        b.execute(act);
    }
    EXPECT_EQ(a.state(), b.state());
    EXPECT_TRUE(a.capture().same_raster(b.capture()));
    EXPECT_EQ(std::get<std::string>(a.state().at("filename")), "a.txt");
}
