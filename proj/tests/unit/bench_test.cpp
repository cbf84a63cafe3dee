#include <mobileuse/bench.hpp>
#include <mobileuse/error.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "support/fixtures.hpp"

using namespace mobileuse;

namespace {

const char* kWorld = R"({
  "device": {"width": 400, "height": 800},
  "apps": [{"name": "Notes", "home": "list"}],
  "screens": [{"id": "list", "app": "Notes", "background": [250, 250, 250]}],
  "elements": [],
  "state": {},
  "tasks": [%TASKS%]
})";

AppGraph world_with(const std::string& tasks) {
    std::string text = kWorld;
    text.replace(text.find("%TASKS%"), 7, tasks);
    return parse_app_graph(text);
}

std::string task_with_policy(const std::string& policy) {
    return R"({"id": "t", "instruction": "Open Notes", "difficulty": "easy", "success": [], "policy": )" + policy + "}";
}

}  // namespace

TEST(PolicyGateway, ValidatesPlan) {
    auto code = [](const std::string& policy) {
        const auto world = world_with(task_with_policy(policy));
        try {
            PolicyGateway gw(world.tasks.at(0));
        } catch (const Error& e) {
            return e.code();
        }
        return Errc::invalid_argument;
    };
    const std::string open = R"({"action": {"action_type": "open", "text": "Notes"}})";
    const std::string done = R"({"action": {"action_type": "terminate", "status": "success"}})";
    EXPECT_EQ(code("{}"), Errc::schema_error);
    EXPECT_EQ(code(R"({"steps": [)" + open + "]}"), Errc::schema_error);
    EXPECT_EQ(code(R"({"steps": [)" + open + "," + done + R"(], "faults": [{"kind": "skip_clear", "at": 0}]})"),
              Errc::schema_error);
    EXPECT_EQ(code(R"({"steps": [)" + open + "," + done + R"(], "faults": [{"kind": "stuck", "at": 1, "coordinate": [1, 1]}]})"),
              Errc::schema_error);
    EXPECT_EQ(code(R"({"steps": [)" + open + "," + done + R"(], "faults": [{"kind": "gremlin", "at": 0}]})"),
              Errc::schema_error);
    EXPECT_EQ(code(R"({"steps": [)" + open + "," + done + "]}"), Errc::invalid_argument);
}

TEST(Bench, RowsAndNames) {
    RunConfig base;
    base.gate.theta = -0.01;
    const auto rows = ablation_rows(base);
    ASSERT_EQ(rows.size(), 5u);
    EXPECT_EQ(rows[0].name, "Base");
    EXPECT_FALSE(rows[0].config.enable_action_reflector || rows[0].config.enable_trajectory_reflector ||
                 rows[0].config.enable_global_reflector);
    EXPECT_TRUE(rows[2].config.enable_trajectory_reflector && !rows[2].config.enable_global_reflector);
    EXPECT_EQ(rows[3].config.gate.theta, 0.0);
    EXPECT_EQ(rows[4].name, "+ReflectionOnDemand");
    EXPECT_EQ(rows[4].config.gate.theta, -0.01);

    const auto sweep = theta_sweep_rows(base, {0.0, -0.001, -std::numeric_limits<double>::infinity()});
    ASSERT_EQ(sweep.size(), 3u);
    EXPECT_EQ(sweep[1].name, "theta=-0.001");
    EXPECT_EQ(sweep[2].name, "theta=-inf");
}

TEST(Bench, EmptyWorldRejected) {
    const auto world = world_with("");
    EXPECT_THROW(run_bench(world, ablation_rows(RunConfig{})), Error);
}

TEST(Bench, SingleTaskRunAndTables) {
    const auto world = world_with(R"({"id": "open_notes", "instruction": "Open Notes", "difficulty": "easy",
        "success": [], "policy": {"steps": [{"action": {"action_type": "open", "text": "Notes"}},
        {"action": {"action_type": "terminate", "status": "success"}}]}})");
    const auto results = run_bench(world, ablation_rows(RunConfig{}));
    ASSERT_EQ(results.size(), 5u);
    for (const auto& r : results) {
        ASSERT_EQ(r.tasks.size(), 1u);
        EXPECT_TRUE(r.tasks[0].success) << r.name;
        EXPECT_EQ(r.tasks[0].executed_steps, 1);
    }
    EXPECT_EQ(results[0].action_reflections(), 0);
    EXPECT_EQ(results[1].action_reflections(), 1);
    EXPECT_EQ(results[3].tasks[0].global_reflections, 1);
    EXPECT_EQ(results[0].tasks[0].global_reflections, 0);

    const auto table = format_ablation_table(results);
    EXPECT_NE(table.find("| Base | 1/1 | 0/0 | 0/0 | 1/1 | 0/1 (0.0%) |"), std::string::npos) << table;
    EXPECT_NE(table.find("| +ActionReflector | 1/1 | 0/0 | 0/0 | 1/1 | 1/1 (100.0%) |"), std::string::npos) << table;
    const auto sweep = format_theta_sweep(run_bench(world, theta_sweep_rows(RunConfig{}, {-std::numeric_limits<double>::infinity()})));
    EXPECT_NE(sweep.find("| -inf | 1/1 | 0 | 1 |"), std::string::npos) << sweep;
}
