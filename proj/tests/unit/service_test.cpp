#include <mobileuse/bench.hpp>
#include <mobileuse/error.hpp>
#include <mobileuse/service.hpp>
#include <mobileuse/sim_device.hpp>

#include <gtest/gtest.h>

#include <future>
#include <thread>

#include "support/fixtures.hpp"
#include "support/sse.hpp"

using namespace mobileuse;
using namespace fixtures;
using nlohmann::json;

namespace {

std::shared_ptr<const AppGraph> files_world() {
    static auto g = std::make_shared<const AppGraph>(load_app_graph(source_path("worlds/files.json")));
    return g;
}

// Holds the first operator call until released.
class GatedGateway final : public ModelGateway {
public:
    GatedGateway(std::shared_future<void> gate) : inner_(*files_world()->find_task("star_file")), gate_(gate) {}

    Completion complete(const ChatRequest& request) override {
        if (!waited_) {
            waited_ = true;
            gate_.wait();
        }
        return inner_.complete(request);
    }

private:
    PolicyGateway inner_;
    std::shared_future<void> gate_;
    bool waited_ = false;
};

struct ServiceRig {
    std::promise<void> release;
    std::shared_future<void> gate = release.get_future().share();
    bool gated = false;
    std::unique_ptr<Service> service;
    std::unique_ptr<httplib::Client> client;

    explicit ServiceRig(int devices = 1, std::shared_ptr<KnowledgeStore> store = nullptr) {
        std::vector<ServiceDevice> pool;
        for (int i = 0; i < devices; ++i) {
            auto sim = std::make_shared<SimDevice>(files_world());
            pool.push_back({"sim-" + std::to_string(i + 1), sim, [sim] { sim->reset(); }});
        }
        ServiceOptions options;
        options.port = 0;
        service = std::make_unique<Service>(
            options, pool,
            [this]() -> std::shared_ptr<ModelGateway> {
                if (gated) return std::make_shared<GatedGateway>(gate);
                return std::make_shared<PolicyGateway>(*files_world()->find_task("star_file"));
            },
            store);
        service->start();
        client = std::make_unique<httplib::Client>("127.0.0.1", service->port());
    }

    ~ServiceRig() {
        if (gated) release_gate();
        service->stop();
    }

    void release_gate() {
        if (!released) release.set_value();
        released = true;
    }

    httplib::Result post(const std::string& path, const json& body) {
        return client->Post(path, body.dump(), "application/json");
    }

    std::string start_run(const std::string& instruction = "Star the file untitled.txt in Files") {
        auto res = post("/api/runs", {{"instruction", instruction}});
        EXPECT_TRUE(res);
        EXPECT_EQ(res->status, 201) << res->body;
        return json::parse(res->body)["run_id"].get<std::string>();
    }

    bool released = false;
};

std::vector<std::int64_t> seqs(const std::vector<SseFrame>& frames) {
    std::vector<std::int64_t> out;
    for (const auto& f : frames) out.push_back(std::stoll(f.id));
    return out;
}

}  // namespace

TEST(Service, RunStreamsToCompletion) {
    ServiceRig rig;
    auto res = rig.post("/api/runs", {{"instruction", "Star the file untitled.txt in Files"}, {"app_hint", "Files"}});
    ASSERT_TRUE(res);
    ASSERT_EQ(res->status, 201) << res->body;
    const auto handle = json::parse(res->body);
    EXPECT_EQ(handle["run_id"], "run-0001");
    EXPECT_EQ(handle["device"], "sim-1");
    EXPECT_EQ(res->get_header_value("Access-Control-Allow-Origin"), "*");

    const auto frames = read_events(rig.service->port(), "run-0001");
    ASSERT_FALSE(frames.empty());
    for (std::size_t i = 0; i < frames.size(); ++i) {
        EXPECT_EQ(frames[i].id, std::to_string(i));
        EXPECT_EQ(frames[i].event, frames[i].data["type"]);
        EXPECT_EQ(validate_event_json(frames[i].data), "");
    }
    EXPECT_EQ(frames.front().event, "run_started");
    EXPECT_EQ(frames.back().event, "run_finished");
    EXPECT_EQ(frames.back().data["status"], "success");

    const auto& step = frames.at(1).data;
    ASSERT_EQ(step["type"], "step_started");
    EXPECT_EQ(step["screenshot_url"], "/api/runs/run-0001/shots/0.png");
    auto shot = rig.client->Get(step["screenshot_url"].get<std::string>());
    ASSERT_TRUE(shot);
    EXPECT_EQ(shot->status, 200);
    EXPECT_EQ(shot->get_header_value("Content-Type"), "image/png");
    EXPECT_EQ(shot->body.substr(1, 3), "PNG");

    auto got = rig.client->Get("/api/runs/run-0001");
    ASSERT_TRUE(got);
    EXPECT_EQ(json::parse(got->body)["status"], "success");
    EXPECT_EQ(json::parse(got->body)["events"], frames.size());

    rig.start_run();
    read_events(rig.service->port(), "run-0002");
    const auto list = json::parse(rig.client->Get("/api/runs")->body);
    ASSERT_EQ(list.size(), 2u);
    EXPECT_EQ(list[0]["run_id"], "run-0002");
    EXPECT_EQ(list[1]["run_id"], "run-0001");
}

TEST(Service, ResumeAfterLastEventId) {
    ServiceRig rig;
    const auto id = rig.start_run();
    const auto all = read_events(rig.service->port(), id);
    const auto tail = read_events(rig.service->port(), id, "3");
    ASSERT_EQ(tail.size() + 4, all.size());
    for (std::size_t i = 0; i < tail.size(); ++i) EXPECT_EQ(tail[i].data, all[i + 4].data);

    auto q = rig.client->Get("/api/runs/" + id + "/events?last_event_id=5");
    ASSERT_TRUE(q);
    SseParser parser;
    parser.feed(q->body.data(), q->body.size());
    EXPECT_EQ(parser.frames.front().id, "6");

    auto bad = rig.client->Get("/api/runs/" + id + "/events", {{"Last-Event-ID", "abc"}});
    ASSERT_TRUE(bad);
    EXPECT_EQ(bad->status, 400);
}

TEST(Service, RequestErrors) {
    ServiceRig rig;
    auto code = [&](httplib::Result r) { return r ? r->status : -1; };
    EXPECT_EQ(code(rig.client->Post("/api/runs", "{oops", "application/json")), 400);
    EXPECT_EQ(code(rig.post("/api/runs", json::array())), 400);
    EXPECT_EQ(code(rig.post("/api/runs", {{"instruction", ""}})), 400);
    EXPECT_EQ(code(rig.post("/api/runs", {{"instruction", "x"}, {"config", {{"bogus", 1}}}})), 400);
    EXPECT_EQ(code(rig.post("/api/runs", {{"instruction", "x"}, {"config", {{"max_steps", 0}}}})), 400);
    EXPECT_EQ(code(rig.post("/api/runs", {{"instruction", "x"}, {"device", "sim-9"}})), 503);
    EXPECT_EQ(code(rig.client->Get("/api/runs/run-9999")), 404);
    EXPECT_EQ(code(rig.client->Get("/api/runs/run-9999/events")), 404);
    EXPECT_EQ(code(rig.client->Post("/api/runs/run-9999/abort", "", "application/json")), 404);
    EXPECT_EQ(code(rig.client->Get("/api/runs/run-9999/shots/0.png")), 404);
    EXPECT_EQ(code(rig.client->Get("/api/explore/explore-9")), 404);

    auto options = rig.client->Options("/api/runs");
    ASSERT_TRUE(options);
    EXPECT_EQ(options->status, 204);
    EXPECT_NE(options->get_header_value("Access-Control-Allow-Headers").find("Last-Event-ID"), std::string::npos);

    const auto id = rig.start_run();
    read_events(rig.service->port(), id);
    EXPECT_EQ(code(rig.client->Post("/api/runs/" + id + "/abort", "", "application/json")), 404);
    EXPECT_EQ(code(rig.client->Get("/api/runs/" + id + "/shots/999.png")), 404);
}

TEST(Service, NoDevicesIsUnavailable) {
    ServiceRig rig(0);
    auto res = rig.post("/api/runs", {{"instruction", "x"}});
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 503);
}

TEST(Service, BusyDeviceAndAbort) {
    ServiceRig rig;
    rig.gated = true;
    const auto id = rig.start_run();
    auto busy = rig.post("/api/runs", {{"instruction", "x"}});
    ASSERT_TRUE(busy);
    EXPECT_EQ(busy->status, 409);
    auto named = rig.post("/api/runs", {{"instruction", "x"}, {"device", "sim-1"}});
    ASSERT_TRUE(named);
    EXPECT_EQ(named->status, 409);

    auto abort = rig.client->Post("/api/runs/" + id + "/abort", "", "application/json");
    ASSERT_TRUE(abort);
    EXPECT_EQ(abort->status, 202);
    rig.release_gate();
    const auto frames = read_events(rig.service->port(), id);
    ASSERT_FALSE(frames.empty());
    EXPECT_EQ(frames.back().data["status"], "aborted");

    rig.gated = false;
    const auto next = rig.start_run();
    EXPECT_EQ(read_events(rig.service->port(), next).back().data["status"], "success");
}

TEST(Service, LiveStreamMatchesReplay) {
    ServiceRig rig;
    rig.gated = true;
    const auto id = rig.start_run();
    auto live = std::async(std::launch::async, [&] { return read_events(rig.service->port(), id); });
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
    rig.release_gate();
    const auto during = live.get();
    const auto after = read_events(rig.service->port(), id);
    EXPECT_EQ(seqs(during), seqs(after));
    ASSERT_EQ(during.size(), after.size());
    for (std::size_t i = 0; i < during.size(); ++i) EXPECT_EQ(during[i].data, after[i].data);
}

TEST(Service, KnowledgeEndpoints) {
    auto store = std::make_shared<KnowledgeStore>();
    ServiceRig rig(1, store);
    auto added = rig.post("/api/knowledge", {{"app", "Files"}, {"text", "Starred files are listed first."}, {"tags", {"star"}}});
    ASSERT_TRUE(added);
    ASSERT_EQ(added->status, 201) << added->body;
    const auto item = json::parse(added->body);
    EXPECT_EQ(item["app"], "Files");
    EXPECT_EQ(item["tags"], json::array({"star"}));
    rig.post("/api/knowledge", {{"app", "Clock"}, {"text", "Alarms repeat weekly."}});
    EXPECT_EQ(store->size(), 2u);

    EXPECT_EQ(rig.post("/api/knowledge", {{"app", "Files"}})->status, 400);
    EXPECT_EQ(rig.client->Post("/api/knowledge", "nope", "application/json")->status, 400);

    EXPECT_EQ(json::parse(rig.client->Get("/api/knowledge")->body).size(), 2u);
    const auto ranked = json::parse(rig.client->Get("/api/knowledge?q=star%20a%20file%20in%20Files&limit=5")->body);
    ASSERT_EQ(ranked.size(), 1u);
    EXPECT_EQ(ranked[0]["id"], item["id"]);
    EXPECT_EQ(rig.client->Get("/api/knowledge?q=x&limit=abc")->status, 400);

    // Knowledge reaches runs started over HTTP.
    const auto id = rig.start_run();
    const auto frames = read_events(rig.service->port(), id);
    EXPECT_EQ(frames.front().data["knowledge_ids"], json::array({item["id"]}));
}

TEST(Service, Exploration) {
    ServiceRig rig;
    EXPECT_EQ(rig.post("/api/explore", {{"episodes", 1}})->status, 400);
    EXPECT_EQ(rig.post("/api/explore", {{"apps", json::array()}})->status, 400);
    auto res = rig.post("/api/explore", {{"apps", {"Files"}}, {"episodes", 1}, {"max_steps", 3}});
    ASSERT_TRUE(res);
    ASSERT_EQ(res->status, 202) << res->body;
    const auto id = json::parse(res->body)["exploration_id"].get<std::string>();
    EXPECT_EQ(id, "explore-1");
    json state;
    for (int i = 0; i < 200; ++i) {
        state = json::parse(rig.client->Get("/api/explore/" + id)->body);
        if (state["status"] != "running") break;
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
    EXPECT_EQ(state["status"], "done") << state.dump();
    EXPECT_EQ(state["report"]["episodes"].size(), 1u);
    EXPECT_EQ(state["report"]["apps"]["Files"]["episodes"], 1);
}

TEST(Service, StopEndsOpenStreams) {
    ServiceRig rig;
    rig.gated = true;
    const auto id = rig.start_run();
    auto live = std::async(std::launch::async, [&] { return read_events(rig.service->port(), id); });
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
    rig.release_gate();
    rig.service->stop();
    EXPECT_EQ(live.wait_for(std::chrono::seconds(10)), std::future_status::ready);
}

TEST(ServiceHelpers, ParseBind) {
    EXPECT_EQ(parse_bind("0.0.0.0:8080"), (std::pair<std::string, int>{"0.0.0.0", 8080}));
    EXPECT_THROW(parse_bind("localhost"), Error);
    EXPECT_THROW(parse_bind("h:99999"), Error);
    EXPECT_THROW(parse_bind("h:abc"), Error);
}

TEST(ServiceHelpers, RunOverrides) {
    RunConfig base;
    const auto c = apply_run_overrides(base, {{"theta", "-inf"}, {"max_steps", 7}, {"global_reflector", false},
                                              {"trajectory_window", 4}});
    EXPECT_TRUE(std::isinf(c.gate.theta));
    EXPECT_EQ(c.max_steps, 7);
    EXPECT_FALSE(c.enable_global_reflector);
    EXPECT_EQ(c.gate.trajectory_window, 4);
    EXPECT_EQ(apply_run_overrides(base, json()).max_steps, base.max_steps);
    EXPECT_DOUBLE_EQ(apply_run_overrides(base, {{"theta", -0.01}}).gate.theta, -0.01);
    EXPECT_THROW(apply_run_overrides(base, {{"theta", "low"}}), Error);
    EXPECT_THROW(apply_run_overrides(base, {{"max_steps", "ten"}}), Error);
    EXPECT_THROW(apply_run_overrides(base, json::array()), Error);
}
