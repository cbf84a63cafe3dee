#pragma once

// HTTP service for the console and for automation.
//
//   POST /api/runs                      {"instruction", "app_hint"?, "device"?, "config"?}  -> 201
//   GET  /api/runs                      newest first
//   GET  /api/runs/{id}                 one handle
//   GET  /api/runs/{id}/events          server-sent events; resume with Last-Event-ID
//   POST /api/runs/{id}/abort           -> 202
//   GET  /api/runs/{id}/shots/{n}.png
//   GET  /api/knowledge                 ?q=<instruction>&limit=<n> ranks, otherwise lists all
//   POST /api/knowledge                 {"app", "text", "tags"?}  -> 201
//   POST /api/explore                   {"apps", "episodes"?, "max_steps"?, "summary_stride"?}  -> 202
//   GET  /api/explore/{id}
//
// Anything else under / is served from the console directory when one is set.

#include <mobileuse/device.hpp>
#include <mobileuse/exploration.hpp>
#include <mobileuse/gateway.hpp>
#include <mobileuse/knowledge_store.hpp>
#include <mobileuse/orchestrator.hpp>

#include <nlohmann/json.hpp>

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace mobileuse {

struct ServiceDevice {
    std::string id;
    std::shared_ptr<Device> device;
    std::function<void()> reset;  // called before each run; may be empty
};

// Builds the model backend for one run or exploration.
using GatewayFactory = std::function<std::shared_ptr<ModelGateway>()>;

struct ServiceOptions {
    std::string host = "127.0.0.1";
    int port = 7860;  // 0 picks a free port
    std::string console_dir;
    RunConfig run_defaults;
    ExplorationConfig explore_defaults;
};

// Parses "host:port". Throws Error{invalid_argument}.
std::pair<std::string, int> parse_bind(const std::string& bind);

// Applies a JSON config override object ({"theta": -0.01, "max_steps": 10,
// "action_reflector": false, ...}) to a copy of `base`. Throws
// Error{invalid_argument} on unknown keys or bad values.
RunConfig apply_run_overrides(const RunConfig& base, const nlohmann::json& overrides);

class Service {
public:
    Service(ServiceOptions options, std::vector<ServiceDevice> devices, GatewayFactory gateways,
            std::shared_ptr<KnowledgeStore> store);
    ~Service();

    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    // Binds and serves on a background thread. Throws Error{transport_failure}
    // if the address cannot be bound.
    void start();
    // Aborts active runs, waits for them, and stops listening.
    void stop();
    // Blocks until stop() is called from another thread.
    void wait();

    int port() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace mobileuse
