#pragma once

// Per-step loop: Operator -> execute -> action/trajectory reflection ->
// Progressor, with the Global Reflector gating every terminate.

#include <mobileuse/agents.hpp>
#include <mobileuse/device.hpp>
#include <mobileuse/events.hpp>
#include <mobileuse/gateway.hpp>
#include <mobileuse/knowledge_store.hpp>
#include <mobileuse/perception.hpp>
#include <mobileuse/reflection_gate.hpp>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace mobileuse {

struct RunConfig {
    int max_steps = 30;
    GateConfig gate;
    bool enable_action_reflector = true;
    bool enable_trajectory_reflector = true;
    bool enable_global_reflector = true;
    std::size_t knowledge_limit = 5;
    int global_max_rejections = 3;
    std::string templates_dir;  // empty: built-in templates
    std::string trace_dir;      // empty: no trace on disk
    AgentLimits limits;
    DiffParams diff;

    // Throws Error{invalid_argument}.
    void validate() const;
    nlohmann::json to_json() const;
};

class EventSink {
public:
    virtual ~EventSink() = default;
    // Called before any event that references shot `n`.
    virtual void on_screenshot(int /*n*/, const Screenshot& /*image*/) {}
    virtual void on_event(const RunEvent& event) = 0;
};

class CallbackSink final : public EventSink {
public:
    explicit CallbackSink(std::function<void(const RunEvent&)> fn) : fn_(std::move(fn)) {}
    void on_event(const RunEvent& event) override { fn_(event); }

private:
    std::function<void(const RunEvent&)> fn_;
};

// Writes <dir>/<run_id>/events.jsonl and shots/NNNN.png.
class TraceWriter final : public EventSink {
public:
    TraceWriter(const std::string& dir, const std::string& run_id);

    void on_screenshot(int n, const Screenshot& image) override;
    void on_event(const RunEvent& event) override;

    const std::filesystem::path& run_dir() const noexcept { return run_dir_; }
    std::filesystem::path events_path() const { return run_dir_ / "events.jsonl"; }

private:
    std::filesystem::path run_dir_;
    std::ofstream out_;
};

// Abort flag shared between a run and whoever controls it.
class RunControl {
public:
    void request_abort() noexcept { abort_.store(true); }
    bool abort_requested() const noexcept { return abort_.load(); }

private:
    std::atomic<bool> abort_{false};
};

class RunRegistry {
public:
    std::shared_ptr<RunControl> open(const std::string& run_id);
    void close(const std::string& run_id);
    // Throws Error{unknown_run} for ids never opened or already closed.
    void abort(const std::string& run_id);
    bool active(const std::string& run_id) const;

private:
    mutable std::mutex mutex_;
    std::map<std::string, std::shared_ptr<RunControl>> runs_;
};

struct RunContext {
    std::string run_id = "run";
    std::vector<EventSink*> sinks;
    std::shared_ptr<RunControl> control;
    std::function<std::int64_t()> clock;  // event timestamps; defaults to wall clock
    std::shared_ptr<const TemplateCatalog> templates;
};

// `store` may be null (no knowledge).
RunResult run_task(const Instruction& instruction, const RunConfig& config, Device& device, ModelGateway& gateway,
                   const KnowledgeStore* store, RunContext context = {});

}  // namespace mobileuse
