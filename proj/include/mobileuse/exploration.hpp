#pragma once

// Instruction-free app exploration that distills reusable knowledge.

#include <mobileuse/agents.hpp>
#include <mobileuse/device.hpp>
#include <mobileuse/knowledge_store.hpp>
#include <mobileuse/orchestrator.hpp>

#include <map>
#include <string>
#include <vector>

namespace mobileuse {

struct ExplorationConfig {
    std::vector<std::string> apps;
    int episodes_per_app = 3;
    int max_steps_per_episode = 15;
    int summary_stride = 5;
    int no_effect_limit = 3;  // consecutive no_effect executions that end an episode
    std::string trace_dir;    // empty: no episode traces
    std::string templates_dir;
    AgentLimits limits;

    void validate() const;
};

enum class EpisodeEnd { terminate, step_cap, no_effect, aborted };
std::string_view to_string(EpisodeEnd end) noexcept;

struct EpisodeReport {
    std::string id;  // "<app>-<n>", 1-based
    std::string app;
    int steps = 0;
    int summaries = 0;
    int items_added = 0;
    EpisodeEnd end = EpisodeEnd::step_cap;
    std::string error;  // set when aborted
};

struct AppReport {
    int episodes = 0;
    int steps = 0;
    int items = 0;
};

struct ExplorationReport {
    std::vector<EpisodeReport> episodes;
    std::map<std::string, AppReport> per_app;
};

// Goal text given to the explorer persona for one app.
std::string exploration_goal(const std::string& app);

// Called before each episode so the caller can reset the device.
using EpisodeHook = std::function<void(const std::string& app, int episode)>;

ExplorationReport run_exploration(const ExplorationConfig& config, Device& device, ModelGateway& gateway,
                                  KnowledgeStore& store, EpisodeHook before_episode = {},
                                  std::vector<EventSink*> sinks = {});

}  // namespace mobileuse
