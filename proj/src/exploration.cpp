#include <mobileuse/error.hpp>
#include <mobileuse/exploration.hpp>

#include <chrono>

namespace mobileuse {

void ExplorationConfig::validate() const {
    if (apps.empty()) throw Error(Errc::invalid_argument, "exploration needs at least one app");
    if (episodes_per_app < 1 || max_steps_per_episode < 1 || summary_stride < 1 || no_effect_limit < 1) {
        throw Error(Errc::invalid_argument, "exploration counts must be >= 1");
    }
}

std::string_view to_string(EpisodeEnd end) noexcept {
    switch (end) {
        case EpisodeEnd::terminate: return "terminate";
        case EpisodeEnd::step_cap: return "step_cap";
        case EpisodeEnd::no_effect: return "no_effect";
        case EpisodeEnd::aborted: return "aborted";
    }
    return "aborted";
}

std::string exploration_goal(const std::string& app) {
    return "Explore the " + app + " app. Visit its screens, try its controls and find out what it can do.";
}

namespace {

std::int64_t wall_ms() {
    using namespace std::chrono;
    return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

struct EpisodeEmitter {
    std::string id;
    std::vector<EventSink*> sinks;
    std::int64_t seq = 0;
    int shots = 0;

    void emit(RunEventBody body) {
        RunEvent e{id, seq++, wall_ms(), std::move(body)};
        for (auto* s : sinks) s->on_event(e);
    }
    int shot(const Screenshot& image) {
        const int n = shots++;
        for (auto* s : sinks) s->on_screenshot(n, image);
        return n;
    }
};

}  // namespace

ExplorationReport run_exploration(const ExplorationConfig& config, Device& device, ModelGateway& gateway,
                                  KnowledgeStore& store, EpisodeHook before_episode, std::vector<EventSink*> sinks) {
    config.validate();
    auto templates = config.templates_dir.empty()
                         ? std::make_shared<const TemplateCatalog>()
                         : std::make_shared<const TemplateCatalog>(TemplateCatalog::from_directory(config.templates_dir));
    ExplorationReport report;

    for (const auto& app : config.apps) {
        std::vector<KnowledgeItem> gathered;
        for (int e = 1; e <= config.episodes_per_app; ++e) {
            EpisodeReport ep;
            ep.id = app + "-" + std::to_string(e);
            ep.app = app;

            std::unique_ptr<TraceWriter> trace;
            EpisodeEmitter out{ep.id, sinks};
            if (!config.trace_dir.empty()) {
                trace = std::make_unique<TraceWriter>(config.trace_dir, "explore-" + ep.id);
                out.sinks.push_back(trace.get());
            }
            std::optional<int> current;
            Agents agents(gateway, templates, config.limits,
                          [&](const std::string& text) { out.emit(ev::Warning{current, text}); });

            std::vector<StepRecord> steps;
            std::size_t segment_start = 0;
            std::string guidance;
            int no_effect_streak = 0;

            auto summarize = [&] {
                const std::size_t n = steps.size() - segment_start;
                if (n < 2) return;
                std::span<const StepRecord> segment(steps.data() + segment_start, n);
                const KnowledgeSource source{ep.id, steps[segment_start].index, steps.back().index};
                segment_start = steps.size();
                ++ep.summaries;
                for (auto& item : agents.run_summary_agent(app, segment, source)) {
                    const auto before = store.size();
                    const auto id = store.add(item);
                    if (store.size() > before) {
                        ++ep.items_added;
                        if (auto stored = store.get(id)) gathered.push_back(*stored);
                    }
                }
            };

            try {
                if (before_episode) before_episode(app, e);
                const auto info = device.info();
                out.emit(ev::RunStarted{exploration_goal(app), app, info.width, info.height, info.device_id, {},
                                        {{"mode", "explore"}, {"episode", ep.id}}});
                const auto opened = device.execute(Action::open(app));
                if (opened.outcome == ExecutionOutcome::rejected) {
                    throw Error(Errc::unknown_app, "cannot open " + app + ": " + opened.detail);
                }

                for (int t = 0; t < config.max_steps_per_episode; ++t) {
                    current = t;
                    StepRecord step;
                    step.index = t;
                    step.screenshot_before = device.capture().with_step_index(t);
                    out.emit(ev::StepStarted{t, out.shot(step.screenshot_before)});

                    OperatorInput input;
                    input.persona = AgentRole::explorer;
                    input.instruction = exploration_goal(app);
                    input.guidance = guidance;
                    input.screenshot = step.screenshot_before;
                    input.history = steps;
                    auto op = agents.run_operator(input);
                    step.action_output = op.output;
                    step.confidence = op.confidence;
                    out.emit(ev::OperatorOutput{t, op.output, op.confidence, op.attempts});

                    if (op.output.action.type == ActionType::terminate) {
                        ep.end = EpisodeEnd::terminate;
                        break;
                    }

                    ExecutionReport result;
                    try {
                        result = device.execute(op.output.action);
                    } catch (const Error& err) {
                        if (err.code() != Errc::unknown_app) throw;
                        result = {ExecutionOutcome::rejected, err.what()};
                    }
                    step.execution = result;
                    step.screenshot_after = device.capture().with_step_index(t + 1);
                    out.emit(ev::ActionExecuted{t, result, out.shot(*step.screenshot_after),
                                                diff_regions(step.screenshot_before, *step.screenshot_after)});
                    steps.push_back(std::move(step));
                    ++ep.steps;

                    if (steps.size() - segment_start == static_cast<std::size_t>(config.summary_stride)) summarize();
                    guidance = agents.run_critic_agent(app, *steps.back().screenshot_after, gathered);

                    no_effect_streak = result.outcome == ExecutionOutcome::no_effect ? no_effect_streak + 1 : 0;
                    if (no_effect_streak >= config.no_effect_limit) {
                        ep.end = EpisodeEnd::no_effect;
                        break;
                    }
                }
                current.reset();
                summarize();
                out.emit(ev::RunFinished{RunStatus::success, ep.steps, std::nullopt, std::nullopt});
            } catch (const std::exception& err) {
                ep.end = EpisodeEnd::aborted;
                ep.error = err.what();
                out.emit(ev::Warning{current, std::string("episode aborted: ") + err.what()});
                out.emit(ev::RunFinished{RunStatus::failure, ep.steps, std::nullopt, std::nullopt});
            }

            auto& totals = report.per_app[app];
            ++totals.episodes;
            totals.steps += ep.steps;
            totals.items += ep.items_added;
            report.episodes.push_back(std::move(ep));
        }
    }
    return report;
}

}  // namespace mobileuse
