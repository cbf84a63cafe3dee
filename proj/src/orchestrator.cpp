#include <mobileuse/error.hpp>
#include <mobileuse/image_codec.hpp>
#include <mobileuse/orchestrator.hpp>

#include <chrono>
#include <cmath>

namespace mobileuse {

void RunConfig::validate() const {
    if (max_steps < 1) throw Error(Errc::invalid_argument, "max_steps must be >= 1");
    if (global_max_rejections < 0) throw Error(Errc::invalid_argument, "global_max_rejections must be >= 0");
    if (limits.max_history_actions < 0) throw Error(Errc::invalid_argument, "max_history_actions must be >= 0");
    if (limits.max_images_per_call < 1 || limits.global_max_images < 1) {
        throw Error(Errc::invalid_argument, "image limits must be >= 1");
    }
    if (diff.block_size < 1 || diff.per_block_threshold < 0) throw Error(Errc::invalid_argument, "bad diff params");
    gate.validate();
}

nlohmann::json RunConfig::to_json() const {
    return {
        {"max_steps", max_steps},
        {"theta", std::isinf(gate.theta) ? nlohmann::json("-inf") : nlohmann::json(gate.theta)},
        {"trajectory_window", gate.trajectory_window},
        {"repeat_action_count", gate.repeat_action_count},
        {"repeat_screen_count", gate.repeat_screen_count},
        {"screen_same_threshold", gate.screen_same_threshold},
        {"accumulated_error_count", gate.accumulated_error_count},
        {"action_reflector", enable_action_reflector},
        {"trajectory_reflector", enable_trajectory_reflector},
        {"global_reflector", enable_global_reflector},
        {"knowledge_limit", knowledge_limit},
        {"global_max_rejections", global_max_rejections},
        {"max_history_actions", limits.max_history_actions},
        {"max_images_per_call", limits.max_images_per_call},
    };
}

TraceWriter::TraceWriter(const std::string& dir, const std::string& run_id)
    : run_dir_(std::filesystem::path(dir) / run_id) {
    std::error_code ec;
    std::filesystem::create_directories(run_dir_ / "shots", ec);
    if (ec) throw Error(Errc::storage_failure, "cannot create " + run_dir_.string() + ": " + ec.message());
    out_.open(events_path(), std::ios::binary | std::ios::trunc);
    if (!out_) throw Error(Errc::storage_failure, "cannot open " + events_path().string());
}

void TraceWriter::on_screenshot(int n, const Screenshot& image) {
    write_png_file((run_dir_ / shot_path(n)).string(), image);
}

void TraceWriter::on_event(const RunEvent& event) {
    out_ << to_json(event).dump() << '\n';
    out_.flush();
}

std::shared_ptr<RunControl> RunRegistry::open(const std::string& run_id) {
    std::lock_guard lock(mutex_);
    auto control = std::make_shared<RunControl>();
    runs_[run_id] = control;
    return control;
}

void RunRegistry::close(const std::string& run_id) {
    std::lock_guard lock(mutex_);
    runs_.erase(run_id);
}

void RunRegistry::abort(const std::string& run_id) {
    std::lock_guard lock(mutex_);
    const auto it = runs_.find(run_id);
    if (it == runs_.end()) throw Error(Errc::unknown_run, "no active run " + run_id);
    it->second->request_abort();
}

bool RunRegistry::active(const std::string& run_id) const {
    std::lock_guard lock(mutex_);
    return runs_.count(run_id) != 0;
}

namespace {

std::int64_t wall_ms() {
    using namespace std::chrono;
    return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

class Emitter {
public:
    Emitter(std::string run_id, std::vector<EventSink*> sinks, std::function<std::int64_t()> clock)
        : run_id_(std::move(run_id)), sinks_(std::move(sinks)), clock_(clock ? std::move(clock) : wall_ms) {}

    void emit(RunEventBody body) {
        RunEvent e{run_id_, seq_++, clock_(), std::move(body)};
        for (auto* s : sinks_) s->on_event(e);
    }

    int shot(const Screenshot& image) {
        const int n = shots_++;
        for (auto* s : sinks_) s->on_screenshot(n, image);
        return n;
    }

private:
    std::string run_id_;
    std::vector<EventSink*> sinks_;
    std::function<std::int64_t()> clock_;
    std::int64_t seq_ = 0;
    int shots_ = 0;
};

}  // namespace

RunResult run_task(const Instruction& instruction, const RunConfig& config, Device& device, ModelGateway& gateway,
                   const KnowledgeStore* store, RunContext context) {
    config.validate();

    std::unique_ptr<TraceWriter> trace;
    if (!config.trace_dir.empty()) {
        trace = std::make_unique<TraceWriter>(config.trace_dir, context.run_id);
        context.sinks.push_back(trace.get());
    }
    Emitter out(context.run_id, context.sinks, context.clock);

    auto templates = context.templates;
    if (!templates) {
        templates = config.templates_dir.empty()
                        ? std::make_shared<const TemplateCatalog>()
                        : std::make_shared<const TemplateCatalog>(TemplateCatalog::from_directory(config.templates_dir));
    }

    std::optional<int> current_step;
    Agents agents(gateway, templates, config.limits,
                  [&](const std::string& text) { out.emit(ev::Warning{current_step, text}); });

    std::vector<KnowledgeItem> knowledge;
    if (store) knowledge = store->retrieve(instruction, config.knowledge_limit);

    const auto info = device.info();
    {
        ev::RunStarted started{instruction.text, instruction.app_hint, info.width, info.height, info.device_id, {},
                               config.to_json()};
        for (const auto& k : knowledge) started.knowledge_ids.push_back(k.id);
        out.emit(std::move(started));
    }

    RunResult result;
    Progress progress;
    int rejections = 0;
    const std::string& task = instruction.text;

    auto aborted = [&] { return context.control && context.control->abort_requested(); };
    auto finish = [&](RunStatus status) {
        result.status = status;
        result.answer = progress.answer;
        out.emit(ev::RunFinished{status, static_cast<int>(result.steps.size()), result.answer,
                                 result.failure_label});
        return result;
    };

    try {
        for (int t = 0; t < config.max_steps; ++t) {
            if (aborted()) return finish(RunStatus::aborted);
            current_step = t;

            StepRecord step;
            step.index = t;
            step.screenshot_before = device.capture().with_step_index(t);
            out.emit(ev::StepStarted{t, out.shot(step.screenshot_before)});
            if (aborted()) return finish(RunStatus::aborted);

            OperatorInput input;
            input.instruction = task;
            input.knowledge = knowledge;
            input.screenshot = step.screenshot_before;
            input.history = result.steps;
            if (!result.steps.empty()) input.feedback = FeedbackBundle::from_step(result.steps.back());
            input.progress = progress;
            auto op = agents.run_operator(input);
            step.action_output = op.output;
            step.confidence = op.confidence;
            out.emit(ev::OperatorOutput{t, op.output, op.confidence, op.attempts});

            const Action& action = step.action_output.action;
            const bool is_terminate = action.type == ActionType::terminate;
            const bool reflect_action = !is_terminate && config.enable_action_reflector &&
                                        should_reflect_action(step.confidence, config.gate);
            out.emit(ev::ConfidenceGated{
                t, step.confidence ? std::optional<double>(step.confidence->value) : std::nullopt,
                config.gate.theta, reflect_action});
            if (aborted()) return finish(RunStatus::aborted);

            if (is_terminate) {
                const auto status = action.status.value_or(TerminateStatus::failure);
                Verdict verdict = Verdict::ok;
                bool accepted = true;
                if (config.enable_global_reflector) {
                    const int j = global_window_start(t);
                    std::vector<Screenshot> screens;
                    for (int i = j; i < t; ++i) screens.push_back(result.steps[i].screenshot_before);
                    screens.push_back(step.screenshot_before);
                    std::vector<StepRecord> history = result.steps;
                    history.push_back(step);
                    std::optional<ReflectionFeedback> rg;
                    try {
                        rg = agents.run_global_reflector(task, history, screens, t);
                    } catch (const Error& e) {
                        out.emit(ev::Warning{t, std::string("global reflector failed, accepting terminate: ") +
                                                    e.what()});
                    }
                    if (rg) {
                        step.set_reflection(*rg);
                        out.emit(ev::Reflection{t, *rg, {}});
                        verdict = rg->verdict;
                    }
                    if (verdict == Verdict::incomplete) {
                        if (rejections < config.global_max_rejections) {
                            ++rejections;
                            accepted = false;
                        } else {
                            out.emit(ev::Warning{t, "terminate accepted after " + std::to_string(rejections) +
                                                        " incomplete verdicts"});
                        }
                    }
                }
                out.emit(ev::TerminateIntercepted{t, status, verdict, accepted, config.enable_global_reflector,
                                                  rejections});
                if (accepted) {
                    step.progress_after = progress;
                    result.steps.push_back(std::move(step));
                    return finish(status == TerminateStatus::success ? RunStatus::success : RunStatus::failure);
                }
            } else {
                ExecutionReport report;
                try {
                    report = device.execute(action);
                } catch (const Error& e) {
                    if (e.code() != Errc::unknown_app) throw;
                    report = {ExecutionOutcome::rejected, e.what()};
                }
                step.execution = report;
                step.screenshot_after = device.capture().with_step_index(t + 1);
                const auto boxes = diff_regions(step.screenshot_before, *step.screenshot_after, config.diff);
                out.emit(ev::ActionExecuted{t, report, out.shot(*step.screenshot_after), boxes});

                if (reflect_action) {
                    if (aborted()) return finish(RunStatus::aborted);
                    const auto annotated = annotate(*step.screenshot_after, boxes);
                    auto ra = agents.run_action_reflector(task, step.screenshot_before, annotated, step.action_output, t);
                    step.set_reflection(ra);
                    out.emit(ev::Reflection{t, ra, {}});
                }

                if (config.enable_trajectory_reflector) {
                    const auto keep = static_cast<std::size_t>(config.gate.trajectory_window - 1);
                    const auto first = result.steps.size() > keep ? result.steps.size() - keep : 0;
                    std::vector<StepRecord> window(result.steps.begin() + static_cast<std::ptrdiff_t>(first),
                                                   result.steps.end());
                    window.push_back(step);
                    const auto decision = should_reflect_trajectory(window, config.gate);
                    if (decision.reflect) {
                        if (aborted()) return finish(RunStatus::aborted);
                        auto rt = agents.run_trajectory_reflector(task, progress, window, t);
                        step.set_reflection(rt);
                        out.emit(ev::Reflection{t, rt, {decision.fired.begin(), decision.fired.end()}});
                    }
                }
            }

            if (aborted()) return finish(RunStatus::aborted);
            progress = agents.run_progressor(task, result.steps, progress, step.action_output,
                                             FeedbackBundle::from_step(step));
            step.progress_after = progress;
            out.emit(ev::ProgressUpdated{t, progress});
            result.steps.push_back(std::move(step));
        }
        current_step.reset();
        return finish(RunStatus::max_steps_exceeded);
    } catch (const std::exception& e) {
        out.emit(ev::Warning{current_step, std::string("run failed: ") + e.what()});
        return finish(RunStatus::failure);
    }
}

}  // namespace mobileuse
