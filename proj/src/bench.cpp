#include <mobileuse/bench.hpp>
#include <mobileuse/error.hpp>
#include <mobileuse/sim_device.hpp>

#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

namespace mobileuse {

namespace {

// The "Feedback on the previous step:" section of an operator prompt.
std::string feedback_section(const std::string& prompt) {
    static const std::string marker = "Feedback on the previous step:\n";
    const auto at = prompt.find(marker);
    if (at == std::string::npos) return {};
    const auto begin = at + marker.size();
    const auto end = prompt.find("\n\n", begin);
    return prompt.substr(begin, end == std::string::npos ? std::string::npos : end - begin);
}

Completion text_reply(std::string text) {
    Completion c;
    c.text = std::move(text);
    c.model_id = "policy";
    return c;
}

std::vector<Screenshot> request_images(const ChatRequest& request) {
    std::vector<Screenshot> out;
    for (const auto& m : request.messages) {
        for (const auto& p : m.parts) {
            if (const auto* img = std::get_if<ImagePart>(&p)) out.push_back(img->image);
        }
    }
    return out;
}

}  // namespace

PolicyGateway::PolicyGateway(const SimTask& task) {
    const auto& p = task.policy;
    if (!p.is_object() || !p.contains("steps")) throw Error(Errc::schema_error, "task " + task.id + " has no policy");
    for (const auto& s : p.at("steps")) {
        plan_.push_back({parse_action(s.at("action").dump()), s.value("description", "")});
        if (plan_.back().description.empty()) plan_.back().description = describe_action(plan_.back().action);
    }
    if (plan_.empty() || plan_.back().action.type != ActionType::terminate) {
        throw Error(Errc::schema_error, "task " + task.id + ": policy must end with terminate");
    }
    for (const auto& f : p.value("faults", nlohmann::json::array())) {
        const auto kind = f.at("kind").get<std::string>();
        const auto at = f.at("at").get<std::size_t>();
        if (at >= plan_.size() - 1) throw Error(Errc::schema_error, "task " + task.id + ": fault index out of range");
        Fault fault = Fault::none;
        if (kind == "skip_clear") {
            if (plan_[at].action.type != ActionType::clear_text || at + 1 >= plan_.size() ||
                plan_[at + 1].action.type != ActionType::type) {
                throw Error(Errc::schema_error, "task " + task.id + ": skip_clear needs clear_text then type");
            }
            fault = Fault::skip_clear;
        } else if (kind == "stuck") {
            const auto& c = f.at("coordinate");
            stuck_point_ = {c.at(0).get<int>(), c.at(1).get<int>()};
            fault = Fault::stuck;
        } else if (kind == "premature_terminate") {
            fault = Fault::premature_terminate;
        } else {
            throw Error(Errc::schema_error, "task " + task.id + ": unknown fault kind " + kind);
        }
        faults_.emplace_back(at, fault);
    }
    fired_.assign(faults_.size(), false);
}

PolicyGateway::Fault PolicyGateway::fault_at(std::size_t index) const {
    for (std::size_t i = 0; i < faults_.size(); ++i) {
        if (faults_[i].first == index && !fired_[i]) return faults_[i].second;
    }
    return Fault::none;
}

Completion PolicyGateway::emit(const Action& action, const std::string& thought, const std::string& description,
                               double logprob) {
    const std::string json = render_action(action);
    const std::string head = "Thought: " + thought + "\nAction: ";
    Completion c;
    c.model_id = "policy";
    c.text = head + json + "\nDescription: " + description;
    const auto span = *find_action_type_span(json);
    const std::string before = c.text.substr(0, head.size() + span.begin);
    const std::string value = json.substr(span.begin, span.end - span.begin);
    const std::string after = c.text.substr(head.size() + span.end);
    c.tokens = make_tokens(c.text, {{before, -0.02}, {value, logprob}, {after, -0.01}});
    return c;
}

Completion PolicyGateway::operator_reply(const std::string& prompt) {
    const auto feedback = feedback_section(prompt);
    const bool action_error = feedback.find("[action] ERROR") != std::string::npos;
    const bool trajectory_error = feedback.find("[trajectory] ERROR") != std::string::npos;

    if (last_ == Emitted::skip_clear && action_error) cursor_ = skip_index_;
    if (stuck_active_) {
        if (!trajectory_error) {
            last_ = Emitted::stuck;
            return emit(Action::click(stuck_point_.x, stuck_point_.y), "The control should be here.",
                        "Tap the field", kPolicyConfidentLogprob);
        }
        stuck_active_ = false;
    }

    if (cursor_ >= plan_.size()) cursor_ = plan_.size() - 1;
    for (std::size_t i = 0; i < faults_.size(); ++i) {
        if (faults_[i].first != cursor_ || fired_[i]) continue;
        fired_[i] = true;
        switch (faults_[i].second) {
            case Fault::skip_clear: {
                skip_index_ = cursor_;
                const auto& typed = plan_[cursor_ + 1];
                cursor_ += 2;
                last_ = Emitted::skip_clear;
                return emit(typed.action, "The field is focused, so I can type now.", typed.description,
                            kPolicyFaultLogprob);
            }
            case Fault::stuck:
                stuck_active_ = true;
                last_ = Emitted::stuck;
                return emit(Action::click(stuck_point_.x, stuck_point_.y), "The control should be here.",
                            "Tap the field", kPolicyConfidentLogprob);
            case Fault::premature_terminate:
                last_ = Emitted::premature;
                return emit(Action::terminate(TerminateStatus::success), "Everything looks done.",
                            "Finish the task", kPolicyConfidentLogprob);
            case Fault::none: break;
        }
    }

    const auto& step = plan_[cursor_];
    const double lp = step.action.type == ActionType::open ? kPolicyOpenLogprob : kPolicyConfidentLogprob;
    if (cursor_ + 1 < plan_.size()) ++cursor_;
    last_ = Emitted::normal;
    return emit(step.action, "Next step of the plan.", step.description, lp);
}

Completion PolicyGateway::action_reflection(const ChatRequest& request) const {
    const auto images = request_images(request);
    if (images.size() == 2 && changed_fraction(images[0], images[1]) == 0.0) {
        return text_reply("VERDICT: ERROR\nThe screen did not change after the action.\n"
                          "Suggestion: Check that the target is visible before tapping it.");
    }
    if (last_ == Emitted::skip_clear) {
        return text_reply("VERDICT: ERROR\nThe input box still shows the previous text and the new text was "
                          "appended to it.\nSuggestion: Clear the field, then type the text again.");
    }
    return text_reply("VERDICT: OK\nThe action had the expected effect.");
}

Completion PolicyGateway::trajectory_reflection() const {
    if (stuck_active_) {
        return text_reply("VERDICT: ERROR\nThe same tap has been repeated without any change on screen.\n"
                          "Suggestion: swipe up to reveal the field.");
    }
    return text_reply("VERDICT: OK");
}

Completion PolicyGateway::global_reflection() const {
    if (last_ == Emitted::premature && cursor_ + 1 < plan_.size()) {
        return text_reply("VERDICT: INCOMPLETE\nNot finished yet: " + plan_[cursor_].description +
                          " has not been done.\nSuggestion: " + plan_[cursor_].description + ".");
    }
    return text_reply("VERDICT: OK\nAll requirements are met.");
}

Completion PolicyGateway::complete(const ChatRequest& request) {
    const auto& role = request.agent_role;
    if (role == "operator" || role == "explorer") return operator_reply(request.last_user_text());
    if (role == "action_reflector") return action_reflection(request);
    if (role == "trajectory_reflector") return trajectory_reflection();
    if (role == "global_reflector") return global_reflection();
    if (role == "progressor") {
        ++progress_calls_;
        return text_reply("Progress: " + std::to_string(progress_calls_) + " steps done; next: " +
                          plan_[cursor_].description + ".");
    }
    return text_reply("NONE");
}

std::vector<BenchRow> ablation_rows(const RunConfig& base) {
    auto with = [&](bool a, bool t, bool g, double theta) {
        RunConfig c = base;
        c.enable_action_reflector = a;
        c.enable_trajectory_reflector = t;
        c.enable_global_reflector = g;
        c.gate.theta = theta;
        return c;
    };
    return {
        {"Base", with(false, false, false, 0.0)},
        {"+ActionReflector", with(true, false, false, 0.0)},
        {"+TrajectoryReflector", with(true, true, false, 0.0)},
        {"+GlobalReflector", with(true, true, true, 0.0)},
        {"+ReflectionOnDemand", with(true, true, true, base.gate.theta)},
    };
}

std::vector<BenchRow> theta_sweep_rows(const RunConfig& base, const std::vector<double>& thetas) {
    std::vector<BenchRow> rows;
    for (double theta : thetas) {
        RunConfig c = base;
        c.gate.theta = theta;
        std::ostringstream name;
        if (std::isinf(theta)) {
            name << "theta=-inf";
        } else {
            name << "theta=" << theta;
        }
        rows.push_back({name.str(), c});
    }
    return rows;
}

int RowResult::successes() const {
    int n = 0;
    for (const auto& t : tasks) n += t.success;
    return n;
}

int RowResult::successes(Difficulty d) const {
    int n = 0;
    for (const auto& t : tasks) n += t.success && t.difficulty == d;
    return n;
}

int RowResult::total(Difficulty d) const {
    int n = 0;
    for (const auto& t : tasks) n += t.difficulty == d;
    return n;
}

int RowResult::executed_steps() const {
    int n = 0;
    for (const auto& t : tasks) n += t.executed_steps;
    return n;
}

int RowResult::action_reflections() const {
    int n = 0;
    for (const auto& t : tasks) n += t.action_reflections;
    return n;
}

double RowResult::reflected_fraction() const {
    const int steps = executed_steps();
    return steps == 0 ? 0.0 : static_cast<double>(action_reflections()) / steps;
}

std::vector<RowResult> run_bench(const AppGraph& world, const std::vector<BenchRow>& rows,
                                 const std::string& trace_dir) {
    if (world.tasks.empty()) throw Error(Errc::invalid_argument, "bench suite has no tasks");
    auto graph = std::make_shared<const AppGraph>(world);
    std::vector<RowResult> results;
    for (const auto& row : rows) {
        RowResult rr{row.name, row.config, {}};
        for (const auto& task : world.tasks) {
            SimDevice device(graph);
            device.reset(task.initial_state);
            PolicyGateway policy(task);
            RunConfig config = row.config;
            if (!trace_dir.empty()) config.trace_dir = trace_dir;
            RunContext ctx;
            ctx.run_id = row.name + "-" + task.id;
            std::int64_t tick = 0;
            ctx.clock = [&tick] { return tick++; };
            auto result = run_task(Instruction::make(task.instruction), config, device, policy, nullptr, ctx);

            TaskOutcome o;
            o.task_id = task.id;
            o.difficulty = task.difficulty;
            o.status = result.status;
            o.success = result.status == RunStatus::success && check_success(task, device.state(), result);
            if (!o.success) o.failure_label = task.failure_label.value_or(FailureType::other);
            o.steps = static_cast<int>(result.steps.size());
            for (const auto& s : result.steps) {
                if (s.execution) ++o.executed_steps;
                o.action_reflections += s.reflection(ReflectionLevel::action) != nullptr;
                o.trajectory_reflections += s.reflection(ReflectionLevel::trajectory) != nullptr;
                o.global_reflections += s.reflection(ReflectionLevel::global) != nullptr;
            }
            rr.tasks.push_back(o);
        }
        results.push_back(std::move(rr));
    }
    return results;
}

std::string format_ablation_table(const std::vector<RowResult>& rows) {
    std::ostringstream out;
    out << "| Configuration | Easy | Medium | Hard | Total | Action reflections / steps |\n";
    out << "|---|---|---|---|---|---|\n";
    for (const auto& r : rows) {
        out << "| " << r.name;
        for (auto d : {Difficulty::easy, Difficulty::medium, Difficulty::hard}) {
            out << " | " << r.successes(d) << "/" << r.total(d);
        }
        out << " | " << r.successes() << "/" << r.tasks.size() << " | " << r.action_reflections() << "/"
            << r.executed_steps() << " (" << std::fixed << std::setprecision(1) << 100.0 * r.reflected_fraction()
            << "%) |\n";
        out.unsetf(std::ios::fixed);
    }
    return out.str();
}

std::string format_theta_sweep(const std::vector<RowResult>& rows) {
    std::ostringstream out;
    out << "| theta | Success | Action reflections | Executed steps |\n";
    out << "|---|---|---|---|\n";
    for (const auto& r : rows) {
        out << "| ";
        if (std::isinf(r.config.gate.theta)) {
            out << "-inf";
        } else {
            out << r.config.gate.theta;
        }
        out << " | " << r.successes() << "/" << r.tasks.size() << " | " << r.action_reflections() << " | "
            << r.executed_steps() << " |\n";
    }
    return out.str();
}

}  // namespace mobileuse
