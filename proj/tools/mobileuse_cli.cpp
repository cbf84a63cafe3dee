// mobileuse: run tasks, explore apps, benchmark the sim suite, replay traces
// and serve the HTTP API.
//
// Exit codes: 0 success, 1 task failure, 2 usage or config error,
// 3 environment error (device, model endpoint, storage, network).

#include <mobileuse/adb_device.hpp>
#include <mobileuse/bench.hpp>
#include <mobileuse/config.hpp>
#include <mobileuse/error.hpp>
#include <mobileuse/exploration.hpp>
#include <mobileuse/orchestrator.hpp>
#include <mobileuse/service.hpp>
#include <mobileuse/sim_device.hpp>

#include <CLI11.hpp>

#include <chrono>
#include <csignal>
#include <filesystem>
#include <iostream>
#include <optional>
#include <pthread.h>

using namespace mobileuse;
namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kTaskFailed = 1, kUsage = 2, kEnvironment = 3 };

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

int exit_code_for(Errc code) {
    switch (code) {
        case Errc::transport_failure:
        case Errc::provider_rejected:
        case Errc::logprobs_unavailable:
        case Errc::device_disconnected:
        case Errc::capture_decode_failure:
        case Errc::storage_failure:
        case Errc::device_busy:
        case Errc::no_device:
            return kEnvironment;
        default:
            return kUsage;
    }
}

struct Flags {
    std::string config_file;
    std::string device = "sim";
    std::string world;
    std::string trace_dir;
    std::string script;
    std::string knowledge;
    std::string template_dir;

    std::optional<std::string> theta;
    std::optional<int> trajectory_window;
    std::optional<int> repeat_action_count;
    std::optional<int> repeat_screen_count;
    std::optional<double> screen_same_threshold;
    std::optional<int> accumulated_error_count;
    std::optional<int> max_steps;
    std::optional<int> knowledge_limit;
    std::optional<int> global_max_rejections;
    std::optional<bool> action_reflector;
    std::optional<bool> trajectory_reflector;
    std::optional<bool> global_reflector;
    std::optional<int> max_history_actions;
    std::optional<int> max_images_per_call;
    std::optional<int> global_max_images;
    std::optional<int> diff_block_size;
    std::optional<double> diff_block_threshold;

    std::vector<std::string> apps;
    std::optional<int> episodes;
    std::optional<int> explore_max_steps;
    std::optional<int> summary_stride;
    std::optional<int> no_effect_limit;
};

void add_common_flags(CLI::App& app, Flags& f) {
    app.add_option("--config", f.config_file, "KEY=VALUE settings file")->group("Global");
    app.add_option("--device", f.device, "sim or adb:<serial>")->group("Global");
    app.add_option("--world", f.world, "App-graph world file for the sim device")->group("Global");
    app.add_option("--trace-dir", f.trace_dir, "Write traces under this directory")->group("Global");
    app.add_option("--script", f.script, "Scripted model replies (JSON) instead of a model endpoint")
        ->group("Global");
    app.add_option("--knowledge", f.knowledge, "Knowledge store (JSONL)")->group("Global");
    app.add_option("--template-dir", f.template_dir, "Prompt template overrides")->group("Global");

    const char* gate = "Gate";
    app.add_option("--theta", f.theta, "Reflect when confidence <= theta (<= 0, or -inf)")->group(gate);
    app.add_option("--trajectory-window", f.trajectory_window, "Steps inspected by trajectory triggers")
        ->group(gate);
    app.add_option("--repeat-action-count", f.repeat_action_count, "Identical actions that trigger")->group(gate);
    app.add_option("--repeat-screen-count", f.repeat_screen_count, "Unchanged screens that trigger")->group(gate);
    app.add_option("--screen-same-threshold", f.screen_same_threshold, "Changed fraction counted as same screen")
        ->group(gate);
    app.add_option("--accumulated-error-count", f.accumulated_error_count, "Action errors in the window that trigger")
        ->group(gate);

    const char* run = "Run";
    app.add_option("--max-steps", f.max_steps, "Step budget")->group(run);
    app.add_option("--knowledge-limit", f.knowledge_limit, "Knowledge items retrieved per task")->group(run);
    app.add_option("--global-max-rejections", f.global_max_rejections, "Terminate rejections before forced accept")
        ->group(run);
    app.add_flag("--action-reflector,!--no-action-reflector", f.action_reflector, "Toggle the action reflector")
        ->group(run);
    app.add_flag("--trajectory-reflector,!--no-trajectory-reflector", f.trajectory_reflector,
                 "Toggle the trajectory reflector")
        ->group(run);
    app.add_flag("--global-reflector,!--no-global-reflector", f.global_reflector, "Toggle the global reflector")
        ->group(run);
    app.add_option("--max-history-actions", f.max_history_actions, "History entries shown to agents")->group(run);
    app.add_option("--max-images-per-call", f.max_images_per_call, "Images per operator call")->group(run);
    app.add_option("--global-max-images", f.global_max_images, "Images per global reflector call")->group(run);
    app.add_option("--diff-block-size", f.diff_block_size, "Screenshot diff block size in pixels")->group(run);
    app.add_option("--diff-block-threshold", f.diff_block_threshold, "Mean per-channel delta marking a block changed")
        ->group(run);
}

void add_exploration_flags(CLI::App& app, Flags& f) {
    const char* g = "Exploration";
    app.add_option("--apps", f.apps, "Apps to explore")->delimiter(',')->group(g);
    app.add_option("--episodes", f.episodes, "Episodes per app")->group(g);
    app.add_option("--explore-max-steps", f.explore_max_steps, "Step cap per episode")->group(g);
    app.add_option("--summary-stride", f.summary_stride, "Steps per summarized segment")->group(g);
    app.add_option("--no-effect-limit", f.no_effect_limit, "Consecutive no-effect steps that end an episode")
        ->group(g);
}

Settings load_settings(const Flags& f) {
    Settings s;
    if (!f.config_file.empty()) s.load_file(f.config_file);
    s.load_environment();
    if (!f.trace_dir.empty()) s.set("TRACE_DIR", f.trace_dir);
    if (!f.template_dir.empty()) s.set("TEMPLATE_DIR", f.template_dir);
    if (!f.knowledge.empty()) s.set("KNOWLEDGE_PATH", f.knowledge);
    return s;
}

RunConfig run_config(const Settings& s, const Flags& f) {
    RunConfig c;
    s.apply(c);
    if (f.theta) c.gate.theta = parse_double_setting("--theta", *f.theta);
    if (f.trajectory_window) c.gate.trajectory_window = *f.trajectory_window;
    if (f.repeat_action_count) c.gate.repeat_action_count = *f.repeat_action_count;
    if (f.repeat_screen_count) c.gate.repeat_screen_count = *f.repeat_screen_count;
    if (f.screen_same_threshold) c.gate.screen_same_threshold = *f.screen_same_threshold;
    if (f.accumulated_error_count) c.gate.accumulated_error_count = *f.accumulated_error_count;
    if (f.max_steps) c.max_steps = *f.max_steps;
    if (f.knowledge_limit) {
        if (*f.knowledge_limit < 0) throw UsageError("--knowledge-limit must be >= 0");
        c.knowledge_limit = static_cast<std::size_t>(*f.knowledge_limit);
    }
    if (f.global_max_rejections) c.global_max_rejections = *f.global_max_rejections;
    if (f.action_reflector) c.enable_action_reflector = *f.action_reflector;
    if (f.trajectory_reflector) c.enable_trajectory_reflector = *f.trajectory_reflector;
    if (f.global_reflector) c.enable_global_reflector = *f.global_reflector;
    if (f.max_history_actions) c.limits.max_history_actions = *f.max_history_actions;
    if (f.max_images_per_call) c.limits.max_images_per_call = *f.max_images_per_call;
    if (f.global_max_images) c.limits.global_max_images = *f.global_max_images;
    if (f.diff_block_size) c.diff.block_size = *f.diff_block_size;
    if (f.diff_block_threshold) c.diff.per_block_threshold = *f.diff_block_threshold;
    c.validate();
    return c;
}

ExplorationConfig exploration_config(const Settings& s, const Flags& f) {
    ExplorationConfig c;
    s.apply(c);
    c.apps = f.apps;
    if (f.episodes) c.episodes_per_app = *f.episodes;
    if (f.explore_max_steps) c.max_steps_per_episode = *f.explore_max_steps;
    if (f.summary_stride) c.summary_stride = *f.summary_stride;
    if (f.no_effect_limit) c.no_effect_limit = *f.no_effect_limit;
    if (f.max_history_actions) c.limits.max_history_actions = *f.max_history_actions;
    if (f.max_images_per_call) c.limits.max_images_per_call = *f.max_images_per_call;
    c.validate();
    return c;
}

std::shared_ptr<const AppGraph> load_world(const Flags& f) {
    if (f.world.empty()) throw UsageError("--world is required for the sim device");
    if (!fs::exists(f.world)) throw UsageError("world file not found: " + f.world);
    return std::make_shared<const AppGraph>(load_app_graph(f.world));
}

struct DeviceHandle {
    std::shared_ptr<Device> device;
    std::shared_ptr<SimDevice> sim;  // set for the sim backend
    std::shared_ptr<const AppGraph> world;
};

DeviceHandle open_device(const Settings& s, const Flags& f) {
    DeviceHandle h;
    if (f.device == "sim") {
        h.world = load_world(f);
        h.sim = std::make_shared<SimDevice>(h.world);
        h.device = h.sim;
    } else if (f.device.rfind("adb:", 0) == 0 && f.device.size() > 4) {
        h.device = std::make_shared<AdbDevice>(s.adb_config(f.device.substr(4)), std::make_shared<ProcessRunner>());
    } else {
        throw UsageError("--device must be sim or adb:<serial>, got " + f.device);
    }
    return h;
}

// Model backend: a script file, then a configured endpoint, then (sim only)
// the scripted policy of the world task being run.
std::function<std::shared_ptr<ModelGateway>()> gateway_factory(const Settings& s, const Flags& f,
                                                               const SimTask* task) {
    if (!f.script.empty()) {
        auto script = ScriptedGateway::load_file(f.script);
        return [script] { return std::shared_ptr<ModelGateway>(scripted_load(script)); };
    }
    if (!s.get_or("MODEL_BASE_URL", "").empty()) {
        auto config = s.gateway_config();
        return [config] { return std::make_shared<OpenAiGateway>(config); };
    }
    if (task && !task->policy.is_null()) {
        SimTask copy = *task;
        return [copy] { return std::make_shared<PolicyGateway>(copy); };
    }
    throw UsageError("no model configured: set MODEL_BASE_URL or pass --script");
}

std::shared_ptr<KnowledgeStore> open_store(const Settings& s) {
    const auto path = s.get_or("KNOWLEDGE_PATH", "");
    if (path.empty()) return std::make_shared<KnowledgeStore>();
    return std::make_shared<KnowledgeStore>(path);
}

std::string default_run_id() {
    const auto now = std::chrono::system_clock::now();
    const auto t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "run-%Y%m%d-%H%M%S", &tm);
    return buf;
}

int cmd_run(const Flags& f, const std::string& instruction_text, const std::string& app_hint,
            const std::string& task_id, std::string run_id) {
    const auto settings = load_settings(f);
    const auto config = run_config(settings, f);
    auto device = open_device(settings, f);

    const SimTask* task = nullptr;
    if (device.world) {
        if (!task_id.empty()) {
            task = device.world->find_task(task_id);
            if (!task) throw UsageError("unknown task " + task_id);
        } else {
            for (const auto& t : device.world->tasks) {
                if (t.instruction == instruction_text) task = &t;
            }
        }
        device.sim->reset(task ? task->initial_state : StateMap{});
    }
    std::string text = instruction_text;
    if (text.empty() && task) text = task->instruction;
    const auto instruction = Instruction::make(text, app_hint.empty() ? std::nullopt : std::optional(app_hint));

    auto gateway = gateway_factory(settings, f, task)();
    auto store = open_store(settings);

    if (run_id.empty()) run_id = default_run_id();
    std::optional<TraceWriter> trace;
    if (!config.trace_dir.empty()) trace.emplace(config.trace_dir, run_id);
    CallbackSink printer([](const RunEvent& e) { std::cout << describe_event(to_json(e)) << std::endl; });
    RunContext ctx;
    ctx.run_id = run_id;
    ctx.sinks = {&printer};
    if (trace) ctx.sinks.push_back(&*trace);

    const auto result = run_task(instruction, config, *device.device, *gateway, store.get(), ctx);
    bool ok = result.status == RunStatus::success;
    std::cout << "status: " << to_string(result.status) << "\n";
    if (task) {
        const bool check = check_success(*task, device.sim->state(), result);
        std::cout << "task check (" << task->id << "): " << (check ? "pass" : "fail") << "\n";
        ok = ok && check;
    }
    if (trace) std::cout << "trace: " << trace->run_dir().string() << "\n";
    return ok ? kOk : kTaskFailed;
}

int cmd_explore(const Flags& f, const std::string& out) {
    auto settings = load_settings(f);
    if (!out.empty()) settings.set("KNOWLEDGE_PATH", out);
    if (settings.get_or("KNOWLEDGE_PATH", "").empty()) settings.set("KNOWLEDGE_PATH", "knowledge.jsonl");
    if (f.apps.empty()) throw UsageError("--apps is required");
    const auto config = exploration_config(settings, f);
    auto device = open_device(settings, f);
    auto gateway = gateway_factory(settings, f, nullptr)();
    auto store = open_store(settings);

    const auto report = run_exploration(config, *device.device, *gateway, *store, [&](const std::string&, int) {
        if (device.sim) device.sim->reset();
    });
    for (const auto& e : report.episodes) {
        std::cout << e.id << ": " << e.steps << " step(s), " << e.summaries << " summar"
                  << (e.summaries == 1 ? "y" : "ies") << ", " << e.items_added << " new item(s), ended by "
                  << to_string(e.end);
        if (!e.error.empty()) std::cout << " (" << e.error << ")";
        std::cout << "\n";
    }
    std::cout << "knowledge: " << store->size() << " item(s) in " << settings.get_or("KNOWLEDGE_PATH", "") << "\n";
    return kOk;
}

int cmd_bench(const Flags& f, std::vector<std::string> thetas) {
    const auto settings = load_settings(f);
    const auto base = run_config(settings, f);
    const auto world = load_world(f);

    std::cout << "## Ablation\n\n" << format_ablation_table(run_bench(*world, ablation_rows(base), base.trace_dir));
    std::vector<double> values;
    for (const auto& t : thetas) values.push_back(parse_double_setting("--thetas", t));
    std::cout << "\n## Theta sweep\n\n" << format_theta_sweep(run_bench(*world, theta_sweep_rows(base, values)));
    return kOk;
}

int cmd_replay(const std::string& path, std::optional<int> only_step) {
    const auto events = load_trace(path);
    fs::path dir = path;
    if (!fs::is_directory(dir)) dir = dir.parent_path();
    bool printed = false;
    for (const auto& j : events) {
        const bool has_step = j.contains("step") && j["step"].is_number_integer();
        if (only_step && (!has_step || j["step"].get<int>() != *only_step)) continue;
        if (j["type"] == "step_started") std::cout << "\n== Step " << j["step"].get<int>() << " ==\n";
        std::cout << describe_event(j) << "\n";
        if (j["type"] == "operator_output") {
            std::cout << "    thought: " << j["output"].value("thought", "") << "\n";
        }
        for (const char* key : {"screenshot", "screenshot_after"}) {
            if (!j.contains(key)) continue;
            const auto shot = dir / j[key].get<std::string>();
            std::cout << "    " << key << ": " << shot.string() << (fs::exists(shot) ? "" : " (missing)") << "\n";
        }
        printed = true;
    }
    if (only_step && !printed) throw UsageError("trace has no step " + std::to_string(*only_step));
    return kOk;
}

int cmd_serve(const Flags& f, std::string bind, const std::string& console_dir) {
    const auto settings = load_settings(f);
    ServiceOptions options;
    if (bind.empty()) bind = settings.get_or("SERVICE_BIND", "127.0.0.1:7860");
    std::tie(options.host, options.port) = parse_bind(bind);
    options.console_dir = console_dir.empty() ? settings.get_or("CONSOLE_DIR", "") : console_dir;
    options.run_defaults = run_config(settings, f);
    ExplorationConfig explore;
    settings.apply(explore);
    options.explore_defaults = explore;

    auto device = open_device(settings, f);
    ServiceDevice slot{f.device, device.device, {}};
    if (device.sim) slot.reset = [sim = device.sim] { sim->reset(); };
    auto gateways = gateway_factory(settings, f, nullptr);

    // Block termination signals in every thread; the main thread waits for them.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    Service service(options, {slot}, gateways, open_store(settings));
    service.start();
    std::cout << "listening on http://" << options.host << ":" << service.port() << std::endl;
    int sig = 0;
    sigwait(&signals, &sig);
    std::cout << "stopping" << std::endl;
    service.stop();
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mobile device agent: run tasks, explore apps, benchmark, replay traces, serve the API"};
    app.require_subcommand(1);
    Flags flags;

    auto* run = app.add_subcommand("run", "Execute one task");
    std::string instruction, app_hint, task_id, run_id;
    run->add_option("instruction", instruction, "Natural-language task (may be omitted with --task)");
    run->add_option("--app-hint", app_hint, "App the task concerns");
    run->add_option("--task", task_id, "World task id; sets its initial state and checks its success predicate");
    run->add_option("--run-id", run_id, "Run id used for the trace directory");
    add_common_flags(*run, flags);

    auto* explore = app.add_subcommand("explore", "Explore apps and store distilled knowledge");
    std::string out;
    explore->add_option("--out", out, "Knowledge store to write (JSONL)");
    add_common_flags(*explore, flags);
    add_exploration_flags(*explore, flags);

    auto* bench = app.add_subcommand("bench", "Run the world's task suite under the ablation rows and a theta sweep");
    std::vector<std::string> thetas{"0", "-0.001", "-0.01", "-inf"};
    bench->add_option("--thetas", thetas, "Theta values for the sweep")->delimiter(',');
    add_common_flags(*bench, flags);

    auto* replay = app.add_subcommand("replay", "Print a recorded trace step by step");
    std::string trace_path;
    std::optional<int> step;
    replay->add_option("trace", trace_path, "Trace directory or events.jsonl")->required();
    replay->add_option("--step", step, "Print only this step");

    auto* serve = app.add_subcommand("serve", "Serve the HTTP API and the console");
    std::string bind, console_dir;
    serve->add_option("--bind", bind, "host:port (default SERVICE_BIND or 127.0.0.1:7860)");
    serve->add_option("--console-dir", console_dir, "Static console files served under /");
    add_common_flags(*serve, flags);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (run->parsed()) {
            if (instruction.empty() && task_id.empty()) throw UsageError("an instruction or --task is required");
            return cmd_run(flags, instruction, app_hint, task_id, run_id);
        }
        if (explore->parsed()) return cmd_explore(flags, out);
        if (bench->parsed()) return cmd_bench(flags, thetas);
        if (replay->parsed()) return cmd_replay(trace_path, step);
        if (serve->parsed()) return cmd_serve(flags, bind, console_dir);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const Error& e) {
        std::cerr << "error (" << errc_name(e.code()) << "): " << e.what() << "\n";
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kEnvironment;
    }
    return kUsage;
}
