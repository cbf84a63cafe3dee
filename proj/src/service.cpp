#include <mobileuse/error.hpp>
#include <mobileuse/image_codec.hpp>
#include <mobileuse/service.hpp>

#include <httplib.h>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <thread>

namespace mobileuse {

using nlohmann::json;

std::pair<std::string, int> parse_bind(const std::string& bind) {
    const auto colon = bind.rfind(':');
    if (colon == std::string::npos || colon == 0) throw Error(Errc::invalid_argument, "expected host:port, got " + bind);
    const auto host = bind.substr(0, colon);
    int port = -1;
    try {
        std::size_t used = 0;
        port = std::stoi(bind.substr(colon + 1), &used);
        if (used != bind.size() - colon - 1) port = -1;
    } catch (const std::exception&) {
    }
    if (port < 0 || port > 65535) throw Error(Errc::invalid_argument, "bad port in " + bind);
    return {host, port};
}

RunConfig apply_run_overrides(const RunConfig& base, const json& o) {
    RunConfig c = base;
    if (o.is_null()) return c;
    if (!o.is_object()) throw Error(Errc::invalid_argument, "config must be an object");
    auto integer = [&](const json& v, const std::string& key) {
        if (!v.is_number_integer()) throw Error(Errc::invalid_argument, key + " must be an integer");
        return v.get<int>();
    };
    auto boolean = [&](const json& v, const std::string& key) {
        if (!v.is_boolean()) throw Error(Errc::invalid_argument, key + " must be a boolean");
        return v.get<bool>();
    };
    for (const auto& [key, v] : o.items()) {
        if (key == "theta") {
            if (v.is_string() && (v == "-inf" || v == "-infinity")) {
                c.gate.theta = -std::numeric_limits<double>::infinity();
            } else if (v.is_number()) {
                c.gate.theta = v.get<double>();
            } else {
                throw Error(Errc::invalid_argument, "theta must be a number or \"-inf\"");
            }
        } else if (key == "max_steps") {
            c.max_steps = integer(v, key);
        } else if (key == "trajectory_window") {
            c.gate.trajectory_window = integer(v, key);
        } else if (key == "repeat_action_count") {
            c.gate.repeat_action_count = integer(v, key);
        } else if (key == "repeat_screen_count") {
            c.gate.repeat_screen_count = integer(v, key);
        } else if (key == "screen_same_threshold") {
            if (!v.is_number()) throw Error(Errc::invalid_argument, key + " must be a number");
            c.gate.screen_same_threshold = v.get<double>();
        } else if (key == "accumulated_error_count") {
            c.gate.accumulated_error_count = integer(v, key);
        } else if (key == "action_reflector") {
            c.enable_action_reflector = boolean(v, key);
        } else if (key == "trajectory_reflector") {
            c.enable_trajectory_reflector = boolean(v, key);
        } else if (key == "global_reflector") {
            c.enable_global_reflector = boolean(v, key);
        } else if (key == "knowledge_limit") {
            const int n = integer(v, key);
            if (n < 0) throw Error(Errc::invalid_argument, "knowledge_limit must be >= 0");
            c.knowledge_limit = static_cast<std::size_t>(n);
        } else if (key == "global_max_rejections") {
            c.global_max_rejections = integer(v, key);
        } else if (key == "max_history_actions") {
            c.limits.max_history_actions = integer(v, key);
        } else if (key == "max_images_per_call") {
            c.limits.max_images_per_call = integer(v, key);
        } else {
            throw Error(Errc::invalid_argument, "unknown config key " + key);
        }
    }
    c.validate();
    return c;
}

namespace {

std::int64_t wall_ms() {
    using namespace std::chrono;
    return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

void reply_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, const std::string& message) {
    reply_json(res, status, {{"error", message}});
}

// Events and screenshots of one run, shared by the run thread and every
// stream subscriber.
struct RunRecord final : EventSink {
    std::string id;
    std::int64_t created_at = 0;
    std::string instruction;
    std::string device_id;
    std::shared_ptr<RunControl> control;

    mutable std::mutex mutex;
    std::condition_variable changed;
    std::vector<std::string> events;  // index == seq
    std::map<int, std::vector<std::uint8_t>> shots;
    std::string status = "running";
    bool finished = false;
    std::function<void()> before_finish;  // runs before run_finished is published

    void on_screenshot(int n, const Screenshot& image) override {
        auto png = encode_png(image);
        std::lock_guard lock(mutex);
        shots[n] = std::move(png);
    }

    void on_event(const RunEvent& event) override {
        if (event.type() == "run_finished" && before_finish) {
            before_finish();
            before_finish = nullptr;
        }
        auto j = to_json(event);
        const std::string base = "/api/runs/" + id + "/shots/";
        if (j.contains("shot")) j["screenshot_url"] = base + std::to_string(j["shot"].get<int>()) + ".png";
        if (j.contains("shot_after")) {
            j["screenshot_after_url"] = base + std::to_string(j["shot_after"].get<int>()) + ".png";
        }
        {
            std::lock_guard lock(mutex);
            events.push_back(j.dump());
            if (event.type() == "run_finished") {
                status = j["status"].get<std::string>();
                finished = true;
            }
        }
        changed.notify_all();
    }

    json handle() const {
        std::lock_guard lock(mutex);
        return {{"run_id", id},
                {"created_at", created_at},
                {"status", status},
                {"instruction", instruction},
                {"device", device_id},
                {"events", events.size()}};
    }
};

struct ExploreRecord {
    std::string id;
    std::string device_id;
    std::mutex mutex;
    std::string status = "running";
    json report;
};

json report_json(const ExplorationReport& report) {
    json eps = json::array();
    for (const auto& e : report.episodes) {
        eps.push_back({{"id", e.id},
                       {"app", e.app},
                       {"steps", e.steps},
                       {"summaries", e.summaries},
                       {"items_added", e.items_added},
                       {"end", to_string(e.end)},
                       {"error", e.error}});
    }
    json apps = json::object();
    for (const auto& [app, r] : report.per_app) {
        apps[app] = {{"episodes", r.episodes}, {"steps", r.steps}, {"items", r.items}};
    }
    return {{"episodes", eps}, {"apps", apps}};
}

json knowledge_json(const KnowledgeItem& k) {
    return {{"id", k.id},
            {"app", k.app},
            {"text", k.text},
            {"tags", k.tags},
            {"source", {{"episode", k.source.episode}, {"first_step", k.source.first_step}, {"last_step", k.source.last_step}}},
            {"created_at", k.created_at}};
}

}  // namespace

struct Service::Impl {
    ServiceOptions options;
    std::vector<ServiceDevice> devices;
    std::vector<bool> busy;
    GatewayFactory gateways;
    std::shared_ptr<KnowledgeStore> store;

    httplib::Server server;
    std::thread serve_thread;
    int bound_port = 0;
    std::atomic<bool> stopping{false};

    std::mutex mutex;  // devices, runs, explorations, workers
    std::vector<std::shared_ptr<RunRecord>> runs;  // creation order
    std::map<std::string, std::shared_ptr<ExploreRecord>> explorations;
    std::vector<std::thread> workers;
    RunRegistry registry;
    int run_counter = 0;
    int explore_counter = 0;

    // Index of a free device, or an HTTP status explaining why none is free.
    std::variant<std::size_t, int> claim_device(const std::string& wanted) {
        if (devices.empty()) return 503;
        for (std::size_t i = 0; i < devices.size(); ++i) {
            if (!wanted.empty() && devices[i].id != wanted) continue;
            if (!busy[i]) {
                busy[i] = true;
                return i;
            }
            if (!wanted.empty()) return 409;
        }
        return wanted.empty() ? 409 : 503;
    }

    void release_device(std::size_t i) {
        std::lock_guard lock(mutex);
        busy[i] = false;
    }

    std::shared_ptr<RunRecord> find_run(const std::string& id) {
        std::lock_guard lock(mutex);
        for (const auto& r : runs) {
            if (r->id == id) return r;
        }
        return nullptr;
    }

    void create_run(const httplib::Request& req, httplib::Response& res) {
        json body;
        try {
            body = json::parse(req.body);
        } catch (const std::exception&) {
            return reply_error(res, 400, "body is not valid JSON");
        }
        if (!body.is_object()) return reply_error(res, 400, "body must be an object");
        Instruction instruction;
        RunConfig config;
        try {
            const auto text = body.value("instruction", std::string());
            std::optional<std::string> hint;
            if (body.contains("app_hint") && body["app_hint"].is_string()) hint = body["app_hint"].get<std::string>();
            instruction = Instruction::make(text, hint);
            config = apply_run_overrides(options.run_defaults, body.value("config", json()));
        } catch (const std::exception& e) {
            return reply_error(res, 400, e.what());
        }
        const std::string wanted = body.value("device", std::string());

        auto record = std::make_shared<RunRecord>();
        std::size_t device_index = 0;
        {
            std::lock_guard lock(mutex);
            if (stopping) return reply_error(res, 503, "service is stopping");
            const auto claim = claim_device(wanted);
            if (const int* status = std::get_if<int>(&claim)) {
                return reply_error(res, *status, *status == 409 ? "device busy" : "no device available");
            }
            device_index = std::get<std::size_t>(claim);
            char id[32];
            std::snprintf(id, sizeof id, "run-%04d", ++run_counter);
            record->id = id;
            record->created_at = wall_ms();
            record->instruction = instruction.text;
            record->device_id = devices[device_index].id;
            record->control = registry.open(record->id);
            record->before_finish = [this, id = record->id, device_index] {
                registry.close(id);
                release_device(device_index);
            };
            runs.push_back(record);
            workers.emplace_back([this, record, device_index, instruction, config] {
                execute_run(record, device_index, instruction, config);
            });
        }
        reply_json(res, 201, record->handle());
    }

    void execute_run(std::shared_ptr<RunRecord> record, std::size_t device_index, Instruction instruction,
                     RunConfig config) {
        auto& slot = devices[device_index];
        try {
            if (slot.reset) slot.reset();
            auto gateway = gateways();
            RunContext ctx;
            ctx.run_id = record->id;
            ctx.sinks = {record.get()};
            ctx.control = record->control;
            run_task(instruction, config, *slot.device, *gateway, store.get(), ctx);
        } catch (const std::exception& e) {
            // run_task reports its own failures; this covers setup errors.
            bool finished;
            {
                std::lock_guard lock(record->mutex);
                finished = record->finished;
            }
            if (!finished) {
                RunEvent warn{record->id, 0, wall_ms(), ev::Warning{std::nullopt, e.what()}};
                RunEvent done{record->id, 1, wall_ms(), ev::RunFinished{RunStatus::failure, 0, std::nullopt, std::nullopt}};
                {
                    std::lock_guard lock(record->mutex);
                    warn.seq = static_cast<std::int64_t>(record->events.size());
                    done.seq = warn.seq + 1;
                }
                record->on_event(warn);
                record->on_event(done);
            }
        }
        if (record->before_finish) {
            record->before_finish();
            record->before_finish = nullptr;
        }
    }

    void stream_events(const httplib::Request& req, httplib::Response& res) {
        auto record = find_run(req.matches[1]);
        if (!record) return reply_error(res, 404, "unknown run");
        std::size_t next = 0;
        std::string last = req.get_header_value("Last-Event-ID");
        if (last.empty() && req.has_param("last_event_id")) last = req.get_param_value("last_event_id");
        if (!last.empty()) {
            try {
                next = static_cast<std::size_t>(std::stoll(last)) + 1;
            } catch (const std::exception&) {
                return reply_error(res, 400, "bad Last-Event-ID");
            }
        }
        res.set_header("Cache-Control", "no-cache");
        res.set_header("X-Accel-Buffering", "no");
        auto cursor = std::make_shared<std::size_t>(next);
        res.set_chunked_content_provider("text/event-stream", [this, record, cursor](std::size_t,
                                                                                      httplib::DataSink& sink) {
            std::vector<std::string> batch;
            bool done = false;
            {
                std::unique_lock lock(record->mutex);
                const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(15);
                while (record->events.size() <= *cursor && !record->finished && !stopping) {
                    if (record->changed.wait_until(lock, std::min(deadline, std::chrono::steady_clock::now() +
                                                                                std::chrono::milliseconds(200))) ==
                            std::cv_status::timeout &&
                        std::chrono::steady_clock::now() >= deadline) {
                        break;
                    }
                }
                for (std::size_t i = *cursor; i < record->events.size(); ++i) batch.push_back(record->events[i]);
                done = record->finished && *cursor + batch.size() >= record->events.size();
            }
            if (batch.empty() && !done) {
                if (stopping) return false;
                static const std::string ping = ": keepalive\n\n";
                return sink.write(ping.data(), ping.size());
            }
            for (const auto& data : batch) {
                const auto j = json::parse(data);
                std::string frame = "id: " + std::to_string(j["seq"].get<std::int64_t>()) + "\nevent: " +
                                    j["type"].get<std::string>() + "\ndata: " + data + "\n\n";
                if (!sink.write(frame.data(), frame.size())) return false;
                ++*cursor;
            }
            if (done) sink.done();
            return true;
        });
    }

    void abort_run(const httplib::Request& req, httplib::Response& res) {
        const std::string id = req.matches[1];
        auto record = find_run(id);
        if (!record) return reply_error(res, 404, "unknown run");
        {
            std::lock_guard lock(record->mutex);
            if (record->finished) return reply_error(res, 404, "run already finished");
        }
        try {
            registry.abort(id);
        } catch (const Error&) {
            return reply_error(res, 404, "run already finished");
        }
        reply_json(res, 202, {{"run_id", id}, {"status", "aborting"}});
    }

    void get_shot(const httplib::Request& req, httplib::Response& res) {
        auto record = find_run(req.matches[1]);
        if (!record) return reply_error(res, 404, "unknown run");
        const int n = std::stoi(req.matches[2]);
        std::lock_guard lock(record->mutex);
        const auto it = record->shots.find(n);
        if (it == record->shots.end()) return reply_error(res, 404, "unknown screenshot");
        res.set_content(reinterpret_cast<const char*>(it->second.data()), it->second.size(), "image/png");
    }

    void start_exploration(const httplib::Request& req, httplib::Response& res) {
        json body;
        try {
            body = json::parse(req.body);
        } catch (const std::exception&) {
            return reply_error(res, 400, "body is not valid JSON");
        }
        ExplorationConfig config = options.explore_defaults;
        try {
            if (!body.is_object()) throw Error(Errc::invalid_argument, "body must be an object");
            config.apps = body.at("apps").get<std::vector<std::string>>();
            config.episodes_per_app = body.value("episodes", config.episodes_per_app);
            config.max_steps_per_episode = body.value("max_steps", config.max_steps_per_episode);
            config.summary_stride = body.value("summary_stride", config.summary_stride);
            config.validate();
        } catch (const std::exception& e) {
            return reply_error(res, 400, e.what());
        }
        auto record = std::make_shared<ExploreRecord>();
        {
            std::lock_guard lock(mutex);
            const auto claim = claim_device(body.value("device", std::string()));
            if (const int* status = std::get_if<int>(&claim)) {
                return reply_error(res, *status, *status == 409 ? "device busy" : "no device available");
            }
            const auto index = std::get<std::size_t>(claim);
            record->id = "explore-" + std::to_string(++explore_counter);
            record->device_id = devices[index].id;
            explorations[record->id] = record;
            workers.emplace_back([this, record, index, config] {
                auto& slot = devices[index];
                try {
                    auto gateway = gateways();
                    auto report = run_exploration(config, *slot.device, *gateway, *store,
                                                  [&](const std::string&, int) {
                                                      if (slot.reset) slot.reset();
                                                  });
                    std::lock_guard l(record->mutex);
                    record->status = "done";
                    record->report = report_json(report);
                } catch (const std::exception& e) {
                    std::lock_guard l(record->mutex);
                    record->status = "failed";
                    record->report = {{"error", e.what()}};
                }
                release_device(index);
            });
        }
        reply_json(res, 202, {{"exploration_id", record->id}, {"status", "running"}, {"device", record->device_id}});
    }

    void routes() {
        server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                    {"Access-Control-Allow-Headers", "Content-Type, Last-Event-ID"},
                                    {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
        server.Options(".*", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

        server.Post("/api/runs", [this](const auto& req, auto& res) { create_run(req, res); });
        server.Get("/api/runs", [this](const auto&, auto& res) {
            json list = json::array();
            std::lock_guard lock(mutex);
            for (auto it = runs.rbegin(); it != runs.rend(); ++it) list.push_back((*it)->handle());
            reply_json(res, 200, list);
        });
        server.Get(R"(/api/runs/([^/]+))", [this](const auto& req, auto& res) {
            auto record = find_run(req.matches[1]);
            if (!record) return reply_error(res, 404, "unknown run");
            reply_json(res, 200, record->handle());
        });
        server.Get(R"(/api/runs/([^/]+)/events)", [this](const auto& req, auto& res) { stream_events(req, res); });
        server.Post(R"(/api/runs/([^/]+)/abort)", [this](const auto& req, auto& res) { abort_run(req, res); });
        server.Get(R"(/api/runs/([^/]+)/shots/(\d+)\.png)", [this](const auto& req, auto& res) { get_shot(req, res); });

        server.Get("/api/knowledge", [this](const httplib::Request& req, httplib::Response& res) {
            std::vector<KnowledgeItem> items;
            if (req.has_param("q")) {
                std::size_t limit = 5;
                try {
                    if (req.has_param("limit")) limit = static_cast<std::size_t>(std::stoul(req.get_param_value("limit")));
                    items = store->retrieve(Instruction::make(req.get_param_value("q")), limit);
                } catch (const std::exception& e) {
                    return reply_error(res, 400, e.what());
                }
            } else {
                items = store->all();
            }
            json list = json::array();
            for (const auto& k : items) list.push_back(knowledge_json(k));
            reply_json(res, 200, list);
        });
        server.Post("/api/knowledge", [this](const httplib::Request& req, httplib::Response& res) {
            try {
                const auto body = json::parse(req.body);
                KnowledgeItem item;
                item.app = body.value("app", std::string());
                item.text = body.value("text", std::string());
                item.tags = body.value("tags", std::vector<std::string>{});
                if (body.contains("source")) {
                    item.source.episode = body["source"].value("episode", "");
                    item.source.first_step = body["source"].value("first_step", 0);
                    item.source.last_step = body["source"].value("last_step", 0);
                }
                const auto id = store->add(item);
                reply_json(res, 201, knowledge_json(*store->get(id)));
            } catch (const Error& e) {
                reply_error(res, e.code() == Errc::storage_failure ? 500 : 400, e.what());
            } catch (const std::exception& e) {
                reply_error(res, 400, e.what());
            }
        });

        server.Post("/api/explore", [this](const auto& req, auto& res) { start_exploration(req, res); });
        server.Get(R"(/api/explore/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            std::shared_ptr<ExploreRecord> record;
            {
                std::lock_guard lock(mutex);
                const auto it = explorations.find(req.matches[1]);
                if (it != explorations.end()) record = it->second;
            }
            if (!record) return reply_error(res, 404, "unknown exploration");
            std::lock_guard lock(record->mutex);
            reply_json(res, 200, {{"exploration_id", record->id}, {"status", record->status}, {"report", record->report}});
        });

        if (!options.console_dir.empty() && std::filesystem::is_directory(options.console_dir)) {
            server.set_mount_point("/", options.console_dir);
        }
    }
};

Service::Service(ServiceOptions options, std::vector<ServiceDevice> devices, GatewayFactory gateways,
                 std::shared_ptr<KnowledgeStore> store)
    : impl_(std::make_unique<Impl>()) {
    impl_->options = std::move(options);
    impl_->devices = std::move(devices);
    impl_->busy.assign(impl_->devices.size(), false);
    impl_->gateways = std::move(gateways);
    impl_->store = store ? std::move(store) : std::make_shared<KnowledgeStore>();
    impl_->server.new_task_queue = [] { return new httplib::ThreadPool(32); };
    impl_->routes();
}

Service::~Service() { stop(); }

void Service::start() {
    auto& s = impl_->server;
    if (impl_->options.port == 0) {
        impl_->bound_port = s.bind_to_any_port(impl_->options.host);
        if (impl_->bound_port <= 0) throw Error(Errc::transport_failure, "cannot bind " + impl_->options.host);
    } else {
        if (!s.bind_to_port(impl_->options.host, impl_->options.port)) {
            throw Error(Errc::transport_failure,
                        "cannot bind " + impl_->options.host + ":" + std::to_string(impl_->options.port));
        }
        impl_->bound_port = impl_->options.port;
    }
    impl_->serve_thread = std::thread([this] { impl_->server.listen_after_bind(); });
    s.wait_until_ready();
}

void Service::stop() {
    if (!impl_ || impl_->stopping.exchange(true)) return;
    std::vector<std::thread> workers;
    {
        std::lock_guard lock(impl_->mutex);
        for (const auto& r : impl_->runs) {
            try {
                impl_->registry.abort(r->id);
            } catch (const Error&) {
            }
        }
        workers.swap(impl_->workers);
    }
    for (auto& w : workers) w.join();
    impl_->server.stop();
    if (impl_->serve_thread.joinable()) impl_->serve_thread.join();
}

void Service::wait() {
    if (impl_->serve_thread.joinable()) impl_->serve_thread.join();
}

int Service::port() const { return impl_->bound_port; }

}  // namespace mobileuse
