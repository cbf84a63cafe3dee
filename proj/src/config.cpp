#include <mobileuse/config.hpp>
#include <mobileuse/error.hpp>

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

namespace mobileuse {

const std::vector<std::string>& known_setting_keys() {
    static const std::vector<std::string> keys{
        "MODEL_BASE_URL",
        "MODEL_API_KEY",
        "MODEL_NAME",
        "MODEL_TIMEOUT_SECS",
        "MODEL_MAX_RETRIES",
        "TEMPLATE_DIR",
        "KNOWLEDGE_PATH",
        "SERVICE_BIND",
        "CONSOLE_DIR",
        "TRACE_DIR",
        "GATE_THETA",
        "GATE_TRAJECTORY_WINDOW",
        "GATE_REPEAT_ACTION_COUNT",
        "GATE_REPEAT_SCREEN_COUNT",
        "GATE_SCREEN_SAME_THRESHOLD",
        "GATE_ACCUMULATED_ERROR_COUNT",
        "RUN_MAX_STEPS",
        "RUN_KNOWLEDGE_LIMIT",
        "RUN_GLOBAL_MAX_REJECTIONS",
        "RUN_ACTION_REFLECTOR",
        "RUN_TRAJECTORY_REFLECTOR",
        "RUN_GLOBAL_REFLECTOR",
        "MAX_HISTORY_ACTIONS",
        "MAX_IMAGES_PER_CALL",
        "EXPLORE_EPISODES",
        "EXPLORE_MAX_STEPS",
        "EXPLORE_SUMMARY_STRIDE",
        "ADB_PATH",
        "ADB_PACKAGES",
    };
    return keys;
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

bool is_known(const std::string& key) {
    const auto& keys = known_setting_keys();
    return std::find(keys.begin(), keys.end(), key) != keys.end();
}

}  // namespace

double parse_double_setting(const std::string& key, const std::string& value) {
    std::string v;
    for (char c : trim(value)) v += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (v == "-inf" || v == "-infinity") return -std::numeric_limits<double>::infinity();
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used == v.size()) return d;
    } catch (const std::exception&) {
    }
    throw Error(Errc::invalid_argument, key + ": not a number: " + value);
}

int parse_int_setting(const std::string& key, const std::string& value) {
    const auto v = trim(value);
    try {
        std::size_t used = 0;
        const int i = std::stoi(v, &used);
        if (used == v.size()) return i;
    } catch (const std::exception&) {
    }
    throw Error(Errc::invalid_argument, key + ": not an integer: " + value);
}

bool parse_bool_setting(const std::string& key, const std::string& value) {
    std::string v;
    for (char c : trim(value)) v += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off") return false;
    throw Error(Errc::invalid_argument, key + ": not a boolean: " + value);
}

void Settings::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::invalid_argument, "cannot read config file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    parse(ss.str(), path);
}

void Settings::parse(const std::string& text, const std::string& origin) {
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw Error(Errc::invalid_argument, origin + ":" + std::to_string(lineno) + ": expected KEY=VALUE");
        }
        const auto key = trim(line.substr(0, eq));
        if (!is_known(key)) {
            throw Error(Errc::invalid_argument, origin + ":" + std::to_string(lineno) + ": unknown key " + key);
        }
        values_[key] = trim(line.substr(eq + 1));
    }
}

void Settings::load_environment() {
    for (const auto& key : known_setting_keys()) {
        if (const char* v = std::getenv(key.c_str())) values_[key] = v;
    }
}

void Settings::set(const std::string& key, std::string value) { values_[key] = std::move(value); }

std::optional<std::string> Settings::get(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
}

std::string Settings::get_or(const std::string& key, const std::string& fallback) const {
    return get(key).value_or(fallback);
}

void Settings::apply(RunConfig& c) const {
    auto num = [&](const char* key, int& field) {
        if (auto v = get(key)) field = parse_int_setting(key, *v);
    };
    auto flag = [&](const char* key, bool& field) {
        if (auto v = get(key)) field = parse_bool_setting(key, *v);
    };
    if (auto v = get("GATE_THETA")) c.gate.theta = parse_double_setting("GATE_THETA", *v);
    num("GATE_TRAJECTORY_WINDOW", c.gate.trajectory_window);
    num("GATE_REPEAT_ACTION_COUNT", c.gate.repeat_action_count);
    num("GATE_REPEAT_SCREEN_COUNT", c.gate.repeat_screen_count);
    if (auto v = get("GATE_SCREEN_SAME_THRESHOLD")) {
        c.gate.screen_same_threshold = parse_double_setting("GATE_SCREEN_SAME_THRESHOLD", *v);
    }
    num("GATE_ACCUMULATED_ERROR_COUNT", c.gate.accumulated_error_count);
    num("RUN_MAX_STEPS", c.max_steps);
    if (auto v = get("RUN_KNOWLEDGE_LIMIT")) {
        const int n = parse_int_setting("RUN_KNOWLEDGE_LIMIT", *v);
        if (n < 0) throw Error(Errc::invalid_argument, "RUN_KNOWLEDGE_LIMIT must be >= 0");
        c.knowledge_limit = static_cast<std::size_t>(n);
    }
    num("RUN_GLOBAL_MAX_REJECTIONS", c.global_max_rejections);
    flag("RUN_ACTION_REFLECTOR", c.enable_action_reflector);
    flag("RUN_TRAJECTORY_REFLECTOR", c.enable_trajectory_reflector);
    flag("RUN_GLOBAL_REFLECTOR", c.enable_global_reflector);
    num("MAX_HISTORY_ACTIONS", c.limits.max_history_actions);
    num("MAX_IMAGES_PER_CALL", c.limits.max_images_per_call);
    if (auto v = get("TEMPLATE_DIR")) c.templates_dir = *v;
    if (auto v = get("TRACE_DIR")) c.trace_dir = *v;
}

void Settings::apply(ExplorationConfig& c) const {
    if (auto v = get("EXPLORE_EPISODES")) c.episodes_per_app = parse_int_setting("EXPLORE_EPISODES", *v);
    if (auto v = get("EXPLORE_MAX_STEPS")) c.max_steps_per_episode = parse_int_setting("EXPLORE_MAX_STEPS", *v);
    if (auto v = get("EXPLORE_SUMMARY_STRIDE")) c.summary_stride = parse_int_setting("EXPLORE_SUMMARY_STRIDE", *v);
    if (auto v = get("MAX_HISTORY_ACTIONS")) c.limits.max_history_actions = parse_int_setting("MAX_HISTORY_ACTIONS", *v);
    if (auto v = get("MAX_IMAGES_PER_CALL")) c.limits.max_images_per_call = parse_int_setting("MAX_IMAGES_PER_CALL", *v);
    if (auto v = get("TEMPLATE_DIR")) c.templates_dir = *v;
    if (auto v = get("TRACE_DIR")) c.trace_dir = *v;
}

GatewayConfig Settings::gateway_config() const {
    GatewayConfig g;
    g.base_url = get_or("MODEL_BASE_URL", "");
    g.api_key = get_or("MODEL_API_KEY", "");
    if (auto v = get("MODEL_NAME")) g.model = *v;
    if (auto v = get("MODEL_TIMEOUT_SECS")) g.timeout = std::chrono::seconds(parse_int_setting("MODEL_TIMEOUT_SECS", *v));
    if (auto v = get("MODEL_MAX_RETRIES")) g.max_retries = parse_int_setting("MODEL_MAX_RETRIES", *v);
    if (g.timeout.count() < 1) throw Error(Errc::invalid_argument, "MODEL_TIMEOUT_SECS must be >= 1");
    if (g.max_retries < 0) throw Error(Errc::invalid_argument, "MODEL_MAX_RETRIES must be >= 0");
    return g;
}

AdbConfig Settings::adb_config(const std::string& serial) const {
    AdbConfig a;
    a.serial = serial;
    if (auto v = get("ADB_PATH")) a.adb_path = *v;
    // ADB_PACKAGES=Tasks=org.tasks,Camera=com.android.camera2
    if (auto v = get("ADB_PACKAGES")) {
        std::stringstream ss(*v);
        std::string pair;
        while (std::getline(ss, pair, ',')) {
            pair = trim(pair);
            if (pair.empty()) continue;
            const auto eq = pair.find('=');
            if (eq == std::string::npos) throw Error(Errc::invalid_argument, "ADB_PACKAGES: expected name=package");
            a.packages[trim(pair.substr(0, eq))] = trim(pair.substr(eq + 1));
        }
    }
    return a;
}

}  // namespace mobileuse
