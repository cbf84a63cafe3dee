#pragma once

// Settings from KEY=VALUE files and the environment. Later sources win:
// defaults < file < environment < explicit set().

#include <mobileuse/adb_device.hpp>
#include <mobileuse/exploration.hpp>
#include <mobileuse/gateway.hpp>
#include <mobileuse/orchestrator.hpp>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mobileuse {

const std::vector<std::string>& known_setting_keys();

class Settings {
public:
    // '#' starts a comment; blank lines are ignored. Unknown keys and
    // malformed lines throw Error{invalid_argument} naming the line.
    void load_file(const std::string& path);
    void parse(const std::string& text, const std::string& origin = "<config>");
    void load_environment();

    void set(const std::string& key, std::string value);
    std::optional<std::string> get(const std::string& key) const;
    std::string get_or(const std::string& key, const std::string& fallback) const;

    // Throw Error{invalid_argument} on malformed values.
    void apply(RunConfig& config) const;
    void apply(ExplorationConfig& config) const;
    GatewayConfig gateway_config() const;
    AdbConfig adb_config(const std::string& serial) const;

private:
    std::map<std::string, std::string> values_;
};

// "0.5", "-inf" and "-infinity" are accepted.
double parse_double_setting(const std::string& key, const std::string& value);
int parse_int_setting(const std::string& key, const std::string& value);
bool parse_bool_setting(const std::string& key, const std::string& value);

}  // namespace mobileuse
