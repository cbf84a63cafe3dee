#pragma once

#include <mobileuse/action.hpp>
#include <mobileuse/types.hpp>

#include <string>

namespace mobileuse {

enum class DeviceBackend { adb, sim };
std::string_view to_string(DeviceBackend backend) noexcept;

struct DeviceInfo {
    int width = 0;
    int height = 0;
    std::string device_id;
    DeviceBackend backend = DeviceBackend::sim;
};

// One session per physical or simulated device. Implementations serialize
// their own calls; distinct sessions are independent.
class Device {
public:
    virtual ~Device() = default;

    virtual DeviceInfo info() const = 0;

    // Errors: device_disconnected, capture_decode_failure.
    virtual Screenshot capture() = 0;

    // Invalid actions come back as ExecutionOutcome::rejected. Errors:
    // device_disconnected, unknown_app.
    virtual ExecutionReport execute(const Action& action) = 0;
};

}  // namespace mobileuse
