#pragma once

#include <mobileuse/app_graph.hpp>
#include <mobileuse/device.hpp>

#include <memory>
#include <mutex>

namespace mobileuse {

// Deterministic device driven by an AppGraph. Identical state always
// renders an identical raster.
class SimDevice final : public Device {
public:
    explicit SimDevice(std::shared_ptr<const AppGraph> graph, std::string device_id = "sim");

    // Restores the world state, applies overrides and returns to the launcher.
    void reset(const StateMap& overrides = {});

    DeviceInfo info() const override;
    Screenshot capture() override;
    ExecutionReport execute(const Action& action) override;

    // Disconnected sessions fail every call with device_disconnected.
    void set_connected(bool connected);

    StateMap state() const;
    std::string current_screen() const;
    std::optional<std::string> focused_element() const;
    double clock_seconds() const;
    const AppGraph& graph() const { return *graph_; }

private:
    struct Snapshot {
        std::string screen;
        std::vector<std::string> history;
        std::optional<std::string> focus;
        StateMap state;
        double clock = 0.0;
        bool operator==(const Snapshot&) const = default;
    };

    const Screen& screen() const;
    const Element* hit_test(Point p) const;
    void apply(const Transition& t);
    void go_to(const std::string& target);
    ExecutionReport dispatch(const Action& action);
    Screenshot render() const;
    void require_connected() const;

    std::shared_ptr<const AppGraph> graph_;
    std::string device_id_;
    mutable std::mutex mutex_;
    Snapshot now_;
    bool connected_ = true;
    int capture_count_ = 0;
};

}  // namespace mobileuse
