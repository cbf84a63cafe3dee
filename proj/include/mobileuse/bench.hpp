#pragma once

// Sim benchmark: runs every task of a world under several configurations.
//
// Tasks carry a scripted policy that stands in for the model:
//
//   "policy": {
//     "steps":  [{"action": {"action_type": "open", "text": "Files"}, "description": "Open Files"}, ...],
//     "faults": [{"kind": "skip_clear", "at": 3},
//                {"kind": "stuck", "at": 2, "coordinate": [270, 300]},
//                {"kind": "premature_terminate", "at": 5}]
//   }
//
// skip_clear     at the clear_text step, types straight away (low confidence);
//                clears and retypes once the action reflector reports ERROR.
// stuck          keeps clicking a dead spot (confidently) until trajectory
//                feedback reports ERROR, then resumes the plan.
// premature_terminate
//                terminates early; resumes after a global INCOMPLETE verdict.
//
// The reflector roles answer as oracles over the policy's own state and the
// screenshots they are shown.

#include <mobileuse/app_graph.hpp>
#include <mobileuse/gateway.hpp>
#include <mobileuse/orchestrator.hpp>

#include <string>
#include <vector>

namespace mobileuse {

inline constexpr double kPolicyConfidentLogprob = -0.0001;
inline constexpr double kPolicyOpenLogprob = -0.003;
inline constexpr double kPolicyFaultLogprob = -0.05;

class PolicyGateway final : public ModelGateway {
public:
    // Throws Error{schema_error} if the task has no usable policy.
    explicit PolicyGateway(const SimTask& task);

    Completion complete(const ChatRequest& request) override;

private:
    struct PlanStep {
        Action action;
        std::string description;
    };
    enum class Fault { none, skip_clear, stuck, premature_terminate };
    enum class Emitted { normal, skip_clear, stuck, premature };

    Completion operator_reply(const std::string& prompt);
    Completion action_reflection(const ChatRequest& request) const;
    Completion trajectory_reflection() const;
    Completion global_reflection() const;
    Fault fault_at(std::size_t index) const;
    Completion emit(const Action& action, const std::string& thought, const std::string& description,
                    double logprob);

    std::vector<PlanStep> plan_;
    std::vector<std::pair<std::size_t, Fault>> faults_;
    std::vector<bool> fired_;
    Point stuck_point_{0, 0};
    std::size_t cursor_ = 0;
    std::size_t skip_index_ = 0;
    bool stuck_active_ = false;
    Emitted last_ = Emitted::normal;
    int progress_calls_ = 0;
};

struct BenchRow {
    std::string name;
    RunConfig config;
};

// Base, +ActionReflector, +TrajectoryReflector, +GlobalReflector (all with
// theta = 0, reflect every step) and +ReflectionOnDemand (theta from `base`).
std::vector<BenchRow> ablation_rows(const RunConfig& base);
std::vector<BenchRow> theta_sweep_rows(const RunConfig& base, const std::vector<double>& thetas);

struct TaskOutcome {
    std::string task_id;
    Difficulty difficulty = Difficulty::easy;
    bool success = false;
    RunStatus status = RunStatus::failure;
    std::optional<FailureType> failure_label;
    int steps = 0;
    int executed_steps = 0;
    int action_reflections = 0;
    int trajectory_reflections = 0;
    int global_reflections = 0;
};

struct RowResult {
    std::string name;
    RunConfig config;
    std::vector<TaskOutcome> tasks;

    int successes() const;
    int successes(Difficulty d) const;
    int total(Difficulty d) const;
    int executed_steps() const;
    int action_reflections() const;
    double reflected_fraction() const;
};

// Throws Error{invalid_argument} when the world has no tasks.
std::vector<RowResult> run_bench(const AppGraph& world, const std::vector<BenchRow>& rows,
                                 const std::string& trace_dir = "");

std::string format_ablation_table(const std::vector<RowResult>& rows);
std::string format_theta_sweep(const std::vector<RowResult>& rows);

}  // namespace mobileuse
