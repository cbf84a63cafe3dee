#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mobileuse {

// Every failure the library reports carries one of these codes so callers
// (CLI exit codes, HTTP status mapping) can branch without string matching.
enum class Errc {
    invalid_argument,
    missing_parameter,
    out_of_bounds,
    unknown_action_type,
    parse_error,
    // model gateway
    transport_failure,
    provider_rejected,
    logprobs_unavailable,
    script_exhausted,
    script_mismatch,
    // perception
    dimension_mismatch,
    // device
    device_disconnected,
    capture_decode_failure,
    unknown_app,
    // agents
    unparseable_after_retry,
    // reflection gate
    no_token_overlap,
    // knowledge store
    storage_failure,
    // orchestrator / service
    unknown_run,
    device_busy,
    no_device,
    schema_error,
};

std::string_view errc_name(Errc code) noexcept;

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

}  // namespace mobileuse
