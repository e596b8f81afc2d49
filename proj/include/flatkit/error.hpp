#pragma once

#include <stdexcept>
#include <string>

namespace flatkit {

// Every failure the toolkit can signal. Codes are stable identifiers that
// tests and callers match on; messages carry the specifics.
enum class ErrorCode {
    parse_error,
    referential_error,
    duplicate_key,
    story_too_short,
    empty_continuation,
    unknown_label,
    scheme_mismatch,
    too_few_sentences,
    too_few_jumps,
    degenerate_trajectory,
    missing_embedding,
    degenerate_sample,
    too_few_centroids,
    zero_human_variance,
    too_few_human_points,
    missing_interval,
    constant_length,
    rank_deficient_design,
    invalid_p,
    too_few_domains,
    empty_prefix,
    empty_group,
    dimension_mismatch,
    transport_error,
    service_error,
    config_error,
    io_error,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
          code_(code) {}

    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

} // namespace flatkit
