#include "flatkit/error.hpp"

namespace flatkit {

const char* error_code_name(ErrorCode code) {
    switch (code) {
    case ErrorCode::parse_error: return "ParseError";
    case ErrorCode::referential_error: return "ReferentialError";
    case ErrorCode::duplicate_key: return "DuplicateKeyError";
    case ErrorCode::story_too_short: return "StoryTooShort";
    case ErrorCode::empty_continuation: return "EmptyContinuation";
    case ErrorCode::unknown_label: return "UnknownLabel";
    case ErrorCode::scheme_mismatch: return "SchemeMismatch";
    case ErrorCode::too_few_sentences: return "TooFewSentences";
    case ErrorCode::too_few_jumps: return "TooFewJumps";
    case ErrorCode::degenerate_trajectory: return "DegenerateTrajectory";
    case ErrorCode::missing_embedding: return "MissingEmbedding";
    case ErrorCode::degenerate_sample: return "DegenerateSample";
    case ErrorCode::too_few_centroids: return "TooFewCentroids";
    case ErrorCode::zero_human_variance: return "ZeroHumanVariance";
    case ErrorCode::too_few_human_points: return "TooFewHumanPoints";
    case ErrorCode::missing_interval: return "MissingInterval";
    case ErrorCode::constant_length: return "ConstantLength";
    case ErrorCode::rank_deficient_design: return "RankDeficientDesign";
    case ErrorCode::invalid_p: return "InvalidP";
    case ErrorCode::too_few_domains: return "TooFewDomains";
    case ErrorCode::empty_prefix: return "EmptyPrefix";
    case ErrorCode::empty_group: return "EmptyGroup";
    case ErrorCode::dimension_mismatch: return "DimensionMismatch";
    case ErrorCode::transport_error: return "TransportError";
    case ErrorCode::service_error: return "ServiceError";
    case ErrorCode::config_error: return "ConfigError";
    case ErrorCode::io_error: return "IoError";
    }
    return "UnknownError";
}

} // namespace flatkit
