#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace flatkit {

struct DecodingConfig {
    double temperature = 1.2;
    double top_p = 0.95;
    int min_clamp = 64;
    int max_clamp = 2048;
};

// Token budget for a target word count: floor(words * 1.3 * 1.15), clamped
// to [min_clamp, max_clamp].
int decode_budget(int target_words, const DecodingConfig& cfg = {});

enum class PromptInterface { raw_prefix, chat, prompt_control };

const char* prompt_interface_name(PromptInterface p);
PromptInterface prompt_interface_from_name(const std::string& name);

// The continuation instruction strings. {n_words} and {story_so_far} slots
// are filled by build_prompt.
const std::string& continuation_system_text();
const std::string& continuation_user_template();

struct RequestPayload {
    PromptInterface interface = PromptInterface::raw_prefix;
    // chat: system + user filled; otherwise a single completion prompt.
    std::string system_text;
    std::string user_text;
    std::string prompt;
    int target_words = 0;
};

// raw_prefix: completion prompt equal to the joined prefix.
// chat: system/user messages with both slots filled.
// prompt_control: instruction prepended as plain completion text
// (system text, then user text with the prefix in its story slot).
// Throws EmptyPrefix.
RequestPayload build_prompt(const std::vector<std::string>& prefix_sentences,
                            int target_words, PromptInterface interface);

struct EndpointConfig {
    std::string base_url = "http://localhost:8080";
    std::string completion_model;
    std::string embedding_model = "text-embedding-3-large";
    std::string auth_env_var = "FLATKIT_API_TOKEN";
    int max_retries = 3;
    int retry_base_ms = 250;
    int timeout_seconds = 120;
};

struct GenerationResult {
    std::string text;
    std::string finish_reason;
    bool truncated = false; // hit the token budget; valid outcome, flagged
    int retries = 0;
    std::string response_id;
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
};

// One sampling call against /v1/chat/completions or /v1/completions.
// Transport failures and retryable statuses (408/429/5xx) back off
// exponentially up to max_retries; a final non-2xx raises ServiceError with
// the response body, connection failure raises TransportError.
GenerationResult fetch_continuation(const EndpointConfig& endpoint,
                                    const RequestPayload& payload,
                                    const DecodingConfig& decoding);

enum class EmbeddingFacet { theme, style };

// Batch embedding request; order of the returned vectors matches the input
// order (responses are reassembled by index). Theme requests 3072 dimensions
// through the API; style posts to a user-supplied encoder without a
// dimensions parameter. All vectors are L2-normalized before return.
// expected_dim = 0 uses the facet's canonical dimension.
std::vector<std::vector<double>> fetch_embeddings(const EndpointConfig& endpoint,
                                                  const std::vector<std::string>& sentences,
                                                  EmbeddingFacet facet,
                                                  int expected_dim = 0);

} // namespace flatkit
