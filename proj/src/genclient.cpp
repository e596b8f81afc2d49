#include "flatkit/genclient.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "flatkit/corpus.hpp"
#include "flatkit/error.hpp"

namespace flatkit {

int decode_budget(int target_words, const DecodingConfig& cfg) {
    if (target_words < 0) target_words = 0;
    auto budget = static_cast<int>(
        std::floor(static_cast<double>(target_words) * 1.3 * 1.15));
    return std::clamp(budget, cfg.min_clamp, cfg.max_clamp);
}

const char* prompt_interface_name(PromptInterface p) {
    switch (p) {
    case PromptInterface::raw_prefix: return "raw_prefix";
    case PromptInterface::chat: return "chat";
    case PromptInterface::prompt_control: return "prompt_control";
    }
    return "?";
}

PromptInterface prompt_interface_from_name(const std::string& name) {
    if (name == "raw_prefix") return PromptInterface::raw_prefix;
    if (name == "chat") return PromptInterface::chat;
    if (name == "prompt_control") return PromptInterface::prompt_control;
    throw Error(ErrorCode::config_error, "unknown prompt interface " + name);
}

const std::string& continuation_system_text() {
    static const std::string text =
        "You are a fiction writer. Continue the story naturally in the same "
        "style and voice. Write only story text -- no commentary, no "
        "meta-discussion, no preamble, no quotation marks around your "
        "continuation.";
    return text;
}

const std::string& continuation_user_template() {
    static const std::string text =
        "Continue this story to its conclusion in approximately {n_words} "
        "words. Maintain the same tone, style, and narrative voice "
        "throughout. Do not summarize or describe what happens -- write the "
        "actual story text as it would appear on the page.\n\n"
        "STORY SO FAR:\n\n{story_so_far}";
    return text;
}

namespace {

std::string fill_slot(std::string text, const std::string& slot,
                      const std::string& value) {
    auto pos = text.find(slot);
    while (pos != std::string::npos) {
        text.replace(pos, slot.size(), value);
        pos = text.find(slot, pos + value.size());
    }
    return text;
}

std::string bearer_token(const EndpointConfig& endpoint) {
    const char* token = std::getenv(endpoint.auth_env_var.c_str());
    return token ? token : "";
}

struct SplitUrl {
    std::string host_part; // scheme://host[:port]
    std::string path_prefix;
};

SplitUrl split_base_url(const std::string& base_url) {
    auto scheme_end = base_url.find("://");
    std::size_t path_start =
        base_url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
    if (path_start == std::string::npos) return {base_url, ""};
    std::string prefix = base_url.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    return {base_url.substr(0, path_start), prefix};
}

// POST with retry/backoff. Retries transport failures and 408/429/5xx.
httplib::Result post_with_retries(const EndpointConfig& endpoint,
                                  const std::string& path,
                                  const std::string& body, int& retries_used) {
    SplitUrl url = split_base_url(endpoint.base_url);
    httplib::Client client(url.host_part);
    client.set_connection_timeout(endpoint.timeout_seconds);
    client.set_read_timeout(endpoint.timeout_seconds);
    httplib::Headers headers;
    std::string token = bearer_token(endpoint);
    if (!token.empty()) headers.emplace("Authorization", "Bearer " + token);

    retries_used = 0;
    httplib::Result result;
    for (int attempt = 0; attempt <= endpoint.max_retries; ++attempt) {
        if (attempt > 0) {
            ++retries_used;
            auto delay = std::chrono::milliseconds(
                endpoint.retry_base_ms * (1 << (attempt - 1)));
            std::this_thread::sleep_for(delay);
        }
        result = client.Post(url.path_prefix + path, headers, body,
                             "application/json");
        if (!result) continue; // transport failure
        int status = result->status;
        bool retryable = status == 408 || status == 429 || status >= 500;
        if (!retryable) return result;
        if (attempt == endpoint.max_retries) return result;
    }
    return result;
}

void check_response(const httplib::Result& result, const std::string& what) {
    if (!result) {
        throw Error(ErrorCode::transport_error,
                    what + " failed: " + httplib::to_string(result.error()));
    }
    if (result->status < 200 || result->status >= 300) {
        throw Error(ErrorCode::service_error,
                    what + " returned " + std::to_string(result->status) + ": " +
                        result->body);
    }
}

} // namespace

RequestPayload build_prompt(const std::vector<std::string>& prefix_sentences,
                            int target_words, PromptInterface interface) {
    if (prefix_sentences.empty()) {
        throw Error(ErrorCode::empty_prefix, "prefix has no sentences");
    }
    RequestPayload payload;
    payload.interface = interface;
    payload.target_words = target_words;
    std::string prefix = join_sentences(prefix_sentences);
    std::string user = fill_slot(continuation_user_template(), "{n_words}",
                                 std::to_string(target_words));
    switch (interface) {
    case PromptInterface::raw_prefix:
        payload.prompt = prefix;
        break;
    case PromptInterface::chat:
        payload.system_text = continuation_system_text();
        payload.user_text = fill_slot(user, "{story_so_far}", prefix);
        break;
    case PromptInterface::prompt_control:
        // Same task framing as chat, flattened to plain completion text:
        // system text, then user text carrying the prefix in its story slot.
        payload.prompt = continuation_system_text() + "\n\n" +
                         fill_slot(user, "{story_so_far}", prefix);
        break;
    }
    return payload;
}

GenerationResult fetch_continuation(const EndpointConfig& endpoint,
                                    const RequestPayload& payload,
                                    const DecodingConfig& decoding) {
    nlohmann::json body;
    body["model"] = endpoint.completion_model;
    body["temperature"] = decoding.temperature;
    body["top_p"] = decoding.top_p;
    body["max_tokens"] = decode_budget(payload.target_words, decoding);
    // No stop sequence and no decoding seed; generation ends at EOS or the
    // token budget.
    const bool chat = payload.interface == PromptInterface::chat;
    std::string path;
    if (chat) {
        path = "/v1/chat/completions";
        body["messages"] = nlohmann::json::array(
            {{{"role", "system"}, {"content", payload.system_text}},
             {{"role", "user"}, {"content", payload.user_text}}});
    } else {
        path = "/v1/completions";
        body["prompt"] = payload.prompt;
    }

    GenerationResult out;
    auto result = post_with_retries(endpoint, path, body.dump(), out.retries);
    check_response(result, "completion request");

    nlohmann::json response;
    try {
        response = nlohmann::json::parse(result->body);
        const auto& choice = response.at("choices").at(0);
        out.text = chat ? choice.at("message").at("content").get<std::string>()
                        : choice.at("text").get<std::string>();
        if (choice.contains("finish_reason") && !choice["finish_reason"].is_null()) {
            out.finish_reason = choice["finish_reason"].get<std::string>();
        }
        if (response.contains("id")) out.response_id = response["id"].get<std::string>();
        if (response.contains("usage")) {
            const auto& usage = response["usage"];
            out.prompt_tokens = usage.value("prompt_tokens", 0);
            out.completion_tokens = usage.value("completion_tokens", 0);
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::service_error,
                    std::string("malformed completion response: ") + e.what());
    }
    out.truncated = out.finish_reason == "length";
    return out;
}

std::vector<std::vector<double>> fetch_embeddings(const EndpointConfig& endpoint,
                                                  const std::vector<std::string>& sentences,
                                                  EmbeddingFacet facet,
                                                  int expected_dim) {
    if (sentences.empty()) {
        throw Error(ErrorCode::config_error, "empty sentence batch; no request issued");
    }
    if (expected_dim == 0) {
        expected_dim = facet == EmbeddingFacet::theme ? 3072 : 768;
    }
    nlohmann::json body;
    body["model"] = endpoint.embedding_model;
    body["input"] = sentences;
    if (facet == EmbeddingFacet::theme) {
        body["dimensions"] = expected_dim;
    }
    int retries = 0;
    auto result = post_with_retries(endpoint, "/v1/embeddings", body.dump(), retries);
    check_response(result, "embedding request");

    std::vector<std::vector<double>> vectors(sentences.size());
    std::vector<bool> filled(sentences.size(), false);
    try {
        auto response = nlohmann::json::parse(result->body);
        for (const auto& item : response.at("data")) {
            auto index = item.at("index").get<std::size_t>();
            if (index >= vectors.size()) {
                throw Error(ErrorCode::service_error,
                            "embedding index " + std::to_string(index) +
                                " out of range");
            }
            vectors[index] = item.at("embedding").get<std::vector<double>>();
            filled[index] = true;
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::service_error,
                    std::string("malformed embedding response: ") + e.what());
    }
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        if (!filled[i]) {
            throw Error(ErrorCode::service_error,
                        "no embedding returned for input " + std::to_string(i));
        }
        if (static_cast<int>(vectors[i].size()) != expected_dim) {
            throw Error(ErrorCode::dimension_mismatch,
                        "expected " + std::to_string(expected_dim) +
                            " dimensions, got " + std::to_string(vectors[i].size()) +
                            " for input " + std::to_string(i));
        }
        double norm_sq = 0.0;
        for (double v : vectors[i]) norm_sq += v * v;
        if (norm_sq > 0.0) {
            double inv = 1.0 / std::sqrt(norm_sq);
            for (double& v : vectors[i]) v *= inv;
        }
    }
    return vectors;
}

} // namespace flatkit
