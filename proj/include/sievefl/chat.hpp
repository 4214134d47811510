#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "sievefl/prompts.hpp"

namespace sievefl {

struct SamplingParams {
    double temperature = 0.0;
    std::optional<std::int64_t> seed;
};

struct ChatRequest {
    std::string model;
    std::string system_text;
    std::string user_text;
    SamplingParams sampling;
    // fingerprint fields; the mock backend keys its script on them
    Stage stage = Stage::Analysis;
    std::string bug_id;
    std::string doc_id;
};

struct BackendReply {
    std::string text;
    std::optional<std::uint64_t> prompt_tokens;
    std::optional<std::uint64_t> completion_tokens;
};

class ChatBackend {
public:
    virtual ~ChatBackend() = default;

    /// One request/response. Connection failures throw TransportError; a
    /// non-success HTTP status throws BackendError. Must be safe to call
    /// from several threads at once.
    virtual BackendReply complete(const ChatRequest& request) = 0;
    virtual std::string model_id() const = 0;
};

struct HttpBackendConfig {
    enum class Api { Ollama, OpenAI };

    std::string base_url = "http://localhost:11434";
    std::string model = "qwen3:30b";
    Api api = Api::Ollama;
    std::chrono::milliseconds timeout{600000};
};

/// Ollama /api/chat (non-streaming) or an OpenAI-style /v1/chat/completions.
class HttpChatBackend final : public ChatBackend {
public:
    explicit HttpChatBackend(HttpBackendConfig config);

    BackendReply complete(const ChatRequest& request) override;
    std::string model_id() const override { return config_.model; }

private:
    HttpBackendConfig config_;
};

/// Scripted backend for tests and offline runs.
///
/// Script (JSON):
///   {"rules": [
///      {"stage": "screening", "bug_id": "Shop-1", "doc_id": "com.shop.Cart#add(int)",
///       "response": "Verdict: Suspicious\nJustification: ...",
///       "tokens_in": 120, "tokens_out": 40},
///      {"stage": "screening", "responses": ["first reply", "second reply"]},
///      {"stage": "analysis", "transport_failures": 2, "response": "..."}
///   ]}
///
/// A rule matches when its stage equals the request stage and each of
/// bug_id / doc_id it names equals the request's. A doc_id without '@'
/// also matches any id of the form "<doc_id>@...". The most specific
/// matching rule wins (bug_id and doc_id both count), earlier rules first
/// among equals. "responses" are consumed in order per fingerprint, the
/// last one repeating. "transport_failures" makes the first N calls of a
/// fingerprint throw TransportError. No matching rule -> BackendError 404.
class MockChatBackend final : public ChatBackend {
public:
    struct Call {
        Stage stage;
        std::string bug_id;
        std::string doc_id;
    };

    explicit MockChatBackend(const nlohmann::json& script);
    static std::unique_ptr<MockChatBackend> from_file(const std::filesystem::path& path);

    BackendReply complete(const ChatRequest& request) override;
    std::string model_id() const override { return "mock"; }

    std::vector<Call> calls() const;
    std::size_t call_count() const;
    std::size_t call_count(const std::string& bug_id) const;
    void clear_calls();

private:
    struct Rule {
        Stage stage;
        std::optional<std::string> bug_id;
        std::optional<std::string> doc_id;
        std::vector<std::string> responses;
        std::optional<std::uint64_t> tokens_in;
        std::optional<std::uint64_t> tokens_out;
        unsigned transport_failures = 0;
    };

    const Rule* match(const ChatRequest& request, std::size_t& index) const;

    std::vector<Rule> rules_;
    mutable std::mutex mutex_;
    std::vector<Call> calls_;
    std::map<std::string, std::size_t> served_;  // per fingerprint
};

struct RetryPolicy {
    unsigned max_retries = 3;
    std::chrono::milliseconds initial_backoff{500};
    double backoff_multiplier = 2.0;
};

/// Seconds since an arbitrary epoch. Pipelines inject a frozen clock under
/// the mock backend so run records are byte-reproducible.
using Clock = std::function<double()>;
Clock steady_clock_seconds();
Clock frozen_clock();

struct ChatOptions {
    std::string model;
    SamplingParams sampling;
    RetryPolicy retry;
    std::string bug_id;
    std::string doc_id;
    Clock clock = steady_clock_seconds();
};

struct ChatExchange {
    ChatRequest request;
    std::string response_text;
    std::uint64_t tokens_in = 0;
    std::uint64_t tokens_out = 0;
    bool tokens_estimated = false;
    double latency_seconds = 0.0;
    unsigned attempts = 0;
};

/// Whitespace-delimited word count; the fallback token estimate.
std::uint64_t estimate_tokens(std::string_view text);

/// Sends a rendered prompt, retrying transport failures with exponential
/// backoff. Retries exhausted -> BackendUnavailable; HTTP errors propagate
/// as BackendError without retry.
ChatExchange chat(const PromptRendering& rendering, ChatBackend& backend,
                  const ChatOptions& options = {});

}  // namespace sievefl
