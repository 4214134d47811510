#include "sievefl/chat.hpp"
#include "sievefl/embedding.hpp"
#include "sievefl/errors.hpp"

#include <gtest/gtest.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include <thread>

using namespace sievefl;
using nlohmann::json;

namespace {

PromptRendering rendering(Stage stage = Stage::Analysis) {
    PromptRendering r;
    r.stage = stage;
    r.system_text = "sys";
    r.user_text = "say OK please";
    return r;
}

ChatOptions fast_options(unsigned retries = 3) {
    ChatOptions o;
    o.retry.max_retries = retries;
    o.retry.initial_backoff = std::chrono::milliseconds(1);
    return o;
}

// Local HTTP server on an ephemeral port, stopped on destruction.
class LocalServer {
public:
    LocalServer() {
        port_ = server.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~LocalServer() {
        server.stop();
        thread_.join();
    }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

    httplib::Server server;

private:
    int port_ = 0;
    std::thread thread_;
};

// A port with nothing listening on it.
std::string dead_url() {
    httplib::Server s;
    const int port = s.bind_to_any_port("127.0.0.1");
    s.stop();
    return "http://127.0.0.1:" + std::to_string(port);
}

}  // namespace

TEST(Mock, EchoAndScriptedTokenCounts) {
    MockChatBackend mock(json::parse(R"({"rules": [
        {"stage": "analysis", "response": "OK", "tokens_in": 120, "tokens_out": 40}]})"));
    const auto ex = chat(rendering(), mock);
    EXPECT_EQ(ex.response_text, "OK");
    EXPECT_EQ(ex.tokens_in, 120u);
    EXPECT_EQ(ex.tokens_out, 40u);
    EXPECT_FALSE(ex.tokens_estimated);
    EXPECT_EQ(ex.attempts, 1u);
}

TEST(Mock, EstimatedTokensWhenUnscripted) {
    MockChatBackend mock(json::parse(R"({"rules": [{"stage": "analysis", "response": "two words"}]})"));
    const auto ex = chat(rendering(), mock);
    EXPECT_TRUE(ex.tokens_estimated);
    EXPECT_EQ(ex.tokens_in, 4u);  // "sys" + "say OK please"
    EXPECT_EQ(ex.tokens_out, 2u);
}

TEST(Mock, MostSpecificRuleWinsAndPrefixMatchesDocId) {
    MockChatBackend mock(json::parse(R"js({"rules": [
        {"stage": "screening", "response": "default"},
        {"stage": "screening", "doc_id": "p.C#f(int)", "response": "by doc"},
        {"stage": "screening", "bug_id": "B-1", "doc_id": "p.C#f(int)", "response": "by bug and doc"},
        {"stage": "screening", "bug_id": "B-2", "response": "by bug"}]})js"));
    auto opts = fast_options();
    auto ask = [&](std::string bug, std::string doc) {
        opts.bug_id = std::move(bug);
        opts.doc_id = std::move(doc);
        return chat(rendering(Stage::Screening), mock, opts).response_text;
    };
    EXPECT_EQ(ask("B-1", "p.C#f(int)@C.java:3"), "by bug and doc");
    EXPECT_EQ(ask("B-2", "p.C#f(int)@C.java:3"), "by doc");
    EXPECT_EQ(ask("B-2", "p.C#g()@C.java:9"), "by bug");
    EXPECT_EQ(ask("B-3", "p.C#f(int,int)@C.java:5"), "default");
    EXPECT_EQ(mock.call_count(), 4u);
    EXPECT_EQ(mock.call_count("B-2"), 2u);
    // no analysis rule at all
    EXPECT_THROW(chat(rendering(Stage::Analysis), mock, opts), BackendError);
}

TEST(Mock, ResponsesAreConsumedPerFingerprint) {
    MockChatBackend mock(json::parse(R"({"rules": [{"stage": "rerank", "responses": ["first", "second"]}]})"));
    auto opts = fast_options();
    opts.bug_id = "A";
    EXPECT_EQ(chat(rendering(Stage::Rerank), mock, opts).response_text, "first");
    EXPECT_EQ(chat(rendering(Stage::Rerank), mock, opts).response_text, "second");
    EXPECT_EQ(chat(rendering(Stage::Rerank), mock, opts).response_text, "second");
    opts.bug_id = "B";
    EXPECT_EQ(chat(rendering(Stage::Rerank), mock, opts).response_text, "first");
}

TEST(Retry, TransientTransportFailuresAreRetried) {
    MockChatBackend mock(json::parse(R"({"rules": [
        {"stage": "analysis", "transport_failures": 2, "response": "OK"}]})"));
    const auto ex = chat(rendering(), mock, fast_options(3));
    EXPECT_EQ(ex.response_text, "OK");
    EXPECT_EQ(ex.attempts, 3u);
}

TEST(Retry, ExhaustedRetriesSurfaceBackendUnavailable) {
    for (unsigned n : {0u, 1u, 4u}) {
        MockChatBackend mock(json::parse(R"({"rules": [
            {"stage": "analysis", "transport_failures": 100, "response": "OK"}]})"));
        EXPECT_THROW(chat(rendering(), mock, fast_options(n)), BackendUnavailable);
        EXPECT_EQ(mock.call_count(), n + 1) << "retries=" << n;
    }
}

TEST(Retry, RemoteBackendDown) {
    HttpBackendConfig cfg;
    cfg.base_url = dead_url();
    cfg.timeout = std::chrono::milliseconds(2000);
    HttpChatBackend backend(cfg);
    EXPECT_THROW(backend.complete(ChatRequest{}), TransportError);
    EXPECT_THROW(chat(rendering(), backend, fast_options(2)), BackendUnavailable);
}

TEST(Http, OllamaWireFormat) {
    LocalServer srv;
    json seen;
    srv.server.Post("/api/chat", [&](const httplib::Request& req, httplib::Response& res) {
        seen = json::parse(req.body);
        res.set_content(R"({"message": {"role": "assistant", "content": "Verdict: Suspicious"},
                            "prompt_eval_count": 321, "eval_count": 12, "done": true})",
                        "application/json");
    });
    HttpBackendConfig cfg;
    cfg.base_url = srv.url();
    cfg.model = "qwen3:30b";
    HttpChatBackend backend(cfg);
    auto opts = fast_options();
    opts.sampling.temperature = 0.0;
    opts.sampling.seed = 7;
    const auto ex = chat(rendering(), backend, opts);
    EXPECT_EQ(ex.response_text, "Verdict: Suspicious");
    EXPECT_EQ(ex.tokens_in, 321u);
    EXPECT_EQ(ex.tokens_out, 12u);
    EXPECT_EQ(seen["model"], "qwen3:30b");
    EXPECT_EQ(seen["stream"], false);
    EXPECT_EQ(seen["messages"][0]["role"], "system");
    EXPECT_EQ(seen["messages"][1]["content"], "say OK please");
    EXPECT_EQ(seen["options"]["seed"], 7);
    EXPECT_EQ(seen["options"]["temperature"], 0.0);
}

TEST(Http, OpenAIWireFormat) {
    LocalServer srv;
    json seen;
    srv.server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        seen = json::parse(req.body);
        res.set_content(R"({"choices": [{"message": {"role": "assistant", "content": "1. A"}}],
                            "usage": {"prompt_tokens": 50, "completion_tokens": 3}})",
                        "application/json");
    });
    HttpBackendConfig cfg;
    cfg.base_url = srv.url();
    cfg.api = HttpBackendConfig::Api::OpenAI;
    HttpChatBackend backend(cfg);
    const auto ex = chat(rendering(), backend, fast_options());
    EXPECT_EQ(ex.response_text, "1. A");
    EXPECT_EQ(ex.tokens_in, 50u);
    EXPECT_EQ(ex.tokens_out, 3u);
    EXPECT_EQ(seen["temperature"], 0.0);
}

TEST(Http, NonSuccessStatusIsNotRetried) {
    LocalServer srv;
    int hits = 0;
    srv.server.Post("/api/chat", [&](const httplib::Request&, httplib::Response& res) {
        ++hits;
        res.status = 500;
        res.set_content("model exploded", "text/plain");
    });
    HttpBackendConfig cfg;
    cfg.base_url = srv.url();
    HttpChatBackend backend(cfg);
    try {
        chat(rendering(), backend, fast_options());
        FAIL() << "expected BackendError";
    } catch (const BackendError& e) {
        EXPECT_EQ(e.status(), 500);
        EXPECT_NE(std::string(e.what()).find("model exploded"), std::string::npos);
    }
    EXPECT_EQ(hits, 1);
}

TEST(Http, MalformedReplyIsAParseError) {
    LocalServer srv;
    srv.server.Post("/api/chat", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"unexpected": true})", "application/json");
    });
    HttpBackendConfig cfg;
    cfg.base_url = srv.url();
    HttpChatBackend backend(cfg);
    EXPECT_THROW(chat(rendering(), backend, fast_options()), ParseError);
}

TEST(RemoteEmbedder, DimensionMismatchIsAConfigError) {
    LocalServer srv;
    srv.server.Post("/api/embeddings", [](const httplib::Request& req, httplib::Response& res) {
        const auto body = json::parse(req.body);
        const std::size_t n = body["prompt"] == "short" ? 3 : 4;
        res.set_content(json{{"embedding", std::vector<float>(n, 0.5f)}}.dump(), "application/json");
    });
    RemoteEmbedderConfig cfg;
    cfg.base_url = srv.url();
    cfg.dimension = 4;
    OllamaEmbedder e(cfg);
    const auto v = e.embed("fine");
    EXPECT_EQ(v.dimension(), 4u);
    EXPECT_THROW(e.embed("short"), ConfigError);
    EXPECT_NE(e.identity(), HashingEmbedder().identity());
}

TEST(Clock, FrozenClockReportsZeroLatency) {
    MockChatBackend mock(json::parse(R"({"rules": [{"stage": "analysis", "response": "OK"}]})"));
    auto opts = fast_options();
    opts.clock = frozen_clock();
    EXPECT_EQ(chat(rendering(), mock, opts).latency_seconds, 0.0);
}
