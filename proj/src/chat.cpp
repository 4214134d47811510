#include "sievefl/chat.hpp"

#include "http_json.hpp"
#include "sievefl/errors.hpp"

#include <cctype>
#include <fstream>
#include <thread>

#include <nlohmann/json.hpp>

namespace sievefl {

using nlohmann::json;

HttpChatBackend::HttpChatBackend(HttpBackendConfig config) : config_(std::move(config)) {}

BackendReply HttpChatBackend::complete(const ChatRequest& request) {
    const json messages = json::array({{{"role", "system"}, {"content", request.system_text}},
                                       {{"role", "user"}, {"content", request.user_text}}});
    const bool ollama = config_.api == HttpBackendConfig::Api::Ollama;

    json body{{"model", request.model.empty() ? config_.model : request.model},
              {"messages", messages},
              {"stream", false}};
    if (ollama) {
        body["options"] = {{"temperature", request.sampling.temperature}};
        if (request.sampling.seed) body["options"]["seed"] = *request.sampling.seed;
    } else {
        body["temperature"] = request.sampling.temperature;
        if (request.sampling.seed) body["seed"] = *request.sampling.seed;
    }

    const auto reply = detail::post_json(config_.base_url,
                                         ollama ? "/api/chat" : "/v1/chat/completions", body,
                                         config_.timeout);
    if (reply.status < 200 || reply.status >= 300) {
        throw BackendError(reply.status, detail::excerpt(reply.body));
    }

    BackendReply out;
    try {
        const auto j = json::parse(reply.body);
        if (ollama) {
            out.text = j.at("message").at("content").get<std::string>();
            if (j.contains("prompt_eval_count")) out.prompt_tokens = j["prompt_eval_count"].get<std::uint64_t>();
            if (j.contains("eval_count")) out.completion_tokens = j["eval_count"].get<std::uint64_t>();
        } else {
            out.text = j.at("choices").at(0).at("message").at("content").get<std::string>();
            if (j.contains("usage")) {
                const auto& u = j["usage"];
                if (u.contains("prompt_tokens")) out.prompt_tokens = u["prompt_tokens"].get<std::uint64_t>();
                if (u.contains("completion_tokens")) out.completion_tokens = u["completion_tokens"].get<std::uint64_t>();
            }
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("unexpected chat reply shape: ") + e.what() + " in " +
                         detail::excerpt(reply.body));
    }
    return out;
}

// ---------------------------------------------------------------------------

namespace {

Stage parse_stage(const std::string& s) {
    if (s == "analysis") return Stage::Analysis;
    if (s == "screening") return Stage::Screening;
    if (s == "rerank") return Stage::Rerank;
    throw InputError("mock script: unknown stage '" + s + "'");
}

bool doc_id_matches(const std::string& rule_id, const std::string& request_id) {
    if (rule_id == request_id) return true;
    return rule_id.find('@') == std::string::npos && request_id.size() > rule_id.size() &&
           request_id.compare(0, rule_id.size(), rule_id) == 0 && request_id[rule_id.size()] == '@';
}

}  // namespace

MockChatBackend::MockChatBackend(const json& script) {
    if (!script.contains("rules") || !script["rules"].is_array()) {
        throw InputError("mock script must contain a \"rules\" array");
    }
    for (const auto& r : script["rules"]) {
        Rule rule;
        rule.stage = parse_stage(r.at("stage").get<std::string>());
        if (r.contains("bug_id")) rule.bug_id = r["bug_id"].get<std::string>();
        if (r.contains("doc_id")) rule.doc_id = r["doc_id"].get<std::string>();
        if (r.contains("responses")) rule.responses = r["responses"].get<std::vector<std::string>>();
        if (r.contains("response")) rule.responses.push_back(r["response"].get<std::string>());
        if (rule.responses.empty()) throw InputError("mock script rule without response");
        if (r.contains("tokens_in")) rule.tokens_in = r["tokens_in"].get<std::uint64_t>();
        if (r.contains("tokens_out")) rule.tokens_out = r["tokens_out"].get<std::uint64_t>();
        rule.transport_failures = r.value("transport_failures", 0u);
        rules_.push_back(std::move(rule));
    }
}

std::unique_ptr<MockChatBackend> MockChatBackend::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot read mock script '" + path.string() + "'");
    try {
        return std::make_unique<MockChatBackend>(json::parse(in));
    } catch (const json::exception& e) {
        throw InputError("malformed mock script '" + path.string() + "': " + e.what());
    }
}

const MockChatBackend::Rule* MockChatBackend::match(const ChatRequest& req, std::size_t& index) const {
    const Rule* best = nullptr;
    int best_score = -1;
    for (std::size_t i = 0; i < rules_.size(); ++i) {
        const auto& r = rules_[i];
        if (r.stage != req.stage) continue;
        if (r.bug_id && *r.bug_id != req.bug_id) continue;
        if (r.doc_id && !doc_id_matches(*r.doc_id, req.doc_id)) continue;
        const int score = (r.bug_id ? 1 : 0) + (r.doc_id ? 2 : 0);
        if (score > best_score) {
            best = &r;
            best_score = score;
            index = i;
        }
    }
    return best;
}

BackendReply MockChatBackend::complete(const ChatRequest& req) {
    std::lock_guard lock(mutex_);
    calls_.push_back({req.stage, req.bug_id, req.doc_id});

    std::size_t index = 0;
    const Rule* rule = match(req, index);
    if (!rule) {
        throw BackendError(404, "mock script has no response for stage=" +
                                    std::string(to_string(req.stage)) + " bug=" + req.bug_id +
                                    " doc=" + req.doc_id);
    }
    const std::string fingerprint = std::to_string(index) + '\x1f' + req.bug_id + '\x1f' + req.doc_id;
    const std::size_t n = served_[fingerprint]++;
    if (n < rule->transport_failures) {
        throw TransportError("mock transport failure " + std::to_string(n + 1));
    }
    const std::size_t k = n - rule->transport_failures;
    BackendReply reply;
    reply.text = rule->responses[std::min(k, rule->responses.size() - 1)];
    reply.prompt_tokens = rule->tokens_in;
    reply.completion_tokens = rule->tokens_out;
    return reply;
}

std::vector<MockChatBackend::Call> MockChatBackend::calls() const {
    std::lock_guard lock(mutex_);
    return calls_;
}

std::size_t MockChatBackend::call_count() const {
    std::lock_guard lock(mutex_);
    return calls_.size();
}

std::size_t MockChatBackend::call_count(const std::string& bug_id) const {
    std::lock_guard lock(mutex_);
    std::size_t n = 0;
    for (const auto& c : calls_) n += c.bug_id == bug_id;
    return n;
}

void MockChatBackend::clear_calls() {
    std::lock_guard lock(mutex_);
    calls_.clear();
    served_.clear();
}

// ---------------------------------------------------------------------------

Clock steady_clock_seconds() {
    return [] {
        using namespace std::chrono;
        return duration<double>(steady_clock::now().time_since_epoch()).count();
    };
}

Clock frozen_clock() {
    return [] { return 0.0; };
}

std::uint64_t estimate_tokens(std::string_view text) {
    std::uint64_t n = 0;
    bool in_word = false;
    for (char c : text) {
        const bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
        if (!space && !in_word) ++n;
        in_word = !space;
    }
    return n;
}

ChatExchange chat(const PromptRendering& rendering, ChatBackend& backend, const ChatOptions& options) {
    ChatExchange ex;
    ex.request.model = options.model.empty() ? backend.model_id() : options.model;
    ex.request.system_text = rendering.system_text;
    ex.request.user_text = rendering.user_text;
    ex.request.sampling = options.sampling;
    ex.request.stage = rendering.stage;
    ex.request.bug_id = options.bug_id;
    ex.request.doc_id = options.doc_id;

    const Clock clock = options.clock ? options.clock : steady_clock_seconds();
    const double start = clock();
    auto backoff = options.retry.initial_backoff;
    BackendReply reply;
    for (unsigned attempt = 0;; ++attempt) {
        ex.attempts = attempt + 1;
        try {
            reply = backend.complete(ex.request);
            break;
        } catch (const TransportError& e) {
            if (attempt >= options.retry.max_retries) {
                throw BackendUnavailable("backend unavailable after " +
                                         std::to_string(options.retry.max_retries) +
                                         " retries: " + e.what());
            }
            std::this_thread::sleep_for(backoff);
            backoff = std::chrono::milliseconds(static_cast<long long>(
                static_cast<double>(backoff.count()) * options.retry.backoff_multiplier));
        }
    }
    ex.latency_seconds = clock() - start;
    ex.response_text = std::move(reply.text);

    ex.tokens_estimated = !reply.prompt_tokens || !reply.completion_tokens;
    ex.tokens_in = reply.prompt_tokens
                       ? *reply.prompt_tokens
                       : estimate_tokens(ex.request.system_text) + estimate_tokens(ex.request.user_text);
    ex.tokens_out = reply.completion_tokens ? *reply.completion_tokens : estimate_tokens(ex.response_text);
    return ex;
}

}  // namespace sievefl
