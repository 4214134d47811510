#include "sievefl/config.hpp"

#include "sievefl/errors.hpp"

#include <cstdlib>
#include <fstream>

namespace sievefl {

using nlohmann::json;

namespace {

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config key '" + where + key + "' has the wrong type");
    }
}

void read_path(const json& j, const char* key, std::filesystem::path& out,
               const std::filesystem::path& base, const std::string& where) {
    std::string s;
    if (!j.contains(key)) return;
    read(j, key, s, where);
    std::filesystem::path p(s);
    out = p.is_relative() && !base.empty() ? base / p : p;
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError("config section '" + where + "' must be an object");
    for (const auto& [k, _] : j.items()) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || k == a;
        if (!ok) throw ConfigError("unknown config key '" + where + k + "'");
    }
}

}  // namespace

void apply_config_json(CliConfig& cfg, const json& j, const std::filesystem::path& base) {
    check_keys(j,
               {"variant", "w_cov", "w_sem", "tau", "k_f", "parallelism", "temperature", "seed",
                "max_retries", "initial_backoff_ms", "budgets", "source_root", "bugs_dir",
                "ground_truth", "output_dir", "source_glob", "bug_parallelism", "verbosity",
                "backend", "embedding"},
               "");
    auto& p = cfg.pipeline;
    if (j.contains("variant")) {
        std::string v;
        read(j, "variant", v, "");
        p.variant = parse_variant(v);
    }
    read(j, "w_cov", p.w_cov, "");
    read(j, "w_sem", p.w_sem, "");
    read(j, "tau", p.tau, "");
    read(j, "k_f", p.k_f, "");
    read(j, "parallelism", p.parallelism, "");
    read(j, "temperature", p.sampling.temperature, "");
    if (j.contains("seed")) {
        std::int64_t seed = 0;
        read(j, "seed", seed, "");
        p.sampling.seed = seed;
    }
    read(j, "max_retries", p.retry.max_retries, "");
    if (j.contains("initial_backoff_ms")) {
        long long ms = 0;
        read(j, "initial_backoff_ms", ms, "");
        p.retry.initial_backoff = std::chrono::milliseconds(ms);
    }
    if (j.contains("budgets")) {
        const auto& b = j["budgets"];
        check_keys(b, {"analysis_chars", "screening_chars", "rerank_chars"}, "budgets.");
        read(b, "analysis_chars", p.budgets.analysis_chars, "budgets.");
        read(b, "screening_chars", p.budgets.screening_chars, "budgets.");
        read(b, "rerank_chars", p.budgets.rerank_chars, "budgets.");
    }
    read_path(j, "source_root", cfg.source_root, base, "");
    read_path(j, "bugs_dir", cfg.bugs_dir, base, "");
    read_path(j, "ground_truth", cfg.ground_truth, base, "");
    read_path(j, "output_dir", cfg.output_dir, base, "");
    read(j, "source_glob", cfg.source_glob, "");
    read(j, "bug_parallelism", cfg.bug_parallelism, "");
    read(j, "verbosity", cfg.verbosity, "");

    if (j.contains("backend")) {
        const auto& b = j["backend"];
        check_keys(b, {"url", "api", "model", "timeout_seconds", "mock_script"}, "backend.");
        read(b, "url", cfg.backend.url, "backend.");
        read(b, "api", cfg.backend.api, "backend.");
        read(b, "model", cfg.backend.model, "backend.");
        read(b, "timeout_seconds", cfg.backend.timeout_seconds, "backend.");
        if (b.contains("mock_script")) {
            std::filesystem::path m;
            read_path(b, "mock_script", m, base, "backend.");
            cfg.backend.mock_script = m;
        }
    }
    if (j.contains("embedding")) {
        const auto& e = j["embedding"];
        check_keys(e, {"provider", "dimension", "seed", "model", "url"}, "embedding.");
        read(e, "provider", cfg.embedding.provider, "embedding.");
        read(e, "dimension", cfg.embedding.dimension, "embedding.");
        read(e, "seed", cfg.embedding.seed, "embedding.");
        read(e, "model", cfg.embedding.model, "embedding.");
        read(e, "url", cfg.embedding.url, "embedding.");
    }
}

CliConfig load_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("malformed config file '" + path.string() + "': " + e.what());
    }
    CliConfig cfg;
    apply_config_json(cfg, j, path.parent_path());
    return cfg;
}

void apply_environment(CliConfig& cfg) {
    if (const char* url = std::getenv(kBackendUrlEnv); url && *url) cfg.backend.url = url;
}

json provenance(const CliConfig& cfg) {
    json backend{{"api", cfg.backend.api}, {"model", cfg.backend.model}};
    if (cfg.backend.mock_script) {
        backend["mock_script"] = cfg.backend.mock_script->filename().string();
    } else {
        backend["url"] = cfg.backend.url;
    }
    return json{{"backend", backend},
                {"embedding", {{"provider", cfg.embedding.provider}, {"dimension", cfg.embedding.dimension}}}};
}

std::unique_ptr<ChatBackend> make_backend(const CliConfig& cfg) {
    if (cfg.backend.mock_script) return MockChatBackend::from_file(*cfg.backend.mock_script);
    HttpBackendConfig h;
    h.base_url = cfg.backend.url;
    h.model = cfg.backend.model;
    if (cfg.backend.api == "ollama") {
        h.api = HttpBackendConfig::Api::Ollama;
    } else if (cfg.backend.api == "openai") {
        h.api = HttpBackendConfig::Api::OpenAI;
    } else {
        throw ConfigError("unknown backend api '" + cfg.backend.api + "' (expected ollama or openai)");
    }
    h.timeout = std::chrono::milliseconds(static_cast<long long>(cfg.backend.timeout_seconds * 1000));
    return std::make_unique<HttpChatBackend>(h);
}

std::unique_ptr<EmbeddingProvider> make_embedder(const CliConfig& cfg) {
    const auto& e = cfg.embedding;
    if (e.provider == "hashing") return std::make_unique<HashingEmbedder>(e.dimension, e.seed);
    if (e.provider == "ollama") {
        RemoteEmbedderConfig r;
        r.base_url = e.url.empty() ? cfg.backend.url : e.url;
        r.model = e.model;
        r.dimension = e.dimension;
        return std::make_unique<OllamaEmbedder>(r);
    }
    throw ConfigError("unknown embedding provider '" + e.provider + "' (expected hashing or ollama)");
}

}  // namespace sievefl
