#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "sievefl/chat.hpp"
#include "sievefl/embedding.hpp"
#include "sievefl/pipeline.hpp"

namespace sievefl {

inline constexpr const char* kBackendUrlEnv = "SIEVEFL_BACKEND_URL";

struct EmbeddingSettings {
    std::string provider = "hashing";  // "hashing" or "ollama"
    std::size_t dimension = 384;
    std::uint64_t seed = HashingEmbedder::kDefaultSeed;
    std::string model = "all-minilm";
    std::string url;  // empty: same as the chat backend
};

struct BackendSettings {
    std::string url = "http://localhost:11434";
    std::string api = "ollama";  // "ollama" or "openai"
    std::string model = "qwen3:30b";
    double timeout_seconds = 600;
    std::optional<std::filesystem::path> mock_script;
};

/// Everything the command-line tool needs. Load order: defaults, config
/// file, environment, flags.
struct CliConfig {
    PipelineConfig pipeline;
    BackendSettings backend;
    EmbeddingSettings embedding;
    std::filesystem::path source_root = ".";
    std::filesystem::path bugs_dir = "bugs";
    std::filesystem::path ground_truth = "ground_truth.json";
    std::filesystem::path output_dir = "out";
    std::string source_glob = "**/*.java";
    unsigned bug_parallelism = 1;
    int verbosity = 1;

    std::filesystem::path corpus_path() const { return output_dir / "corpus.jsonl"; }
    std::filesystem::path index_path() const { return output_dir / "index.jsonl"; }
};

/// Applies the keys present in `j` on top of `cfg`. Unknown keys and wrong
/// types throw ConfigError. Relative paths are resolved against `base_dir`.
void apply_config_json(CliConfig& cfg, const nlohmann::json& j,
                       const std::filesystem::path& base_dir = {});
CliConfig load_config_file(const std::filesystem::path& path);
/// Overrides the backend URL from the environment when it is set.
void apply_environment(CliConfig& cfg);

/// The effective configuration as written into run logs.
nlohmann::json provenance(const CliConfig& cfg);

std::unique_ptr<ChatBackend> make_backend(const CliConfig& cfg);
std::unique_ptr<EmbeddingProvider> make_embedder(const CliConfig& cfg);

}  // namespace sievefl
