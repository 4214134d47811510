#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace sievefl {

/// Dense embedding. Values are stored as given; `norm` is the Euclidean norm
/// at construction time.
class EmbeddingVector {
public:
    EmbeddingVector() = default;
    explicit EmbeddingVector(std::vector<float> values);

    std::size_t dimension() const noexcept { return values_.size(); }
    double norm() const noexcept { return norm_; }
    bool is_zero() const noexcept { return norm_ == 0.0; }
    std::span<const float> values() const noexcept { return values_; }

    /// Unit-length copy; the zero vector stays zero.
    EmbeddingVector normalized() const;

    bool operator==(const EmbeddingVector& other) const { return values_ == other.values_; }

private:
    std::vector<float> values_;
    double norm_ = 0.0;
};

/// Inner product of the L2-normalized inputs, in [-1, 1]; 0 if either input
/// is the zero vector. Throws ContractViolation on dimension mismatch.
double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;

    virtual EmbeddingVector embed(std::string_view text) = 0;
    virtual std::size_t dimension() const = 0;
    /// Written into persisted indexes; queries must come from the same identity.
    virtual std::string identity() const = 0;
};

/// Network-free embedder: lowercase, split on non-alphanumerics, hash each
/// token into one of D buckets (FNV-1a, seeded), weight by term frequency,
/// L2-normalize. Pure: same text, same vector.
class HashingEmbedder final : public EmbeddingProvider {
public:
    static constexpr std::uint64_t kDefaultSeed = 0x5eedf1ULL;

    explicit HashingEmbedder(std::size_t dimension = 384, std::uint64_t seed = kDefaultSeed);

    EmbeddingVector embed(std::string_view text) override;
    std::size_t dimension() const override { return dimension_; }
    std::string identity() const override;

    std::size_t bucket(std::string_view token) const;

private:
    std::size_t dimension_;
    std::uint64_t seed_;
};

/// Lowercased alphanumeric tokens, in order of appearance.
std::vector<std::string> embedding_tokens(std::string_view text);

struct RemoteEmbedderConfig {
    std::string base_url = "http://localhost:11434";
    std::string model = "all-minilm";
    std::size_t dimension = 384;
    std::chrono::milliseconds timeout{30000};
};

/// Ollama-compatible embeddings route: POST {base}/api/embeddings with
/// {"model", "prompt"}; reply {"embedding": [...]}.
class OllamaEmbedder final : public EmbeddingProvider {
public:
    explicit OllamaEmbedder(RemoteEmbedderConfig config);

    EmbeddingVector embed(std::string_view text) override;
    std::size_t dimension() const override { return config_.dimension; }
    std::string identity() const override;

private:
    RemoteEmbedderConfig config_;
};

struct ScoredDoc {
    std::string doc_id;
    double similarity = 0.0;

    bool operator==(const ScoredDoc&) const = default;
};

/// Exact flat index over L2-normalized vectors. Single writer until freeze();
/// afterwards read-only and safe to query from many threads.
class VectorIndex {
public:
    VectorIndex(std::size_t dimension, std::string provider_identity);

    void add(std::string doc_id, const EmbeddingVector& vector);
    void freeze() noexcept { frozen_ = true; }
    bool frozen() const noexcept { return frozen_; }

    std::size_t size() const noexcept { return ids_.size(); }
    bool empty() const noexcept { return ids_.empty(); }
    std::size_t dimension() const noexcept { return dimension_; }
    const std::string& provider_identity() const noexcept { return provider_; }

    const std::string& doc_id(std::size_t row) const { return ids_.at(row); }
    std::span<const float> row(std::size_t row) const;
    /// Row number of a doc_id, or -1.
    long find(std::string_view doc_id) const;

    /// Cosine similarity between `query` and one indexed document.
    double similarity(const EmbeddingVector& query, std::string_view doc_id) const;

    /// Highest-similarity entries, descending, ties by ascending doc_id.
    /// Returns min(k, size()) entries; throws EmptyIndexError if the index is empty.
    std::vector<ScoredDoc> top_k(const EmbeddingVector& query, std::size_t k) const;

    /// Text sidecar: a JSON header line (dimension, provider, count) followed
    /// by one {"doc_id", "vector"} line per row.
    void save(const std::filesystem::path& path) const;
    static VectorIndex load(const std::filesystem::path& path);

private:
    std::size_t dimension_;
    std::string provider_;
    std::vector<std::string> ids_;
    std::unordered_map<std::string, std::size_t> rows_;
    std::vector<float> data_;  // row-major, normalized
    bool frozen_ = false;
};

}  // namespace sievefl
