#include "sievefl/embedding.hpp"

#include "http_json.hpp"
#include "sievefl/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

namespace sievefl {

namespace {

double l2(std::span<const float> v) {
    double sum = 0.0;
    for (float x : v) sum += static_cast<double>(x) * static_cast<double>(x);
    return std::sqrt(sum);
}

double dot(std::span<const float> a, std::span<const float> b) {
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sum += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    }
    return sum;
}

double cosine_from_parts(double dot_product, double norm_a, double norm_b) {
    if (norm_a == 0.0 || norm_b == 0.0) return 0.0;
    return std::clamp(dot_product / (norm_a * norm_b), -1.0, 1.0);
}

constexpr std::uint64_t kFnvOffset = 14695981039346656037ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

std::uint64_t fnv1a(std::uint64_t h, std::string_view bytes) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= kFnvPrime;
    }
    return h;
}

}  // namespace

EmbeddingVector::EmbeddingVector(std::vector<float> values)
    : values_(std::move(values)), norm_(l2(values_)) {}

EmbeddingVector EmbeddingVector::normalized() const {
    if (is_zero()) return *this;
    std::vector<float> out(values_.size());
    for (std::size_t i = 0; i < values_.size(); ++i) {
        out[i] = static_cast<float>(static_cast<double>(values_[i]) / norm_);
    }
    return EmbeddingVector(std::move(out));
}

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.dimension() != b.dimension()) {
        throw ContractViolation("cosine_similarity: dimension mismatch (" +
                                std::to_string(a.dimension()) + " vs " +
                                std::to_string(b.dimension()) + ")");
    }
    return cosine_from_parts(dot(a.values(), b.values()), a.norm(), b.norm());
}

// ---------------------------------------------------------------------------

std::vector<std::string> embedding_tokens(std::string_view text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char c : text) {
        const auto u = static_cast<unsigned char>(c);
        if (std::isalnum(u)) {
            cur += static_cast<char>(std::tolower(u));
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

HashingEmbedder::HashingEmbedder(std::size_t dimension, std::uint64_t seed)
    : dimension_(dimension), seed_(seed) {
    if (dimension_ == 0) throw ConfigError("embedding dimension must be positive");
}

std::size_t HashingEmbedder::bucket(std::string_view token) const {
    std::uint64_t h = kFnvOffset;
    for (int shift = 0; shift < 64; shift += 8) {
        h ^= (seed_ >> shift) & 0xffU;
        h *= kFnvPrime;
    }
    return static_cast<std::size_t>(fnv1a(h, token) % dimension_);
}

EmbeddingVector HashingEmbedder::embed(std::string_view text) {
    std::vector<float> tf(dimension_, 0.0f);
    for (const auto& tok : embedding_tokens(text)) tf[bucket(tok)] += 1.0f;
    return EmbeddingVector(std::move(tf)).normalized();
}

std::string HashingEmbedder::identity() const {
    return "hashing:d=" + std::to_string(dimension_) + ":seed=" + std::to_string(seed_);
}

// ---------------------------------------------------------------------------

OllamaEmbedder::OllamaEmbedder(RemoteEmbedderConfig config) : config_(std::move(config)) {
    if (config_.dimension == 0) throw ConfigError("embedding dimension must be positive");
}

EmbeddingVector OllamaEmbedder::embed(std::string_view text) {
    const nlohmann::json body{{"model", config_.model}, {"prompt", std::string(text)}};
    const auto reply = detail::post_json(config_.base_url, "/api/embeddings", body, config_.timeout);
    if (reply.status < 200 || reply.status >= 300) {
        throw BackendError(reply.status, detail::excerpt(reply.body));
    }
    std::vector<float> values;
    try {
        values = nlohmann::json::parse(reply.body).at("embedding").get<std::vector<float>>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("embedding reply: ") + e.what());
    }
    if (values.size() != config_.dimension) {
        throw ConfigError("embedding model '" + config_.model + "' returned dimension " +
                          std::to_string(values.size()) + ", configured " +
                          std::to_string(config_.dimension));
    }
    return EmbeddingVector(std::move(values));
}

std::string OllamaEmbedder::identity() const {
    return "ollama:" + config_.model + ":d=" + std::to_string(config_.dimension);
}

// ---------------------------------------------------------------------------

VectorIndex::VectorIndex(std::size_t dimension, std::string provider_identity)
    : dimension_(dimension), provider_(std::move(provider_identity)) {
    if (dimension_ == 0) throw ConfigError("index dimension must be positive");
}

void VectorIndex::add(std::string doc_id, const EmbeddingVector& vector) {
    if (frozen_) throw ContractViolation("VectorIndex::add after freeze()");
    if (vector.dimension() != dimension_) {
        throw ConfigError("vector for " + doc_id + " has dimension " +
                          std::to_string(vector.dimension()) + ", index expects " +
                          std::to_string(dimension_));
    }
    if (find(doc_id) >= 0) throw ContractViolation("duplicate doc_id in index: " + doc_id);
    const auto unit = vector.normalized();
    data_.insert(data_.end(), unit.values().begin(), unit.values().end());
    rows_.emplace(doc_id, ids_.size());
    ids_.push_back(std::move(doc_id));
}

std::span<const float> VectorIndex::row(std::size_t r) const {
    if (r >= ids_.size()) throw std::out_of_range("VectorIndex::row");
    return {data_.data() + r * dimension_, dimension_};
}

long VectorIndex::find(std::string_view doc_id) const {
    const auto it = rows_.find(std::string(doc_id));
    return it == rows_.end() ? -1 : static_cast<long>(it->second);
}

double VectorIndex::similarity(const EmbeddingVector& query, std::string_view doc_id) const {
    const long r = find(doc_id);
    if (r < 0) throw ContractViolation("doc_id not in index: " + std::string(doc_id));
    if (query.dimension() != dimension_) throw ContractViolation("query dimension mismatch");
    const auto v = row(static_cast<std::size_t>(r));
    return cosine_from_parts(dot(v, query.values()), l2(v), query.norm());
}

std::vector<ScoredDoc> VectorIndex::top_k(const EmbeddingVector& query, std::size_t k) const {
    if (ids_.empty()) throw EmptyIndexError("top_k on an empty index");
    if (k == 0) throw ContractViolation("top_k requires k >= 1");
    if (query.dimension() != dimension_) {
        throw ContractViolation("query dimension " + std::to_string(query.dimension()) +
                                " does not match index dimension " + std::to_string(dimension_));
    }
    std::vector<ScoredDoc> scored;
    scored.reserve(ids_.size());
    for (std::size_t r = 0; r < ids_.size(); ++r) {
        const auto v = row(r);
        scored.push_back({ids_[r], cosine_from_parts(dot(v, query.values()), l2(v), query.norm())});
    }
    const auto better = [](const ScoredDoc& a, const ScoredDoc& b) {
        if (a.similarity != b.similarity) return a.similarity > b.similarity;
        return a.doc_id < b.doc_id;
    };
    const std::size_t n = std::min(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<long>(n), scored.end(), better);
    scored.resize(n);
    return scored;
}

void VectorIndex::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write index file '" + path.string() + "'");
    out << nlohmann::json{{"format", "sievefl-index"},
                          {"version", 1},
                          {"dimension", dimension_},
                          {"provider", provider_},
                          {"count", ids_.size()}}
               .dump()
        << '\n';
    for (std::size_t r = 0; r < ids_.size(); ++r) {
        const auto v = row(r);
        out << nlohmann::json{{"doc_id", ids_[r]}, {"vector", std::vector<float>(v.begin(), v.end())}}
                   .dump()
            << '\n';
    }
}

VectorIndex VectorIndex::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read index file '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line)) throw InputError("index file '" + path.string() + "' is empty");
    try {
        const auto header = nlohmann::json::parse(line);
        if (header.value("format", "") != "sievefl-index" || header.value("version", 0) != 1) {
            throw InputError("'" + path.string() + "' is not a version-1 sievefl index");
        }
        VectorIndex index(header.at("dimension").get<std::size_t>(),
                          header.at("provider").get<std::string>());
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const auto row = nlohmann::json::parse(line);
            // rows are already unit length; normalizing again is a no-op up to rounding,
            // so store them verbatim
            auto values = row.at("vector").get<std::vector<float>>();
            if (values.size() != index.dimension_) {
                throw InputError("index row has wrong dimension in '" + path.string() + "'");
            }
            auto id = row.at("doc_id").get<std::string>();
            if (!index.rows_.emplace(id, index.ids_.size()).second) {
                throw InputError("duplicate doc_id " + id + " in '" + path.string() + "'");
            }
            index.data_.insert(index.data_.end(), values.begin(), values.end());
            index.ids_.push_back(std::move(id));
        }
        if (index.ids_.size() != header.at("count").get<std::size_t>()) {
            throw InputError("index '" + path.string() + "' row count does not match header");
        }
        index.freeze();
        return index;
    } catch (const nlohmann::json::exception& e) {
        throw InputError("malformed index file '" + path.string() + "': " + e.what());
    }
}

}  // namespace sievefl
