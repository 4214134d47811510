#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "sievefl/chat.hpp"
#include "sievefl/corpus.hpp"
#include "sievefl/coverage.hpp"
#include "sievefl/embedding.hpp"
#include "sievefl/failure.hpp"
#include "sievefl/prompts.hpp"
#include "sievefl/response_parsing.hpp"

namespace sievefl {

/// V0: no coverage pruning. V1: hybrid pruning. V2: coverage-only pruning.
enum class Variant { V0, V1, V2 };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view text);  // "v0"/"V0", ...; ConfigError otherwise

struct PipelineConfig {
    Variant variant = Variant::V1;
    double w_cov = 0.6;
    double w_sem = 0.4;
    double tau = 0.05;
    std::size_t k_f = 10;
    unsigned parallelism = 1;  // concurrent Stage-4 calls
    PromptBudgets budgets;
    SamplingParams sampling;
    RetryPolicy retry;

    /// Copy with variant-forced settings applied (V2: w_cov = 1, w_sem = 0).
    PipelineConfig effective() const;
    /// Throws ConfigError on negative weights, weights not summing to 1,
    /// tau outside [0,1] or k_f == 0.
    void validate() const;
};

void to_json(nlohmann::json& j, const PipelineConfig& cfg);

struct Candidate {
    MethodDocument doc;
    double sigma = 0.0;                 // clamped to [0,1]
    std::optional<double> rho;          // absent when Stage 3 did not run
    std::optional<double> hybrid_score; // w_cov * rho + w_sem * sigma
    bool overload_ambiguous = false;    // several report entries matched; never pruned
    bool pruned = false;
    std::optional<ScreeningVerdict> stage4_verdict;
    std::optional<std::size_t> final_rank;
};

/// w_cov * rho + w_sem * sigma.
double hybrid_score(double rho, double sigma, double w_cov, double w_sem);

/// Strict "falls below": s < tau prunes, s == tau is kept.
bool below_threshold(double score, double tau);

/// Lookups over an extracted corpus.
class Corpus {
public:
    explicit Corpus(std::vector<MethodDocument> docs);

    const std::vector<MethodDocument>& documents() const noexcept { return docs_; }
    const MethodDocument* find(const std::string& doc_id) const;
    /// Documents of one file, in start_line order.
    std::vector<const MethodDocument*> in_file(const std::string& file_path) const;

private:
    std::vector<MethodDocument> docs_;
    std::unordered_map<std::string, std::size_t> by_id_;
    std::map<std::string, std::vector<std::size_t>> by_file_;
};

struct RetrievalResult {
    std::vector<ScoredDoc> top;                // top-k_f method documents
    std::vector<std::string> suspicious_files; // in order of first retrieval
    std::vector<Candidate> candidates;         // every method of those files, sigma set
};

struct StageCost {
    std::size_t calls = 0;
    std::uint64_t tokens_in = 0;
    std::uint64_t tokens_out = 0;
    double latency_seconds = 0.0;
    bool tokens_estimated = false;

    void add(const ChatExchange& ex);
};

struct RunRecord {
    static constexpr int kSchemaVersion = 1;

    std::string bug_id;
    std::string project;
    Variant variant = Variant::V1;
    bool completed = false;
    std::string error;
    FailureDescription failure_description;
    std::vector<std::string> suspicious_files;
    std::size_t candidates_before_pruning = 0;
    std::size_t candidates_after_pruning = 0;
    double reduction_ratio = 0.0;
    std::vector<Candidate> candidates;
    std::vector<std::string> stage4_order;
    std::vector<std::string> confirmed_suspects;
    std::vector<std::string> ranked_methods;
    std::map<std::string, StageCost> costs;  // "analysis", "screening", "rerank"
    double wall_clock_seconds = 0.0;
    bool fallback_used = false;
    std::vector<std::string> anomalies;
    nlohmann::json config;

    std::uint64_t tokens_in() const;
    std::uint64_t tokens_out() const;
};

/// Project name of a bug id ("Lang-12" -> "Lang").
std::string project_of(std::string_view bug_id);

nlohmann::json to_json(const RunRecord& record);
/// Throws InputError on a schema-version mismatch or malformed record.
RunRecord record_from_json(const nlohmann::json& j);

/// Line-delimited run log.
void append_run_log(const std::filesystem::path& path, const RunRecord& record);
std::vector<RunRecord> read_run_log(const std::filesystem::path& path);

/// Everything a run needs besides the bug and the configuration.
struct PipelineResources {
    const Corpus& corpus;
    const VectorIndex& index;
    EmbeddingProvider& embedder;
    ChatBackend& backend;
    Clock clock = steady_clock_seconds();
    nlohmann::json provenance = nlohmann::json::object();  // merged into RunRecord::config
};

FailureDescription stage1_analyze(const FailureContext& ctx, ChatBackend& backend,
                                  const PipelineConfig& cfg, StageCost& cost,
                                  const Clock& clock = steady_clock_seconds());

/// Throws EmptyIndexError / ConfigError (index and corpus disagree).
RetrievalResult stage2_retrieve(const FailureDescription& desc, const VectorIndex& index,
                                const Corpus& corpus, EmbeddingProvider& embedder, std::size_t k_f);

struct PruneOutcome {
    bool applied = false;
    bool fallback_used = false;
};

/// Scores and marks candidates. V0 or a missing report leaves everything in
/// place (fallback_used is set for V1/V2 without a report).
PruneOutcome stage3_prune(std::vector<Candidate>& candidates, const CoverageReport* report,
                          const PipelineConfig& cfg);

/// Candidates that survived Stage 3, ordered by descending hybrid score
/// (descending sigma when unscored), ties by doc_id.
std::vector<std::size_t> screening_order(const std::vector<Candidate>& candidates);

/// One isolated chat per survivor. Fills stage4_verdict; returns the indices
/// judged suspicious, in `order`'s order. Backend failures and unparseable
/// verdicts (after one re-ask) count as not suspicious and are logged.
std::vector<std::size_t> stage4_screen(std::vector<Candidate>& candidates,
                                       const std::vector<std::size_t>& order,
                                       const FailureDescription& desc, const FailureContext& ctx,
                                       ChatBackend& backend, const PipelineConfig& cfg,
                                       StageCost& cost, std::vector<std::string>& anomalies,
                                       const Clock& clock = steady_clock_seconds());

/// Orders the confirmed suspects. Zero or one suspect: returned as-is, no
/// call. Unparseable ranking after one re-ask, or a backend failure, keeps
/// the input order.
std::vector<std::size_t> stage5_rerank(const std::vector<Candidate>& candidates,
                                       const std::vector<std::size_t>& suspects,
                                       const FailureDescription& desc, const FailureContext& ctx,
                                       ChatBackend& backend, const PipelineConfig& cfg,
                                       StageCost& cost, std::vector<std::string>& anomalies,
                                       const Clock& clock = steady_clock_seconds());

/// Stages 1-5 for one bug. Never throws for bug-level problems: a Stage-1
/// or Stage-2 failure yields a record with completed == false.
RunRecord run_bug(const FailureContext& ctx, const PipelineResources& res, const PipelineConfig& cfg);

}  // namespace sievefl
