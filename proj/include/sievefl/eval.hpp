#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "sievefl/corpus.hpp"
#include "sievefl/pipeline.hpp"

namespace sievefl {

/// A ranked or retained method, reduced to what ground truth can match on.
struct MethodRef {
    MethodKey key;
    std::string file_path;

    auto operator<=>(const MethodRef&) const = default;
    bool operator==(const MethodRef&) const = default;
};

MethodRef method_ref(const MethodDocument& doc);
/// Recovers class, method, arity and file from a doc_id. Throws InputError.
MethodRef parse_doc_id(std::string_view doc_id);

struct GroundTruthMethod {
    MethodKey key;
    std::optional<std::string> file_path;  // matched as a path suffix

    bool matches(const MethodRef& ref) const;
};

using GroundTruth = std::map<std::string, std::vector<GroundTruthMethod>>;

/// JSON object: bug_id -> ["pkg.Class#method(arity)", "pkg.Class#m(0)@src/.../Class.java", ...].
/// Throws InputError on malformed entries or a bug without methods.
GroundTruth parse_ground_truth(const nlohmann::json& j);
GroundTruth load_ground_truth(const std::filesystem::path& path);

inline constexpr std::array<std::size_t, 4> kTopK{1, 3, 5, 10};

/// True iff one of the first min(k, |ranked|) entries matches a ground-truth
/// method. Throws ContractViolation when k == 0.
bool topk_hit(const std::vector<MethodRef>& ranked, const std::vector<GroundTruthMethod>& truth,
              std::size_t k);

/// 1/r for the first matching position r, 0 when nothing matches.
double reciprocal_rank(const std::vector<MethodRef>& ranked, const std::vector<GroundTruthMethod>& truth);

struct PruningSafety {
    bool strict_loss = false;  // some GT method was in `before` but not in `after`
    double gt_recall = 0.0;    // |GT in after| / |GT|
};

/// Throws ContractViolation unless every element of `after` occurs in `before`.
PruningSafety pruning_safety(const std::vector<MethodRef>& before, const std::vector<MethodRef>& after,
                             const std::vector<GroundTruthMethod>& truth);

struct BugMetrics {
    std::string bug_id;
    std::string project;
    bool completed = false;
    std::array<bool, kTopK.size()> hit_at{};  // parallel to kTopK
    bool hit_anywhere = false;
    double reciprocal_rank = 0.0;
    double reduction_ratio = 0.0;
    std::size_t candidates_before = 0;
    std::size_t candidates_after = 0;
    bool strict_loss = false;
    double gt_recall = 0.0;
    std::uint64_t tokens_in = 0;
    std::uint64_t tokens_out = 0;
    double wall_clock_seconds = 0.0;
    bool fallback_used = false;
};

/// Throws InputError when the bug has no ground-truth entry.
BugMetrics evaluate(const RunRecord& record, const GroundTruth& truth);

struct Summary {
    std::string scope;  // "overall" or a project name
    std::size_t bugs = 0;
    std::size_t completed = 0;
    std::array<std::size_t, kTopK.size()> hits{};
    std::size_t hits_anywhere = 0;
    double mrr = 0.0;                    // completed runs only
    double mrr_with_failures = 0.0;      // failed runs contribute 0
    double mean_reduction_ratio = 0.0;   // mean of per-bug ratios
    double reduction_of_means = 0.0;     // 1 - mean(after) / mean(before)
    double mean_candidates_before = 0.0;
    double mean_candidates_after = 0.0;
    double mean_tokens_in = 0.0;
    double mean_tokens_out = 0.0;
    double mean_wall_clock_seconds = 0.0;
    std::size_t strict_losses = 0;
    double strict_loss_rate = 0.0;       // over completed runs
    double mean_gt_recall = 0.0;
    std::size_t fallbacks = 0;

    double top_rate(std::size_t k_index) const;                // completed only, in [0,1]
    double top_rate_with_failures(std::size_t k_index) const;  // over all bugs
};

struct AggregateReport {
    Summary overall;
    std::map<std::string, Summary> per_project;
};

/// Throws ContractViolation on an empty input.
Summary summarize(const std::vector<BugMetrics>& metrics, std::string scope);
AggregateReport aggregate(const std::vector<BugMetrics>& metrics);

struct PairedReport {
    std::string label_a;
    std::string label_b;
    std::vector<std::string> shared_bugs;  // both completed, sorted
    Summary a;
    Summary b;
};

/// Restricts both sides to the bugs completed in both. Throws InputError
/// when that set is empty.
PairedReport paired_compare(const std::vector<BugMetrics>& a, const std::vector<BugMetrics>& b,
                            std::string label_a = "A", std::string label_b = "B");

struct MetricRow {
    std::string name;
    double a = 0.0;
    double b = 0.0;
    double delta() const { return b - a; }
};

/// The compared figures, in report order (percentages as 0-100).
std::vector<MetricRow> paired_rows(const PairedReport& report);

std::string format_aggregate(const AggregateReport& report);
std::string format_paired(const PairedReport& report);
nlohmann::json to_json(const Summary& s);
nlohmann::json to_json(const AggregateReport& report);
nlohmann::json to_json(const PairedReport& report);

/// Acceptance gates for CI; unset thresholds are not checked.
struct Gates {
    std::optional<double> min_top1;              // fraction, completed runs
    std::optional<double> min_mrr;
    std::optional<double> max_strict_loss_rate;
    std::optional<double> min_mean_reduction;

    /// Human-readable violations; empty when all gates pass.
    std::vector<std::string> check(const Summary& s) const;
};

/// One record per bug; a later record for the same bug replaces an earlier one.
std::vector<RunRecord> latest_per_bug(std::vector<RunRecord> records);

}  // namespace sievefl
