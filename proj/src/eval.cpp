#include "sievefl/eval.hpp"

#include "sievefl/errors.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace sievefl {

using nlohmann::json;

MethodRef method_ref(const MethodDocument& doc) { return {method_key(doc), doc.file_path}; }

MethodRef parse_doc_id(std::string_view id) {
    const auto hash = id.find('#');
    const auto open = hash == std::string_view::npos ? hash : id.find('(', hash);
    const auto close = open == std::string_view::npos ? open : id.find(")@", open);
    const auto colon = id.rfind(':');
    if (close == std::string_view::npos || colon == std::string_view::npos || colon < close + 2) {
        throw InputError("malformed doc_id '" + std::string(id) + "'");
    }
    MethodRef ref;
    ref.key.class_name = std::string(id.substr(0, hash));
    ref.key.method_name = std::string(id.substr(hash + 1, open - hash - 1));
    const auto params = id.substr(open + 1, close - open - 1);
    ref.key.arity = params.empty() ? 0 : 1 + static_cast<std::size_t>(std::count(params.begin(), params.end(), ','));
    ref.file_path = std::string(id.substr(close + 2, colon - close - 2));
    return ref;
}

namespace {

bool path_suffix(std::string_view path, std::string_view suffix) {
    if (suffix.size() > path.size()) return false;
    if (path.substr(path.size() - suffix.size()) != suffix) return false;
    return suffix.size() == path.size() || path[path.size() - suffix.size() - 1] == '/' ||
           suffix.front() == '/';
}

bool any_match(const MethodRef& ref, const std::vector<GroundTruthMethod>& truth) {
    return std::any_of(truth.begin(), truth.end(), [&](const auto& g) { return g.matches(ref); });
}

}  // namespace

bool GroundTruthMethod::matches(const MethodRef& ref) const {
    return key == ref.key && (!file_path || path_suffix(ref.file_path, *file_path));
}

GroundTruth parse_ground_truth(const json& j) {
    if (!j.is_object()) throw InputError("ground truth must be a JSON object of bug_id -> [methods]");
    GroundTruth gt;
    for (const auto& [bug, methods] : j.items()) {
        if (!methods.is_array() || methods.empty()) {
            throw InputError("ground truth for " + bug + " must be a non-empty list");
        }
        auto& out = gt[bug];
        for (const auto& m : methods) {
            if (!m.is_string()) throw InputError("ground truth for " + bug + " contains a non-string entry");
            const auto text = m.get<std::string>();
            GroundTruthMethod g;
            const auto at = text.find('@');
            g.key = MethodKey::parse(std::string_view(text).substr(0, at));
            if (at != std::string::npos) g.file_path = text.substr(at + 1);
            out.push_back(std::move(g));
        }
    }
    return gt;
}

GroundTruth load_ground_truth(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot read ground truth '" + path.string() + "'");
    try {
        return parse_ground_truth(json::parse(in));
    } catch (const json::exception& e) {
        throw InputError("malformed ground truth '" + path.string() + "': " + e.what());
    }
}

bool topk_hit(const std::vector<MethodRef>& ranked, const std::vector<GroundTruthMethod>& truth,
              std::size_t k) {
    if (k == 0) throw ContractViolation("topk_hit: k must be at least 1");
    const auto n = std::min(k, ranked.size());
    for (std::size_t i = 0; i < n; ++i) {
        if (any_match(ranked[i], truth)) return true;
    }
    return false;
}

double reciprocal_rank(const std::vector<MethodRef>& ranked, const std::vector<GroundTruthMethod>& truth) {
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        if (any_match(ranked[i], truth)) return 1.0 / static_cast<double>(i + 1);
    }
    return 0.0;
}

PruningSafety pruning_safety(const std::vector<MethodRef>& before, const std::vector<MethodRef>& after,
                             const std::vector<GroundTruthMethod>& truth) {
    const std::set<MethodRef> before_set(before.begin(), before.end());
    for (const auto& r : after) {
        if (!before_set.count(r)) {
            throw ContractViolation("pruning_safety: " + r.key.to_string() + " survived but was never a candidate");
        }
    }
    PruningSafety out;
    if (truth.empty()) return out;
    std::size_t kept = 0;
    for (const auto& g : truth) {
        const bool in_before = std::any_of(before.begin(), before.end(), [&](const auto& r) { return g.matches(r); });
        const bool in_after = std::any_of(after.begin(), after.end(), [&](const auto& r) { return g.matches(r); });
        if (in_before && !in_after) out.strict_loss = true;
        kept += in_after;
    }
    out.gt_recall = static_cast<double>(kept) / static_cast<double>(truth.size());
    return out;
}

BugMetrics evaluate(const RunRecord& record, const GroundTruth& truth) {
    const auto it = truth.find(record.bug_id);
    if (it == truth.end()) throw InputError("no ground truth for bug " + record.bug_id);
    const auto& gt = it->second;

    BugMetrics m;
    m.bug_id = record.bug_id;
    m.project = record.project.empty() ? project_of(record.bug_id) : record.project;
    m.completed = record.completed;
    m.reduction_ratio = record.reduction_ratio;
    m.candidates_before = record.candidates_before_pruning;
    m.candidates_after = record.candidates_after_pruning;
    m.tokens_in = record.tokens_in();
    m.tokens_out = record.tokens_out();
    m.wall_clock_seconds = record.wall_clock_seconds;
    m.fallback_used = record.fallback_used;
    if (!record.completed) return m;

    std::vector<MethodRef> ranked;
    for (const auto& id : record.ranked_methods) ranked.push_back(parse_doc_id(id));
    for (std::size_t i = 0; i < kTopK.size(); ++i) m.hit_at[i] = topk_hit(ranked, gt, kTopK[i]);
    m.reciprocal_rank = reciprocal_rank(ranked, gt);
    m.hit_anywhere = m.reciprocal_rank > 0.0;

    std::vector<MethodRef> before, after;
    for (const auto& c : record.candidates) {
        before.push_back(method_ref(c.doc));
        if (!c.pruned) after.push_back(method_ref(c.doc));
    }
    const auto safety = pruning_safety(before, after, gt);
    m.strict_loss = safety.strict_loss;
    m.gt_recall = safety.gt_recall;
    return m;
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

double Summary::top_rate(std::size_t k) const {
    return completed ? static_cast<double>(hits.at(k)) / static_cast<double>(completed) : 0.0;
}

double Summary::top_rate_with_failures(std::size_t k) const {
    return bugs ? static_cast<double>(hits.at(k)) / static_cast<double>(bugs) : 0.0;
}

Summary summarize(const std::vector<BugMetrics>& metrics, std::string scope) {
    if (metrics.empty()) throw ContractViolation("summarize: no bugs");
    Summary s;
    s.scope = std::move(scope);
    s.bugs = metrics.size();
    double rr = 0, ratio = 0, before = 0, after = 0, tin = 0, tout = 0, wall = 0, recall = 0;
    for (const auto& m : metrics) {
        if (!m.completed) continue;
        ++s.completed;
        for (std::size_t i = 0; i < kTopK.size(); ++i) s.hits[i] += m.hit_at[i];
        s.hits_anywhere += m.hit_anywhere;
        rr += m.reciprocal_rank;
        ratio += m.reduction_ratio;
        before += static_cast<double>(m.candidates_before);
        after += static_cast<double>(m.candidates_after);
        tin += static_cast<double>(m.tokens_in);
        tout += static_cast<double>(m.tokens_out);
        wall += m.wall_clock_seconds;
        recall += m.gt_recall;
        s.strict_losses += m.strict_loss;
        s.fallbacks += m.fallback_used;
    }
    if (s.completed) {
        const double n = static_cast<double>(s.completed);
        s.mrr = rr / n;
        s.mean_reduction_ratio = ratio / n;
        s.mean_candidates_before = before / n;
        s.mean_candidates_after = after / n;
        s.reduction_of_means = before > 0 ? 1.0 - after / before : 0.0;
        s.mean_tokens_in = tin / n;
        s.mean_tokens_out = tout / n;
        s.mean_wall_clock_seconds = wall / n;
        s.mean_gt_recall = recall / n;
        s.strict_loss_rate = static_cast<double>(s.strict_losses) / n;
    }
    s.mrr_with_failures = rr / static_cast<double>(s.bugs);
    return s;
}

AggregateReport aggregate(const std::vector<BugMetrics>& metrics) {
    AggregateReport r;
    r.overall = summarize(metrics, "overall");
    std::map<std::string, std::vector<BugMetrics>> by_project;
    for (const auto& m : metrics) by_project[m.project].push_back(m);
    for (const auto& [p, ms] : by_project) r.per_project.emplace(p, summarize(ms, p));
    return r;
}

PairedReport paired_compare(const std::vector<BugMetrics>& a, const std::vector<BugMetrics>& b,
                            std::string label_a, std::string label_b) {
    std::set<std::string> done_a, done_b;
    for (const auto& m : a) {
        if (m.completed) done_a.insert(m.bug_id);
    }
    for (const auto& m : b) {
        if (m.completed) done_b.insert(m.bug_id);
    }
    PairedReport r;
    r.label_a = std::move(label_a);
    r.label_b = std::move(label_b);
    std::set_intersection(done_a.begin(), done_a.end(), done_b.begin(), done_b.end(),
                          std::back_inserter(r.shared_bugs));
    if (r.shared_bugs.empty()) {
        throw InputError("paired comparison: no bug completed under both " + r.label_a + " and " + r.label_b);
    }
    const std::set<std::string> shared(r.shared_bugs.begin(), r.shared_bugs.end());
    auto restrict = [&](const std::vector<BugMetrics>& ms) {
        std::map<std::string, BugMetrics> keep;
        for (const auto& m : ms) {
            if (m.completed && shared.count(m.bug_id)) keep[m.bug_id] = m;
        }
        std::vector<BugMetrics> out;
        for (auto& [_, m] : keep) out.push_back(std::move(m));
        return out;
    };
    r.a = summarize(restrict(a), r.label_a);
    r.b = summarize(restrict(b), r.label_b);
    return r;
}

std::vector<MetricRow> paired_rows(const PairedReport& r) {
    std::vector<MetricRow> rows;
    for (std::size_t i = 0; i < kTopK.size(); ++i) {
        rows.push_back({"Top-" + std::to_string(kTopK[i]) + " (%)", 100 * r.a.top_rate(i), 100 * r.b.top_rate(i)});
    }
    rows.push_back({"MRR", r.a.mrr, r.b.mrr});
    rows.push_back({"Mean reduction ratio", r.a.mean_reduction_ratio, r.b.mean_reduction_ratio});
    rows.push_back({"Reduction of mean counts", r.a.reduction_of_means, r.b.reduction_of_means});
    rows.push_back({"Mean candidates before pruning", r.a.mean_candidates_before, r.b.mean_candidates_before});
    rows.push_back({"Mean Stage-4 candidates", r.a.mean_candidates_after, r.b.mean_candidates_after});
    rows.push_back({"Mean input tokens", r.a.mean_tokens_in, r.b.mean_tokens_in});
    rows.push_back({"Mean output tokens", r.a.mean_tokens_out, r.b.mean_tokens_out});
    rows.push_back({"Mean wall-clock (s)", r.a.mean_wall_clock_seconds, r.b.mean_wall_clock_seconds});
    rows.push_back({"Strict-loss count", static_cast<double>(r.a.strict_losses), static_cast<double>(r.b.strict_losses)});
    rows.push_back({"Strict-loss rate (%)", 100 * r.a.strict_loss_rate, 100 * r.b.strict_loss_rate});
    rows.push_back({"Mean GT recall", r.a.mean_gt_recall, r.b.mean_gt_recall});
    return rows;
}

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

namespace {

std::string fixed(double v, int digits) {
    std::ostringstream o;
    o << std::fixed << std::setprecision(digits) << v;
    return o.str();
}

std::string signed_fixed(double v, int digits) {
    auto s = fixed(v, digits);
    if (v >= 0 && s.front() != '-') s.insert(s.begin(), '+');
    return s;
}

std::string render(const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> width;
    for (const auto& r : rows) {
        width.resize(std::max(width.size(), r.size()));
        for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
    }
    std::ostringstream o;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t c = 0; c < rows[i].size(); ++c) {
            if (c) o << "  ";
            if (c == 0) {
                o << std::left << std::setw(static_cast<int>(width[c])) << rows[i][c];
            } else {
                o << std::right << std::setw(static_cast<int>(width[c])) << rows[i][c];
            }
        }
        o << '\n';
        if (i == 0) {
            std::size_t total = 0;
            for (auto w : width) total += w + 2;
            o << std::string(total - 2, '-') << '\n';
        }
    }
    return o.str();
}

std::vector<std::string> summary_row(const Summary& s) {
    std::vector<std::string> row{s.scope, std::to_string(s.completed) + "/" + std::to_string(s.bugs)};
    for (std::size_t i = 0; i < kTopK.size(); ++i) {
        row.push_back(std::to_string(s.hits[i]) + " (" + fixed(100 * s.top_rate(i), 1) + ")");
    }
    row.push_back(fixed(s.mrr, 3));
    row.push_back(fixed(100 * s.top_rate_with_failures(0), 1));
    row.push_back(fixed(s.mean_reduction_ratio, 3));
    row.push_back(fixed(s.mean_candidates_after, 1));
    row.push_back(fixed(s.mean_tokens_in, 0));
    row.push_back(std::to_string(s.strict_losses));
    return row;
}

}  // namespace

std::string format_aggregate(const AggregateReport& r) {
    std::vector<std::vector<std::string>> rows{{"Project", "Done", "Top-1 (%)", "Top-3 (%)", "Top-5 (%)",
                                                "Top-10 (%)", "MRR", "Top-1 all (%)", "Reduction",
                                                "Stage-4 cand", "Tokens in", "Strict loss"}};
    for (const auto& [_, s] : r.per_project) rows.push_back(summary_row(s));
    rows.push_back(summary_row(r.overall));
    return render(rows);
}

std::string format_paired(const PairedReport& r) {
    std::vector<std::vector<std::string>> rows{{"Metric", r.label_a, r.label_b, "Delta"}};
    for (const auto& m : paired_rows(r)) {
        rows.push_back({m.name, fixed(m.a, 3), fixed(m.b, 3), signed_fixed(m.delta(), 3)});
    }
    return "Paired over " + std::to_string(r.shared_bugs.size()) + " bugs completed under both\n" + render(rows);
}

json to_json(const Summary& s) {
    json top = json::object();
    for (std::size_t i = 0; i < kTopK.size(); ++i) {
        top[std::to_string(kTopK[i])] = {{"hits", s.hits[i]},
                                         {"rate", s.top_rate(i)},
                                         {"rate_with_failures", s.top_rate_with_failures(i)}};
    }
    return json{{"scope", s.scope},
                {"bugs", s.bugs},
                {"completed", s.completed},
                {"top_k", top},
                {"hits_anywhere", s.hits_anywhere},
                {"mrr", s.mrr},
                {"mrr_with_failures", s.mrr_with_failures},
                {"mean_reduction_ratio", s.mean_reduction_ratio},
                {"reduction_of_means", s.reduction_of_means},
                {"mean_candidates_before", s.mean_candidates_before},
                {"mean_candidates_after", s.mean_candidates_after},
                {"mean_tokens_in", s.mean_tokens_in},
                {"mean_tokens_out", s.mean_tokens_out},
                {"mean_wall_clock_seconds", s.mean_wall_clock_seconds},
                {"strict_losses", s.strict_losses},
                {"strict_loss_rate", s.strict_loss_rate},
                {"mean_gt_recall", s.mean_gt_recall},
                {"fallbacks", s.fallbacks}};
}

json to_json(const AggregateReport& r) {
    json projects = json::object();
    for (const auto& [p, s] : r.per_project) projects[p] = to_json(s);
    return json{{"overall", to_json(r.overall)}, {"per_project", projects}};
}

json to_json(const PairedReport& r) {
    json deltas = json::array();
    for (const auto& m : paired_rows(r)) {
        deltas.push_back({{"metric", m.name}, {"a", m.a}, {"b", m.b}, {"delta", m.delta()}});
    }
    return json{{"a", r.label_a},
                {"b", r.label_b},
                {"shared_bugs", r.shared_bugs},
                {"summary_a", to_json(r.a)},
                {"summary_b", to_json(r.b)},
                {"rows", deltas}};
}

std::vector<std::string> Gates::check(const Summary& s) const {
    std::vector<std::string> out;
    if (min_top1 && s.top_rate(0) < *min_top1) {
        out.push_back("Top-1 rate " + fixed(s.top_rate(0), 4) + " below " + fixed(*min_top1, 4));
    }
    if (min_mrr && s.mrr < *min_mrr) {
        out.push_back("MRR " + fixed(s.mrr, 4) + " below " + fixed(*min_mrr, 4));
    }
    if (max_strict_loss_rate && s.strict_loss_rate > *max_strict_loss_rate) {
        out.push_back("strict-loss rate " + fixed(s.strict_loss_rate, 4) + " above " +
                      fixed(*max_strict_loss_rate, 4));
    }
    if (min_mean_reduction && s.mean_reduction_ratio < *min_mean_reduction) {
        out.push_back("mean reduction ratio " + fixed(s.mean_reduction_ratio, 4) + " below " +
                      fixed(*min_mean_reduction, 4));
    }
    return out;
}

std::vector<RunRecord> latest_per_bug(std::vector<RunRecord> records) {
    std::map<std::string, std::size_t> last;
    for (std::size_t i = 0; i < records.size(); ++i) last[records[i].bug_id] = i;
    std::vector<RunRecord> out;
    for (const auto& [_, i] : last) out.push_back(std::move(records[i]));
    return out;
}

}  // namespace sievefl
