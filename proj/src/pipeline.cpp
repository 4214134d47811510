#include "sievefl/pipeline.hpp"

#include "sievefl/errors.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <thread>

namespace sievefl {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

std::string_view to_string(Variant v) {
    switch (v) {
        case Variant::V0: return "v0";
        case Variant::V1: return "v1";
        case Variant::V2: return "v2";
    }
    return "unknown";
}

Variant parse_variant(std::string_view text) {
    if (text == "v0" || text == "V0") return Variant::V0;
    if (text == "v1" || text == "V1") return Variant::V1;
    if (text == "v2" || text == "V2") return Variant::V2;
    throw ConfigError("unknown variant '" + std::string(text) + "' (expected v0, v1 or v2)");
}

PipelineConfig PipelineConfig::effective() const {
    PipelineConfig c = *this;
    if (c.variant == Variant::V2) {
        c.w_cov = 1.0;
        c.w_sem = 0.0;
    }
    return c;
}

void PipelineConfig::validate() const {
    if (w_cov < 0.0 || w_sem < 0.0) throw ConfigError("hybrid weights must be non-negative");
    if (std::abs(w_cov + w_sem - 1.0) > 1e-9) {
        throw ConfigError("hybrid weights must sum to 1 (w_cov=" + std::to_string(w_cov) +
                          ", w_sem=" + std::to_string(w_sem) + ")");
    }
    if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("tau must lie in [0, 1]");
    if (k_f == 0) throw ConfigError("k_f must be at least 1");
    if (parallelism == 0) throw ConfigError("parallelism must be at least 1");
}

void to_json(json& j, const PipelineConfig& c) {
    j = json{{"variant", to_string(c.variant)},
             {"w_cov", c.w_cov},
             {"w_sem", c.w_sem},
             {"tau", c.tau},
             {"k_f", c.k_f},
             {"parallelism", c.parallelism},
             {"budgets",
              {{"analysis_chars", c.budgets.analysis_chars},
               {"screening_chars", c.budgets.screening_chars},
               {"rerank_chars", c.budgets.rerank_chars}}},
             {"temperature", c.sampling.temperature},
             {"max_retries", c.retry.max_retries}};
    if (c.sampling.seed) j["seed"] = *c.sampling.seed;
}

double hybrid_score(double rho, double sigma, double w_cov, double w_sem) {
    return w_cov * rho + w_sem * sigma;
}

bool below_threshold(double score, double tau) { return score < tau; }

// ---------------------------------------------------------------------------
// Corpus
// ---------------------------------------------------------------------------

Corpus::Corpus(std::vector<MethodDocument> docs) : docs_(std::move(docs)) {
    for (std::size_t i = 0; i < docs_.size(); ++i) {
        if (!by_id_.emplace(docs_[i].doc_id, i).second) {
            throw InputError("duplicate doc_id in corpus: " + docs_[i].doc_id);
        }
        by_file_[docs_[i].file_path].push_back(i);
    }
    for (auto& [file, rows] : by_file_) {
        std::sort(rows.begin(), rows.end(), [&](std::size_t a, std::size_t b) {
            return std::tie(docs_[a].start_line, docs_[a].doc_id) <
                   std::tie(docs_[b].start_line, docs_[b].doc_id);
        });
    }
}

const MethodDocument* Corpus::find(const std::string& doc_id) const {
    const auto it = by_id_.find(doc_id);
    return it == by_id_.end() ? nullptr : &docs_[it->second];
}

std::vector<const MethodDocument*> Corpus::in_file(const std::string& file_path) const {
    std::vector<const MethodDocument*> out;
    if (const auto it = by_file_.find(file_path); it != by_file_.end()) {
        for (auto i : it->second) out.push_back(&docs_[i]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Costs and records
// ---------------------------------------------------------------------------

void StageCost::add(const ChatExchange& ex) {
    ++calls;
    tokens_in += ex.tokens_in;
    tokens_out += ex.tokens_out;
    latency_seconds += ex.latency_seconds;
    tokens_estimated = tokens_estimated || ex.tokens_estimated;
}

std::uint64_t RunRecord::tokens_in() const {
    std::uint64_t n = 0;
    for (const auto& [_, c] : costs) n += c.tokens_in;
    return n;
}

std::uint64_t RunRecord::tokens_out() const {
    std::uint64_t n = 0;
    for (const auto& [_, c] : costs) n += c.tokens_out;
    return n;
}

std::string project_of(std::string_view bug_id) {
    const auto dash = bug_id.rfind('-');
    return std::string(dash == std::string_view::npos || dash == 0 ? bug_id : bug_id.substr(0, dash));
}

namespace {

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json candidate_json(const Candidate& c) {
    json j{{"doc_id", c.doc.doc_id},
           {"file_path", c.doc.file_path},
           {"class_name", c.doc.class_name},
           {"method_name", c.doc.method_name},
           {"param_types", c.doc.param_types},
           {"arity", c.doc.arity},
           {"start_line", c.doc.start_line},
           {"end_line", c.doc.end_line},
           {"sigma", c.sigma},
           {"rho", optional_number(c.rho)},
           {"hybrid_score", optional_number(c.hybrid_score)},
           {"overload_ambiguous", c.overload_ambiguous},
           {"pruned", c.pruned},
           {"verdict", nullptr},
           {"final_rank", c.final_rank ? json(*c.final_rank) : json(nullptr)}};
    if (c.stage4_verdict) {
        j["verdict"] = {{"suspicious", c.stage4_verdict->suspicious},
                        {"justification", c.stage4_verdict->justification}};
    }
    return j;
}

Candidate candidate_from_json(const json& j) {
    Candidate c;
    c.doc.doc_id = j.at("doc_id").get<std::string>();
    c.doc.file_path = j.at("file_path").get<std::string>();
    c.doc.class_name = j.at("class_name").get<std::string>();
    c.doc.method_name = j.at("method_name").get<std::string>();
    c.doc.param_types = j.at("param_types").get<std::vector<std::string>>();
    c.doc.arity = j.at("arity").get<std::size_t>();
    c.doc.start_line = j.at("start_line").get<std::size_t>();
    c.doc.end_line = j.at("end_line").get<std::size_t>();
    c.sigma = j.at("sigma").get<double>();
    if (!j.at("rho").is_null()) c.rho = j["rho"].get<double>();
    if (!j.at("hybrid_score").is_null()) c.hybrid_score = j["hybrid_score"].get<double>();
    c.overload_ambiguous = j.at("overload_ambiguous").get<bool>();
    c.pruned = j.at("pruned").get<bool>();
    if (!j.at("verdict").is_null()) {
        c.stage4_verdict = ScreeningVerdict{j["verdict"].at("suspicious").get<bool>(),
                                            j["verdict"].at("justification").get<std::string>()};
    }
    if (!j.at("final_rank").is_null()) c.final_rank = j["final_rank"].get<std::size_t>();
    return c;
}

}  // namespace

json to_json(const RunRecord& r) {
    json candidates = json::array();
    for (const auto& c : r.candidates) candidates.push_back(candidate_json(c));
    json costs = json::object();
    for (const auto& [stage, c] : r.costs) {
        costs[stage] = {{"calls", c.calls},
                        {"tokens_in", c.tokens_in},
                        {"tokens_out", c.tokens_out},
                        {"latency_seconds", c.latency_seconds},
                        {"tokens_estimated", c.tokens_estimated}};
    }
    const auto& d = r.failure_description;
    return json{{"schema_version", RunRecord::kSchemaVersion},
                {"bug_id", r.bug_id},
                {"project", r.project},
                {"variant", to_string(r.variant)},
                {"status", r.completed ? "completed" : "failed"},
                {"error", r.error},
                {"failure_description",
                 {{"expected_behavior", d.expected_behavior},
                  {"observed_failure", d.observed_failure},
                  {"search_query", d.search_query},
                  {"degraded", d.degraded}}},
                {"suspicious_files", r.suspicious_files},
                {"candidates_before_pruning", r.candidates_before_pruning},
                {"candidates_after_pruning", r.candidates_after_pruning},
                {"reduction_ratio", r.reduction_ratio},
                {"candidates", candidates},
                {"stage4_order", r.stage4_order},
                {"confirmed_suspects", r.confirmed_suspects},
                {"ranked_methods", r.ranked_methods},
                {"costs", costs},
                {"tokens_in", r.tokens_in()},
                {"tokens_out", r.tokens_out()},
                {"wall_clock_seconds", r.wall_clock_seconds},
                {"fallback_used", r.fallback_used},
                {"anomalies", r.anomalies},
                {"config", r.config}};
}

RunRecord record_from_json(const json& j) {
    const int version = j.value("schema_version", -1);
    if (version != RunRecord::kSchemaVersion) {
        throw InputError("run record schema version " + std::to_string(version) +
                         " is not supported (expected " + std::to_string(RunRecord::kSchemaVersion) + ")");
    }
    try {
        RunRecord r;
        r.bug_id = j.at("bug_id").get<std::string>();
        r.project = j.at("project").get<std::string>();
        r.variant = parse_variant(j.at("variant").get<std::string>());
        r.completed = j.at("status").get<std::string>() == "completed";
        r.error = j.at("error").get<std::string>();
        const auto& d = j.at("failure_description");
        r.failure_description.expected_behavior = d.at("expected_behavior").get<std::string>();
        r.failure_description.observed_failure = d.at("observed_failure").get<std::string>();
        r.failure_description.search_query = d.at("search_query").get<std::string>();
        r.failure_description.degraded = d.at("degraded").get<bool>();
        r.suspicious_files = j.at("suspicious_files").get<std::vector<std::string>>();
        r.candidates_before_pruning = j.at("candidates_before_pruning").get<std::size_t>();
        r.candidates_after_pruning = j.at("candidates_after_pruning").get<std::size_t>();
        r.reduction_ratio = j.at("reduction_ratio").get<double>();
        for (const auto& c : j.at("candidates")) r.candidates.push_back(candidate_from_json(c));
        r.stage4_order = j.at("stage4_order").get<std::vector<std::string>>();
        r.confirmed_suspects = j.at("confirmed_suspects").get<std::vector<std::string>>();
        r.ranked_methods = j.at("ranked_methods").get<std::vector<std::string>>();
        for (const auto& [stage, c] : j.at("costs").items()) {
            StageCost cost;
            cost.calls = c.at("calls").get<std::size_t>();
            cost.tokens_in = c.at("tokens_in").get<std::uint64_t>();
            cost.tokens_out = c.at("tokens_out").get<std::uint64_t>();
            cost.latency_seconds = c.at("latency_seconds").get<double>();
            cost.tokens_estimated = c.at("tokens_estimated").get<bool>();
            r.costs[stage] = cost;
        }
        r.wall_clock_seconds = j.at("wall_clock_seconds").get<double>();
        r.fallback_used = j.at("fallback_used").get<bool>();
        r.anomalies = j.at("anomalies").get<std::vector<std::string>>();
        r.config = j.at("config");
        return r;
    } catch (const json::exception& e) {
        throw InputError(std::string("malformed run record: ") + e.what());
    }
}

void append_run_log(const std::filesystem::path& path, const RunRecord& record) {
    std::ofstream out(path, std::ios::binary | std::ios::app);
    if (!out) throw InputError("cannot append to run log '" + path.string() + "'");
    out << to_json(record).dump() << '\n';
}

std::vector<RunRecord> read_run_log(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read run log '" + path.string() + "'");
    std::vector<RunRecord> records;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw InputError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
        try {
            records.push_back(record_from_json(j));
        } catch (const InputError& e) {
            throw InputError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return records;
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

namespace {

ChatOptions chat_options(const PipelineConfig& cfg, const std::string& bug_id,
                         const std::string& doc_id, const Clock& clock) {
    ChatOptions o;
    o.sampling = cfg.sampling;
    o.retry = cfg.retry;
    o.bug_id = bug_id;
    o.doc_id = doc_id;
    o.clock = clock;
    return o;
}

constexpr std::string_view kVerdictReask =
    "\n\nYour previous answer did not state a verdict. Reply with a line "
    "\"Verdict: Suspicious\" or \"Verdict: Not Suspicious\", then a line "
    "\"Justification: ...\".";

constexpr std::string_view kRankingReask =
    "\n\nYour previous answer did not name any of the suspects. Reply with a numbered list "
    "that names each suspect exactly as labelled above, most likely first.";

}  // namespace

FailureDescription stage1_analyze(const FailureContext& ctx, ChatBackend& backend,
                                  const PipelineConfig& cfg, StageCost& cost, const Clock& clock) {
    const auto prompt = render_analysis_prompt(ctx, cfg.budgets);
    const auto ex = chat(prompt, backend, chat_options(cfg, ctx.bug_id, "", clock));
    cost.add(ex);
    return parse_failure_description(ex.response_text);
}

RetrievalResult stage2_retrieve(const FailureDescription& desc, const VectorIndex& index,
                                const Corpus& corpus, EmbeddingProvider& embedder, std::size_t k_f) {
    if (index.empty()) throw EmptyIndexError("vector index is empty");
    const auto query = embedder.embed(desc.search_query);
    if (query.dimension() != index.dimension()) {
        throw ConfigError("query embedding dimension " + std::to_string(query.dimension()) +
                          " does not match index dimension " + std::to_string(index.dimension()));
    }

    RetrievalResult out;
    out.top = index.top_k(query, k_f);
    for (const auto& hit : out.top) {
        const auto* doc = corpus.find(hit.doc_id);
        if (!doc) throw ConfigError("index entry " + hit.doc_id + " is not in the corpus");
        if (std::find(out.suspicious_files.begin(), out.suspicious_files.end(), doc->file_path) ==
            out.suspicious_files.end()) {
            out.suspicious_files.push_back(doc->file_path);
        }
    }
    for (const auto& file : out.suspicious_files) {
        for (const auto* doc : corpus.in_file(file)) {
            if (index.find(doc->doc_id) < 0) {
                throw ConfigError("corpus method " + doc->doc_id + " is missing from the index");
            }
            Candidate c;
            c.doc = *doc;
            c.sigma = std::max(0.0, index.similarity(query, doc->doc_id));
            out.candidates.push_back(std::move(c));
        }
    }
    return out;
}

PruneOutcome stage3_prune(std::vector<Candidate>& candidates, const CoverageReport* report,
                          const PipelineConfig& cfg) {
    PruneOutcome out;
    if (cfg.variant == Variant::V0) return out;
    if (!report) {
        out.fallback_used = true;
        return out;
    }
    const auto eff = cfg.effective();
    for (auto& c : candidates) {
        const auto matches = lookup_rho(*report, coverage_join_key(c.doc));
        double rho = 0.0;
        for (const auto& m : matches) rho = std::max(rho, m.rho);
        c.rho = rho;
        c.hybrid_score = hybrid_score(rho, c.sigma, eff.w_cov, eff.w_sem);
        c.overload_ambiguous = matches.size() > 1;
        c.pruned = !c.overload_ambiguous && below_threshold(*c.hybrid_score, eff.tau);
    }
    out.applied = true;
    return out;
}

std::vector<std::size_t> screening_order(const std::vector<Candidate>& candidates) {
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (!candidates[i].pruned) order.push_back(i);
    }
    const auto score = [&](std::size_t i) {
        const auto& c = candidates[i];
        return c.hybrid_score ? *c.hybrid_score : c.sigma;
    };
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (score(a) != score(b)) return score(a) > score(b);
        return candidates[a].doc.doc_id < candidates[b].doc.doc_id;
    });
    return order;
}

std::vector<std::size_t> stage4_screen(std::vector<Candidate>& candidates,
                                       const std::vector<std::size_t>& order,
                                       const FailureDescription& desc, const FailureContext& ctx,
                                       ChatBackend& backend, const PipelineConfig& cfg,
                                       StageCost& cost, std::vector<std::string>& anomalies,
                                       const Clock& clock) {
    struct Slot {
        std::vector<ChatExchange> exchanges;
        ScreeningVerdict verdict;
        std::vector<std::string> anomalies;
    };
    std::vector<Slot> slots(order.size());
    std::atomic<std::size_t> next{0};

    auto screen_one = [&](std::size_t k) {
        const auto& c = candidates[order[k]];
        Slot& slot = slots[k];
        auto prompt = render_screening_prompt(ctx, desc, c.doc, cfg.budgets);
        const auto opts = chat_options(cfg, ctx.bug_id, c.doc.doc_id, clock);
        try {
            for (int attempt = 0; attempt < 2; ++attempt) {
                slot.exchanges.push_back(chat(prompt, backend, opts));
                try {
                    slot.verdict = parse_verdict(slot.exchanges.back().response_text);
                    return;
                } catch (const VerdictUnparseable&) {
                    prompt.user_text += kVerdictReask;
                }
            }
            slot.anomalies.push_back("stage 4: unparseable verdict for " + c.doc.doc_id +
                                     " after re-ask; treated as not suspicious");
        } catch (const Error& e) {
            slot.anomalies.push_back("stage 4: backend failure for " + c.doc.doc_id + ": " +
                                     e.what() + "; treated as not suspicious");
        }
        slot.verdict = ScreeningVerdict{false, "(no verdict)"};
    };

    auto worker = [&] {
        for (std::size_t k = next++; k < order.size(); k = next++) screen_one(k);
    };
    const unsigned threads =
        std::max(1u, std::min<unsigned>(cfg.parallelism, static_cast<unsigned>(order.size())));
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    std::vector<std::size_t> confirmed;
    for (std::size_t k = 0; k < order.size(); ++k) {
        for (const auto& ex : slots[k].exchanges) cost.add(ex);
        anomalies.insert(anomalies.end(), slots[k].anomalies.begin(), slots[k].anomalies.end());
        candidates[order[k]].stage4_verdict = slots[k].verdict;
        if (slots[k].verdict.suspicious) confirmed.push_back(order[k]);
    }
    return confirmed;
}

std::vector<std::size_t> stage5_rerank(const std::vector<Candidate>& candidates,
                                       const std::vector<std::size_t>& suspects,
                                       const FailureDescription& desc, const FailureContext& ctx,
                                       ChatBackend& backend, const PipelineConfig& cfg,
                                       StageCost& cost, std::vector<std::string>& anomalies,
                                       const Clock& clock) {
    if (suspects.size() <= 1) return suspects;

    std::vector<SuspectBlock> blocks;
    std::vector<std::string> ids;
    std::vector<std::vector<std::string>> aliases;
    for (std::size_t k = 0; k < suspects.size(); ++k) {
        const auto& c = candidates[suspects[k]];
        std::string label = method_label(c.doc);
        const bool clash = std::any_of(suspects.begin(), suspects.end(), [&](std::size_t o) {
            return o != suspects[k] && method_label(candidates[o].doc) == label;
        });
        if (clash) label += " at " + c.doc.file_path + ":" + std::to_string(c.doc.start_line);
        blocks.push_back({label, method_code(c.doc),
                          c.stage4_verdict ? c.stage4_verdict->justification : std::string()});
        ids.push_back(c.doc.doc_id);
        aliases.push_back({label, "Suspect " + std::to_string(k + 1)});
    }

    auto prompt = render_rerank_prompt(ctx, desc, blocks, cfg.budgets);
    const auto opts = chat_options(cfg, ctx.bug_id, "", clock);
    try {
        for (int attempt = 0; attempt < 2; ++attempt) {
            const auto ex = chat(prompt, backend, opts);
            cost.add(ex);
            try {
                const auto ranked_ids = parse_ranking(ex.response_text, ids, aliases);
                std::vector<std::size_t> ranked;
                for (const auto& id : ranked_ids) {
                    ranked.push_back(suspects[static_cast<std::size_t>(
                        std::find(ids.begin(), ids.end(), id) - ids.begin())]);
                }
                return ranked;
            } catch (const RankingUnparseable&) {
                prompt.user_text += kRankingReask;
            }
        }
        anomalies.push_back("stage 5: unparseable ranking after re-ask; kept hybrid-score order");
    } catch (const Error& e) {
        anomalies.push_back(std::string("stage 5: backend failure: ") + e.what() +
                            "; kept hybrid-score order");
    }
    return suspects;
}

RunRecord run_bug(const FailureContext& ctx, const PipelineResources& res, const PipelineConfig& cfg) {
    const PipelineConfig eff = cfg.effective();
    eff.validate();

    RunRecord rec;
    rec.bug_id = ctx.bug_id;
    rec.project = project_of(ctx.bug_id);
    rec.variant = cfg.variant;
    rec.config = eff;
    for (const auto& [k, v] : res.provenance.items()) rec.config[k] = v;
    rec.costs["analysis"];
    rec.costs["screening"];
    rec.costs["rerank"];

    const double t0 = res.clock();
    auto fail = [&](const std::string& stage, const std::exception& e) {
        rec.completed = false;
        rec.error = stage + ": " + e.what();
        rec.wall_clock_seconds = res.clock() - t0;
        return rec;
    };

    FailureDescription desc;
    try {
        desc = stage1_analyze(ctx, res.backend, eff, rec.costs["analysis"], res.clock);
    } catch (const Error& e) {
        return fail("stage 1", e);
    }
    rec.failure_description = desc;
    if (desc.degraded) {
        rec.anomalies.push_back("stage 1: reply not segmented; whole reply used as search query");
    }

    RetrievalResult retrieval;
    try {
        retrieval = stage2_retrieve(desc, res.index, res.corpus, res.embedder, eff.k_f);
    } catch (const Error& e) {
        return fail("stage 2", e);
    }
    rec.suspicious_files = retrieval.suspicious_files;
    rec.candidates = std::move(retrieval.candidates);

    std::optional<CoverageReport> report;
    if (eff.variant != Variant::V0 && ctx.coverage_xml_path) {
        try {
            report = parse_coverage(*ctx.coverage_xml_path);
        } catch (const CoverageUnavailable&) {
        } catch (const ParseError& e) {
            rec.anomalies.push_back(std::string("stage 3: unreadable coverage report: ") + e.what());
        }
    }
    rec.fallback_used = stage3_prune(rec.candidates, report ? &*report : nullptr, eff).fallback_used;

    rec.candidates_before_pruning = rec.candidates.size();
    rec.candidates_after_pruning = static_cast<std::size_t>(std::count_if(
        rec.candidates.begin(), rec.candidates.end(), [](const Candidate& c) { return !c.pruned; }));
    rec.reduction_ratio =
        rec.candidates_before_pruning > 0
            ? 1.0 - static_cast<double>(rec.candidates_after_pruning) /
                        static_cast<double>(rec.candidates_before_pruning)
            : 0.0;

    const auto order = screening_order(rec.candidates);
    for (auto i : order) rec.stage4_order.push_back(rec.candidates[i].doc.doc_id);
    if (order.empty()) rec.anomalies.push_back("stage 3: no candidates survived pruning");

    const auto suspects = stage4_screen(rec.candidates, order, desc, ctx, res.backend, eff,
                                        rec.costs["screening"], rec.anomalies, res.clock);
    if (!order.empty() && suspects.empty()) {
        rec.anomalies.push_back("stage 4: no method judged suspicious");
    }
    const auto ranked = stage5_rerank(rec.candidates, suspects, desc, ctx, res.backend, eff,
                                      rec.costs["rerank"], rec.anomalies, res.clock);

    for (auto i : suspects) rec.confirmed_suspects.push_back(rec.candidates[i].doc.doc_id);
    for (std::size_t r = 0; r < ranked.size(); ++r) {
        rec.candidates[ranked[r]].final_rank = r + 1;
        rec.ranked_methods.push_back(rec.candidates[ranked[r]].doc.doc_id);
    }
    rec.completed = true;
    rec.wall_clock_seconds = res.clock() - t0;
    return rec;
}

}  // namespace sievefl
