// Acceptance checks. One PASS/FAIL/SKIP line per criterion; exit status 1
// when any criterion fails. The live-backend smoke runs only with
// --live-url (or SIEVEFL_LIVE_URL) and is never part of the ctest run.

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include "sievefl/cli.hpp"
#include "sievefl/coverage.hpp"
#include "sievefl/errors.hpp"
#include "sievefl/eval.hpp"
#include "sievefl/pipeline.hpp"

#include "oracles.hpp"
#include "shop_env.hpp"

using namespace sievefl;
namespace fs = std::filesystem;
using nlohmann::json;
using fixtures::ShopEnv;

namespace {

// Pinned limits.
constexpr double kHybridOracleLimitSeconds = 1.0;
constexpr double kRetrievalLimitSeconds = 5.0;
constexpr double kEndToEndLimitSeconds = 30.0;
constexpr int kHybridTuples = 10000;
constexpr int kRetrievalVectors = 1000;
constexpr int kRetrievalQueries = 50;
constexpr std::size_t kRetrievalDim = 32;
constexpr int kMetricInstances = 1000;
constexpr double kScoreTolerance = 1e-9;

struct Outcome {
    enum Kind { Pass, Fail, Skip } kind;
    std::string detail;
};

Outcome pass(std::string d) { return {Outcome::Pass, std::move(d)}; }
Outcome fail(std::string d) { return {Outcome::Fail, std::move(d)}; }

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string num(double v, int digits = 3) {
    std::ostringstream o;
    o << std::fixed << std::setprecision(digits) << v;
    return o.str();
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json without(json j) {
    for (const char* k : {"variant", "config", "fallback_used"}) j.erase(k);
    return j;
}

// ---------------------------------------------------------------------------

Outcome hybrid_score_oracle() {
    std::mt19937_64 rng(20240601);
    std::uniform_int_distribution<std::uint64_t> branches(0, 64);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const auto t0 = std::chrono::steady_clock::now();
    int mismatches = 0, boundary_pruned = 0, pruned = 0;
    for (int t = 0; t < kHybridTuples; ++t) {
        CoverageEntry e;
        e.class_name = "p.C";
        e.method_name = "m";
        e.descriptor = "()V";
        e.counters.branch_covered = branches(rng);
        e.counters.branch_missed = branches(rng);
        e.counters.line_covered = t % 3 ? 1 : 0;  // branch-free entries exercise both 0 and 1
        CoverageReport report{{e}, "<generated>"};

        Candidate c;
        c.doc.class_name = "p.C";
        c.doc.method_name = "m";
        c.doc.doc_id = "p.C#m()@p/C.java:1";
        c.sigma = unit(rng);

        const auto& k = e.counters;
        const double rho = k.branch_covered + k.branch_missed
                               ? double(k.branch_covered) / double(k.branch_covered + k.branch_missed)
                               : (k.line_covered ? 1.0 : 0.0);
        PipelineConfig cfg;
        cfg.w_cov = unit(rng);
        cfg.w_sem = 1.0 - cfg.w_cov;
        // every fourth tuple sits exactly on the threshold
        cfg.tau = t % 4 == 0 ? cfg.w_cov * rho + (1.0 - cfg.w_cov) * c.sigma : unit(rng);

        std::vector<Candidate> cs{c};
        stage3_prune(cs, &report, cfg);
        const bool expect = oracles::pruned(rho, c.sigma, cfg.w_cov, cfg.tau);
        mismatches += cs[0].pruned != expect;
        pruned += cs[0].pruned;
        if (t % 4 == 0) boundary_pruned += cs[0].pruned;
    }
    const double s = seconds_since(t0);
    std::string d = std::to_string(kHybridTuples) + " tuples, " + std::to_string(mismatches) + " mismatches, " +
                    std::to_string(pruned) + " pruned, " + std::to_string(boundary_pruned) + " pruned at s == tau, " +
                    num(s) + " s (limit " + num(kHybridOracleLimitSeconds, 1) + " s)";
    return mismatches == 0 && boundary_pruned == 0 && s < kHybridOracleLimitSeconds ? pass(d) : fail(d);
}

Outcome default_configuration() {
    const PipelineConfig v1 = PipelineConfig{}.effective();
    PipelineConfig v2cfg;
    v2cfg.variant = Variant::V2;
    const auto v2 = v2cfg.effective();
    const json j = v1;
    const bool ok = v1.variant == Variant::V1 && j["w_cov"] == 0.6 && j["w_sem"] == 0.4 && j["tau"] == 0.05 &&
                    j["k_f"] == 10 && v2.w_sem == 0.0 && v2.w_cov == 1.0;
    const std::string d = "w_cov=" + j["w_cov"].dump() + " w_sem=" + j["w_sem"].dump() + " tau=" + j["tau"].dump() +
                          " k_f=" + j["k_f"].dump() + "; v2 w_cov=" + num(v2.w_cov, 1) + " w_sem=" + num(v2.w_sem, 1);
    return ok ? pass(d) : fail(d);
}

Outcome retrieval_exactness() {
    std::mt19937_64 rng(77);
    std::vector<std::pair<std::string, std::vector<float>>> rows;
    VectorIndex index(kRetrievalDim, "random");
    for (int i = 0; i < kRetrievalVectors; ++i) {
        auto v = oracles::random_vector(rng, kRetrievalDim, i % 4 == 0);
        if (i % 25 == 7) v = rows.back().second;  // exact duplicates force ties
        const std::string id = "doc-" + std::to_string((i * 7919) % kRetrievalVectors);
        index.add(id, EmbeddingVector(v));
        rows.emplace_back(id, v);
    }
    index.freeze();
    const auto t0 = std::chrono::steady_clock::now();
    int mismatched_queries = 0;
    std::size_t compared = 0;
    for (int q = 0; q < kRetrievalQueries; ++q) {
        const auto query = oracles::random_vector(rng, kRetrievalDim, q % 2 == 0);
        const std::size_t k = q % 5 == 0 ? kRetrievalVectors : 10;  // some full rankings
        const auto want = oracles::brute_force_top_k(rows, query, k);
        const auto got = index.top_k(EmbeddingVector(query), k);
        bool same = got.size() == want.size();
        for (std::size_t i = 0; same && i < got.size(); ++i) {
            same = got[i].doc_id == want[i].first && std::abs(got[i].similarity - want[i].second) <= 1e-12;
        }
        compared += got.size();
        mismatched_queries += !same;
    }
    const double s = seconds_since(t0);
    const std::string d = std::to_string(kRetrievalVectors) + " vectors x " + std::to_string(kRetrievalQueries) +
                          " queries, " + std::to_string(compared) + " ranked entries compared, " +
                          std::to_string(mismatched_queries) + " mismatching queries, " + num(s) + " s (limit " +
                          num(kRetrievalLimitSeconds, 1) + " s)";
    return mismatched_queries == 0 && s < kRetrievalLimitSeconds ? pass(d) : fail(d);
}

Outcome coverage_ratio_table() {
    const auto report = parse_coverage(fixtures::root() / "coverage" / "six_methods.xml");
    // hand-computed from the fixture's counters
    const std::vector<std::tuple<std::string, std::string, double>> table{
        {"parse", "(Ljava/lang/String;)I", 0.375}, {"reset", "()V", 1.0},  {"close", "()V", 0.0},
        {"accept", "(I)Z", 0.5},                   {"accept", "(J)Z", 0.0}, {"lambda$parse$0", "(C)Z", 0.75}};
    int wrong = 0;
    for (const auto& [name, desc, rho] : table) {
        bool found = false;
        for (const auto& e : report.methods) {
            if (e.method_name == name && e.descriptor == desc) {
                found = true;
                wrong += branch_ratio(e.counters) != rho;
            }
        }
        wrong += !found;
    }
    const auto overloads = lookup_rho(report, {"com.acme.Parser", "accept", 1});
    const bool both = overloads.size() == 2 && overloads[0].rho == 0.5 && overloads[1].rho == 0.0;
    const bool absent = lookup_rho(report, {"com.acme.Parser", "flush", 0}).empty();
    const std::string d = std::to_string(report.methods.size()) + " methods, " + std::to_string(wrong) +
                          " wrong ratios; same-arity lookup returned " + std::to_string(overloads.size()) +
                          " entries; source-only method " + (absent ? "absent" : "present");
    return report.methods.size() == 6 && wrong == 0 && both && absent ? pass(d) : fail(d);
}

Outcome metric_oracle() {
    std::mt19937_64 rng(31337);
    int mismatches = 0, monotonicity = 0;
    auto ref = [](int i) { return MethodRef{MethodKey{"p.C", "m" + std::to_string(i), 0}, "p/C.java"}; };
    for (int t = 0; t < kMetricInstances; ++t) {
        const auto c = oracles::random_metric_case(rng);
        std::vector<MethodRef> ranked, before, after;
        for (int i : c.ranked) ranked.push_back(ref(i));
        for (int i : c.before) before.push_back(ref(i));
        for (int i : c.after) after.push_back(ref(i));
        std::vector<GroundTruthMethod> gt;
        for (int g : c.truth) gt.push_back({ref(g).key, std::nullopt});
        bool prev = false;
        for (auto k : kTopK) {
            const bool h = topk_hit(ranked, gt, k);
            mismatches += h != oracles::hit(c, k);
            monotonicity += prev && !h;
            prev = h;
        }
        mismatches += reciprocal_rank(ranked, gt) != oracles::rr(c);
        const auto s = pruning_safety(before, after, gt);
        mismatches += s.strict_loss != oracles::strict_loss(c);
        mismatches += s.gt_recall != oracles::recall(c);
    }
    const std::string d = std::to_string(kMetricInstances) + " instances, " + std::to_string(mismatches) +
                          " mismatches, " + std::to_string(monotonicity) + " monotonicity violations";
    return mismatches == 0 && monotonicity == 0 ? pass(d) : fail(d);
}

Outcome dissociation() {
    ShopEnv env;
    const auto gt = load_ground_truth(fixtures::shop() / "ground_truth.json");
    const auto r = run_bug(ShopEnv::bug("Shop-4"), env.resources(), ShopEnv::config(Variant::V1));
    const auto m = evaluate(r, gt);
    const std::string d = "Shop-4 V1: strict_loss=" + std::string(m.strict_loss ? "true" : "false") +
                          " gt_recall=" + num(m.gt_recall, 2) + " top1=" + (m.hit_at[0] ? "hit" : "miss");
    return r.completed && m.strict_loss && m.gt_recall == 0.5 && m.hit_at[0] ? pass(d) : fail(d);
}

Outcome end_to_end_golden() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto dir = fixtures::temp_dir("acceptance-e2e");
    const std::string cfg = (fixtures::shop() / "sievefl.json").string();
    std::ostringstream sink;
    auto cli = [&](std::vector<std::string> extra) {
        std::vector<std::string> args{"--config", cfg, "--output-dir", dir.string(), "-q"};
        args.insert(args.end(), extra.begin(), extra.end());
        return run_cli(args, sink, sink);
    };
    if (cli({"index"}) != 0) return fail("index failed: " + sink.str());
    if (cli({"--variant", "v0", "run"}) != 0 || cli({"--variant", "v1", "run"}) != 0 ||
        cli({"--variant", "v1", "run", "--out", (dir / "run-v1-again.jsonl").string()}) != 0) {
        return fail("run failed: " + sink.str());
    }
    const bool identical = slurp(dir / "run-v1.jsonl") == slurp(dir / "run-v1-again.jsonl");

    const auto gt = load_ground_truth(fixtures::shop() / "ground_truth.json");
    auto metrics = [&](const fs::path& log) {
        std::vector<BugMetrics> ms;
        for (const auto& r : read_run_log(log)) ms.push_back(evaluate(r, gt));
        return ms;
    };
    const auto v1_records = read_run_log(dir / "run-v1.jsonl");
    const bool seeded_top = !v1_records.empty() && !v1_records[0].ranked_methods.empty() &&
                            v1_records[0].ranked_methods[0] == fixtures::kSeededDocId;
    const auto paired = paired_compare(metrics(dir / "run-v0.jsonl"), metrics(dir / "run-v1.jsonl"), "v0", "v1");
    const double s = seconds_since(t0);

    const double top1_a = paired.a.top_rate(0), top1_b = paired.b.top_rate(0);
    const std::string d = "V1 top-1 " + std::string(seeded_top ? "is" : "is not") + " the seeded method; paired over " +
                          std::to_string(paired.shared_bugs.size()) + " bugs: top-1 " + num(100 * top1_a, 1) + "% vs " +
                          num(100 * top1_b, 1) + "%, stage-4 candidates " + num(paired.a.mean_candidates_after) +
                          " -> " + num(paired.b.mean_candidates_after) + ", input tokens " +
                          num(paired.a.mean_tokens_in, 1) + " -> " + num(paired.b.mean_tokens_in, 1) + "; logs " +
                          (identical ? "byte-identical" : "differ") + "; " + num(s) + " s (limit " +
                          num(kEndToEndLimitSeconds, 0) + " s)";
    const bool ok = seeded_top && top1_a == top1_b && paired.b.mean_candidates_after < paired.a.mean_candidates_after &&
                    paired.b.mean_tokens_in < paired.a.mean_tokens_in && identical && s < kEndToEndLimitSeconds;
    return ok ? pass(d) : fail(d);
}

Outcome fallback_contract() {
    const auto dir = fixtures::temp_dir("acceptance-fallback") / "Shop-1";
    fs::create_directories(dir);
    fs::copy(fixtures::shop() / "bugs" / "Shop-1", dir, fs::copy_options::recursive);
    fs::remove(dir / "coverage.xml");
    ShopEnv e0, e1;
    const auto ctx = load_bug_bundle(dir);
    const auto v0 = run_bug(ctx, e0.resources(), ShopEnv::config(Variant::V0));
    const auto v1 = run_bug(ctx, e1.resources(), ShopEnv::config(Variant::V1));
    const bool equal = without(to_json(v0)) == without(to_json(v1));
    const std::string d = "Shop-1 without coverage.xml: V1 fallback_used=" +
                          std::string(v1.fallback_used ? "true" : "false") + ", record " +
                          (equal ? "equals" : "differs from") + " V0 outside variant/config/fallback_used";
    return v1.completed && v1.fallback_used && !v0.fallback_used && equal ? pass(d) : fail(d);
}

Outcome ablation_shape() {
    ShopEnv e1, e2;
    const auto gt = load_ground_truth(fixtures::shop() / "ground_truth.json");
    const auto v1 = run_bug(ShopEnv::bug("Shop-3"), e1.resources(), ShopEnv::config(Variant::V1));
    const auto v2 = run_bug(ShopEnv::bug("Shop-3"), e2.resources(), ShopEnv::config(Variant::V2));
    const auto* c1 = e1.candidate(v1, fixtures::kSeededDocId);
    const auto* c2 = e2.candidate(v2, fixtures::kSeededDocId);
    if (!c1 || !c2) return fail("seeded method not among the candidates");
    const auto m1 = evaluate(v1, gt), m2 = evaluate(v2, gt);
    const std::string d = "Shop-3 seeded method rho=" + num(*c1->rho, 1) + " sigma=" + num(c1->sigma) + ": V1 s=" +
                          num(*c1->hybrid_score) + (c1->pruned ? " pruned" : " kept") + ", V2 s=" +
                          num(*c2->hybrid_score) + (c2->pruned ? " pruned" : " kept") + "; strict loss V1=" +
                          (m1.strict_loss ? "yes" : "no") + " V2=" + (m2.strict_loss ? "yes" : "no");
    const bool ok = *c1->rho == 0.0 && !c1->pruned && c2->pruned && !m1.strict_loss && m2.strict_loss &&
                    std::abs(*c1->hybrid_score - 0.4 * c1->sigma) < kScoreTolerance;
    return ok ? pass(d) : fail(d);
}

Outcome call_accounting() {
    int runs = 0, wrong = 0;
    std::string first_wrong;
    for (const char* bug : {"Shop-1", "Shop-2", "Shop-3", "Shop-4"}) {
        for (auto v : {Variant::V0, Variant::V1, Variant::V2}) {
            ShopEnv env;
            const auto r = run_bug(ShopEnv::bug(bug), env.resources(), ShopEnv::config(v));
            const std::size_t expect = 1 + r.candidates_after_pruning + (r.confirmed_suspects.size() > 1 ? 1 : 0);
            ++runs;
            if (!r.completed || env.mock->call_count() != expect) {
                if (!wrong) first_wrong = std::string(bug) + "/" + std::string(to_string(v));
                ++wrong;
            }
        }
    }
    const std::string d = std::to_string(runs) + " bug/variant runs, " + std::to_string(wrong) + " with a call-log mismatch" +
                          (wrong ? " (first: " + first_wrong + ")" : "");
    return wrong == 0 ? pass(d) : fail(d);
}

Outcome live_smoke(const std::string& url, const std::string& model, const std::string& api) {
    if (url.empty()) return {Outcome::Skip, "no --live-url or SIEVEFL_LIVE_URL given"};
    HttpBackendConfig cfg;
    cfg.base_url = url;
    cfg.model = model;
    cfg.api = api == "openai" ? HttpBackendConfig::Api::OpenAI : HttpBackendConfig::Api::Ollama;
    HttpChatBackend backend(cfg);
    ShopEnv env;
    auto res = env.resources(&backend);
    res.clock = steady_clock_seconds();
    auto pcfg = ShopEnv::config(Variant::V1);
    pcfg.retry.initial_backoff = std::chrono::milliseconds(1000);
    const auto r = run_bug(ShopEnv::bug("Shop-1"), res, pcfg);
    RunRecord back;
    try {
        back = record_from_json(json::parse(to_json(r).dump()));
    } catch (const Error& e) {
        return fail(std::string("record does not parse back: ") + e.what());
    }
    const std::string d = "Shop-1 against " + url + " (" + model + "): " + (r.completed ? "completed" : "failed: " + r.error) +
                          ", " + std::to_string(r.ranked_methods.size()) + " ranked, " + std::to_string(r.tokens_in()) +
                          " input tokens";
    return r.completed && back.bug_id == "Shop-1" ? pass(d) : fail(d);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance checks"};
    std::string live_url, live_model = "qwen3:30b", live_api = "ollama";
    if (const char* env = std::getenv("SIEVEFL_LIVE_URL")) live_url = env;
    app.add_option("--live-url", live_url, "Chat endpoint for the live smoke check");
    app.add_option("--live-model", live_model, "Model for the live smoke check");
    app.add_option("--live-api", live_api, "ollama or openai");
    CLI11_PARSE(app, argc, argv);

    const std::vector<std::pair<std::string, std::function<Outcome()>>> checks{
        {"hybrid-score oracle", hybrid_score_oracle},
        {"default configuration", default_configuration},
        {"retrieval exactness", retrieval_exactness},
        {"coverage ratio table", coverage_ratio_table},
        {"metric oracle", metric_oracle},
        {"strict-loss/recall dissociation", dissociation},
        {"end-to-end golden", end_to_end_golden},
        {"fallback contract", fallback_contract},
        {"ablation shape", ablation_shape},
        {"call accounting", call_accounting},
        {"live backend smoke", [&] { return live_smoke(live_url, live_model, live_api); }},
    };

    int failed = 0;
    for (const auto& [name, check] : checks) {
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = fail(std::string("threw: ") + e.what());
        }
        const char* tag = o.kind == Outcome::Pass ? "PASS" : o.kind == Outcome::Skip ? "SKIP" : "FAIL";
        failed += o.kind == Outcome::Fail;
        std::cout << tag << "  " << name << ": " << o.detail << std::endl;
    }
    return failed ? 1 : 0;
}
