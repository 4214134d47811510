#include "sievefl/cli.hpp"

#include "sievefl/config.hpp"
#include "sievefl/errors.hpp"
#include "sievefl/eval.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <thread>

namespace sievefl {

namespace fs = std::filesystem;

namespace {

struct Overrides {
    std::optional<std::string> config;
    std::optional<std::string> variant;
    std::optional<double> tau, w_cov, w_sem;
    std::optional<std::size_t> k_f;
    std::optional<std::string> backend_url, mock_script;
    std::optional<std::string> source_root, bugs_dir, ground_truth, output_dir;
    std::optional<unsigned> parallelism, bug_parallelism;
    std::optional<std::string> out;
    std::string bug = "all";
    bool append = false;
    bool quiet = false;
    std::vector<std::string> logs;
    Gates gates;
};

CliConfig resolve(const Overrides& o) {
    CliConfig cfg = o.config ? load_config_file(*o.config) : CliConfig{};
    apply_environment(cfg);
    if (o.variant) cfg.pipeline.variant = parse_variant(*o.variant);
    if (o.tau) cfg.pipeline.tau = *o.tau;
    if (o.w_cov) cfg.pipeline.w_cov = *o.w_cov;
    if (o.w_sem) cfg.pipeline.w_sem = *o.w_sem;
    if (o.k_f) cfg.pipeline.k_f = *o.k_f;
    if (o.parallelism) cfg.pipeline.parallelism = *o.parallelism;
    if (o.bug_parallelism) cfg.bug_parallelism = *o.bug_parallelism;
    if (o.backend_url) cfg.backend.url = *o.backend_url;
    if (o.mock_script) cfg.backend.mock_script = fs::path(*o.mock_script);
    if (o.source_root) cfg.source_root = *o.source_root;
    if (o.bugs_dir) cfg.bugs_dir = *o.bugs_dir;
    if (o.ground_truth) cfg.ground_truth = *o.ground_truth;
    if (o.output_dir) cfg.output_dir = *o.output_dir;
    if (o.quiet) cfg.verbosity = 0;
    cfg.pipeline.validate();
    if (cfg.bug_parallelism == 0) throw ConfigError("bug_parallelism must be at least 1");
    return cfg;
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw InputError("cannot create output directory '" + dir.string() + "': " + ec.message());
}

int cmd_index(const Overrides& o, std::ostream& out, std::ostream& err) {
    CliConfig cfg = resolve(o);
    if (o.out) cfg.output_dir = *o.out;

    ExtractOptions opts;
    opts.glob = cfg.source_glob;
    opts.parallelism = cfg.pipeline.parallelism;
    const auto extracted = extract_methods(cfg.source_root, opts);
    for (const auto& w : extracted.warnings) err << "warning: " << w.file_path << ": " << w.message << '\n';
    if (extracted.documents.empty()) {
        throw InputError("no methods found under '" + cfg.source_root.string() + "'");
    }

    auto embedder = make_embedder(cfg);
    VectorIndex index(embedder->dimension(), embedder->identity());
    for (const auto& d : extracted.documents) index.add(d.doc_id, embedder->embed(d.index_text));
    index.freeze();

    ensure_dir(cfg.output_dir);
    write_corpus(cfg.corpus_path(), extracted.documents);
    index.save(cfg.index_path());
    out << extracted.documents.size() << " documents indexed (dimension " << index.dimension() << ")\n";
    return kExitOk;
}

std::vector<fs::path> select_bugs(const fs::path& bugs_dir, const std::string& selector) {
    std::error_code ec;
    if (!fs::is_directory(bugs_dir, ec)) {
        throw InputError("bugs directory '" + bugs_dir.string() + "' does not exist");
    }
    std::vector<fs::path> all;
    for (const auto& e : fs::directory_iterator(bugs_dir)) {
        if (e.is_directory()) all.push_back(e.path());
    }
    std::sort(all.begin(), all.end());
    if (selector == "all") return all;

    std::vector<fs::path> chosen;
    std::stringstream ss(selector);
    std::string id;
    while (std::getline(ss, id, ',')) {
        if (id.empty()) continue;
        const auto p = bugs_dir / id;
        if (!fs::is_directory(p, ec)) throw InputError("unknown bug '" + id + "'");
        chosen.push_back(p);
    }
    if (chosen.empty()) throw InputError("empty bug selector");
    return chosen;
}

std::string fixed3(double v) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(3) << v;
    return s.str();
}

int cmd_run(const Overrides& o, std::ostream& out, std::ostream& err) {
    const CliConfig cfg = resolve(o);
    const Corpus corpus(read_corpus(cfg.corpus_path()));
    const VectorIndex index = VectorIndex::load(cfg.index_path());
    auto embedder = make_embedder(cfg);
    if (embedder->identity() != index.provider_identity()) {
        throw ConfigError("index was built with '" + index.provider_identity() + "' but the configured embedder is '" +
                          embedder->identity() + "'; rerun index");
    }
    auto backend = make_backend(cfg);
    const auto bugs = select_bugs(cfg.bugs_dir, o.bug);

    PipelineResources res{corpus, index, *embedder, *backend,
                          cfg.backend.mock_script ? frozen_clock() : steady_clock_seconds(), provenance(cfg)};

    if (cfg.verbosity > 0) {
        const auto eff = cfg.pipeline.effective();
        out << "variant " << to_string(eff.variant) << "  w_cov=" << fixed3(eff.w_cov) << "  w_sem=" << fixed3(eff.w_sem)
            << "  tau=" << fixed3(eff.tau) << "  k_f=" << eff.k_f << "  bugs=" << bugs.size() << '\n';
    }

    std::vector<RunRecord> records(bugs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < bugs.size(); i = next++) {
            FailureContext ctx;
            try {
                ctx = load_bug_bundle(bugs[i]);
            } catch (const InputError& e) {
                RunRecord& r = records[i];
                r.bug_id = bugs[i].filename().string();
                r.project = project_of(r.bug_id);
                r.variant = cfg.pipeline.variant;
                r.error = std::string("bundle: ") + e.what();
                r.config = cfg.pipeline.effective();
                for (const auto& [k, v] : res.provenance.items()) r.config[k] = v;
                continue;
            }
            records[i] = run_bug(ctx, res, cfg.pipeline);
        }
    };
    const unsigned threads = std::min<unsigned>(cfg.bug_parallelism, static_cast<unsigned>(bugs.size()));
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    const fs::path log = o.out ? fs::path(*o.out)
                               : cfg.output_dir / ("run-" + std::string(to_string(cfg.pipeline.variant)) + ".jsonl");
    if (log.has_parent_path()) ensure_dir(log.parent_path());
    if (!o.append) std::ofstream(log, std::ios::trunc);

    std::size_t completed = 0;
    for (const auto& r : records) {
        append_run_log(log, r);
        completed += r.completed;
        if (cfg.verbosity == 0) continue;
        out << r.bug_id << "  " << (r.completed ? "completed" : "failed");
        if (r.completed) {
            out << "  top=" << (r.ranked_methods.empty() ? std::string("-") : r.ranked_methods.front())
                << "  reduction=" << fixed3(r.reduction_ratio);
            if (r.fallback_used) out << "  fallback";
        } else {
            out << "  error=" << r.error;
        }
        out << '\n';
        for (const auto& a : r.anomalies) err << "  " << r.bug_id << ": " << a << '\n';
    }
    out << completed << " of " << records.size() << " bugs completed; log written to " << log.string() << '\n';
    return completed > 0 ? kExitOk : kExitGate;
}

std::vector<BugMetrics> metrics_of(const fs::path& log, const GroundTruth& gt) {
    std::vector<BugMetrics> ms;
    for (const auto& r : latest_per_bug(read_run_log(log))) ms.push_back(evaluate(r, gt));
    if (ms.empty()) throw InputError("run log '" + log.string() + "' is empty");
    return ms;
}

std::string log_label(const fs::path& log) {
    const auto records = read_run_log(log);
    return records.empty() ? log.stem().string() : std::string(to_string(records.front().variant));
}

int cmd_eval(const Overrides& o, std::ostream& out, std::ostream& err) {
    const CliConfig cfg = resolve(o);
    if (o.logs.empty() || o.logs.size() > 2) throw InputError("eval takes one or two run logs");
    const auto gt = load_ground_truth(cfg.ground_truth);

    const auto first = metrics_of(o.logs[0], gt);
    const auto report = aggregate(first);
    std::string text = format_aggregate(report);
    nlohmann::json summary{{"log", o.logs[0]}, {"aggregate", to_json(report)}};
    const Summary* gated = &report.overall;

    std::optional<PairedReport> paired;
    if (o.logs.size() == 2) {
        auto la = log_label(o.logs[0]);
        auto lb = log_label(o.logs[1]);
        if (la == lb) {
            la = fs::path(o.logs[0]).stem().string();
            lb = fs::path(o.logs[1]).stem().string();
        }
        paired = paired_compare(first, metrics_of(o.logs[1], gt), la, lb);
        text += "\n" + format_paired(*paired);
        summary["paired"] = to_json(*paired);
        gated = &paired->b;
    }

    const fs::path prefix = o.out ? fs::path(*o.out) : cfg.output_dir / "eval";
    if (prefix.has_parent_path()) ensure_dir(prefix.parent_path());
    std::ofstream(prefix.string() + ".txt") << text;
    std::ofstream(prefix.string() + ".json") << summary.dump(2) << '\n';
    out << text;

    const auto violations = o.gates.check(*gated);
    for (const auto& v : violations) err << "gate violated: " << v << '\n';
    return violations.empty() ? kExitOk : kExitGate;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Coverage-pruned, LLM-screened method-level fault localization"};
    app.require_subcommand(1);
    app.fallthrough();
    Overrides o;

    app.add_option("--config", o.config, "JSON config file");
    app.add_option("--variant", o.variant, "Pipeline variant: v0, v1 or v2");
    app.add_option("--tau", o.tau, "Pruning threshold");
    app.add_option("--w-cov", o.w_cov, "Coverage weight");
    app.add_option("--w-sem", o.w_sem, "Semantic weight");
    app.add_option("--kf", o.k_f, "Retrieval depth");
    app.add_option("--backend-url", o.backend_url, "Chat backend base URL");
    app.add_option("--mock-script", o.mock_script, "Serve chat replies from a JSON script");
    app.add_option("--source-root", o.source_root, "Java source tree");
    app.add_option("--bugs-dir", o.bugs_dir, "Directory of per-bug bundles");
    app.add_option("--ground-truth", o.ground_truth, "Ground-truth JSON");
    app.add_option("--output-dir", o.output_dir, "Corpus, index and report directory");
    app.add_option("--parallelism", o.parallelism, "Concurrent screening calls per bug");
    app.add_option("--bug-parallelism", o.bug_parallelism, "Bugs run concurrently");
    app.add_option("--out", o.out, "Output: index dir, run log path, or eval report prefix");
    app.add_flag("-q,--quiet", o.quiet, "Only print the final line");

    auto* index = app.add_subcommand("index", "Extract methods and build the vector index");
    auto* run = app.add_subcommand("run", "Run the pipeline over bug bundles");
    run->add_option("--bug", o.bug, "'all' or comma-separated bug ids");
    run->add_flag("--append", o.append, "Append to an existing run log");
    auto* eval = app.add_subcommand("eval", "Score one run log, or compare two");
    eval->add_option("logs", o.logs, "Run log(s)")->required();
    eval->add_option("--min-top1", o.gates.min_top1, "Fail below this Top-1 rate (0-1)");
    eval->add_option("--min-mrr", o.gates.min_mrr, "Fail below this MRR");
    eval->add_option("--max-strict-loss-rate", o.gates.max_strict_loss_rate, "Fail above this strict-loss rate (0-1)");
    eval->add_option("--min-reduction", o.gates.min_mean_reduction, "Fail below this mean reduction ratio");

    std::vector<std::string> storage{"sievefl"};
    storage.insert(storage.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& s : storage) argv.push_back(s.data());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitInput;
    }

    try {
        if (*index) return cmd_index(o, out, err);
        if (*run) return cmd_run(o, out, err);
        return cmd_eval(o, out, err);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitInput;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitInput;
    }
}

}  // namespace sievefl
