#include "lexcascade/app.hpp"

#include <array>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "lexcascade/error.hpp"
#include "lexcascade/evaluation.hpp"
#include "lexcascade/grid_search.hpp"

namespace lexcascade {

using nlohmann::json;
namespace fs = std::filesystem;

int exit_code_for(ErrorCode code) noexcept
{
    switch (code) {
    case ErrorCode::ConfigError:
    case ErrorCode::WeightError:
    case ErrorCode::BudgetTooSmall:
        return kExitConfig;
    case ErrorCode::ScorerTimeout:
    case ErrorCode::ScorerCrashed:
    case ErrorCode::MissingScore:
    case ErrorCode::Transport:
        return kExitConnectivity;
    case ErrorCode::NoFeasibleCell:
        return kExitInfeasible;
    default:
        return kExitData;
    }
}

namespace {

// Reads `key` from `obj` into `field` when present; rejects type mismatches.
template <typename T>
void read(const json& obj, const char* section, const char* key, T& field)
{
    const auto it = obj.find(key);
    if (it == obj.end()) {
        return;
    }
    const std::string where = std::string(section).empty() ? key : std::string(section) + "." + key;
    bool ok = false;
    if constexpr (std::is_same_v<T, bool>) {
        ok = it->is_boolean();
    } else if constexpr (std::is_same_v<T, std::string>) {
        ok = it->is_string();
    } else if constexpr (std::is_integral_v<T>) {
        ok = it->is_number_unsigned();
    } else {
        ok = it->is_number();
    }
    if (!ok) {
        throw Error(ErrorCode::ConfigError, "config key '" + where + "' has the wrong type");
    }
    field = it->get<T>();
}

void reject_unknown(const json& obj, const std::string& section, std::initializer_list<const char*> known)
{
    if (!obj.is_object()) {
        throw Error(ErrorCode::ConfigError, "config section '" + section + "' must be an object");
    }
    for (const auto& [key, value] : obj.items()) {
        if (std::find_if(known.begin(), known.end(), [&](const char* k) { return key == k; }) == known.end()) {
            throw Error(ErrorCode::ConfigError,
                        "unknown config key '" + (section.empty() ? key : section + "." + key) + "'");
        }
    }
}

const json& section(const json& doc, const char* name)
{
    static const json empty = json::object();
    const auto it = doc.find(name);
    return it == doc.end() ? empty : *it;
}

}  // namespace

LlmMode parse_llm_mode(const std::string& name)
{
    if (name == "live") {
        return LlmMode::Live;
    }
    if (name == "replay") {
        return LlmMode::Replay;
    }
    if (name == "stub") {
        return LlmMode::Stub;
    }
    throw Error(ErrorCode::ConfigError, "llm mode must be live, replay or stub, got '" + name + "'");
}

AppConfig parse_config(const json& doc)
{
    reject_unknown(doc, "",
                   {"k", "alpha", "beta1", "threshold1", "beta2", "gamma", "threshold2", "keep_top1", "llm_enabled",
                    "fuse_llm_with_semantic", "tokenizer", "bm25", "scorer", "llm", "tune", "seed", "jobs"});
    AppConfig cfg;
    from_json(doc, cfg.pipeline);
    read(doc, "", "seed", cfg.seed);
    read(doc, "", "jobs", cfg.jobs);

    const auto& tok = section(doc, "tokenizer");
    reject_unknown(tok, "tokenizer", {"lowercase", "strip_punctuation"});
    read(tok, "tokenizer", "lowercase", cfg.tokenizer.lowercase);
    read(tok, "tokenizer", "strip_punctuation", cfg.tokenizer.strip_punctuation);

    const auto& bm25 = section(doc, "bm25");
    reject_unknown(bm25, "bm25", {"k1", "b"});
    read(bm25, "bm25", "k1", cfg.bm25.k1);
    read(bm25, "bm25", "b", cfg.bm25.b);

    const auto& sc = section(doc, "scorer");
    reject_unknown(sc, "scorer", {"mode", "command", "path", "timeout"});
    std::string mode = "overlap";
    read(sc, "scorer", "mode", mode);
    if (mode == "overlap") {
        cfg.scorer.kind = ScorerSettings::Kind::Overlap;
    } else if (mode == "subprocess") {
        cfg.scorer.kind = ScorerSettings::Kind::Subprocess;
    } else if (mode == "score_file") {
        cfg.scorer.kind = ScorerSettings::Kind::ScoreFile;
    } else {
        throw Error(ErrorCode::ConfigError, "scorer.mode must be overlap, subprocess or score_file");
    }
    read(sc, "scorer", "command", cfg.scorer.command);
    read(sc, "scorer", "path", cfg.scorer.path);
    read(sc, "scorer", "timeout", cfg.scorer.timeout_seconds);

    const auto& llm = section(doc, "llm");
    reject_unknown(llm, "llm",
                   {"endpoint", "model", "api_key_env", "temperature", "max_retries", "backoff_initial",
                    "backoff_multiplier", "token_budget", "token_factor", "request_timeout", "max_in_flight",
                    "requests_per_minute", "mode", "prompt_template", "audit_log"});
    read(llm, "llm", "endpoint", cfg.llm.endpoint);
    read(llm, "llm", "model", cfg.llm.model);
    read(llm, "llm", "api_key_env", cfg.llm.api_key_env);
    read(llm, "llm", "temperature", cfg.llm.temperature);
    if (const auto it = llm.find("max_retries"); it != llm.end()) {
        if (!it->is_number_integer()) {
            throw Error(ErrorCode::ConfigError, "config key 'llm.max_retries' has the wrong type");
        }
        cfg.llm.max_retries = it->get<int>();
    }
    read(llm, "llm", "backoff_initial", cfg.llm.backoff_initial_seconds);
    read(llm, "llm", "backoff_multiplier", cfg.llm.backoff_multiplier);
    read(llm, "llm", "token_budget", cfg.llm.token_budget);
    read(llm, "llm", "token_factor", cfg.llm.token_factor);
    read(llm, "llm", "request_timeout", cfg.llm.request_timeout_seconds);
    read(llm, "llm", "max_in_flight", cfg.llm.max_in_flight);
    read(llm, "llm", "requests_per_minute", cfg.llm.requests_per_minute);
    std::string llm_mode = "stub";
    read(llm, "llm", "mode", llm_mode);
    cfg.llm_mode = parse_llm_mode(llm_mode);
    read(llm, "llm", "prompt_template", cfg.prompt_template);
    read(llm, "llm", "audit_log", cfg.audit_log);

    const auto& tune = section(doc, "tune");
    reject_unknown(tune, "tune", {"validation_fraction", "weight_step", "threshold_step", "f2_min"});
    read(tune, "tune", "validation_fraction", cfg.tune.validation_fraction);
    read(tune, "tune", "weight_step", cfg.tune.weight_step);
    read(tune, "tune", "threshold_step", cfg.tune.threshold_step);
    read(tune, "tune", "f2_min", cfg.tune.f2_min);

    cfg.pipeline.validate();
    cfg.llm.validate();
    if (!(cfg.bm25.k1 >= 0.0) || !(cfg.bm25.b >= 0.0 && cfg.bm25.b <= 1.0)) {
        throw Error(ErrorCode::ConfigError, "bm25 parameters require k1 >= 0 and 0 <= b <= 1");
    }
    if (!(cfg.tune.validation_fraction >= 0.0 && cfg.tune.validation_fraction <= 1.0)) {
        throw Error(ErrorCode::ConfigError, "tune.validation_fraction must lie in [0,1]");
    }
    if (cfg.jobs == 0) {
        throw Error(ErrorCode::ConfigError, "jobs must be >= 1");
    }
    return cfg;
}

AppConfig load_config(const std::string& path)
{
    if (path.empty()) {
        return parse_config(json::object());
    }
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::ConfigError, "cannot read config " + path);
    }
    const json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) {
        throw Error(ErrorCode::ConfigError, path + " is not valid JSON");
    }
    return parse_config(doc);
}

json config_to_json(const AppConfig& cfg)
{
    json doc = cfg.pipeline;
    doc["seed"] = cfg.seed;
    doc["jobs"] = cfg.jobs;
    doc["tokenizer"] = {{"lowercase", cfg.tokenizer.lowercase}, {"strip_punctuation", cfg.tokenizer.strip_punctuation}};
    doc["bm25"] = {{"k1", cfg.bm25.k1}, {"b", cfg.bm25.b}};
    const char* mode = cfg.scorer.kind == ScorerSettings::Kind::Overlap      ? "overlap"
                       : cfg.scorer.kind == ScorerSettings::Kind::Subprocess ? "subprocess"
                                                                             : "score_file";
    doc["scorer"] = {{"mode", mode},
                     {"command", cfg.scorer.command},
                     {"path", cfg.scorer.path},
                     {"timeout", cfg.scorer.timeout_seconds}};
    const char* llm_mode = cfg.llm_mode == LlmMode::Live ? "live" : cfg.llm_mode == LlmMode::Replay ? "replay" : "stub";
    doc["llm"] = {{"endpoint", cfg.llm.endpoint},
                  {"model", cfg.llm.model},
                  {"api_key_env", cfg.llm.api_key_env},
                  {"temperature", cfg.llm.temperature},
                  {"max_retries", cfg.llm.max_retries},
                  {"backoff_initial", cfg.llm.backoff_initial_seconds},
                  {"backoff_multiplier", cfg.llm.backoff_multiplier},
                  {"token_budget", cfg.llm.token_budget},
                  {"token_factor", cfg.llm.token_factor},
                  {"request_timeout", cfg.llm.request_timeout_seconds},
                  {"max_in_flight", cfg.llm.max_in_flight},
                  {"requests_per_minute", cfg.llm.requests_per_minute},
                  {"mode", llm_mode},
                  {"prompt_template", cfg.prompt_template},
                  {"audit_log", cfg.audit_log}};
    doc["tune"] = {{"validation_fraction", cfg.tune.validation_fraction},
                   {"weight_step", cfg.tune.weight_step},
                   {"threshold_step", cfg.tune.threshold_step},
                   {"f2_min", cfg.tune.f2_min}};
    return doc;
}

std::unique_ptr<PairScorer> make_semantic_scorer(const ScorerSettings& settings, const TokenizerConfig& tokenizer)
{
    switch (settings.kind) {
    case ScorerSettings::Kind::Overlap:
        return std::make_unique<OverlapScorer>(tokenizer);
    case ScorerSettings::Kind::Subprocess:
        return std::make_unique<ExternalScorer>(ExternalScorerConfig{
            ExternalScorerConfig::Mode::Subprocess, settings.command,
            std::chrono::duration<double>(settings.timeout_seconds)});
    case ScorerSettings::Kind::ScoreFile:
        return std::make_unique<ExternalScorer>(ExternalScorerConfig{
            ExternalScorerConfig::Mode::ScoreFile, settings.path,
            std::chrono::duration<double>(settings.timeout_seconds)});
    }
    throw Error(ErrorCode::ConfigError, "unknown scorer kind");
}

std::shared_ptr<LlmClient> make_llm_client(const AppConfig& cfg, const Corpus& corpus)
{
    std::shared_ptr<LlmClient> client;
    switch (cfg.llm_mode) {
    case LlmMode::Live:
        client = std::make_shared<HttpLlmClient>(cfg.llm);
        break;
    case LlmMode::Replay:
        if (cfg.audit_log.empty()) {
            throw Error(ErrorCode::ConfigError, "replay mode needs llm.audit_log");
        }
        return std::make_shared<ReplayLlmClient>(cfg.audit_log);
    case LlmMode::Stub: {
        const TokenizerConfig tok = cfg.tokenizer;
        client = std::make_shared<StubLlmClient>(
            [&corpus, tok](const std::string&, const std::string& query_text, const std::string& article_id) {
                const auto q = tokenize(query_text, tok);
                const std::set<std::string> terms(q.begin(), q.end());
                if (terms.empty()) {
                    return 0;
                }
                const auto a = tokenize(corpus.at(article_id).text, tok);
                const std::set<std::string> doc(a.begin(), a.end());
                std::size_t common = 0;
                for (const auto& t : terms) {
                    common += doc.count(t);
                }
                return static_cast<int>(
                    std::lround(100.0 * static_cast<double>(common) / static_cast<double>(terms.size())));
            });
        break;
    }
    }
    if (!cfg.audit_log.empty()) {
        client = std::make_shared<AuditingLlmClient>(client, cfg.audit_log);
    }
    if (cfg.llm_mode == LlmMode::Live) {
        client = std::make_shared<RateLimitedLlmClient>(client, cfg.llm.max_in_flight, cfg.llm.requests_per_minute);
    }
    return client;
}

std::string file_digest(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::Io, "cannot read " + path.string());
    }
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
    std::array<char, 65536> buf{};
    while (in) {
        in.read(buf.data(), buf.size());
        EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx.get(), md.data(), &len);
    std::ostringstream hex;
    for (unsigned int i = 0; i < len; ++i) {
        hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
    }
    return hex.str();
}

namespace {

AppConfig resolve_config(const GlobalOptions& global)
{
    AppConfig cfg = load_config(global.config_path);
    if (global.seed) {
        cfg.seed = *global.seed;
    }
    if (global.jobs) {
        if (*global.jobs == 0) {
            throw Error(ErrorCode::ConfigError, "--jobs must be >= 1");
        }
        cfg.jobs = *global.jobs;
    }
    if (global.llm_mode) {
        cfg.llm_mode = parse_llm_mode(*global.llm_mode);
    }
    return cfg;
}

int report_error(const Error& e, std::ostream& err)
{
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
}

std::string run_id()
{
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream id;
    id << std::put_time(&tm, "%Y%m%dT%H%M%SZ") << '-' << std::hex << std::setw(6) << std::setfill('0')
       << (std::random_device{}() & 0xFFFFFFU);
    return id.str();
}

void write_json(const fs::path& path, const json& doc)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(ErrorCode::Io, "cannot write " + path.string());
    }
    out << doc.dump(2) << '\n';
}

std::string fmt_double(double v)
{
    std::array<char, 64> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return {buf.data(), res.ptr};
}

std::string csv_field(const std::string& s)
{
    if (s.find_first_of(",\"\n\r") == std::string::npos) {
        return s;
    }
    std::string quoted = "\"";
    for (const char c : s) {
        quoted += c;
        if (c == '"') {
            quoted += '"';
        }
    }
    return quoted + '"';
}

std::ofstream open_out(const fs::path& path)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(ErrorCode::Io, "cannot write " + path.string());
    }
    return out;
}

void write_histogram(const fs::path& path, const std::vector<double>& scores, std::size_t bins)
{
    const auto h = score_histogram(scores, bins);
    auto out = open_out(path);
    out << "bin_lo,bin_hi,count\n";
    for (std::size_t i = 0; i < bins; ++i) {
        out << fmt_double(h.edges[i]) << ',' << fmt_double(h.edges[i + 1]) << ',' << h.counts[i] << '\n';
    }
}

json report_to_json(const MetricReport& r)
{
    json per_query = json::object();
    for (const auto& [qid, m] : r.per_query) {
        per_query[qid] = {{"precision", m.precision}, {"recall", m.recall}, {"f2", m.f2}};
    }
    return {{"query_count", r.query_count},
            {"precision", r.precision},
            {"recall", r.recall},
            {"f2", r.f2},
            {"per_query", std::move(per_query)}};
}

std::vector<Query> load_gold(const std::string& path)
{
    if (path.empty()) {
        throw Error(ErrorCode::MissingGold, "a gold queries file is required");
    }
    return load_queries(path);
}

}  // namespace

int cmd_index(const IndexArgs& args, const GlobalOptions& global, std::ostream& out, std::ostream& err)
{
    try {
        const AppConfig cfg = resolve_config(global);
        auto corpus = load_articles(args.articles);
        const auto index = Bm25Index::build(std::move(corpus), cfg.tokenizer, cfg.bm25);
        index.save(args.out);
        out << "N=" << index.doc_count() << " avgdl=" << index.avgdl() << " vocabulary=" << index.vocabulary_size()
            << '\n';
        return kExitOk;
    } catch (const Error& e) {
        return report_error(e, err);
    }
}

int cmd_run(const RunArgs& args, const GlobalOptions& global, std::ostream& out, std::ostream& err)
{
    try {
        const AppConfig cfg = resolve_config(global);
        const auto index = Bm25Index::load(args.index);
        const auto queries = load_queries(args.queries);
        check_relevant_ids(queries, index.corpus());

        const fs::path dir(args.out_dir);
        std::error_code ec;
        if (fs::exists(dir, ec) && !fs::is_empty(dir, ec) && !global.force) {
            err << "error: " << dir.string() << " exists and is not empty (use --force to overwrite)\n";
            return kExitData;
        }

        std::unique_ptr<PairScorer> scorer;
        if (cfg.pipeline.needs_semantic()) {
            scorer = make_semantic_scorer(cfg.scorer, cfg.tokenizer);
        }
        std::shared_ptr<LlmClient> llm;
        RunOptions options;
        options.llm = cfg.llm;
        options.jobs = cfg.jobs;
        if (cfg.pipeline.llm_enabled) {
            try {
                llm = make_llm_client(cfg, index.corpus());
            } catch (const Error& e) {
                err << "error: " << e.what() << '\n';
                return kExitConnectivity;
            }
            if (!cfg.prompt_template.empty()) {
                options.llm_options.prompt = PromptTemplate::load(cfg.prompt_template);
            }
        }

        fs::create_directories(dir, ec);
        json manifest{{"run_id", run_id()},
                      {"status", "running"},
                      {"config", config_to_json(cfg)},
                      {"inputs",
                       {{"index", {{"path", args.index}, {"sha256", file_digest(args.index)}}},
                        {"queries", {{"path", args.queries}, {"sha256", file_digest(args.queries)}}}}},
                      {"versions", {{"lexcascade", kVersion}, {"index_format", Bm25Index::kFormatVersion}}}};
        if (!global.config_path.empty()) {
            manifest["inputs"]["config"] = {{"path", global.config_path},
                                            {"sha256", file_digest(global.config_path)}};
        }
        write_json(dir / "manifest.json", manifest);

        const auto run = run_pipeline(index, queries, cfg.pipeline, scorer.get(), llm.get(), options);
        write_run_directory(run, dir, true);

        manifest["status"] = "complete";
        manifest["degradation"] = {{"degraded_queries", run.degraded_queries()}, {"queries", run.queries.size()}};
        write_json(dir / "manifest.json", manifest);

        std::size_t selected = 0;
        for (const auto& t : run.queries) {
            selected += t.selected.size();
        }
        out << "queries=" << run.queries.size() << " selected=" << selected
            << " degraded=" << run.degraded_queries() << " out=" << dir.string() << '\n';
        return kExitOk;
    } catch (const Error& e) {
        return report_error(e, err);
    }
}

int cmd_tune(const TuneArgs& args, const GlobalOptions& global, std::ostream& out, std::ostream& err)
{
    try {
        if (args.phase != 2 && args.phase != 3) {
            throw Error(ErrorCode::ConfigError, "--phase must be 2 or 3");
        }
        const AppConfig cfg = resolve_config(global);
        const auto index = Bm25Index::load(args.index);
        const auto queries = load_queries(args.queries);
        check_relevant_ids(queries, index.corpus());
        const auto split = split_validation(queries, cfg.tune.validation_fraction, cfg.seed);
        if (split.validation.empty()) {
            throw Error(ErrorCode::MissingGold, "validation split is empty");
        }
        for (const auto& q : split.validation) {
            if (q.relevant_ids.empty()) {
                throw Error(ErrorCode::MissingGold, "validation query " + q.id + " has no gold labels");
            }
        }

        const auto scorer = make_semantic_scorer(cfg.scorer, cfg.tokenizer);
        RunOptions options;
        options.llm = cfg.llm;
        options.jobs = cfg.jobs;
        options.force_semantic = true;

        GridSpec spec;
        spec.weight_step = cfg.tune.weight_step;
        spec.threshold_step = cfg.tune.threshold_step;
        spec.keep_top1 = cfg.pipeline.keep_top1;
        spec.jobs = cfg.jobs;

        json patch;
        GridResult best;
        if (args.phase == 2) {
            PipelineConfig pc = cfg.pipeline;
            pc.llm_enabled = false;
            const auto run = run_pipeline(index, split.validation, pc, scorer.get(), nullptr, options);
            const auto points = phase2_points(run, split.validation);
            spec.objective = GridObjective::MaxRecallGivenF2;
            spec.f2_min = cfg.tune.f2_min;
            best = grid_search(points, spec);
            patch = {{"alpha", best.w_a}, {"beta1", best.w_b}, {"threshold1", best.threshold}};
        } else {
            PipelineConfig pc = cfg.pipeline;
            pc.llm_enabled = true;
            std::shared_ptr<LlmClient> llm;
            try {
                llm = make_llm_client(cfg, index.corpus());
            } catch (const Error& e) {
                err << "error: " << e.what() << '\n';
                return kExitConnectivity;
            }
            if (!cfg.prompt_template.empty()) {
                options.llm_options.prompt = PromptTemplate::load(cfg.prompt_template);
            }
            const auto run = run_pipeline(index, split.validation, pc, scorer.get(), llm.get(), options);
            auto points = phase3_points(run, split.validation);
            if (!cfg.pipeline.fuse_llm_with_semantic) {
                // LLM-only final score: weights are irrelevant, only the threshold is tuned.
                for (auto& p : points) {
                    p.a = p.b;
                }
            }
            spec.objective = GridObjective::MaxF2;
            best = grid_search(points, spec);
            patch = {{"beta2", best.w_a}, {"gamma", best.w_b}, {"threshold2", best.threshold}};
        }

        std::ofstream file(args.out, std::ios::binary | std::ios::trunc);
        if (!file) {
            throw Error(ErrorCode::Io, "cannot write " + args.out);
        }
        file << patch.dump(2) << '\n';
        out << "phase=" << args.phase << " validation_queries=" << split.validation.size() << " cells=" << best.cells
            << " f2=" << best.f2 << " precision=" << best.precision << " recall=" << best.recall << '\n'
            << patch.dump() << '\n';
        return kExitOk;
    } catch (const Error& e) {
        return report_error(e, err);
    }
}

int cmd_eval(const EvalArgs& args, const GlobalOptions&, std::ostream& out, std::ostream& err)
{
    try {
        const auto run = read_run_directory(args.run_dir);
        const auto gold = load_gold(args.gold);
        const auto report = macro_evaluate(run.selected(), gold);
        const fs::path target = args.out.empty() ? fs::path(args.run_dir) / "report.json" : fs::path(args.out);
        write_json(target, report_to_json(report));
        out << "queries=" << report.query_count << " f2=" << report.f2 << " precision=" << report.precision
            << " recall=" << report.recall << '\n';
        return kExitOk;
    } catch (const Error& e) {
        return report_error(e, err);
    }
}

int cmd_analyze(const AnalyzeArgs& args, const GlobalOptions&, std::ostream& out, std::ostream& err)
{
    try {
        if (args.run_dirs.empty() || args.run_dirs.size() > 2) {
            throw Error(ErrorCode::ConfigError, "analyze takes one or two run directories");
        }
        std::vector<RetrievalRun> runs;
        for (const auto& d : args.run_dirs) {
            runs.push_back(read_run_directory(d));
        }
        const fs::path dir = args.out_dir.empty() ? fs::path(args.run_dirs.back()) : fs::path(args.out_dir);
        std::error_code ec;
        fs::create_directories(dir, ec);

        std::optional<std::vector<Query>> gold;
        if (runs.size() == 2 || !args.gold.empty()) {
            gold = load_gold(args.gold);
        }

        if (runs.size() == 2) {
            const auto before = macro_evaluate(runs[0].selected(), *gold);
            const auto after = macro_evaluate(runs[1].selected(), *gold);
            const auto deltas = delta_report(before, after);
            auto csv = open_out(dir / "deltas.csv");
            csv << "query_id,metric,before,after,delta\n";
            for (const auto& r : deltas.rows) {
                csv << csv_field(r.query_id) << ',' << r.metric << ',' << fmt_double(r.before) << ','
                    << fmt_double(r.after) << ',' << fmt_double(r.delta) << '\n';
            }
            auto summary = [](const MetricDelta& d) {
                return json{{"increased", d.increased},
                            {"unchanged", d.unchanged},
                            {"decreased", d.decreased},
                            {"mean_increase", d.mean_increase},
                            {"mean_decrease", d.mean_decrease}};
            };
            write_json(dir / "delta_summary.json", {{"precision", summary(deltas.precision)},
                                                    {"recall", summary(deltas.recall)},
                                                    {"f2", summary(deltas.f2)}});
            out << "deltas: precision +" << deltas.precision.increased << " =" << deltas.precision.unchanged << " -"
                << deltas.precision.decreased << '\n';
        }

        const auto& run = runs.back();
        std::vector<double> final_scores;
        std::vector<double> semantic;
        std::vector<double> llm;
        bool has_semantic = false;
        bool has_llm = false;
        auto scatter = std::ostringstream{};
        scatter << "query_id,article_id,score_a,score_b\n";
        for (const auto& t : run.queries) {
            for (const auto& [id, s] : t.final_scores) {
                final_scores.push_back(s);
            }
            has_semantic = has_semantic || !t.semantic.empty();
            has_llm = has_llm || t.llm_ran;
            if (t.llm_ran) {
                for (const auto& [id, l] : t.llm) {
                    const auto it = t.semantic.find(id);
                    if (it == t.semantic.end()) {
                        continue;
                    }
                    semantic.push_back(it->second);
                    llm.push_back(l);
                    scatter << csv_field(t.query_id) << ',' << csv_field(id) << ',' << fmt_double(it->second) << ','
                            << fmt_double(l) << '\n';
                }
            }
        }
        write_histogram(dir / "histogram.csv", final_scores, args.bins);
        if (has_semantic) {
            std::vector<double> all;
            for (const auto& t : run.queries) {
                for (const auto& [id, s] : t.semantic) {
                    all.push_back(s);
                }
            }
            write_histogram(dir / "histogram_semantic.csv", all, args.bins);
        }
        if (has_llm) {
            std::vector<double> all;
            for (const auto& t : run.queries) {
                for (const auto& [id, s] : t.llm) {
                    all.push_back(s);
                }
            }
            write_histogram(dir / "histogram_llm.csv", all, args.bins);
        }
        if (!semantic.empty()) {
            auto csv = open_out(dir / "scatter.csv");
            csv << scatter.str();
            json corr{{"pairing", "semantic_vs_llm"}, {"n", semantic.size()}};
            try {
                corr["pearson"] = pearson(semantic, llm);
            } catch (const Error& e) {
                corr["pearson"] = nullptr;
                corr["error"] = e.what();
            }
            write_json(dir / "correlation.json", corr);
            out << "pearson(semantic, llm)=" << corr["pearson"].dump() << '\n';
        }
        if (gold && runs.size() == 1) {
            write_json(dir / "report.json", report_to_json(macro_evaluate(run.selected(), *gold)));
        }
        out << "analysis written to " << dir.string() << '\n';
        return kExitOk;
    } catch (const Error& e) {
        return report_error(e, err);
    }
}

}  // namespace lexcascade
