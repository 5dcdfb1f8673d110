#include "lexcascade/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "lexcascade/error.hpp"
#include "parallel.hpp"

namespace lexcascade {

using nlohmann::json;

namespace {

bool in_unit(double x) { return x >= 0.0 && x <= 1.0; }

void check_weights(double w_a, double w_b)
{
    if (!(w_a >= 0.0) || !(w_b >= 0.0) || std::abs(w_a + w_b - 1.0) > kWeightSumTolerance) {
        throw Error(ErrorCode::WeightError, "weights must be non-negative and sum to 1");
    }
}

}  // namespace

void PipelineConfig::validate() const
{
    if (!(alpha >= 0.0 && beta1 >= 0.0 && beta2 >= 0.0 && gamma >= 0.0)) {
        throw Error(ErrorCode::ConfigError, "fusion weights must be non-negative");
    }
    if (std::abs(alpha + beta1 - 1.0) > kWeightSumTolerance) {
        throw Error(ErrorCode::ConfigError, "alpha + beta1 must equal 1");
    }
    if (std::abs(beta2 + gamma - 1.0) > kWeightSumTolerance) {
        throw Error(ErrorCode::ConfigError, "beta2 + gamma must equal 1");
    }
    if (!in_unit(threshold1) || !in_unit(threshold2)) {
        throw Error(ErrorCode::ConfigError, "thresholds must lie in [0,1]");
    }
}

void to_json(json& j, const PipelineConfig& c)
{
    j = json{{"k", c.k},
             {"alpha", c.alpha},
             {"beta1", c.beta1},
             {"threshold1", c.threshold1},
             {"beta2", c.beta2},
             {"gamma", c.gamma},
             {"threshold2", c.threshold2},
             {"keep_top1", c.keep_top1},
             {"llm_enabled", c.llm_enabled},
             {"fuse_llm_with_semantic", c.fuse_llm_with_semantic}};
}

void from_json(const json& j, PipelineConfig& c)
{
    if (!j.is_object()) {
        throw Error(ErrorCode::ConfigError, "pipeline config must be a JSON object");
    }
    auto number = [&](const char* key, double& field) {
        if (const auto it = j.find(key); it != j.end()) {
            if (!it->is_number()) {
                throw Error(ErrorCode::ConfigError, std::string("'") + key + "' must be a number");
            }
            field = it->get<double>();
        }
    };
    auto flag = [&](const char* key, bool& field) {
        if (const auto it = j.find(key); it != j.end()) {
            if (!it->is_boolean()) {
                throw Error(ErrorCode::ConfigError, std::string("'") + key + "' must be a boolean");
            }
            field = it->get<bool>();
        }
    };
    if (const auto it = j.find("k"); it != j.end()) {
        if (!it->is_number_unsigned()) {
            throw Error(ErrorCode::ConfigError, "'k' must be a non-negative integer");
        }
        c.k = it->get<std::size_t>();
    }
    number("alpha", c.alpha);
    number("beta1", c.beta1);
    number("threshold1", c.threshold1);
    number("beta2", c.beta2);
    number("gamma", c.gamma);
    number("threshold2", c.threshold2);
    flag("keep_top1", c.keep_top1);
    flag("llm_enabled", c.llm_enabled);
    flag("fuse_llm_with_semantic", c.fuse_llm_with_semantic);
}

QueryScores fuse(const QueryScores& a, const QueryScores& b, double w_a, double w_b)
{
    check_weights(w_a, w_b);
    if (a.size() != b.size()) {
        throw Error(ErrorCode::PairMismatch, "score maps cover different candidates");
    }
    QueryScores out;
    auto ib = b.begin();
    for (const auto& [id, x] : a) {
        if (ib->first != id) {
            throw Error(ErrorCode::PairMismatch, "candidate '" + id + "' missing from one score map");
        }
        if (!in_unit(x) || !in_unit(ib->second)) {
            throw Error(ErrorCode::PairMismatch, "score for '" + id + "' outside [0,1]");
        }
        // Exact identity at the simplex corners.
        const double v = w_b == 0.0 ? x : (w_a == 0.0 ? ib->second : w_a * x + w_b * ib->second);
        out.emplace_hint(out.end(), id, std::clamp(v, 0.0, 1.0));
        ++ib;
    }
    return out;
}

ScoreMap fuse(const ScoreMap& a, const ScoreMap& b, double w_a, double w_b)
{
    check_weights(w_a, w_b);
    if (a.entries().size() != b.entries().size()) {
        throw Error(ErrorCode::PairMismatch, "score maps cover different queries");
    }
    ScoreMap out(ScoreSource::Fused);
    for (const auto& [qid, scores] : a.entries()) {
        if (!b.entries().contains(qid)) {
            throw Error(ErrorCode::PairMismatch, "query '" + qid + "' missing from one score map");
        }
        out.set_query(qid, fuse(scores, b.query(qid), w_a, w_b));
    }
    return out;
}

std::set<std::string> threshold_filter(const QueryScores& scores, double t, bool keep_top1)
{
    if (scores.empty()) {
        throw Error(ErrorCode::EmptyCandidateSet, "nothing to threshold");
    }
    std::set<std::string> selected;
    for (const auto& [id, s] : scores) {
        if (s > t) {
            selected.insert(id);
        }
    }
    if (selected.empty() && keep_top1) {
        // Map iteration is id-ascending, so the first maximum wins ties.
        const auto best = std::max_element(scores.begin(), scores.end(),
                                           [](const auto& x, const auto& y) { return x.second < y.second; });
        selected.insert(best->first);
    }
    return selected;
}

std::map<std::string, std::set<std::string>> threshold_filter(const ScoreMap& scores, double t, bool keep_top1)
{
    std::map<std::string, std::set<std::string>> out;
    for (const auto& [qid, per_query] : scores.entries()) {
        out.emplace(qid, threshold_filter(per_query, t, keep_top1));
    }
    return out;
}

bool RetrievalRun::degraded() const { return degraded_queries() > 0; }

std::size_t RetrievalRun::degraded_queries() const
{
    return static_cast<std::size_t>(
        std::count_if(queries.begin(), queries.end(), [](const QueryTrace& t) { return !t.degradations.empty(); }));
}

std::map<std::string, std::set<std::string>> RetrievalRun::selected() const
{
    std::map<std::string, std::set<std::string>> out;
    for (const auto& t : queries) {
        out.emplace(t.query_id, t.selected);
    }
    return out;
}

void RetrievalRun::audit() const
{
    auto fail = [](const std::string& qid, const std::string& what) {
        throw Error(ErrorCode::ConfigError, "run audit failed for query " + qid + ": " + what);
    };
    for (const auto& t : queries) {
        for (const auto& id : t.survivors) {
            if (!t.bm25.contains(id)) {
                fail(t.query_id, "survivor " + id + " is not a phase-1 candidate");
            }
        }
        if (t.llm_ran) {
            for (const auto& [id, s] : t.llm) {
                if (!t.survivors.contains(id)) {
                    fail(t.query_id, "phase-3 candidate " + id + " did not survive phase 2");
                }
            }
        }
        for (const auto& id : t.selected) {
            if (!t.survivors.contains(id)) {
                fail(t.query_id, "selected " + id + " did not survive phase 2");
            }
        }
        if (config.keep_top1 && !t.bm25.empty() && t.selected.empty()) {
            fail(t.query_id, "empty selection with keep_top1");
        }
    }
}

RetrievalRun run_pipeline(const Bm25Index& index, std::span<const Query> queries, const PipelineConfig& config,
                          PairScorer* semantic, LlmClient* llm, const RunOptions& options)
{
    config.validate();
    const bool want_semantic = config.needs_semantic() || options.force_semantic;
    if (want_semantic && semantic == nullptr) {
        throw Error(ErrorCode::ConfigError, "configuration needs a semantic scorer");
    }
    if (config.llm_enabled && llm == nullptr) {
        throw Error(ErrorCode::ConfigError, "llm_enabled requires an LLM client");
    }
    if (config.llm_enabled) {
        options.llm.validate();
    }

    RetrievalRun run;
    run.config = config;
    run.queries.resize(queries.size());

    // Phase 1: lexical pre-ranking.
    detail::parallel_for(queries.size(), options.jobs, [&](std::size_t i) {
        auto& t = run.queries[i];
        t.query_id = queries[i].id;
        t.bm25_raw = index.top_k(queries[i].text, config.k);
        if (t.bm25_raw.empty()) {
            return;
        }
        QueryScores raw;
        for (const auto& d : t.bm25_raw) {
            raw.emplace(d.id, d.score);
        }
        t.bm25 = min_max_normalize(raw);
    });

    // Semantic scores for every phase-1 candidate, one batch for the run.
    if (want_semantic) {
        std::vector<ScoringPair> pairs;
        for (std::size_t i = 0; i < queries.size(); ++i) {
            for (const auto& d : run.queries[i].bm25_raw) {
                pairs.push_back({&queries[i], &index.corpus().at(d.id)});
            }
        }
        const ScoreMap scores = semantic->score(pairs);
        for (std::size_t i = 0; i < queries.size(); ++i) {
            auto& t = run.queries[i];
            for (const auto& d : t.bm25_raw) {
                t.semantic[d.id] = scores.at(t.query_id, d.id);
            }
        }
    }

    // Phase 2: fuse and threshold.
    for (auto& t : run.queries) {
        if (t.bm25.empty()) {
            continue;
        }
        t.phase2 = config.beta1 > 0.0 ? fuse(t.bm25, t.semantic, config.alpha, config.beta1) : t.bm25;
        t.survivors = threshold_filter(t.phase2, config.threshold1, config.keep_top1);
        t.final_scores = t.phase2;
        t.selected = t.survivors;
    }

    // Phase 3: listwise LLM scoring of the survivors.
    if (config.llm_enabled) {
        detail::parallel_for(queries.size(), options.jobs, [&](std::size_t i) {
            auto& t = run.queries[i];
            if (t.survivors.empty()) {
                return;
            }
            std::vector<Article> candidates;
            // Survivors are presented in phase-2 score order, best first.
            std::vector<std::string> order(t.survivors.begin(), t.survivors.end());
            std::stable_sort(order.begin(), order.end(), [&](const std::string& x, const std::string& y) {
                return t.phase2.at(x) > t.phase2.at(y);
            });
            for (const auto& id : order) {
                candidates.push_back(index.corpus().at(id));
            }
            t.llm_ran = true;
            try {
                auto result = llm_rerank(queries[i], candidates, index.corpus(), *llm, options.llm,
                                         options.llm_options);
                t.llm = std::move(result.scores);
                t.llm_windows = result.windows.size();
                for (const auto& f : result.failures) {
                    t.degradations.push_back("window " + std::to_string(f.window) + " unscored: " + f.reason);
                }
            } catch (const Error& e) {
                if (e.code() == ErrorCode::ConfigError) {
                    throw;
                }
                t.degradations.push_back(std::string("llm phase failed: ") + e.what());
                t.llm.clear();
                for (const auto& id : t.survivors) {
                    t.llm[id] = 0.0;
                }
            }
            if (config.fuse_llm_with_semantic && config.beta2 > 0.0) {
                QueryScores semantic;
                for (const auto& id : t.survivors) {
                    semantic[id] = t.semantic.at(id);
                }
                t.final_scores = fuse(semantic, t.llm, config.beta2, config.gamma);
            } else {
                t.final_scores = t.llm;
            }
            t.selected = threshold_filter(t.final_scores, config.threshold2, config.keep_top1);
        });
    }

    run.audit();
    return run;
}

json trace_records(const QueryTrace& t)
{
    json records = json::array();
    json candidates = json::array();
    for (const auto& d : t.bm25_raw) {
        candidates.push_back({{"id", d.id}, {"bm25_raw", d.score}, {"bm25", t.bm25.at(d.id)}});
    }
    records.push_back({{"query_id", t.query_id}, {"phase", 1}, {"candidates", std::move(candidates)}});
    records.push_back({{"query_id", t.query_id},
                       {"phase", 2},
                       {"semantic", t.semantic},
                       {"fused", t.phase2},
                       {"survivors", t.survivors}});
    if (t.llm_ran) {
        records.push_back({{"query_id", t.query_id},
                           {"phase", 3},
                           {"llm", t.llm},
                           {"final", t.final_scores},
                           {"selected", t.selected},
                           {"windows", t.llm_windows},
                           {"degradations", t.degradations}});
    }
    return records;
}

void write_run_directory(const RetrievalRun& run, const std::filesystem::path& dir, bool force)
{
    namespace fs = std::filesystem;
    std::error_code ec;
    if (fs::exists(dir, ec) && !fs::is_empty(dir, ec) && !force) {
        throw Error(ErrorCode::Io, dir.string() + " exists and is not empty (use --force to overwrite)");
    }
    fs::create_directories(dir, ec);
    if (ec) {
        throw Error(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());
    }
    auto open = [&](const char* name) {
        std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw Error(ErrorCode::Io, "cannot write " + (dir / name).string());
        }
        return out;
    };
    {
        auto out = open("config.json");
        out << json(run.config).dump(2) << '\n';
    }
    {
        auto out = open("trace.jsonl");
        for (const auto& t : run.queries) {
            for (const auto& rec : trace_records(t)) {
                out << rec.dump() << '\n';
            }
        }
    }
    {
        auto out = open("selected.jsonl");
        for (const auto& t : run.queries) {
            out << json{{"query_id", t.query_id}, {"selected", t.selected}}.dump() << '\n';
        }
    }
}

RetrievalRun read_run_directory(const std::filesystem::path& dir)
{
    auto open = [&](const char* name) {
        std::ifstream in(dir / name, std::ios::binary);
        if (!in) {
            throw Error(ErrorCode::Io, "cannot read " + (dir / name).string());
        }
        return in;
    };
    RetrievalRun run;
    try {
        auto cfg_in = open("config.json");
        from_json(json::parse(cfg_in), run.config);

        std::map<std::string, std::size_t> position;
        auto trace_for = [&](const std::string& qid) -> QueryTrace& {
            const auto [it, fresh] = position.emplace(qid, run.queries.size());
            if (fresh) {
                run.queries.push_back(QueryTrace{});
                run.queries.back().query_id = qid;
            }
            return run.queries[it->second];
        };

        auto trace_in = open("trace.jsonl");
        std::string line;
        while (std::getline(trace_in, line)) {
            if (line.empty()) {
                continue;
            }
            const json rec = json::parse(line);
            auto& t = trace_for(rec.at("query_id").get<std::string>());
            switch (rec.at("phase").get<int>()) {
            case 1:
                for (const auto& c : rec.at("candidates")) {
                    t.bm25_raw.push_back({c.at("id").get<std::string>(), c.at("bm25_raw").get<double>()});
                    t.bm25[c.at("id").get<std::string>()] = c.at("bm25").get<double>();
                }
                break;
            case 2:
                t.semantic = rec.at("semantic").get<QueryScores>();
                t.phase2 = rec.at("fused").get<QueryScores>();
                t.survivors = rec.at("survivors").get<std::set<std::string>>();
                t.final_scores = t.phase2;
                t.selected = t.survivors;
                break;
            case 3:
                t.llm_ran = true;
                t.llm = rec.at("llm").get<QueryScores>();
                t.final_scores = rec.at("final").get<QueryScores>();
                t.selected = rec.at("selected").get<std::set<std::string>>();
                t.llm_windows = rec.value("windows", std::size_t{0});
                t.degradations = rec.value("degradations", std::vector<std::string>{});
                break;
            default:
                throw Error(ErrorCode::Io, "unknown phase in trace.jsonl");
            }
        }

        auto selected_in = open("selected.jsonl");
        while (std::getline(selected_in, line)) {
            if (line.empty()) {
                continue;
            }
            const json rec = json::parse(line);
            trace_for(rec.at("query_id").get<std::string>()).selected
                = rec.at("selected").get<std::set<std::string>>();
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Io, "malformed run directory " + dir.string() + ": " + e.what());
    }
    return run;
}

}  // namespace lexcascade
