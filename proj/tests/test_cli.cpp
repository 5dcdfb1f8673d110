#include <cstdlib>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "lexcascade/app.hpp"
#include "lexcascade/error.hpp"
#include "lexcascade/evaluation.hpp"
#include "lexcascade/grid_search.hpp"
#include "support/support.hpp"

using namespace lexcascade;
using lexcascade::testing::read_file;
using lexcascade::testing::TempDir;
using lexcascade::testing::write_file;
using nlohmann::json;

namespace {

struct Workspace {
    TempDir dir;
    lexcascade::testing::Fixture f;
    std::string articles;
    std::string queries;
    std::string index;
    std::ostringstream out;
    std::ostringstream err;

    explicit Workspace(std::size_t n_articles = 40, std::size_t n_queries = 12, std::uint64_t seed = 1)
        : f(lexcascade::testing::make_fixture(n_articles, n_queries, seed)),
          articles((dir / "articles.jsonl").string()),
          queries((dir / "queries.jsonl").string()),
          index((dir / "index.json").string())
    {
        std::ostringstream a;
        write_articles(a, Corpus(f.articles));
        write_file(articles, a.str());
        std::ostringstream q;
        write_queries(q, f.queries);
        write_file(queries, q.str());
    }

    std::string config(const json& doc, const std::string& name = "config.json")
    {
        const auto path = (dir / name).string();
        write_file(path, doc.dump(2));
        return path;
    }

    int build_index(const GlobalOptions& g = {}) { return cmd_index({articles, index}, g, out, err); }
};

}  // namespace

TEST(Config, DefaultsAndSections)
{
    const auto cfg = parse_config(json::parse(R"({
        "k": 50, "alpha": 0.3, "beta1": 0.7, "llm_enabled": true,
        "tokenizer": {"lowercase": false},
        "bm25": {"k1": 0.9, "b": 0.4},
        "scorer": {"mode": "score_file", "path": "/tmp/s.jsonl"},
        "llm": {"model": "m", "token_budget": 1000, "mode": "replay", "audit_log": "a.jsonl"},
        "tune": {"f2_min": 0.6},
        "seed": 7, "jobs": 3})"));
    EXPECT_EQ(cfg.pipeline.k, 50U);
    EXPECT_TRUE(cfg.pipeline.llm_enabled);
    EXPECT_FALSE(cfg.tokenizer.lowercase);
    EXPECT_EQ(cfg.bm25.k1, 0.9);
    EXPECT_EQ(cfg.scorer.kind, ScorerSettings::Kind::ScoreFile);
    EXPECT_EQ(cfg.llm.model, "m");
    EXPECT_EQ(cfg.llm.token_budget, 1000U);
    EXPECT_EQ(cfg.llm_mode, LlmMode::Replay);
    EXPECT_EQ(cfg.tune.f2_min, 0.6);
    EXPECT_EQ(cfg.seed, 7U);
    EXPECT_EQ(cfg.jobs, 3U);
    EXPECT_EQ(parse_config(config_to_json(cfg)).pipeline, cfg.pipeline);

    const auto defaults = load_config("");
    EXPECT_EQ(defaults.pipeline, PipelineConfig{});
    EXPECT_EQ(defaults.llm_mode, LlmMode::Stub);
}

TEST(Config, Rejections)
{
    for (const char* doc : {R"({"bogus": 1})", R"({"llm": {"api_key": "sk-secret"}})", R"({"alpha": "high"})",
                            R"({"alpha": 0.5})", R"({"scorer": {"mode": "bert"}})", R"({"llm": {"mode": "cloud"}})",
                            R"({"jobs": 0})", R"({"bm25": {"b": 2}})", R"({"tokenizer": []})"}) {
        try {
            (void)parse_config(json::parse(doc));
            ADD_FAILURE() << doc;
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), ErrorCode::ConfigError) << doc;
        }
    }
}

TEST(ExitCodes, Mapping)
{
    EXPECT_EQ(exit_code_for(ErrorCode::DuplicateId), 1);
    EXPECT_EQ(exit_code_for(ErrorCode::MissingGold), 1);
    EXPECT_EQ(exit_code_for(ErrorCode::QuerySetMismatch), 1);
    EXPECT_EQ(exit_code_for(ErrorCode::ConfigError), 2);
    EXPECT_EQ(exit_code_for(ErrorCode::ScorerTimeout), 3);
    EXPECT_EQ(exit_code_for(ErrorCode::Transport), 3);
    EXPECT_EQ(exit_code_for(ErrorCode::NoFeasibleCell), 4);
}

TEST(CmdIndex, BuildsAndReports)
{
    Workspace w;
    EXPECT_EQ(w.build_index(), 0);
    EXPECT_TRUE(std::filesystem::exists(w.index));
    EXPECT_NE(w.out.str().find("N=40"), std::string::npos);
    EXPECT_NE(w.out.str().find("vocabulary="), std::string::npos);
}

TEST(CmdIndex, DuplicateIdIsDataError)
{
    Workspace w;
    write_file(w.articles, "{\"id\":\"Article 9\",\"text\":\"a\"}\n{\"id\":\"Article 9\",\"text\":\"b\"}\n");
    EXPECT_EQ(w.build_index(), 1);
    EXPECT_NE(w.err.str().find("Article 9"), std::string::npos);
}

TEST(CmdIndex, BadConfigIsConfigError)
{
    Workspace w;
    GlobalOptions g;
    g.config_path = w.config(json{{"bogus", true}});
    EXPECT_EQ(w.build_index(g), 2);
}

TEST(CmdRun, WritesRunDirectoryAndManifest)
{
    Workspace w;
    ASSERT_EQ(w.build_index(), 0);
    GlobalOptions g;
    g.config_path = w.config(json{{"k", 15}, {"threshold1", 0.4}, {"llm_enabled", true}});
    const auto out = (w.dir / "run").string();
    ASSERT_EQ(cmd_run({w.index, w.queries, out}, g, w.out, w.err), 0) << w.err.str();
    for (const char* name : {"manifest.json", "config.json", "trace.jsonl", "selected.jsonl"}) {
        EXPECT_TRUE(std::filesystem::exists(std::filesystem::path(out) / name)) << name;
    }
    const auto manifest = json::parse(read_file(std::filesystem::path(out) / "manifest.json"));
    EXPECT_EQ(manifest["status"], "complete");
    EXPECT_EQ(manifest["inputs"]["index"]["sha256"], file_digest(w.index));
    EXPECT_EQ(manifest["inputs"]["queries"]["sha256"].get<std::string>().size(), 64U);
    EXPECT_EQ(manifest["config"]["k"], 15);
    EXPECT_EQ(manifest["degradation"]["degraded_queries"], 0);
    EXPECT_EQ(manifest["versions"]["lexcascade"], kVersion);

    // Refuses to overwrite without --force.
    EXPECT_EQ(cmd_run({w.index, w.queries, out}, g, w.out, w.err), 1);
    g.force = true;
    EXPECT_EQ(cmd_run({w.index, w.queries, out}, g, w.out, w.err), 0);
}

TEST(CmdRun, MissingApiKeyIsConnectivity)
{
    Workspace w;
    ASSERT_EQ(w.build_index(), 0);
    ::unsetenv("LEXCASCADE_NO_SUCH_KEY");
    GlobalOptions g;
    g.config_path = w.config(json{{"llm_enabled", true}, {"llm", {{"api_key_env", "LEXCASCADE_NO_SUCH_KEY"}}}});
    g.llm_mode = "live";
    EXPECT_EQ(cmd_run({w.index, w.queries, (w.dir / "run").string()}, g, w.out, w.err), 3);
    EXPECT_NE(w.err.str().find("LEXCASCADE_NO_SUCH_KEY"), std::string::npos);
}

TEST(CmdRun, ScorerCrashIsConnectivity)
{
    Workspace w;
    ASSERT_EQ(w.build_index(), 0);
    GlobalOptions g;
    g.config_path = w.config(json{{"scorer", {{"mode", "subprocess"}, {"command", "exit 1"}}}});
    EXPECT_EQ(cmd_run({w.index, w.queries, (w.dir / "run").string()}, g, w.out, w.err), 3);
}

TEST(CmdRun, StubIsDeterministicAndReplayMatches)
{
    Workspace w;
    ASSERT_EQ(w.build_index(), 0);
    const auto audit = (w.dir / "audit.jsonl").string();
    GlobalOptions g;
    g.config_path = w.config(json{{"k", 20}, {"threshold1", 0.3}, {"threshold2", 0.4}, {"llm_enabled", true},
                                  {"llm", {{"audit_log", audit}, {"token_budget", 300}}}});
    const auto one = w.dir / "one";
    const auto two = w.dir / "two";
    const auto three = w.dir / "three";
    ASSERT_EQ(cmd_run({w.index, w.queries, one.string()}, g, w.out, w.err), 0) << w.err.str();
    ASSERT_EQ(cmd_run({w.index, w.queries, two.string()}, g, w.out, w.err), 0);
    g.llm_mode = "replay";
    ASSERT_EQ(cmd_run({w.index, w.queries, three.string()}, g, w.out, w.err), 0) << w.err.str();
    for (const char* name : {"trace.jsonl", "selected.jsonl"}) {
        EXPECT_EQ(read_file(one / name), read_file(two / name)) << name;
        EXPECT_EQ(read_file(one / name), read_file(three / name)) << name;
    }
    EXPECT_NE(read_file(one / "manifest.json"), read_file(two / "manifest.json"));  // distinct run ids
}

TEST(CmdEval, MatchesMacroMetrics)
{
    Workspace w;
    ASSERT_EQ(w.build_index(), 0);
    GlobalOptions g;
    const auto run_dir = w.dir / "run";
    ASSERT_EQ(cmd_run({w.index, w.queries, run_dir.string()}, g, w.out, w.err), 0);
    ASSERT_EQ(cmd_eval({run_dir.string(), w.queries, ""}, g, w.out, w.err), 0);
    const auto report = json::parse(read_file(run_dir / "report.json"));
    const auto expected = macro_evaluate(read_run_directory(run_dir).selected(), w.f.queries);
    EXPECT_EQ(report["f2"].get<double>(), expected.f2);
    EXPECT_EQ(report["query_count"], w.f.queries.size());
    EXPECT_EQ(report["per_query"].size(), w.f.queries.size());

    write_file(w.dir / "nogold.jsonl", "{\"id\":\"Q1\",\"text\":\"x\"}\n");
    EXPECT_EQ(cmd_eval({run_dir.string(), (w.dir / "nogold.jsonl").string(), ""}, g, w.out, w.err), 1);
}

TEST(CmdAnalyze, OneRunHasNoDeltas)
{
    Workspace w;
    ASSERT_EQ(w.build_index(), 0);
    GlobalOptions g;
    g.config_path = w.config(json{{"llm_enabled", true}, {"k", 10}});
    const auto run_dir = w.dir / "run";
    ASSERT_EQ(cmd_run({w.index, w.queries, run_dir.string()}, g, w.out, w.err), 0);
    const auto out = w.dir / "analysis";
    ASSERT_EQ(cmd_analyze({{run_dir.string()}, "", out.string(), 5}, g, w.out, w.err), 0) << w.err.str();
    EXPECT_TRUE(std::filesystem::exists(out / "histogram.csv"));
    EXPECT_TRUE(std::filesystem::exists(out / "scatter.csv"));
    EXPECT_TRUE(std::filesystem::exists(out / "correlation.json"));
    EXPECT_FALSE(std::filesystem::exists(out / "deltas.csv"));
    const auto hist = read_file(out / "histogram.csv");
    EXPECT_EQ(hist.substr(0, 20), "bin_lo,bin_hi,count\n");
    EXPECT_EQ(std::count(hist.begin(), hist.end(), '\n'), 6);
    const auto corr = json::parse(read_file(out / "correlation.json"));
    EXPECT_EQ(corr["pairing"], "semantic_vs_llm");
}

TEST(CmdAnalyze, TwoRunsAndMismatch)
{
    Workspace w;
    ASSERT_EQ(w.build_index(), 0);
    GlobalOptions g;
    const auto before = w.dir / "before";
    const auto after = w.dir / "after";
    ASSERT_EQ(cmd_run({w.index, w.queries, before.string()}, g, w.out, w.err), 0);
    g.config_path = w.config(json{{"llm_enabled", true}, {"threshold1", 0.5}});
    ASSERT_EQ(cmd_run({w.index, w.queries, after.string()}, g, w.out, w.err), 0);
    const auto out = w.dir / "cmp";
    ASSERT_EQ(cmd_analyze({{before.string(), after.string()}, w.queries, out.string(), 10}, g, w.out, w.err), 0)
        << w.err.str();
    const auto deltas = read_file(out / "deltas.csv");
    EXPECT_EQ(deltas.substr(0, 35), "query_id,metric,before,after,delta\n");
    EXPECT_EQ(std::count(deltas.begin(), deltas.end(), '\n'), 1 + 3 * static_cast<long>(w.f.queries.size()));

    // A run over fewer queries cannot be compared.
    auto fewer = w.f.queries;
    fewer.pop_back();
    std::ostringstream q;
    write_queries(q, fewer);
    write_file(w.dir / "fewer.jsonl", q.str());
    const auto small = w.dir / "small";
    ASSERT_EQ(cmd_run({w.index, (w.dir / "fewer.jsonl").string(), small.string()}, g, w.out, w.err), 0);
    std::ostringstream err;
    EXPECT_EQ(cmd_analyze({{before.string(), small.string()}, w.queries, (w.dir / "x").string(), 10}, g, w.out, err),
              1);
    EXPECT_NE(err.str().find("QuerySetMismatch"), std::string::npos);

    EXPECT_EQ(cmd_analyze({{before.string(), after.string()}, "", (w.dir / "y").string(), 10}, g, w.out, w.err), 1);
}

TEST(CmdTune, PhaseTwoMatchesOracle)
{
    Workspace w(60, 20, 5);
    ASSERT_EQ(w.build_index(), 0);
    GlobalOptions g;
    g.config_path = w.config(json{{"k", 15}, {"tune", {{"weight_step", 0.1}, {"threshold_step", 0.05}}}, {"seed", 3}});
    const auto patch_path = (w.dir / "p2.json").string();
    ASSERT_EQ(cmd_tune({w.index, w.queries, 2, patch_path}, g, w.out, w.err), 0) << w.err.str();
    const auto patch = json::parse(read_file(patch_path));

    // Independent scan over the same cells.
    const auto index = Bm25Index::load(w.index);
    const auto split = split_validation(w.f.queries, 0.2, 3);
    PipelineConfig pc;
    pc.k = 15;
    OverlapScorer scorer;
    RunOptions opts;
    opts.force_semantic = true;
    const auto run = run_pipeline(index, split.validation, pc, &scorer, nullptr, opts);
    const auto points = phase2_points(run, split.validation);
    double best_recall = -1.0;
    double best_t = 0.0;
    double best_w = 0.0;
    for (const double wa : grid_values(0.1)) {
        for (const double t : grid_values(0.05)) {
            std::map<std::string, std::set<std::string>> sel;
            for (const auto& p : points) {
                sel[p.query_id] = threshold_filter(fuse(p.a, p.b, wa, 1.0 - wa), t, true);
            }
            const auto m = macro_evaluate(sel, split.validation);
            if (m.f2 >= 0.5 && (m.recall > best_recall || (m.recall == best_recall && t < best_t) ||
                                (m.recall == best_recall && t == best_t && wa < best_w))) {
                best_recall = m.recall;
                best_t = t;
                best_w = wa;
            }
        }
    }
    ASSERT_GE(best_recall, 0.0);
    EXPECT_NEAR(patch["alpha"].get<double>(), best_w, 1e-12);
    EXPECT_NEAR(patch["threshold1"].get<double>(), best_t, 1e-12);
    EXPECT_NEAR(patch["alpha"].get<double>() + patch["beta1"].get<double>(), 1.0, 1e-12);
}

TEST(CmdTune, PhaseThreeWritesPatch)
{
    Workspace w(60, 20, 6);
    ASSERT_EQ(w.build_index(), 0);
    GlobalOptions g;
    g.config_path = w.config(json{{"k", 15}, {"threshold1", 0.3}, {"tune", {{"weight_step", 0.1}, {"threshold_step", 0.05}}}});
    const auto patch_path = (w.dir / "p3.json").string();
    ASSERT_EQ(cmd_tune({w.index, w.queries, 3, patch_path}, g, w.out, w.err), 0) << w.err.str();
    const auto patch = json::parse(read_file(patch_path));
    EXPECT_TRUE(patch.contains("beta2"));
    EXPECT_TRUE(patch.contains("gamma"));
    EXPECT_TRUE(patch.contains("threshold2"));
}

TEST(CmdTune, InfeasibleIsExitFour)
{
    Workspace w(40, 10, 2);
    // Gold points at an article that shares no words with any query.
    w.f.articles.push_back({"Article 999", "", "zzzunrelated qqqnothing"});
    std::ostringstream a;
    write_articles(a, Corpus(w.f.articles));
    write_file(w.articles, a.str());
    for (auto& q : w.f.queries) {
        q.relevant_ids = {"Article 999"};
    }
    std::ostringstream q;
    write_queries(q, w.f.queries);
    write_file(w.queries, q.str());
    ASSERT_EQ(w.build_index(), 0);
    GlobalOptions g;
    g.config_path = w.config(json{{"k", 5}, {"tune", {{"weight_step", 0.25}, {"threshold_step", 0.25}, {"validation_fraction", 0.5}}}});
    EXPECT_EQ(cmd_tune({w.index, w.queries, 2, (w.dir / "p.json").string()}, g, w.out, w.err), 4);
}

TEST(CmdTune, SeedFlagOverridesConfig)
{
    Workspace w(40, 20, 7);
    ASSERT_EQ(w.build_index(), 0);
    GlobalOptions g;
    g.config_path = w.config(json{{"seed", 1}, {"k", 10}, {"tune", {{"weight_step", 0.5}, {"threshold_step", 0.1}}}});
    ASSERT_EQ(cmd_tune({w.index, w.queries, 2, (w.dir / "a.json").string()}, g, w.out, w.err), 0);
    g.seed = 1;
    ASSERT_EQ(cmd_tune({w.index, w.queries, 2, (w.dir / "b.json").string()}, g, w.out, w.err), 0);
    EXPECT_EQ(read_file(w.dir / "a.json"), read_file(w.dir / "b.json"));
}
