#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "lexcascade/bm25.hpp"
#include "lexcascade/llm_client.hpp"
#include "lexcascade/llm_rerank.hpp"
#include "lexcascade/scorers.hpp"

namespace lexcascade {

/// Weights and thresholds of the three-phase cascade.
///   phase 2:  alpha * bm25 + beta1 * semantic, kept when > threshold1
///   phase 3:  beta2 * semantic + gamma * llm (or llm alone), kept when > threshold2
struct PipelineConfig {
    std::size_t k = 500;
    double alpha = 0.17;
    double beta1 = 0.83;
    double threshold1 = 0.921;
    double beta2 = 0.5;
    double gamma = 0.5;
    double threshold2 = 0.52;
    bool keep_top1 = true;
    bool llm_enabled = false;
    bool fuse_llm_with_semantic = true;

    /// Throws ConfigError.
    void validate() const;

    [[nodiscard]] bool needs_semantic() const noexcept
    {
        return beta1 > 0.0 || (llm_enabled && fuse_llm_with_semantic && beta2 > 0.0);
    }

    friend bool operator==(const PipelineConfig&, const PipelineConfig&) = default;
};

void to_json(nlohmann::json& j, const PipelineConfig& cfg);
/// Missing keys keep their defaults; wrong types throw ConfigError.
void from_json(const nlohmann::json& j, PipelineConfig& cfg);

inline constexpr double kWeightSumTolerance = 1e-9;

/// Entrywise w_a * a + w_b * b. Throws WeightError, PairMismatch.
QueryScores fuse(const QueryScores& a, const QueryScores& b, double w_a, double w_b);
ScoreMap fuse(const ScoreMap& a, const ScoreMap& b, double w_a, double w_b);

/// {id : score > t}; with keep_top1 an empty result becomes the single best
/// id (ties by id ascending). Throws EmptyCandidateSet.
std::set<std::string> threshold_filter(const QueryScores& scores, double t, bool keep_top1);
std::map<std::string, std::set<std::string>> threshold_filter(const ScoreMap& scores, double t, bool keep_top1);

struct QueryTrace {
    std::string query_id;
    std::vector<RankedDoc> bm25_raw;  // phase-1 candidates in rank order
    QueryScores bm25;                 // min-max normalized
    QueryScores semantic;             // over phase-1 candidates; empty when not needed
    QueryScores phase2;
    std::set<std::string> survivors;
    bool llm_ran = false;
    QueryScores llm;
    QueryScores final_scores;
    std::set<std::string> selected;
    std::size_t llm_windows = 0;
    std::vector<std::string> degradations;
};

struct RetrievalRun {
    PipelineConfig config;
    std::vector<QueryTrace> queries;

    [[nodiscard]] bool degraded() const;
    [[nodiscard]] std::size_t degraded_queries() const;
    [[nodiscard]] std::map<std::string, std::set<std::string>> selected() const;
    /// Throws ConfigError describing the first broken phase-containment invariant.
    void audit() const;
};

struct RunOptions {
    LlmClientConfig llm;
    LlmRerankOptions llm_options;
    std::size_t jobs = 1;
    /// Score phase-1 candidates semantically even when no weight uses them
    /// (tuning needs the cached scores).
    bool force_semantic = false;
};

/// Runs every query through the configured phases. The semantic scorer is
/// called once for the whole batch. LLM failures degrade a query (recorded
/// in its trace) instead of aborting the run.
/// Throws ConfigError when a required scorer or client is missing, and
/// propagates scorer errors.
RetrievalRun run_pipeline(const Bm25Index& index, std::span<const Query> queries, const PipelineConfig& config,
                          PairScorer* semantic, LlmClient* llm, const RunOptions& options = {});

/// config.json, trace.jsonl and selected.jsonl. Throws Io when the directory
/// exists and is not empty unless `force` is set.
void write_run_directory(const RetrievalRun& run, const std::filesystem::path& dir, bool force);

/// Reads selected.jsonl and trace.jsonl back.
RetrievalRun read_run_directory(const std::filesystem::path& dir);

nlohmann::json trace_records(const QueryTrace& trace);

}  // namespace lexcascade
