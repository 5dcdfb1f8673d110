#pragma once

#include <chrono>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lexcascade/corpus.hpp"

namespace lexcascade {

enum class ScoreSource { Bm25, Semantic, Llm, Fused };

std::string_view to_string(ScoreSource source) noexcept;

/// article id -> score, for one query.
using QueryScores = std::map<std::string, double>;

/// Per-(query, article) relevance scores in [0,1] from a single producer.
class ScoreMap {
  public:
    explicit ScoreMap(ScoreSource source) : source_(source) {}

    /// Throws ConfigError when the score is outside [0,1].
    void set(const std::string& query_id, const std::string& article_id, double score);
    /// Sets every entry of one query, replacing any existing entries.
    void set_query(const std::string& query_id, QueryScores scores);

    [[nodiscard]] ScoreSource source() const noexcept { return source_; }
    [[nodiscard]] bool contains(const std::string& query_id, const std::string& article_id) const;
    /// Throws MissingScore.
    [[nodiscard]] double at(const std::string& query_id, const std::string& article_id) const;
    /// Empty map when the query has no entries.
    [[nodiscard]] const QueryScores& query(const std::string& query_id) const;
    [[nodiscard]] const std::map<std::string, QueryScores>& entries() const noexcept { return entries_; }
    [[nodiscard]] std::size_t size() const;

    friend bool operator==(const ScoreMap&, const ScoreMap&) = default;

  private:
    ScoreSource source_;
    std::map<std::string, QueryScores> entries_;
};

/// x -> (x - min) / (max - min); a constant set maps to 0.5 throughout.
/// Throws EmptyCandidateSet.
QueryScores min_max_normalize(const QueryScores& raw);

/// Jaccard similarity of the two token sets; 0 when both are empty.
double overlap_score(std::span<const std::string> query_tokens, std::span<const std::string> article_tokens);

struct ScoringPair {
    const Query* query;
    const Article* article;
};

/// A relevance scorer over (query, article) pairs.
class PairScorer {
  public:
    virtual ~PairScorer() = default;
    /// Returns a score for every requested pair.
    virtual ScoreMap score(std::span<const ScoringPair> pairs) = 0;
    [[nodiscard]] virtual std::string name() const = 0;
};

/// Deterministic lexical stand-in for a semantic model.
class OverlapScorer final : public PairScorer {
  public:
    explicit OverlapScorer(TokenizerConfig cfg = {}) : cfg_(cfg) {}
    ScoreMap score(std::span<const ScoringPair> pairs) override;
    [[nodiscard]] std::string name() const override { return "overlap"; }

  private:
    TokenizerConfig cfg_;
};

struct ExternalScorerConfig {
    enum class Mode { Subprocess, ScoreFile };

    Mode mode = Mode::Subprocess;
    /// Shell command in Subprocess mode, JSONL path in ScoreFile mode.
    std::string target;
    std::chrono::duration<double> timeout{120.0};
};

/// Scores pairs through the line-delimited JSON worker protocol, either by
/// streaming requests to a child process or by replaying a file of responses.
///
/// Request line:  {"query_id", "query_text", "article_id", "article_text"}
/// Response line: {"query_id", "article_id", "score"}
///
/// Out-of-range scores are clamped with a warning. Throws ScorerTimeout,
/// ScorerCrashed, MissingScore, ConfigError.
class ExternalScorer final : public PairScorer {
  public:
    explicit ExternalScorer(ExternalScorerConfig cfg);
    ScoreMap score(std::span<const ScoringPair> pairs) override;
    [[nodiscard]] std::string name() const override;

  private:
    ExternalScorerConfig cfg_;
};

ScoreMap external_score(const ExternalScorerConfig& cfg, std::span<const ScoringPair> pairs);

/// One request line of the worker protocol, without the trailing newline.
std::string encode_score_request(const ScoringPair& pair);

}  // namespace lexcascade
