#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lexcascade/corpus.hpp"
#include "lexcascade/llm_client.hpp"
#include "lexcascade/scorers.hpp"

namespace lexcascade {

/// ceil(word_count * factor). Throws ConfigError when factor <= 0.
std::size_t estimate_tokens(std::string_view text, double factor = 1.3);

class TokenCounter {
  public:
    virtual ~TokenCounter() = default;
    [[nodiscard]] virtual std::size_t count(std::string_view text) const = 0;
};

class WordHeuristicCounter final : public TokenCounter {
  public:
    explicit WordHeuristicCounter(double factor = 1.3);
    [[nodiscard]] std::size_t count(std::string_view text) const override { return estimate_tokens(text, factor_); }

  private:
    double factor_;
};

/// Zero-shot listwise prompt. The frame understands {query_id}, {query_text}
/// and {candidates}; each candidate block understands {article_id},
/// {article_title} and {article_text}. Other braces pass through untouched.
struct PromptTemplate {
    std::string frame;
    std::string candidate;

    static PromptTemplate default_template();
    /// JSON file {"frame": "...", "candidate": "..."}. Throws ConfigError.
    static PromptTemplate load(const std::string& path);
};

struct PromptWindow {
    std::string query_id;
    std::vector<std::string> article_ids;
    std::size_t estimated_tokens = 0;
    std::set<std::string> truncated_ids;
    /// Words of article text kept, for truncated articles only.
    std::map<std::string, std::size_t> kept_words;
};

/// Greedy packing in candidate order: whole articles are added while the
/// window estimate (frame + query + articles) stays within budget, then the
/// window is closed and the next one started. An article that cannot fit even
/// alone is truncated to fit and placed in its own window.
/// Throws EmptyCandidateSet, BudgetTooSmall.
std::vector<PromptWindow> pack_windows(const Query& query, std::span<const Article> candidates, std::size_t budget,
                                       const PromptTemplate& tmpl, const TokenCounter& counter);
std::vector<PromptWindow> pack_windows(const Query& query, std::span<const Article> candidates, std::size_t budget);

/// Throws EmptyWindow, UnknownArticle.
std::string build_prompt(const Query& query, const PromptWindow& window, const Corpus& corpus,
                         const PromptTemplate& tmpl = PromptTemplate::default_template());

struct LlmResponse {
    std::string raw_text;
    std::map<std::string, int> parsed;  // expected ids only, each in [0,100]
    std::vector<std::string> warnings;
};

/// Reads the first JSON object embedded in `raw` (prose and code fences are
/// tolerated). Values are clamped to [0,100] and rounded. Missing expected ids
/// get 0, unexpected ids are dropped; both produce a warning.
/// Throws NoJsonFound.
LlmResponse parse_scores(std::string_view raw, std::span<const std::string> expected_ids);

using Sleeper = std::function<void(std::chrono::duration<double>)>;

struct LlmRerankOptions {
    PromptTemplate prompt = PromptTemplate::default_template();
    std::shared_ptr<const TokenCounter> counter;  // word heuristic with cfg.token_factor when null
    Sleeper sleep;                                 // std::this_thread::sleep_for when empty
};

struct WindowFailure {
    std::size_t window = 0;
    std::vector<std::string> article_ids;
    std::string reason;
};

struct LlmRerankResult {
    QueryScores scores;  // parsed / 100
    std::vector<PromptWindow> windows;
    std::vector<LlmResponse> responses;
    std::vector<WindowFailure> failures;
    std::size_t attempts = 0;

    [[nodiscard]] bool degraded() const noexcept { return !failures.empty(); }
};

/// Windows are sent one after another; a window whose retries are exhausted
/// scores 0 for each of its candidates and is recorded in `failures`.
/// `corpus` supplies article text for the prompt.
LlmRerankResult llm_rerank(const Query& query, std::span<const Article> candidates, const Corpus& corpus,
                           LlmClient& client, const LlmClientConfig& cfg, const LlmRerankOptions& options = {});

}  // namespace lexcascade
