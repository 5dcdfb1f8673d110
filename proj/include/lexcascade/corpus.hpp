#pragma once

#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace lexcascade {

struct Article {
    std::string id;
    std::string title;
    std::string text;

    friend bool operator==(const Article&, const Article&) = default;
};

struct Query {
    std::string id;
    std::string text;
    std::set<std::string> relevant_ids;
    std::optional<bool> correctness_label;

    /// True when the record carried a "relevant" key, even an empty one.
    bool labeled = false;

    friend bool operator==(const Query&, const Query&) = default;
};

/// Ordered, immutable collection of articles with id lookup.
class Corpus {
  public:
    /// Throws DuplicateId, EmptyCorpus, MalformedLine (blank id or text).
    explicit Corpus(std::vector<Article> articles);

    [[nodiscard]] const std::vector<Article>& articles() const noexcept { return articles_; }
    [[nodiscard]] std::size_t size() const noexcept { return articles_.size(); }
    [[nodiscard]] const Article* find(std::string_view id) const;
    /// Throws UnknownArticle.
    [[nodiscard]] const Article& at(std::string_view id) const;
    [[nodiscard]] bool contains(std::string_view id) const { return find(id) != nullptr; }

  private:
    std::vector<Article> articles_;
    std::unordered_map<std::string, std::size_t> by_id_;
};

struct TokenizerConfig {
    bool lowercase = true;
    bool strip_punctuation = true;

    friend bool operator==(const TokenizerConfig&, const TokenizerConfig&) = default;
};

/// Splits on Unicode whitespace, trims leading/trailing punctuation and
/// ASCII-case-folds each token. Empty tokens are dropped.
std::vector<std::string> tokenize(std::string_view text, const TokenizerConfig& cfg = {});

/// Whitespace-delimited words, no other normalization.
std::vector<std::string_view> split_words(std::string_view text);

Corpus parse_articles(std::istream& in);
std::vector<Query> parse_queries(std::istream& in);
Corpus load_articles(const std::string& path);
std::vector<Query> load_queries(const std::string& path);

void write_articles(std::ostream& out, const Corpus& corpus);
void write_queries(std::ostream& out, const std::vector<Query>& queries);

/// Throws UnknownArticle naming the first query whose gold ids fall outside the corpus.
void check_relevant_ids(const std::vector<Query>& queries, const Corpus& corpus);

struct ValidationSplit {
    std::vector<Query> train;
    std::vector<Query> validation;
};

/// Seeded uniform selection of round(fraction * N) queries for validation.
/// Both halves keep the input order.
ValidationSplit split_validation(const std::vector<Query>& queries, double fraction, std::uint64_t seed);

}  // namespace lexcascade
