#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lexcascade/corpus.hpp"

namespace lexcascade {

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;

    friend bool operator==(const Bm25Params&, const Bm25Params&) = default;
};

struct Posting {
    std::uint32_t doc;  // index into doc_ids()
    std::uint32_t tf;

    friend bool operator==(const Posting&, const Posting&) = default;
};

struct RankedDoc {
    std::string id;
    double score;
};

/// Immutable Okapi BM25 inverted index. Keeps the corpus it was built from
/// so that later phases can read article text.
///
/// Scoring uses the non-negative idf  ln(1 + (N - df + 0.5) / (df + 0.5))
/// and the usual saturation  tf (k1 + 1) / (tf + k1 (1 - b + b len / avgdl)).
/// Query terms are deduplicated; term frequency in the query is ignored.
class Bm25Index {
  public:
    static constexpr int kFormatVersion = 1;

    /// Throws EmptyCorpus, ZeroAvgdl, ConfigError (invalid params).
    static Bm25Index build(Corpus corpus, const TokenizerConfig& cfg = {}, const Bm25Params& params = {});

    /// Throws IndexFormat on a version or content mismatch.
    static Bm25Index load(const std::string& path);
    void save(const std::string& path) const;

    [[nodiscard]] std::size_t doc_count() const noexcept { return doc_len_.size(); }
    [[nodiscard]] double avgdl() const noexcept { return avgdl_; }
    [[nodiscard]] std::size_t vocabulary_size() const noexcept { return postings_.size(); }
    [[nodiscard]] const Bm25Params& params() const noexcept { return params_; }
    [[nodiscard]] const TokenizerConfig& tokenizer() const noexcept { return tokenizer_; }
    [[nodiscard]] const Corpus& corpus() const noexcept { return corpus_; }
    [[nodiscard]] std::uint32_t doc_length(std::size_t doc) const { return doc_len_.at(doc); }
    [[nodiscard]] const std::string& doc_id(std::size_t doc) const { return corpus_.articles().at(doc).id; }
    /// Empty span for terms not in the vocabulary. Postings are sorted by doc.
    [[nodiscard]] std::span<const Posting> postings(const std::string& term) const;

    [[nodiscard]] double idf(std::size_t df) const;

    /// Throws UnknownDoc.
    [[nodiscard]] double score(std::span<const std::string> query_tokens, std::string_view doc_id) const;

    /// Scores every document; descending by score, ties by id ascending.
    [[nodiscard]] std::vector<RankedDoc> rank_all(std::span<const std::string> query_tokens) const;

    /// First min(k, N) entries of rank_all.
    [[nodiscard]] std::vector<RankedDoc> top_k(std::span<const std::string> query_tokens, std::size_t k) const;

    /// Tokenizes with the index's own tokenizer config.
    [[nodiscard]] std::vector<RankedDoc> top_k(std::string_view query_text, std::size_t k) const;

    friend bool operator==(const Bm25Index&, const Bm25Index&);

  private:
    Bm25Index(Corpus corpus, TokenizerConfig cfg, Bm25Params params);

    [[nodiscard]] double term_weight(double idf, std::uint32_t tf, std::uint32_t len) const;
    [[nodiscard]] std::vector<std::string> unique_terms(std::span<const std::string> tokens) const;

    Corpus corpus_;
    TokenizerConfig tokenizer_;
    Bm25Params params_;
    std::vector<std::uint32_t> doc_len_;
    double avgdl_ = 0.0;
    std::unordered_map<std::string, std::vector<Posting>> postings_;
    std::unordered_map<std::string, std::uint32_t> doc_index_;
};

/// Macro-averaged recall of top-k for each k in ks. Throws UnlabeledQuery.
std::map<std::size_t, double> recall_at_k(const Bm25Index& index, std::span<const Query> queries,
                                          std::span<const std::size_t> ks);

}  // namespace lexcascade
