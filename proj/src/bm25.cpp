#include "lexcascade/bm25.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "lexcascade/error.hpp"

namespace lexcascade {

using nlohmann::json;

namespace {

constexpr const char* kFormatName = "lexcascade-bm25";

void validate(const Bm25Params& p)
{
    if (!(p.k1 >= 0.0) || !(p.b >= 0.0 && p.b <= 1.0)) {
        throw Error(ErrorCode::ConfigError, "bm25 parameters require k1 >= 0 and 0 <= b <= 1");
    }
}

bool ranks_before(const RankedDoc& x, const RankedDoc& y)
{
    if (x.score != y.score) {
        return x.score > y.score;
    }
    return x.id < y.id;
}

}  // namespace

Bm25Index::Bm25Index(Corpus corpus, TokenizerConfig cfg, Bm25Params params)
    : corpus_(std::move(corpus)), tokenizer_(cfg), params_(params)
{}

Bm25Index Bm25Index::build(Corpus corpus, const TokenizerConfig& cfg, const Bm25Params& params)
{
    validate(params);
    Bm25Index index(std::move(corpus), cfg, params);
    const auto& articles = index.corpus_.articles();
    index.doc_len_.reserve(articles.size());

    std::uint64_t total_len = 0;
    for (std::uint32_t doc = 0; doc < articles.size(); ++doc) {
        index.doc_index_.emplace(articles[doc].id, doc);
        const auto tokens = tokenize(articles[doc].text, cfg);
        std::map<std::string, std::uint32_t> tf;
        for (const auto& t : tokens) {
            ++tf[t];
        }
        // Docs are visited in order, so each posting list stays sorted by doc.
        for (const auto& [term, count] : tf) {
            index.postings_[term].push_back({doc, count});
        }
        index.doc_len_.push_back(static_cast<std::uint32_t>(tokens.size()));
        total_len += tokens.size();
    }
    index.avgdl_ = static_cast<double>(total_len) / static_cast<double>(articles.size());
    if (index.avgdl_ <= 0.0) {
        throw Error(ErrorCode::ZeroAvgdl, "every document tokenized to zero terms");
    }
    return index;
}

std::span<const Posting> Bm25Index::postings(const std::string& term) const
{
    const auto it = postings_.find(term);
    if (it == postings_.end()) {
        return {};
    }
    return it->second;
}

double Bm25Index::idf(std::size_t df) const
{
    const auto n = static_cast<double>(doc_count());
    const auto d = static_cast<double>(df);
    return std::log(1.0 + (n - d + 0.5) / (d + 0.5));
}

double Bm25Index::term_weight(double idf, std::uint32_t tf, std::uint32_t len) const
{
    const auto f = static_cast<double>(tf);
    const double norm = 1.0 - params_.b + params_.b * static_cast<double>(len) / avgdl_;
    return idf * f * (params_.k1 + 1.0) / (f + params_.k1 * norm);
}

std::vector<std::string> Bm25Index::unique_terms(std::span<const std::string> tokens) const
{
    std::vector<std::string> terms(tokens.begin(), tokens.end());
    std::sort(terms.begin(), terms.end());
    terms.erase(std::unique(terms.begin(), terms.end()), terms.end());
    return terms;
}

double Bm25Index::score(std::span<const std::string> query_tokens, std::string_view doc_id) const
{
    const auto it = doc_index_.find(std::string(doc_id));
    if (it == doc_index_.end()) {
        throw Error(ErrorCode::UnknownDoc, std::string(doc_id));
    }
    const std::uint32_t doc = it->second;
    double total = 0.0;
    for (const auto& term : unique_terms(query_tokens)) {
        const auto list = postings(term);
        const auto pos = std::lower_bound(list.begin(), list.end(), doc,
                                          [](const Posting& p, std::uint32_t d) { return p.doc < d; });
        if (pos != list.end() && pos->doc == doc) {
            total += term_weight(idf(list.size()), pos->tf, doc_len_[doc]);
        }
    }
    return total;
}

std::vector<RankedDoc> Bm25Index::rank_all(std::span<const std::string> query_tokens) const
{
    // Term-at-a-time accumulation in sorted term order; each document sees the
    // same summation order as score().
    std::vector<double> acc(doc_count(), 0.0);
    for (const auto& term : unique_terms(query_tokens)) {
        const auto list = postings(term);
        if (list.empty()) {
            continue;
        }
        const double term_idf = idf(list.size());
        for (const auto& p : list) {
            acc[p.doc] += term_weight(term_idf, p.tf, doc_len_[p.doc]);
        }
    }
    std::vector<RankedDoc> ranked;
    ranked.reserve(doc_count());
    for (std::size_t doc = 0; doc < doc_count(); ++doc) {
        ranked.push_back({doc_id(doc), acc[doc]});
    }
    std::sort(ranked.begin(), ranked.end(), ranks_before);
    return ranked;
}

std::vector<RankedDoc> Bm25Index::top_k(std::span<const std::string> query_tokens, std::size_t k) const
{
    if (k == 0) {
        return {};
    }
    auto ranked = rank_all(query_tokens);
    ranked.resize(std::min(k, ranked.size()));
    return ranked;
}

std::vector<RankedDoc> Bm25Index::top_k(std::string_view query_text, std::size_t k) const
{
    const auto tokens = tokenize(query_text, tokenizer_);
    return top_k(tokens, k);
}

bool operator==(const Bm25Index& x, const Bm25Index& y)
{
    return x.corpus_.articles() == y.corpus_.articles() && x.tokenizer_ == y.tokenizer_ && x.params_ == y.params_
        && x.doc_len_ == y.doc_len_ && x.avgdl_ == y.avgdl_ && x.postings_ == y.postings_;
}

void Bm25Index::save(const std::string& path) const
{
    json articles = json::array();
    for (const auto& a : corpus_.articles()) {
        articles.push_back({{"id", a.id}, {"title", a.title}, {"text", a.text}});
    }
    // Sorted so that identical indexes serialize to identical bytes.
    std::map<std::string, const std::vector<Posting>*> sorted;
    for (const auto& [term, list] : postings_) {
        sorted.emplace(term, &list);
    }
    json postings = json::object();
    for (const auto& [term, list] : sorted) {
        json entries = json::array();
        for (const auto& p : *list) {
            entries.push_back({p.doc, p.tf});
        }
        postings[term] = std::move(entries);
    }
    const json doc{
        {"format", kFormatName},
        {"version", kFormatVersion},
        {"tokenizer", {{"lowercase", tokenizer_.lowercase}, {"strip_punctuation", tokenizer_.strip_punctuation}}},
        {"params", {{"k1", params_.k1}, {"b", params_.b}}},
        {"avgdl", avgdl_},
        {"doc_len", doc_len_},
        {"articles", std::move(articles)},
        {"postings", std::move(postings)},
    };
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(ErrorCode::Io, "cannot write " + path);
    }
    out << doc.dump() << '\n';
}

Bm25Index Bm25Index::load(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::Io, "cannot open " + path);
    }
    const json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) {
        throw Error(ErrorCode::IndexFormat, path + " is not a JSON index file");
    }
    if (doc.value("format", "") != kFormatName) {
        throw Error(ErrorCode::IndexFormat, path + " is not a " + std::string(kFormatName) + " file");
    }
    if (!doc.contains("version") || !doc["version"].is_number_integer()
        || doc["version"].get<int>() != kFormatVersion) {
        throw Error(ErrorCode::IndexFormat, "index version mismatch: file has "
                                                + (doc.contains("version") ? doc["version"].dump() : "none")
                                                + ", expected " + std::to_string(kFormatVersion));
    }
    try {
        std::vector<Article> articles;
        for (const auto& a : doc.at("articles")) {
            articles.push_back({a.at("id").get<std::string>(), a.at("title").get<std::string>(),
                                a.at("text").get<std::string>()});
        }
        TokenizerConfig cfg{doc.at("tokenizer").at("lowercase").get<bool>(),
                            doc.at("tokenizer").at("strip_punctuation").get<bool>()};
        Bm25Params params{doc.at("params").at("k1").get<double>(), doc.at("params").at("b").get<double>()};
        validate(params);

        Bm25Index index(Corpus(std::move(articles)), cfg, params);
        const auto n = index.corpus_.size();
        for (std::uint32_t d = 0; d < n; ++d) {
            index.doc_index_.emplace(index.corpus_.articles()[d].id, d);
        }
        index.doc_len_ = doc.at("doc_len").get<std::vector<std::uint32_t>>();
        index.avgdl_ = doc.at("avgdl").get<double>();
        if (index.doc_len_.size() != n || index.avgdl_ <= 0.0) {
            throw Error(ErrorCode::IndexFormat, "document statistics inconsistent with article list");
        }
        for (const auto& [term, entries] : doc.at("postings").items()) {
            auto& list = index.postings_[term];
            for (const auto& e : entries) {
                const Posting p{e.at(0).get<std::uint32_t>(), e.at(1).get<std::uint32_t>()};
                if (p.doc >= n || (!list.empty() && list.back().doc >= p.doc)) {
                    throw Error(ErrorCode::IndexFormat, "bad posting list for term '" + term + "'");
                }
                list.push_back(p);
            }
        }
        return index;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::IndexFormat, std::string("malformed index: ") + e.what());
    }
}

std::map<std::size_t, double> recall_at_k(const Bm25Index& index, std::span<const Query> queries,
                                          std::span<const std::size_t> ks)
{
    std::map<std::size_t, double> sums;
    for (const auto k : ks) {
        sums[k] = 0.0;
    }
    if (queries.empty()) {
        return sums;
    }
    for (const auto& q : queries) {
        if (q.relevant_ids.empty()) {
            throw Error(ErrorCode::UnlabeledQuery, q.id);
        }
    }
    for (const auto& q : queries) {
        const auto ranked = index.rank_all(tokenize(q.text, index.tokenizer()));
        // Rank position of each relevant document; a single pass serves every k.
        std::vector<std::size_t> positions;
        for (std::size_t pos = 0; pos < ranked.size(); ++pos) {
            if (q.relevant_ids.contains(ranked[pos].id)) {
                positions.push_back(pos);
            }
        }
        const auto rel = static_cast<double>(q.relevant_ids.size());
        for (auto& [k, sum] : sums) {
            const auto hits = std::count_if(positions.begin(), positions.end(), [k](std::size_t p) { return p < k; });
            sum += static_cast<double>(hits) / rel;
        }
    }
    for (auto& [k, sum] : sums) {
        sum /= static_cast<double>(queries.size());
    }
    return sums;
}

}  // namespace lexcascade
