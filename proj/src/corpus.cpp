#include "lexcascade/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include <nlohmann/json.hpp>

#include "lexcascade/error.hpp"

namespace lexcascade {

using nlohmann::json;

namespace {

struct CodePoint {
    char32_t value;
    std::size_t length;
};

// Invalid sequences decode as a single opaque byte.
CodePoint decode_utf8(std::string_view s, std::size_t pos)
{
    const auto lead = static_cast<unsigned char>(s[pos]);
    auto cont = [&](std::size_t i) -> int {
        if (pos + i >= s.size()) {
            return -1;
        }
        const auto c = static_cast<unsigned char>(s[pos + i]);
        return (c & 0xC0U) == 0x80U ? static_cast<int>(c & 0x3FU) : -1;
    };
    if (lead < 0x80U) {
        return {lead, 1};
    }
    if ((lead & 0xE0U) == 0xC0U) {
        const int c1 = cont(1);
        if (c1 >= 0) {
            return {static_cast<char32_t>(((lead & 0x1FU) << 6U) | static_cast<unsigned>(c1)), 2};
        }
    } else if ((lead & 0xF0U) == 0xE0U) {
        const int c1 = cont(1);
        const int c2 = cont(2);
        if (c1 >= 0 && c2 >= 0) {
            return {static_cast<char32_t>(((lead & 0x0FU) << 12U) | (static_cast<unsigned>(c1) << 6U)
                                          | static_cast<unsigned>(c2)),
                    3};
        }
    } else if ((lead & 0xF8U) == 0xF0U) {
        const int c1 = cont(1);
        const int c2 = cont(2);
        const int c3 = cont(3);
        if (c1 >= 0 && c2 >= 0 && c3 >= 0) {
            return {static_cast<char32_t>(((lead & 0x07U) << 18U) | (static_cast<unsigned>(c1) << 12U)
                                          | (static_cast<unsigned>(c2) << 6U) | static_cast<unsigned>(c3)),
                    4};
        }
    }
    return {0xFFFD, 1};
}

bool is_space(char32_t c)
{
    return (c >= 0x09 && c <= 0x0D) || c == 0x20 || c == 0x85 || c == 0xA0 || c == 0x1680
        || (c >= 0x2000 && c <= 0x200A) || c == 0x2028 || c == 0x2029 || c == 0x202F || c == 0x205F
        || c == 0x3000;
}

bool is_punct(char32_t c)
{
    if (c < 0x80) {
        return (c >= 0x21 && c <= 0x2F) || (c >= 0x3A && c <= 0x40) || (c >= 0x5B && c <= 0x60)
            || (c >= 0x7B && c <= 0x7E);
    }
    return c == 0xA1 || c == 0xA7 || c == 0xAB || c == 0xB6 || c == 0xB7 || c == 0xBB || c == 0xBF
        || (c >= 0x2010 && c <= 0x2027) || (c >= 0x2030 && c <= 0x205E) || (c >= 0x3001 && c <= 0x3003)
        || (c >= 0x3008 && c <= 0x3011) || (c >= 0x3014 && c <= 0x301F) || c == 0x30FB
        || (c >= 0xFF01 && c <= 0xFF0F) || (c >= 0xFF1A && c <= 0xFF20) || (c >= 0xFF3B && c <= 0xFF40)
        || (c >= 0xFF5B && c <= 0xFF65);
}

template <typename Fn>
void for_each_word(std::string_view text, Fn&& fn)
{
    std::size_t pos = 0;
    std::size_t start = std::string_view::npos;
    while (pos < text.size()) {
        const auto cp = decode_utf8(text, pos);
        if (is_space(cp.value)) {
            if (start != std::string_view::npos) {
                fn(text.substr(start, pos - start));
                start = std::string_view::npos;
            }
        } else if (start == std::string_view::npos) {
            start = pos;
        }
        pos += cp.length;
    }
    if (start != std::string_view::npos) {
        fn(text.substr(start));
    }
}

std::string_view strip_punct(std::string_view word)
{
    // Forward pass finds the first non-punctuation code point and the end of the last one.
    std::size_t pos = 0;
    std::size_t first = std::string_view::npos;
    std::size_t last_end = 0;
    while (pos < word.size()) {
        const auto cp = decode_utf8(word, pos);
        if (!is_punct(cp.value)) {
            if (first == std::string_view::npos) {
                first = pos;
            }
            last_end = pos + cp.length;
        }
        pos += cp.length;
    }
    if (first == std::string_view::npos) {
        return {};
    }
    return word.substr(first, last_end - first);
}

bool blank(std::string_view s)
{
    bool only_space = true;
    for_each_word(s, [&](std::string_view) { only_space = false; });
    return only_space;
}

[[noreturn]] void malformed(std::size_t line_no, const std::string& what)
{
    throw Error(ErrorCode::MalformedLine, "line " + std::to_string(line_no) + ": " + what);
}

std::string required_string(const json& obj, const char* key, std::size_t line_no)
{
    const auto it = obj.find(key);
    if (it == obj.end() || !it->is_string()) {
        malformed(line_no, std::string("missing or non-string key '") + key + "'");
    }
    auto value = it->get<std::string>();
    if (blank(value)) {
        malformed(line_no, std::string("empty '") + key + "'");
    }
    return value;
}

template <typename Fn>
void for_each_record(std::istream& in, Fn&& fn)
{
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (blank(line)) {
            continue;
        }
        json obj = json::parse(line, nullptr, false);
        if (obj.is_discarded() || !obj.is_object()) {
            malformed(line_no, "not a JSON object");
        }
        fn(obj, line_no);
    }
}

std::ifstream open_input(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::Io, "cannot open " + path);
    }
    return in;
}

}  // namespace

Corpus::Corpus(std::vector<Article> articles) : articles_(std::move(articles))
{
    if (articles_.empty()) {
        throw Error(ErrorCode::EmptyCorpus, "corpus has no articles");
    }
    by_id_.reserve(articles_.size());
    for (std::size_t i = 0; i < articles_.size(); ++i) {
        const auto& a = articles_[i];
        if (a.id.empty() || blank(a.text)) {
            throw Error(ErrorCode::MalformedLine, "article '" + a.id + "' has empty id or text");
        }
        if (!by_id_.emplace(a.id, i).second) {
            throw Error(ErrorCode::DuplicateId, a.id);
        }
    }
}

const Article* Corpus::find(std::string_view id) const
{
    const auto it = by_id_.find(std::string(id));
    return it == by_id_.end() ? nullptr : &articles_[it->second];
}

const Article& Corpus::at(std::string_view id) const
{
    const auto* a = find(id);
    if (a == nullptr) {
        throw Error(ErrorCode::UnknownArticle, std::string(id));
    }
    return *a;
}

std::vector<std::string_view> split_words(std::string_view text)
{
    std::vector<std::string_view> words;
    for_each_word(text, [&](std::string_view w) { words.push_back(w); });
    return words;
}

std::vector<std::string> tokenize(std::string_view text, const TokenizerConfig& cfg)
{
    std::vector<std::string> tokens;
    for_each_word(text, [&](std::string_view word) {
        if (cfg.strip_punctuation) {
            word = strip_punct(word);
        }
        if (word.empty()) {
            return;
        }
        std::string token(word);
        if (cfg.lowercase) {
            std::transform(token.begin(), token.end(), token.begin(), [](char c) {
                return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
            });
        }
        tokens.push_back(std::move(token));
    });
    return tokens;
}

Corpus parse_articles(std::istream& in)
{
    std::vector<Article> articles;
    std::unordered_map<std::string, std::size_t> seen;
    for_each_record(in, [&](const json& obj, std::size_t line_no) {
        Article a;
        a.id = required_string(obj, "id", line_no);
        a.text = required_string(obj, "text", line_no);
        if (const auto it = obj.find("title"); it != obj.end() && !it->is_null()) {
            if (!it->is_string()) {
                malformed(line_no, "'title' must be a string");
            }
            a.title = it->get<std::string>();
        }
        if (const auto [pos, fresh] = seen.emplace(a.id, line_no); !fresh) {
            throw Error(ErrorCode::DuplicateId,
                        a.id + " (lines " + std::to_string(pos->second) + " and " + std::to_string(line_no) + ")");
        }
        articles.push_back(std::move(a));
    });
    return Corpus(std::move(articles));
}

std::vector<Query> parse_queries(std::istream& in)
{
    std::vector<Query> queries;
    std::unordered_map<std::string, std::size_t> seen;
    for_each_record(in, [&](const json& obj, std::size_t line_no) {
        Query q;
        q.id = required_string(obj, "id", line_no);
        q.text = required_string(obj, "text", line_no);
        if (const auto it = obj.find("relevant"); it != obj.end() && !it->is_null()) {
            if (!it->is_array()) {
                malformed(line_no, "'relevant' must be an array of strings");
            }
            for (const auto& v : *it) {
                if (!v.is_string()) {
                    malformed(line_no, "'relevant' must be an array of strings");
                }
                q.relevant_ids.insert(v.get<std::string>());
            }
            q.labeled = true;
        }
        if (const auto it = obj.find("label"); it != obj.end() && !it->is_null()) {
            if (!it->is_boolean()) {
                malformed(line_no, "'label' must be a boolean");
            }
            q.correctness_label = it->get<bool>();
        }
        if (const auto [pos, fresh] = seen.emplace(q.id, line_no); !fresh) {
            throw Error(ErrorCode::DuplicateId,
                        q.id + " (lines " + std::to_string(pos->second) + " and " + std::to_string(line_no) + ")");
        }
        queries.push_back(std::move(q));
    });
    return queries;
}

Corpus load_articles(const std::string& path)
{
    auto in = open_input(path);
    return parse_articles(in);
}

std::vector<Query> load_queries(const std::string& path)
{
    auto in = open_input(path);
    return parse_queries(in);
}

void write_articles(std::ostream& out, const Corpus& corpus)
{
    for (const auto& a : corpus.articles()) {
        out << json{{"id", a.id}, {"title", a.title}, {"text", a.text}}.dump() << '\n';
    }
}

void write_queries(std::ostream& out, const std::vector<Query>& queries)
{
    for (const auto& q : queries) {
        json obj{{"id", q.id}, {"text", q.text}};
        if (q.labeled) {
            obj["relevant"] = q.relevant_ids;
        }
        if (q.correctness_label) {
            obj["label"] = *q.correctness_label;
        }
        out << obj.dump() << '\n';
    }
}

void check_relevant_ids(const std::vector<Query>& queries, const Corpus& corpus)
{
    for (const auto& q : queries) {
        for (const auto& id : q.relevant_ids) {
            if (!corpus.contains(id)) {
                throw Error(ErrorCode::UnknownArticle, "query " + q.id + " references " + id);
            }
        }
    }
}

ValidationSplit split_validation(const std::vector<Query>& queries, double fraction, std::uint64_t seed)
{
    if (!(fraction >= 0.0 && fraction <= 1.0)) {
        throw Error(ErrorCode::ConfigError, "validation fraction must lie in [0,1]");
    }
    const std::size_t n = queries.size();
    const auto n_val = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));

    // Fisher-Yates with an explicit bounded draw so the split does not depend
    // on the standard library's distribution implementation.
    std::mt19937_64 rng(seed);
    auto bounded = [&rng](std::uint64_t bound) {
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max()
            - std::numeric_limits<std::uint64_t>::max() % bound;
        std::uint64_t x = rng();
        while (x >= limit) {
            x = rng();
        }
        return x % bound;
    };
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) {
        order[i] = i;
    }
    for (std::size_t i = n; i > 1; --i) {
        std::swap(order[i - 1], order[bounded(i)]);
    }
    std::vector<bool> in_validation(n, false);
    for (std::size_t i = 0; i < n_val; ++i) {
        in_validation[order[i]] = true;
    }

    ValidationSplit split;
    split.validation.reserve(n_val);
    split.train.reserve(n - n_val);
    for (std::size_t i = 0; i < n; ++i) {
        (in_validation[i] ? split.validation : split.train).push_back(queries[i]);
    }
    return split;
}

}  // namespace lexcascade
