#include "lexcascade/llm_rerank.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "lexcascade/error.hpp"

namespace lexcascade {

using nlohmann::json;

std::size_t estimate_tokens(std::string_view text, double factor)
{
    if (!(factor > 0.0)) {
        throw Error(ErrorCode::ConfigError, "token factor must be positive");
    }
    const auto words = static_cast<double>(split_words(text).size());
    // The epsilon keeps products like 10 * 1.3 from rounding up past 13.
    return static_cast<std::size_t>(std::ceil(words * factor - 1e-9));
}

WordHeuristicCounter::WordHeuristicCounter(double factor) : factor_(factor)
{
    if (!(factor > 0.0)) {
        throw Error(ErrorCode::ConfigError, "token factor must be positive");
    }
}

PromptTemplate PromptTemplate::default_template()
{
    return {
        "You are assisting with statute law retrieval. Read the legal question and the candidate "
        "articles below, then judge how relevant each article is for answering the question.\n"
        "\n"
        "Question {query_id}:\n"
        "{query_text}\n"
        "\n"
        "Candidate articles:\n"
        "\n"
        "{candidates}"
        "Respond with a single JSON object and nothing else. Use each article identifier listed above, "
        "exactly as written, as a key and give it an integer relevance score from 0 (not relevant) "
        "to 100 (clearly relevant).\n",
        "### {article_id}\n"
        "{article_text}\n"
        "\n",
    };
}

PromptTemplate PromptTemplate::load(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::ConfigError, "prompt template not found: " + path);
    }
    const json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded() || !doc.is_object() || !doc.contains("frame") || !doc.contains("candidate")
        || !doc["frame"].is_string() || !doc["candidate"].is_string()) {
        throw Error(ErrorCode::ConfigError, path + ": expected {\"frame\": ..., \"candidate\": ...}");
    }
    PromptTemplate t{doc["frame"].get<std::string>(), doc["candidate"].get<std::string>()};
    if (t.frame.find("{candidates}") == std::string::npos) {
        throw Error(ErrorCode::ConfigError, path + ": frame lacks {candidates}");
    }
    return t;
}

namespace {

using Fill = std::vector<std::pair<std::string_view, std::string_view>>;

// Single pass; substituted values are never rescanned.
std::string render(std::string_view tmpl, const Fill& fill)
{
    std::string out;
    out.reserve(tmpl.size());
    std::size_t pos = 0;
    while (pos < tmpl.size()) {
        if (tmpl[pos] == '{') {
            bool replaced = false;
            for (const auto& [name, value] : fill) {
                if (tmpl.substr(pos + 1, name.size()) == name && pos + 1 + name.size() < tmpl.size()
                    && tmpl[pos + 1 + name.size()] == '}') {
                    out.append(value);
                    pos += name.size() + 2;
                    replaced = true;
                    break;
                }
            }
            if (replaced) {
                continue;
            }
        }
        out.push_back(tmpl[pos++]);
    }
    return out;
}

std::string_view leading_words(std::string_view text, std::size_t n)
{
    if (n == 0) {
        return {};
    }
    const auto words = split_words(text);
    if (n >= words.size()) {
        return text;
    }
    const auto& last = words[n - 1];
    return text.substr(0, static_cast<std::size_t>(last.data() + last.size() - text.data()));
}

std::string render_block(const PromptTemplate& tmpl, const Article& a, std::string_view text)
{
    return render(tmpl.candidate, {{"article_id", a.id}, {"article_title", a.title}, {"article_text", text}});
}

}  // namespace

std::vector<PromptWindow> pack_windows(const Query& query, std::span<const Article> candidates, std::size_t budget,
                                       const PromptTemplate& tmpl, const TokenCounter& counter)
{
    if (candidates.empty()) {
        throw Error(ErrorCode::EmptyCandidateSet, "query " + query.id + " has no candidates to pack");
    }
    const std::size_t frame = counter.count(
        render(tmpl.frame, {{"query_id", query.id}, {"query_text", ""}, {"candidates", ""}}));
    const std::size_t base = frame + counter.count(query.text);
    if (budget <= base) {
        throw Error(ErrorCode::BudgetTooSmall, "budget " + std::to_string(budget) + " leaves no room after "
                                                   + std::to_string(base) + " tokens of frame and query");
    }

    std::vector<PromptWindow> windows;
    PromptWindow current;
    auto close = [&] {
        if (!current.article_ids.empty()) {
            windows.push_back(std::move(current));
        }
        current = PromptWindow{};
    };
    auto open = [&] {
        current.query_id = query.id;
        current.estimated_tokens = base;
    };
    open();

    for (const auto& a : candidates) {
        const std::size_t cost = counter.count(render_block(tmpl, a, a.text));
        if (!current.article_ids.empty() && current.estimated_tokens + cost > budget) {
            close();
            open();
        }
        if (current.estimated_tokens + cost <= budget) {
            current.article_ids.push_back(a.id);
            current.estimated_tokens += cost;
            continue;
        }
        // Alone and still too large: keep the longest word prefix that fits.
        const std::size_t total_words = split_words(a.text).size();
        std::size_t lo = 0;
        std::size_t hi = total_words;
        while (lo < hi) {
            const std::size_t mid = lo + (hi - lo + 1) / 2;
            if (base + counter.count(render_block(tmpl, a, leading_words(a.text, mid))) <= budget) {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        if (lo == 0 && base + counter.count(render_block(tmpl, a, {})) > budget) {
            throw Error(ErrorCode::BudgetTooSmall, "budget " + std::to_string(budget)
                                                       + " cannot hold even the header of " + a.id);
        }
        current.article_ids.push_back(a.id);
        current.truncated_ids.insert(a.id);
        current.kept_words[a.id] = lo;
        current.estimated_tokens = base + counter.count(render_block(tmpl, a, leading_words(a.text, lo)));
        close();
        open();
    }
    close();
    return windows;
}

std::vector<PromptWindow> pack_windows(const Query& query, std::span<const Article> candidates, std::size_t budget)
{
    return pack_windows(query, candidates, budget, PromptTemplate::default_template(), WordHeuristicCounter{});
}

std::string build_prompt(const Query& query, const PromptWindow& window, const Corpus& corpus,
                         const PromptTemplate& tmpl)
{
    if (window.article_ids.empty()) {
        throw Error(ErrorCode::EmptyWindow, "window for query " + query.id + " has no articles");
    }
    std::string blocks;
    for (const auto& id : window.article_ids) {
        const Article& a = corpus.at(id);
        std::string_view text = a.text;
        if (const auto it = window.kept_words.find(id); it != window.kept_words.end()) {
            text = leading_words(text, it->second);
        }
        blocks += render_block(tmpl, a, text);
    }
    return render(tmpl.frame, {{"query_id", query.id}, {"query_text", query.text}, {"candidates", blocks}});
}

namespace {

// Index one past the brace closing the object opened at `open`, skipping
// braces inside string literals; npos when unbalanced.
std::size_t matching_brace(std::string_view s, std::size_t open)
{
    int depth = 0;
    bool in_string = false;
    for (std::size_t i = open; i < s.size(); ++i) {
        const char c = s[i];
        if (in_string) {
            if (c == '\\') {
                ++i;
            } else if (c == '"') {
                in_string = false;
            }
            continue;
        }
        if (c == '"') {
            in_string = true;
        } else if (c == '{') {
            ++depth;
        } else if (c == '}') {
            if (--depth == 0) {
                return i + 1;
            }
        }
    }
    return std::string_view::npos;
}

std::optional<double> numeric_value(const json& v)
{
    if (v.is_number()) {
        return v.get<double>();
    }
    if (v.is_string()) {
        const auto& s = v.get_ref<const std::string&>();
        char* end = nullptr;
        const double d = std::strtod(s.c_str(), &end);
        if (end != s.c_str() && *end == '\0' && std::isfinite(d)) {
            return d;
        }
    }
    return std::nullopt;
}

}  // namespace

LlmResponse parse_scores(std::string_view raw, std::span<const std::string> expected_ids)
{
    json object;
    bool found = false;
    for (std::size_t pos = raw.find('{'); pos != std::string_view::npos; pos = raw.find('{', pos + 1)) {
        const std::size_t end = matching_brace(raw, pos);
        if (end == std::string_view::npos) {
            continue;
        }
        json candidate = json::parse(raw.substr(pos, end - pos), nullptr, false);
        if (!candidate.is_discarded() && candidate.is_object()) {
            object = std::move(candidate);
            found = true;
            break;
        }
    }
    if (!found) {
        throw Error(ErrorCode::NoJsonFound, "no JSON object in model output");
    }

    LlmResponse response;
    response.raw_text = std::string(raw);
    const std::set<std::string> expected(expected_ids.begin(), expected_ids.end());
    for (const auto& [key, value] : object.items()) {
        if (!expected.contains(key)) {
            response.warnings.push_back("unexpected id '" + key + "' ignored");
            continue;
        }
        const auto number = numeric_value(value);
        if (!number) {
            response.warnings.push_back("non-numeric score for '" + key + "': " + value.dump());
            continue;
        }
        const double clamped = std::clamp(*number, 0.0, 100.0);
        if (clamped != *number) {
            response.warnings.push_back("score for '" + key + "' clamped from " + value.dump());
        }
        response.parsed[key] = static_cast<int>(std::lround(clamped));
    }
    for (const auto& id : expected_ids) {
        if (!response.parsed.contains(id)) {
            response.warnings.push_back("no score for '" + id + "', using 0");
            response.parsed[id] = 0;
        }
    }
    return response;
}

LlmRerankResult llm_rerank(const Query& query, std::span<const Article> candidates, const Corpus& corpus,
                           LlmClient& client, const LlmClientConfig& cfg, const LlmRerankOptions& options)
{
    cfg.validate();
    std::shared_ptr<const TokenCounter> counter = options.counter;
    if (!counter) {
        counter = std::make_shared<WordHeuristicCounter>(cfg.token_factor);
    }
    const Sleeper sleep = options.sleep ? options.sleep : Sleeper([](std::chrono::duration<double> d) {
        std::this_thread::sleep_for(d);
    });

    LlmRerankResult result;
    result.windows = pack_windows(query, candidates, cfg.token_budget, options.prompt, *counter);

    for (std::size_t w = 0; w < result.windows.size(); ++w) {
        const auto& window = result.windows[w];
        const LlmRequest request{query.id, query.text, window.article_ids,
                                 build_prompt(query, window, corpus, options.prompt)};
        std::string last_error;
        bool ok = false;
        for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
            if (attempt > 0) {
                sleep(std::chrono::duration<double>(cfg.backoff_initial_seconds
                                                    * std::pow(cfg.backoff_multiplier, attempt - 1)));
            }
            ++result.attempts;
            try {
                auto response = parse_scores(client.complete(request), window.article_ids);
                for (const auto& [id, s] : response.parsed) {
                    result.scores[id] = static_cast<double>(s) / 100.0;
                }
                result.responses.push_back(std::move(response));
                ok = true;
                break;
            } catch (const Error& e) {
                if (e.code() != ErrorCode::Transport && e.code() != ErrorCode::NoJsonFound) {
                    throw;
                }
                last_error = e.what();
            }
        }
        if (!ok) {
            for (const auto& id : window.article_ids) {
                result.scores[id] = 0.0;
            }
            result.failures.push_back({w, window.article_ids, last_error});
        }
    }
    return result;
}

}  // namespace lexcascade
