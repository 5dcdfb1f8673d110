#include "lexcascade/scorers.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "lexcascade/error.hpp"
#include "lexcascade/log.hpp"
#include "subprocess.hpp"

namespace lexcascade {

using nlohmann::json;

std::string_view to_string(ScoreSource source) noexcept
{
    switch (source) {
    case ScoreSource::Bm25: return "bm25";
    case ScoreSource::Semantic: return "semantic";
    case ScoreSource::Llm: return "llm";
    case ScoreSource::Fused: return "fused";
    }
    return "unknown";
}

void ScoreMap::set(const std::string& query_id, const std::string& article_id, double score)
{
    if (!(score >= 0.0 && score <= 1.0)) {
        throw Error(ErrorCode::ConfigError, "score for (" + query_id + ", " + article_id + ") outside [0,1]");
    }
    entries_[query_id][article_id] = score;
}

void ScoreMap::set_query(const std::string& query_id, QueryScores scores)
{
    for (const auto& [article_id, s] : scores) {
        if (!(s >= 0.0 && s <= 1.0)) {
            throw Error(ErrorCode::ConfigError, "score for (" + query_id + ", " + article_id + ") outside [0,1]");
        }
    }
    entries_[query_id] = std::move(scores);
}

bool ScoreMap::contains(const std::string& query_id, const std::string& article_id) const
{
    const auto q = entries_.find(query_id);
    return q != entries_.end() && q->second.contains(article_id);
}

double ScoreMap::at(const std::string& query_id, const std::string& article_id) const
{
    const auto q = entries_.find(query_id);
    if (q != entries_.end()) {
        if (const auto a = q->second.find(article_id); a != q->second.end()) {
            return a->second;
        }
    }
    throw Error(ErrorCode::MissingScore, "(" + query_id + ", " + article_id + ")");
}

const QueryScores& ScoreMap::query(const std::string& query_id) const
{
    static const QueryScores empty;
    const auto q = entries_.find(query_id);
    return q == entries_.end() ? empty : q->second;
}

std::size_t ScoreMap::size() const
{
    std::size_t n = 0;
    for (const auto& [q, scores] : entries_) {
        n += scores.size();
    }
    return n;
}

QueryScores min_max_normalize(const QueryScores& raw)
{
    if (raw.empty()) {
        throw Error(ErrorCode::EmptyCandidateSet, "cannot normalize an empty candidate set");
    }
    const auto [lo_it, hi_it] = std::minmax_element(
        raw.begin(), raw.end(), [](const auto& x, const auto& y) { return x.second < y.second; });
    const double lo = lo_it->second;
    const double hi = hi_it->second;
    QueryScores out;
    for (const auto& [id, x] : raw) {
        out.emplace_hint(out.end(), id, hi == lo ? 0.5 : std::clamp((x - lo) / (hi - lo), 0.0, 1.0));
    }
    return out;
}

double overlap_score(std::span<const std::string> query_tokens, std::span<const std::string> article_tokens)
{
    const std::set<std::string_view> a(query_tokens.begin(), query_tokens.end());
    const std::set<std::string_view> b(article_tokens.begin(), article_tokens.end());
    if (a.empty() && b.empty()) {
        return 0.0;
    }
    std::size_t common = 0;
    for (const auto& t : a) {
        common += b.count(t);
    }
    const std::size_t uni = a.size() + b.size() - common;
    return static_cast<double>(common) / static_cast<double>(uni);
}

ScoreMap OverlapScorer::score(std::span<const ScoringPair> pairs)
{
    ScoreMap out(ScoreSource::Semantic);
    std::map<const Query*, std::vector<std::string>> query_tokens;
    for (const auto& p : pairs) {
        auto [it, fresh] = query_tokens.try_emplace(p.query);
        if (fresh) {
            it->second = tokenize(p.query->text, cfg_);
        }
        out.set(p.query->id, p.article->id, overlap_score(it->second, tokenize(p.article->text, cfg_)));
    }
    return out;
}

std::string encode_score_request(const ScoringPair& pair)
{
    return json{{"query_id", pair.query->id},
                {"query_text", pair.query->text},
                {"article_id", pair.article->id},
                {"article_text", pair.article->text}}
        .dump();
}

namespace {

using PairKey = std::pair<std::string, std::string>;

// Parses response records; later duplicates overwrite earlier ones.
std::map<PairKey, double> parse_responses(std::istream& in, const std::string& origin)
{
    std::map<PairKey, double> scores;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        const json rec = json::parse(line, nullptr, false);
        if (rec.is_discarded() || !rec.is_object()) {
            throw Error(ErrorCode::ScorerCrashed, origin + " line " + std::to_string(line_no) + ": not a JSON object");
        }
        if (rec.contains("error")) {
            log_warning(origin + " reported an error record: " + rec["error"].dump());
            continue;
        }
        const auto q = rec.find("query_id");
        const auto a = rec.find("article_id");
        const auto s = rec.find("score");
        if (q == rec.end() || a == rec.end() || s == rec.end() || !q->is_string() || !a->is_string()
            || !s->is_number()) {
            throw Error(ErrorCode::ScorerCrashed,
                        origin + " line " + std::to_string(line_no) + ": missing query_id/article_id/score");
        }
        scores[{q->get<std::string>(), a->get<std::string>()}] = s->get<double>();
    }
    return scores;
}

ScoreMap collect(const std::map<PairKey, double>& responses, std::span<const ScoringPair> pairs)
{
    ScoreMap out(ScoreSource::Semantic);
    for (const auto& p : pairs) {
        const auto it = responses.find({p.query->id, p.article->id});
        if (it == responses.end()) {
            throw Error(ErrorCode::MissingScore,
                        "no score for (" + p.query->id + ", " + p.article->id + ")");
        }
        double s = it->second;
        if (!(s >= 0.0 && s <= 1.0)) {
            const double clamped = std::isnan(s) ? 0.0 : std::clamp(s, 0.0, 1.0);
            std::ostringstream msg;
            msg << "score " << s << " for (" << p.query->id << ", " << p.article->id << ") clamped to " << clamped;
            log_warning(msg.str());
            s = clamped;
        }
        out.set(p.query->id, p.article->id, s);
    }
    return out;
}

}  // namespace

ExternalScorer::ExternalScorer(ExternalScorerConfig cfg) : cfg_(std::move(cfg))
{
    if (cfg_.target.empty()) {
        throw Error(ErrorCode::ConfigError, cfg_.mode == ExternalScorerConfig::Mode::Subprocess
                                                ? "scorer command is empty"
                                                : "score file path is empty");
    }
    if (cfg_.mode == ExternalScorerConfig::Mode::ScoreFile && !std::ifstream(cfg_.target)) {
        throw Error(ErrorCode::ConfigError, "score file not found: " + cfg_.target);
    }
    if (!(cfg_.timeout.count() > 0.0)) {
        throw Error(ErrorCode::ConfigError, "scorer timeout must be positive");
    }
}

std::string ExternalScorer::name() const
{
    return cfg_.mode == ExternalScorerConfig::Mode::Subprocess ? "subprocess" : "score_file";
}

ScoreMap ExternalScorer::score(std::span<const ScoringPair> pairs)
{
    if (pairs.empty()) {
        return ScoreMap(ScoreSource::Semantic);
    }
    if (cfg_.mode == ExternalScorerConfig::Mode::ScoreFile) {
        std::ifstream in(cfg_.target);
        if (!in) {
            throw Error(ErrorCode::ConfigError, "score file not found: " + cfg_.target);
        }
        return collect(parse_responses(in, cfg_.target), pairs);
    }

    std::string input;
    for (const auto& p : pairs) {
        input += encode_score_request(p);
        input += '\n';
    }
    const auto result = detail::run_subprocess(cfg_.target, input, cfg_.timeout);
    if (result.timed_out) {
        std::ostringstream msg;
        msg << "'" << cfg_.target << "' exceeded " << cfg_.timeout.count() << " s";
        throw Error(ErrorCode::ScorerTimeout, msg.str());
    }
    if (result.exit_status != 0 || result.input_broken) {
        std::string detail = result.err.substr(0, 500);
        throw Error(ErrorCode::ScorerCrashed, "'" + cfg_.target + "' exited with status "
                                                  + std::to_string(result.exit_status)
                                                  + (result.input_broken ? " before reading all requests" : "")
                                                  + (detail.empty() ? "" : ": " + detail));
    }
    if (result.out.find_first_not_of(" \t\r\n") == std::string::npos) {
        throw Error(ErrorCode::ScorerCrashed, "'" + cfg_.target + "' closed its output without answering");
    }
    std::istringstream out(result.out);
    return collect(parse_responses(out, "scorer '" + cfg_.target + "'"), pairs);
}

ScoreMap external_score(const ExternalScorerConfig& cfg, std::span<const ScoringPair> pairs)
{
    if (pairs.empty()) {
        throw Error(ErrorCode::EmptyCandidateSet, "no pairs to score");
    }
    ExternalScorer scorer(cfg);
    return scorer.score(pairs);
}

}  // namespace lexcascade
