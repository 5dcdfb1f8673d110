#include "lexcascade/evaluation.hpp"

#include <algorithm>
#include <cmath>

#include "lexcascade/error.hpp"

namespace lexcascade {

double f2_score(double precision, double recall)
{
    if (precision + recall <= 0.0) {
        return 0.0;
    }
    return 5.0 * precision * recall / (4.0 * precision + recall);
}

QueryMetrics prf2(const std::set<std::string>& retrieved, const std::set<std::string>& relevant)
{
    if (relevant.empty()) {
        throw Error(ErrorCode::NoGold, "relevant set is empty");
    }
    std::size_t hits = 0;
    for (const auto& id : retrieved) {
        hits += relevant.count(id);
    }
    QueryMetrics m;
    m.precision = retrieved.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(retrieved.size());
    m.recall = static_cast<double>(hits) / static_cast<double>(relevant.size());
    m.f2 = f2_score(m.precision, m.recall);
    return m;
}

MetricReport macro_evaluate(const std::map<std::string, std::set<std::string>>& selected,
                            std::span<const Query> gold)
{
    std::map<std::string, const Query*> by_id;
    for (const auto& q : gold) {
        by_id.emplace(q.id, &q);
    }
    std::string missing;
    for (const auto& [qid, ids] : selected) {
        const auto it = by_id.find(qid);
        if (it == by_id.end() || it->second->relevant_ids.empty()) {
            missing += (missing.empty() ? "" : ", ") + qid;
        }
    }
    if (!missing.empty()) {
        throw Error(ErrorCode::MissingGold, "no gold labels for: " + missing);
    }

    MetricReport report;
    for (const auto& [qid, ids] : selected) {
        const auto m = prf2(ids, by_id.at(qid)->relevant_ids);
        report.per_query.emplace(qid, m);
        report.precision += m.precision;
        report.recall += m.recall;
        report.f2 += m.f2;
    }
    report.query_count = selected.size();
    if (report.query_count > 0) {
        const auto n = static_cast<double>(report.query_count);
        report.precision /= n;
        report.recall /= n;
        report.f2 /= n;
    }
    return report;
}

Histogram score_histogram(std::span<const double> scores, std::size_t bins)
{
    if (bins == 0) {
        throw Error(ErrorCode::ConfigError, "histogram needs at least one bin");
    }
    Histogram h;
    h.counts.assign(bins, 0);
    h.edges.resize(bins + 1);
    for (std::size_t i = 0; i <= bins; ++i) {
        h.edges[i] = static_cast<double>(i) / static_cast<double>(bins);
    }
    const auto last = static_cast<std::ptrdiff_t>(bins) - 1;
    for (const double s : scores) {
        const double x = std::clamp(s, 0.0, 1.0);
        auto idx = std::clamp(static_cast<std::ptrdiff_t>(std::floor(x * static_cast<double>(bins))),
                              std::ptrdiff_t{0}, last);
        // Settle floating-point disagreements against the published edges.
        if (x < h.edges[static_cast<std::size_t>(idx)] && idx > 0) {
            --idx;
        } else if (idx < last && x >= h.edges[static_cast<std::size_t>(idx) + 1]) {
            ++idx;
        }
        ++h.counts[static_cast<std::size_t>(idx)];
    }
    return h;
}

Histogram score_histogram(const ScoreMap& scores, std::size_t bins)
{
    std::vector<double> values;
    values.reserve(scores.size());
    for (const auto& [qid, per_query] : scores.entries()) {
        for (const auto& [aid, s] : per_query) {
            values.push_back(s);
        }
    }
    return score_histogram(values, bins);
}

namespace {

void tally(MetricDelta& d, std::vector<DeltaRow>& rows, const std::string& qid, const char* metric, double before,
           double after)
{
    const double delta = after - before;
    rows.push_back({qid, metric, before, after, delta});
    if (delta > kDeltaTolerance) {
        ++d.increased;
        d.mean_increase += delta;
    } else if (delta < -kDeltaTolerance) {
        ++d.decreased;
        d.mean_decrease += delta;
    } else {
        ++d.unchanged;
    }
}

void finish(MetricDelta& d)
{
    if (d.increased > 0) {
        d.mean_increase /= static_cast<double>(d.increased);
    }
    if (d.decreased > 0) {
        d.mean_decrease /= static_cast<double>(d.decreased);
    }
}

}  // namespace

DeltaReport delta_report(const MetricReport& before, const MetricReport& after)
{
    const bool same_keys = before.per_query.size() == after.per_query.size()
        && std::equal(before.per_query.begin(), before.per_query.end(), after.per_query.begin(),
                      [](const auto& x, const auto& y) { return x.first == y.first; });
    if (!same_keys) {
        throw Error(ErrorCode::QuerySetMismatch, "reports cover different query sets");
    }
    DeltaReport report;
    for (const auto& [qid, b] : before.per_query) {
        const auto& a = after.per_query.at(qid);
        tally(report.precision, report.rows, qid, "precision", b.precision, a.precision);
        tally(report.recall, report.rows, qid, "recall", b.recall, a.recall);
        tally(report.f2, report.rows, qid, "f2", b.f2, a.f2);
    }
    finish(report.precision);
    finish(report.recall);
    finish(report.f2);
    return report;
}

double pearson(std::span<const double> xs, std::span<const double> ys)
{
    if (xs.size() != ys.size() || xs.size() < 2) {
        throw Error(ErrorCode::LengthMismatch, "pearson needs two equal-length inputs of size >= 2");
    }
    const auto n = static_cast<double>(xs.size());
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double dx = xs[i] - mx;
        const double dy = ys[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) {
        throw Error(ErrorCode::ConstantInput, "pearson is undefined for a constant input");
    }
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace lexcascade
