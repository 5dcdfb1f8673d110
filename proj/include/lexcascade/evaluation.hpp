#pragma once

#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "lexcascade/corpus.hpp"
#include "lexcascade/scorers.hpp"

namespace lexcascade {

struct QueryMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f2 = 0.0;
};

/// F-beta with beta = 2: 5pr / (4p + r), or 0 when p + r = 0.
double f2_score(double precision, double recall);

/// Throws NoGold when `relevant` is empty. Precision of an empty retrieval is 0.
QueryMetrics prf2(const std::set<std::string>& retrieved, const std::set<std::string>& relevant);

struct MetricReport {
    std::map<std::string, QueryMetrics> per_query;
    double precision = 0.0;
    double recall = 0.0;
    double f2 = 0.0;
    std::size_t query_count = 0;
};

/// Per-query prf2 averaged over queries (macro). Throws MissingGold listing
/// every selected query without gold labels.
MetricReport macro_evaluate(const std::map<std::string, std::set<std::string>>& selected,
                            std::span<const Query> gold);

struct Histogram {
    std::vector<double> edges;  // bins + 1 values from 0 to 1
    std::vector<std::size_t> counts;
};

/// Equal-width bins over [0,1]; every bin is [lo, hi) except the last, which
/// includes 1. Throws ConfigError when bins == 0.
Histogram score_histogram(std::span<const double> scores, std::size_t bins);
Histogram score_histogram(const ScoreMap& scores, std::size_t bins);

struct MetricDelta {
    std::size_t increased = 0;
    std::size_t unchanged = 0;
    std::size_t decreased = 0;
    double mean_increase = 0.0;  // over increased queries, 0 when none
    double mean_decrease = 0.0;  // over decreased queries (negative), 0 when none
};

struct DeltaRow {
    std::string query_id;
    std::string metric;
    double before;
    double after;
    double delta;
};

struct DeltaReport {
    MetricDelta precision;
    MetricDelta recall;
    MetricDelta f2;
    std::vector<DeltaRow> rows;
};

inline constexpr double kDeltaTolerance = 1e-12;

/// Throws QuerySetMismatch.
DeltaReport delta_report(const MetricReport& before, const MetricReport& after);

/// Sample Pearson correlation. Throws LengthMismatch (also for n < 2) and ConstantInput.
double pearson(std::span<const double> xs, std::span<const double> ys);

}  // namespace lexcascade
