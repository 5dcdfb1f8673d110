#pragma once

#include <set>
#include <span>
#include <string>
#include <vector>

#include "lexcascade/corpus.hpp"
#include "lexcascade/pipeline.hpp"
#include "lexcascade/scorers.hpp"

namespace lexcascade {

/// Cached scores of one validation query. `a` and `b` cover the same
/// candidates; `relevant` is the full gold set.
struct EvalPoint {
    std::string query_id;
    QueryScores a;
    QueryScores b;
    std::set<std::string> relevant;
};

enum class GridObjective { MaxF2, MaxRecallGivenF2 };

struct GridSpec {
    double weight_step = 0.01;
    double threshold_step = 0.001;
    GridObjective objective = GridObjective::MaxF2;
    double f2_min = 0.5;
    bool keep_top1 = true;
    std::size_t jobs = 1;
};

struct GridResult {
    double w_a = 0.0;
    double w_b = 0.0;
    double threshold = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f2 = 0.0;
    std::size_t cells = 0;
};

/// 0, step, 2 step, ... up to 1. Exact fractions i / n when 1 / step is an integer n.
std::vector<double> grid_values(double step);

/// Exhaustive scan of the weight simplex times the threshold grid against
/// macro metrics. MaxF2 maximizes F2; MaxRecallGivenF2 maximizes recall over
/// cells with F2 >= f2_min. Ties go to higher recall, then lower threshold,
/// then lower first weight. Throws NoFeasibleCell, ConfigError.
GridResult grid_search(std::span<const EvalPoint> points, const GridSpec& spec);

/// a = normalized BM25, b = semantic, over phase-1 candidates.
std::vector<EvalPoint> phase2_points(const RetrievalRun& run, std::span<const Query> gold);
/// a = semantic, b = LLM, over phase-2 survivors. Requires llm_ran traces.
std::vector<EvalPoint> phase3_points(const RetrievalRun& run, std::span<const Query> gold);

}  // namespace lexcascade
