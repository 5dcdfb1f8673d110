#include "lexcascade/grid_search.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "lexcascade/error.hpp"
#include "lexcascade/evaluation.hpp"
#include "parallel.hpp"

namespace lexcascade {

std::vector<double> grid_values(double step)
{
    if (!(step > 0.0) || step > 1.0) {
        throw Error(ErrorCode::ConfigError, "grid step must lie in (0, 1]");
    }
    std::vector<double> values;
    const double inverse = 1.0 / step;
    const auto n = std::llround(inverse);
    if (std::abs(inverse - static_cast<double>(n)) < 1e-9) {
        for (long long i = 0; i <= n; ++i) {
            values.push_back(static_cast<double>(i) / static_cast<double>(n));
        }
        return values;
    }
    for (long long i = 0; static_cast<double>(i) * step <= 1.0 + 1e-12; ++i) {
        values.push_back(std::min(1.0, static_cast<double>(i) * step));
    }
    return values;
}

namespace {

struct CellTotals {
    std::vector<double> precision;
    std::vector<double> recall;
    std::vector<double> f2;
};

struct Candidate {
    double score;
    const std::string* id;
    bool relevant;
};

// Macro sums for every threshold at one weight pair. Each query's candidates
// are sorted once; thresholds are swept from high to low so the selection
// only grows.
CellTotals sweep(std::span<const EvalPoint> points, double w_a, double w_b, std::span<const double> thresholds,
                 bool keep_top1)
{
    const std::size_t n_t = thresholds.size();
    CellTotals totals{std::vector<double>(n_t, 0.0), std::vector<double>(n_t, 0.0), std::vector<double>(n_t, 0.0)};
    std::vector<Candidate> cands;
    for (const auto& p : points) {
        const QueryScores fused = fuse(p.a, p.b, w_a, w_b);
        cands.clear();
        for (const auto& [id, s] : fused) {
            cands.push_back({s, &id, p.relevant.contains(id)});
        }
        std::sort(cands.begin(), cands.end(), [](const Candidate& x, const Candidate& y) {
            return x.score != y.score ? x.score > y.score : *x.id < *y.id;
        });
        const auto rel = static_cast<double>(p.relevant.size());
        std::size_t taken = 0;
        std::size_t hits = 0;
        for (std::size_t j = n_t; j-- > 0;) {
            while (taken < cands.size() && cands[taken].score > thresholds[j]) {
                hits += cands[taken].relevant ? 1 : 0;
                ++taken;
            }
            std::size_t sel = taken;
            std::size_t h = hits;
            if (sel == 0 && keep_top1 && !cands.empty()) {
                sel = 1;
                h = cands[0].relevant ? 1 : 0;
            }
            const double precision = sel == 0 ? 0.0 : static_cast<double>(h) / static_cast<double>(sel);
            const double recall = static_cast<double>(h) / rel;
            totals.precision[j] += precision;
            totals.recall[j] += recall;
            totals.f2[j] += f2_score(precision, recall);
        }
    }
    return totals;
}

// Second weight of the simplex pair; exact when the grid is made of fractions i / n.
double complement(const std::vector<double>& weights, std::size_t i)
{
    const double mirrored = weights[weights.size() - 1 - i];
    return std::abs(weights[i] + mirrored - 1.0) < 1e-12 ? mirrored : 1.0 - weights[i];
}

// True when `x` should replace `best` under the objective and tie-break rules.
bool better(const GridResult& x, const GridResult& best, GridObjective objective)
{
    if (objective == GridObjective::MaxF2 && x.f2 != best.f2) {
        return x.f2 > best.f2;
    }
    if (x.recall != best.recall) {
        return x.recall > best.recall;
    }
    if (x.threshold != best.threshold) {
        return x.threshold < best.threshold;
    }
    return x.w_a < best.w_a;
}

}  // namespace

GridResult grid_search(std::span<const EvalPoint> points, const GridSpec& spec)
{
    if (points.empty()) {
        throw Error(ErrorCode::ConfigError, "grid search needs at least one validation query");
    }
    for (const auto& p : points) {
        if (p.relevant.empty()) {
            throw Error(ErrorCode::UnlabeledQuery, p.query_id);
        }
    }
    const auto weights = grid_values(spec.weight_step);
    const auto thresholds = grid_values(spec.threshold_step);
    const auto n = static_cast<double>(points.size());

    std::vector<CellTotals> rows(weights.size());
    detail::parallel_for(weights.size(), spec.jobs, [&](std::size_t i) {
        const double w_a = weights[i];
        const double w_b = complement(weights, i);
        rows[i] = sweep(points, w_a, w_b, thresholds, spec.keep_top1);
    });

    GridResult best;
    bool found = false;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        for (std::size_t j = 0; j < thresholds.size(); ++j) {
            GridResult cell;
            cell.w_a = weights[i];
            cell.w_b = complement(weights, i);
            cell.threshold = thresholds[j];
            cell.precision = rows[i].precision[j] / n;
            cell.recall = rows[i].recall[j] / n;
            cell.f2 = rows[i].f2[j] / n;
            if (spec.objective == GridObjective::MaxRecallGivenF2 && !(cell.f2 >= spec.f2_min)) {
                continue;
            }
            if (!found || better(cell, best, spec.objective)) {
                best = cell;
                found = true;
            }
        }
    }
    if (!found) {
        throw Error(ErrorCode::NoFeasibleCell, "no grid cell reaches F2 >= " + std::to_string(spec.f2_min));
    }
    best.cells = weights.size() * thresholds.size();
    return best;
}

namespace {

std::map<std::string, const Query*> gold_index(std::span<const Query> gold)
{
    std::map<std::string, const Query*> by_id;
    for (const auto& q : gold) {
        by_id.emplace(q.id, &q);
    }
    return by_id;
}

const Query& gold_for(const std::map<std::string, const Query*>& by_id, const std::string& qid)
{
    const auto it = by_id.find(qid);
    if (it == by_id.end() || it->second->relevant_ids.empty()) {
        throw Error(ErrorCode::MissingGold, qid);
    }
    return *it->second;
}

}  // namespace

std::vector<EvalPoint> phase2_points(const RetrievalRun& run, std::span<const Query> gold)
{
    const auto by_id = gold_index(gold);
    std::vector<EvalPoint> points;
    for (const auto& t : run.queries) {
        const Query& q = gold_for(by_id, t.query_id);
        if (t.semantic.size() != t.bm25.size()) {
            throw Error(ErrorCode::PairMismatch, "query " + t.query_id + " lacks semantic scores for phase 2");
        }
        points.push_back({t.query_id, t.bm25, t.semantic, q.relevant_ids});
    }
    return points;
}

std::vector<EvalPoint> phase3_points(const RetrievalRun& run, std::span<const Query> gold)
{
    const auto by_id = gold_index(gold);
    std::vector<EvalPoint> points;
    for (const auto& t : run.queries) {
        const Query& q = gold_for(by_id, t.query_id);
        EvalPoint p{t.query_id, {}, {}, q.relevant_ids};
        if (!t.survivors.empty() && !t.llm_ran) {
            throw Error(ErrorCode::PairMismatch, "query " + t.query_id + " has no phase-3 scores");
        }
        for (const auto& id : t.survivors) {
            const auto s = t.semantic.find(id);
            if (s == t.semantic.end()) {
                throw Error(ErrorCode::PairMismatch, "query " + t.query_id + " lacks a semantic score for " + id);
            }
            p.a[id] = s->second;
            p.b[id] = t.llm.at(id);
        }
        points.push_back(std::move(p));
    }
    return points;
}

}  // namespace lexcascade
