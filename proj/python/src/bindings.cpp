#include <sstream>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "lexcascade/app.hpp"
#include "lexcascade/bm25.hpp"
#include "lexcascade/corpus.hpp"
#include "lexcascade/error.hpp"
#include "lexcascade/evaluation.hpp"
#include "lexcascade/grid_search.hpp"
#include "lexcascade/llm_rerank.hpp"
#include "lexcascade/pipeline.hpp"
#include "lexcascade/scorers.hpp"

namespace py = pybind11;
using namespace lexcascade;

namespace {

py::dict metrics_dict(const QueryMetrics& m)
{
    py::dict d;
    d["precision"] = m.precision;
    d["recall"] = m.recall;
    d["f2"] = m.f2;
    return d;
}

GridObjective parse_objective(const std::string& name)
{
    if (name == "max_f2") {
        return GridObjective::MaxF2;
    }
    if (name == "max_recall_given_f2") {
        return GridObjective::MaxRecallGivenF2;
    }
    throw Error(ErrorCode::ConfigError, "objective must be max_f2 or max_recall_given_f2, got '" + name + "'");
}

GlobalOptions global_options(const std::string& config, std::optional<std::uint64_t> seed,
                             std::optional<std::size_t> jobs, std::optional<std::string> llm_mode, bool force)
{
    GlobalOptions g;
    g.config_path = config;
    g.seed = seed;
    g.jobs = jobs;
    g.llm_mode = std::move(llm_mode);
    g.force = force;
    return g;
}

// Runs a subcommand and returns (exit_code, stdout, stderr).
template <typename Args>
py::tuple invoke(int (*cmd)(const Args&, const GlobalOptions&, std::ostream&, std::ostream&), const Args& args,
                 const GlobalOptions& g)
{
    std::ostringstream out;
    std::ostringstream err;
    int code = 0;
    {
        py::gil_scoped_release release;
        code = cmd(args, g, out, err);
    }
    return py::make_tuple(code, out.str(), err.str());
}

}  // namespace

PYBIND11_MODULE(_lexcascade, m)
{
    m.doc() = "Statute retrieval cascade: BM25, semantic and LLM re-ranking, tuning and evaluation.";
    m.attr("__version__") = kVersion;

    static py::exception<Error> error_type(m, "LexcascadeError");
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) {
                std::rethrow_exception(p);
            }
        } catch (const Error& e) {
            py::object exc = py::reinterpret_borrow<py::object>(error_type.ptr())(e.what());
            exc.attr("code") = std::string(to_string(e.code()));
            PyErr_SetObject(error_type.ptr(), exc.ptr());
        }
    });

    py::class_<Article>(m, "Article")
        .def(py::init([](std::string id, std::string text, std::string title) {
                 return Article{std::move(id), std::move(title), std::move(text)};
             }),
             py::arg("id"), py::arg("text"), py::arg("title") = "")
        .def_readwrite("id", &Article::id)
        .def_readwrite("title", &Article::title)
        .def_readwrite("text", &Article::text)
        .def("__repr__", [](const Article& a) { return "Article(" + py::repr(py::str(a.id)).cast<std::string>() + ")"; });

    py::class_<Query>(m, "Query")
        .def(py::init([](std::string id, std::string text, std::optional<std::set<std::string>> relevant) {
                 Query q;
                 q.id = std::move(id);
                 q.text = std::move(text);
                 q.labeled = relevant.has_value();
                 q.relevant_ids = relevant.value_or(std::set<std::string>{});
                 return q;
             }),
             py::arg("id"), py::arg("text"), py::arg("relevant_ids") = py::none())
        .def_readwrite("id", &Query::id)
        .def_readwrite("text", &Query::text)
        .def_readwrite("relevant_ids", &Query::relevant_ids)
        .def_readwrite("labeled", &Query::labeled)
        .def("__repr__", [](const Query& q) { return "Query(" + py::repr(py::str(q.id)).cast<std::string>() + ")"; });

    m.def(
        "tokenize",
        [](const std::string& text, bool lowercase, bool strip_punctuation) {
            return tokenize(text, TokenizerConfig{lowercase, strip_punctuation});
        },
        py::arg("text"), py::arg("lowercase") = true, py::arg("strip_punctuation") = true);
    m.def("load_articles", [](const std::string& path) { return load_articles(path).articles(); });
    m.def("load_queries", &load_queries);

    py::class_<Bm25Index>(m, "Bm25Index")
        .def_static(
            "build",
            [](const std::vector<Article>& articles, double k1, double b) {
                return Bm25Index::build(Corpus(articles), {}, Bm25Params{k1, b});
            },
            py::arg("articles"), py::arg("k1") = 1.2, py::arg("b") = 0.75)
        .def_static("load", &Bm25Index::load)
        .def("save", &Bm25Index::save)
        .def_property_readonly("doc_count", &Bm25Index::doc_count)
        .def_property_readonly("avgdl", &Bm25Index::avgdl)
        .def(
            "top_k",
            [](const Bm25Index& index, const std::string& query, std::size_t k) {
                std::vector<std::pair<std::string, double>> out;
                for (const auto& d : index.top_k(std::string_view(query), k)) {
                    out.emplace_back(d.id, d.score);
                }
                return out;
            },
            py::arg("query"), py::arg("k"));

    m.def(
        "recall_at_k",
        [](const Bm25Index& index, const std::vector<Query>& queries, const std::vector<std::size_t>& ks) {
            return recall_at_k(index, queries, ks);
        },
        py::arg("index"), py::arg("queries"), py::arg("ks"));

    m.def("min_max_normalize", &min_max_normalize, py::arg("scores"));
    m.def(
        "overlap_score",
        [](const std::vector<std::string>& q, const std::vector<std::string>& a) { return overlap_score(q, a); },
        py::arg("query_tokens"), py::arg("article_tokens"));
    m.def(
        "fuse",
        [](const QueryScores& a, const QueryScores& b, double w_a, double w_b) { return fuse(a, b, w_a, w_b); },
        py::arg("a"), py::arg("b"), py::arg("w_a"), py::arg("w_b"));
    m.def(
        "threshold_filter",
        [](const QueryScores& s, double t, bool keep_top1) { return threshold_filter(s, t, keep_top1); },
        py::arg("scores"), py::arg("threshold"), py::arg("keep_top1") = true);

    m.def("f2_score", &f2_score, py::arg("precision"), py::arg("recall"));
    m.def(
        "prf2",
        [](const std::set<std::string>& retrieved, const std::set<std::string>& relevant) {
            return metrics_dict(prf2(retrieved, relevant));
        },
        py::arg("retrieved"), py::arg("relevant"));
    m.def(
        "macro_evaluate",
        [](const std::map<std::string, std::set<std::string>>& selected, const std::vector<Query>& gold) {
            const auto r = macro_evaluate(selected, gold);
            py::dict d = metrics_dict({r.precision, r.recall, r.f2});
            d["query_count"] = r.query_count;
            py::dict per_query;
            for (const auto& [id, qm] : r.per_query) {
                per_query[py::str(id)] = metrics_dict(qm);
            }
            d["per_query"] = per_query;
            return d;
        },
        py::arg("selected"), py::arg("gold"));
    m.def(
        "pearson", [](const std::vector<double>& x, const std::vector<double>& y) { return pearson(x, y); },
        py::arg("x"), py::arg("y"));

    m.def("estimate_tokens", &estimate_tokens, py::arg("text"), py::arg("factor") = 1.3);
    m.def(
        "pack_windows",
        [](const Query& query, const std::vector<Article>& candidates, std::size_t budget) {
            py::list out;
            for (const auto& w : pack_windows(query, candidates, budget)) {
                py::dict d;
                d["article_ids"] = w.article_ids;
                d["estimated_tokens"] = w.estimated_tokens;
                d["truncated_ids"] = w.truncated_ids;
                d["kept_words"] = w.kept_words;
                out.append(d);
            }
            return out;
        },
        py::arg("query"), py::arg("candidates"), py::arg("budget"));
    m.def(
        "parse_scores",
        [](const std::string& raw, const std::vector<std::string>& expected) {
            auto r = parse_scores(raw, expected);
            return py::make_tuple(r.parsed, r.warnings);
        },
        py::arg("raw"), py::arg("expected_ids"));

    m.def(
        "grid_search",
        [](const std::vector<std::tuple<std::string, QueryScores, QueryScores, std::set<std::string>>>& points,
           double weight_step, double threshold_step, const std::string& objective, double f2_min, bool keep_top1,
           std::size_t jobs) {
            std::vector<EvalPoint> pts;
            for (const auto& [id, a, b, rel] : points) {
                pts.push_back({id, a, b, rel});
            }
            GridSpec spec{weight_step, threshold_step, parse_objective(objective), f2_min, keep_top1, jobs};
            const auto r = grid_search(pts, spec);
            py::dict d;
            d["w_a"] = r.w_a;
            d["w_b"] = r.w_b;
            d["threshold"] = r.threshold;
            d["precision"] = r.precision;
            d["recall"] = r.recall;
            d["f2"] = r.f2;
            d["cells"] = r.cells;
            return d;
        },
        py::arg("points"), py::arg("weight_step") = 0.01, py::arg("threshold_step") = 0.001,
        py::arg("objective") = "max_f2", py::arg("f2_min") = 0.5, py::arg("keep_top1") = true, py::arg("jobs") = 1);

    // Subcommands return (exit_code, stdout, stderr) exactly as the command-line tool would.
    m.def(
        "cmd_index",
        [](const std::string& articles, const std::string& out, const std::string& config) {
            return invoke(&cmd_index, IndexArgs{articles, out}, global_options(config, {}, {}, {}, false));
        },
        py::arg("articles"), py::arg("out"), py::arg("config") = "");
    m.def(
        "cmd_run",
        [](const std::string& index, const std::string& queries, const std::string& out, const std::string& config,
           std::optional<std::uint64_t> seed, std::optional<std::size_t> jobs, std::optional<std::string> llm_mode,
           bool force) {
            return invoke(&cmd_run, RunArgs{index, queries, out}, global_options(config, seed, jobs, llm_mode, force));
        },
        py::arg("index"), py::arg("queries"), py::arg("out"), py::arg("config") = "", py::arg("seed") = py::none(),
        py::arg("jobs") = py::none(), py::arg("llm_mode") = py::none(), py::arg("force") = false);
    m.def(
        "cmd_tune",
        [](const std::string& index, const std::string& queries, int phase, const std::string& out,
           const std::string& config, std::optional<std::uint64_t> seed, std::optional<std::size_t> jobs,
           std::optional<std::string> llm_mode) {
            return invoke(&cmd_tune, TuneArgs{index, queries, phase, out},
                          global_options(config, seed, jobs, llm_mode, false));
        },
        py::arg("index"), py::arg("queries"), py::arg("phase"), py::arg("out"), py::arg("config") = "",
        py::arg("seed") = py::none(), py::arg("jobs") = py::none(), py::arg("llm_mode") = py::none());
    m.def(
        "cmd_eval",
        [](const std::string& run_dir, const std::string& gold, const std::string& out) {
            return invoke(&cmd_eval, EvalArgs{run_dir, gold, out}, GlobalOptions{});
        },
        py::arg("run_dir"), py::arg("gold"), py::arg("out") = "");
    m.def(
        "cmd_analyze",
        [](const std::vector<std::string>& run_dirs, const std::string& gold, const std::string& out_dir,
           std::size_t bins) {
            return invoke(&cmd_analyze, AnalyzeArgs{run_dirs, gold, out_dir, bins}, GlobalOptions{});
        },
        py::arg("run_dirs"), py::arg("gold") = "", py::arg("out_dir") = "", py::arg("bins") = 10);
}
