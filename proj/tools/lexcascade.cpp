#include <iostream>

#include <CLI11.hpp>

#include "lexcascade/app.hpp"

int main(int argc, char** argv)
{
    using namespace lexcascade;

    CLI::App app{"Statute retrieval cascade: BM25, semantic re-ranking and LLM re-ranking"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    GlobalOptions global;
    std::uint64_t seed = 0;
    std::size_t jobs = 0;
    std::string llm_mode;
    app.add_option("--config", global.config_path, "JSON config file")->check(CLI::ExistingFile);
    auto* seed_opt = app.add_option("--seed", seed, "Seed for the validation split");
    auto* jobs_opt = app.add_option("--jobs", jobs, "Worker threads");
    auto* mode_opt = app.add_option("--llm-mode", llm_mode, "LLM backend")
                         ->check(CLI::IsMember({"live", "replay", "stub"}));
    app.add_flag("--force", global.force, "Overwrite a non-empty output directory");

    IndexArgs index_args;
    auto* index = app.add_subcommand("index", "Build the BM25 index over an article corpus");
    index->add_option("--articles", index_args.articles, "articles.jsonl")->required();
    index->add_option("--out", index_args.out, "Index file to write")->required();

    RunArgs run_args;
    auto* run = app.add_subcommand("run", "Run the cascade over a query set");
    run->add_option("--index", run_args.index, "Index file")->required();
    run->add_option("--queries", run_args.queries, "queries.jsonl")->required();
    run->add_option("--out", run_args.out_dir, "Run directory")->required();

    TuneArgs tune_args;
    auto* tune = app.add_subcommand("tune", "Grid-search the weights and threshold of one phase");
    tune->add_option("--index", tune_args.index, "Index file")->required();
    tune->add_option("--queries", tune_args.queries, "Labeled queries.jsonl")->required();
    tune->add_option("--phase", tune_args.phase, "2 or 3")->required()->check(CLI::IsMember({2, 3}));
    tune->add_option("--out", tune_args.out, "Config patch to write")->required();

    EvalArgs eval_args;
    auto* eval = app.add_subcommand("eval", "Macro precision, recall and F2 of a run");
    eval->add_option("--run", eval_args.run_dir, "Run directory")->required();
    eval->add_option("--gold", eval_args.gold, "Labeled queries.jsonl")->required();
    eval->add_option("--out", eval_args.out, "Report file (default <run>/report.json)");

    AnalyzeArgs analyze_args;
    auto* analyze = app.add_subcommand("analyze", "Histograms, correlation and per-query deltas");
    analyze->add_option("--run", analyze_args.run_dirs, "One run directory, or two (before, after)")
        ->required()
        ->expected(1, 2);
    analyze->add_option("--gold", analyze_args.gold, "Labeled queries.jsonl");
    analyze->add_option("--out", analyze_args.out_dir, "Output directory (default: the last run)");
    analyze->add_option("--bins", analyze_args.bins, "Histogram bins")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }
    if (*seed_opt) {
        global.seed = seed;
    }
    if (*jobs_opt) {
        global.jobs = jobs;
    }
    if (*mode_opt) {
        global.llm_mode = llm_mode;
    }

    if (*index) {
        return cmd_index(index_args, global, std::cout, std::cerr);
    }
    if (*run) {
        return cmd_run(run_args, global, std::cout, std::cerr);
    }
    if (*tune) {
        return cmd_tune(tune_args, global, std::cout, std::cerr);
    }
    if (*eval) {
        return cmd_eval(eval_args, global, std::cout, std::cerr);
    }
    return cmd_analyze(analyze_args, global, std::cout, std::cerr);
}
