#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "lexcascade/bm25.hpp"
#include "lexcascade/error.hpp"
#include "lexcascade/llm_client.hpp"
#include "lexcascade/pipeline.hpp"
#include "lexcascade/scorers.hpp"

namespace lexcascade {

inline constexpr const char* kVersion = "0.1.0";

/// Process exit codes shared by every subcommand.
enum ExitCode : int {
    kExitOk = 0,
    kExitData = 1,
    kExitConfig = 2,
    kExitConnectivity = 3,
    kExitInfeasible = 4,
};

int exit_code_for(ErrorCode code) noexcept;

enum class LlmMode { Live, Replay, Stub };

struct ScorerSettings {
    enum class Kind { Overlap, Subprocess, ScoreFile };
    Kind kind = Kind::Overlap;
    std::string command;
    std::string path;
    double timeout_seconds = 120.0;
};

struct TuneSettings {
    double validation_fraction = 0.2;
    double weight_step = 0.01;
    double threshold_step = 0.001;
    double f2_min = 0.5;
};

/// Everything a config file can set. The pipeline fields sit at the top
/// level; the rest live in named sections.
struct AppConfig {
    PipelineConfig pipeline;
    TokenizerConfig tokenizer;
    Bm25Params bm25;
    ScorerSettings scorer;
    LlmClientConfig llm;
    LlmMode llm_mode = LlmMode::Stub;
    std::string prompt_template;  // empty = built-in
    std::string audit_log;        // empty = no audit log
    TuneSettings tune;
    std::uint64_t seed = 42;
    std::size_t jobs = 1;
};

/// Throws ConfigError on unknown keys or wrong types.
AppConfig parse_config(const nlohmann::json& doc);
/// Defaults when path is empty.
AppConfig load_config(const std::string& path);
nlohmann::json config_to_json(const AppConfig& cfg);

LlmMode parse_llm_mode(const std::string& name);

/// Values given on the command line win over the config file.
struct GlobalOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> jobs;
    std::optional<std::string> llm_mode;
    bool force = false;
};

std::unique_ptr<PairScorer> make_semantic_scorer(const ScorerSettings& settings, const TokenizerConfig& tokenizer);

/// Builds the client chain for the mode. Stub scores are
/// round(100 * |query terms in article| / |query terms|).
std::shared_ptr<LlmClient> make_llm_client(const AppConfig& cfg, const Corpus& corpus);

/// SHA-256 of a file's bytes as lowercase hex. Throws Io.
std::string file_digest(const std::filesystem::path& path);

struct IndexArgs {
    std::string articles;
    std::string out;
};

struct RunArgs {
    std::string index;
    std::string queries;
    std::string out_dir;
};

struct TuneArgs {
    std::string index;
    std::string queries;
    int phase = 2;
    std::string out;
};

struct EvalArgs {
    std::string run_dir;
    std::string gold;
    std::string out;  // default <run_dir>/report.json
};

struct AnalyzeArgs {
    std::vector<std::string> run_dirs;  // one or two (before, after)
    std::string gold;
    std::string out_dir;  // default: the last run directory
    std::size_t bins = 10;
};

int cmd_index(const IndexArgs& args, const GlobalOptions& global, std::ostream& out, std::ostream& err);
int cmd_run(const RunArgs& args, const GlobalOptions& global, std::ostream& out, std::ostream& err);
int cmd_tune(const TuneArgs& args, const GlobalOptions& global, std::ostream& out, std::ostream& err);
int cmd_eval(const EvalArgs& args, const GlobalOptions& global, std::ostream& out, std::ostream& err);
int cmd_analyze(const AnalyzeArgs& args, const GlobalOptions& global, std::ostream& out, std::ostream& err);

}  // namespace lexcascade
