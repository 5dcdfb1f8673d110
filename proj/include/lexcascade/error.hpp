#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lexcascade {

enum class ErrorCode {
    DuplicateId,
    MalformedLine,
    EmptyCorpus,
    ZeroAvgdl,
    UnknownDoc,
    UnlabeledQuery,
    IndexFormat,
    EmptyCandidateSet,
    ScorerTimeout,
    ScorerCrashed,
    MissingScore,
    BudgetTooSmall,
    UnknownArticle,
    EmptyWindow,
    NoJsonFound,
    Transport,
    ConfigError,
    PairMismatch,
    WeightError,
    NoFeasibleCell,
    NoGold,
    MissingGold,
    QuerySetMismatch,
    LengthMismatch,
    ConstantInput,
    Io,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
  public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code)
    {}

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }

  private:
    ErrorCode code_;
};

}  // namespace lexcascade
