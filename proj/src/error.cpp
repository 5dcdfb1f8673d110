#include "lexcascade/error.hpp"

namespace lexcascade {

std::string_view to_string(ErrorCode code) noexcept
{
    switch (code) {
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::MalformedLine: return "MalformedLine";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::ZeroAvgdl: return "ZeroAvgdl";
    case ErrorCode::UnknownDoc: return "UnknownDoc";
    case ErrorCode::UnlabeledQuery: return "UnlabeledQuery";
    case ErrorCode::IndexFormat: return "IndexFormat";
    case ErrorCode::EmptyCandidateSet: return "EmptyCandidateSet";
    case ErrorCode::ScorerTimeout: return "ScorerTimeout";
    case ErrorCode::ScorerCrashed: return "ScorerCrashed";
    case ErrorCode::MissingScore: return "MissingScore";
    case ErrorCode::BudgetTooSmall: return "BudgetTooSmall";
    case ErrorCode::UnknownArticle: return "UnknownArticle";
    case ErrorCode::EmptyWindow: return "EmptyWindow";
    case ErrorCode::NoJsonFound: return "NoJsonFound";
    case ErrorCode::Transport: return "Transport";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::PairMismatch: return "PairMismatch";
    case ErrorCode::WeightError: return "WeightError";
    case ErrorCode::NoFeasibleCell: return "NoFeasibleCell";
    case ErrorCode::NoGold: return "NoGold";
    case ErrorCode::MissingGold: return "MissingGold";
    case ErrorCode::QuerySetMismatch: return "QuerySetMismatch";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::ConstantInput: return "ConstantInput";
    case ErrorCode::Io: return "Io";
    }
    return "Unknown";
}

}  // namespace lexcascade
