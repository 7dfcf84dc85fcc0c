#include "hierfit/error.hpp"

namespace hierfit {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::MissingColumn: return "MissingColumn";
        case ErrorKind::EmptyTable: return "EmptyTable";
        case ErrorKind::NonNumericValue: return "NonNumericValue";
        case ErrorKind::NonFiniteValue: return "NonFiniteValue";
        case ErrorKind::BrokenNesting: return "BrokenNesting";
        case ErrorKind::NonPositiveTime: return "NonPositiveTime";
        case ErrorKind::UnknownTerm: return "UnknownTerm";
        case ErrorKind::RankDeficient: return "RankDeficient";
        case ErrorKind::ParseError: return "ParseError";
        case ErrorKind::InvalidSpec: return "InvalidSpec";
        case ErrorKind::DomainError: return "DomainError";
        case ErrorKind::InvalidParams: return "InvalidParams";
        case ErrorKind::MomentUndefined: return "MomentUndefined";
        case ErrorKind::NotPositiveDefinite: return "NotPositiveDefinite";
        case ErrorKind::NonConvergence: return "NonConvergence";
        case ErrorKind::DivergedWeights: return "DivergedWeights";
        case ErrorKind::NotConverged: return "NotConverged";
        case ErrorKind::NotNested: return "NotNested";
        case ErrorKind::TooFew: return "TooFew";
        case ErrorKind::Constant: return "Constant";
        case ErrorKind::TooManyPanels: return "TooManyPanels";
        case ErrorKind::UnknownLevel: return "UnknownLevel";
        case ErrorKind::IoError: return "IoError";
    }
    return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

}  // namespace hierfit
