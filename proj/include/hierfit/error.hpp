#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hierfit {

enum class ErrorKind {
    MissingColumn,
    EmptyTable,
    NonNumericValue,
    NonFiniteValue,
    BrokenNesting,
    NonPositiveTime,
    UnknownTerm,
    RankDeficient,
    ParseError,
    InvalidSpec,
    DomainError,
    InvalidParams,
    MomentUndefined,
    NotPositiveDefinite,
    NonConvergence,
    DivergedWeights,
    NotConverged,
    NotNested,
    TooFew,
    Constant,
    TooManyPanels,
    UnknownLevel,
    IoError,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library carries one of the kinds above so the
/// CLI can map it to an exit status.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message);

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace hierfit
