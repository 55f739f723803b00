#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace prism {

enum class ErrorKind {
    InvalidArgument,
    InvalidGraph,
    NotSymmetric,
    NotInvolution,
    NonFinite,
    ZeroMatrix,
    DimensionMismatch,
    DisconnectedGraph,
    TooSmall,
    DegenerateGraph,
    Saturated,
    ZeroEdges,
    LengthMismatch,
    NonBinary,
    ParseError,
    DuplicateDate,
    NonPositivePrice,
    EmptyPanel,
    InsufficientHistory,
    DegenerateWindow,
    TooFewNodes,
    EventOutOfRange,
    IoError,
};

inline std::string_view to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::InvalidGraph: return "InvalidGraph";
    case ErrorKind::NotSymmetric: return "NotSymmetric";
    case ErrorKind::NotInvolution: return "NotInvolution";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::ZeroMatrix: return "ZeroMatrix";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::DisconnectedGraph: return "DisconnectedGraph";
    case ErrorKind::TooSmall: return "TooSmall";
    case ErrorKind::DegenerateGraph: return "DegenerateGraph";
    case ErrorKind::Saturated: return "Saturated";
    case ErrorKind::ZeroEdges: return "ZeroEdges";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::NonBinary: return "NonBinary";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::DuplicateDate: return "DuplicateDate";
    case ErrorKind::NonPositivePrice: return "NonPositivePrice";
    case ErrorKind::EmptyPanel: return "EmptyPanel";
    case ErrorKind::InsufficientHistory: return "InsufficientHistory";
    case ErrorKind::DegenerateWindow: return "DegenerateWindow";
    case ErrorKind::TooFewNodes: return "TooFewNodes";
    case ErrorKind::EventOutOfRange: return "EventOutOfRange";
    case ErrorKind::IoError: return "IoError";
    }
    return "Unknown";
}

/// Every failure raised by the library carries a machine-checkable kind.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

    /// Input and validation failures, as opposed to numeric ones.
    bool is_input_error() const noexcept {
        switch (kind_) {
        case ErrorKind::ZeroMatrix:
        case ErrorKind::DegenerateGraph:
        case ErrorKind::Saturated:
        case ErrorKind::DegenerateWindow:
            return false;
        default:
            return true;
        }
    }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

} // namespace prism
