#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rearrange {

enum class ErrorCode {
    EmptyPointSet,
    DegenerateAabb,
    MissingAsset,
    MalformedManifest,
    MeshParseError,
    ImageIoError,
    EmptyObject,
    UnknownObjectId,
    RoleConflict,
    RolesUnassigned,
    InvalidArgument,
    ParseFailure,
    ProtocolViolation,
    BackendUnavailable,
    ReplayMiss,
    EmptySuite,
};

constexpr std::string_view error_code_name(ErrorCode code)
{
    switch (code) {
    case ErrorCode::EmptyPointSet: return "EmptyPointSet";
    case ErrorCode::DegenerateAabb: return "DegenerateAabb";
    case ErrorCode::MissingAsset: return "MissingAsset";
    case ErrorCode::MalformedManifest: return "MalformedManifest";
    case ErrorCode::MeshParseError: return "MeshParseError";
    case ErrorCode::ImageIoError: return "ImageIoError";
    case ErrorCode::EmptyObject: return "EmptyObject";
    case ErrorCode::UnknownObjectId: return "UnknownObjectId";
    case ErrorCode::RoleConflict: return "RoleConflict";
    case ErrorCode::RolesUnassigned: return "RolesUnassigned";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ParseFailure: return "ParseFailure";
    case ErrorCode::ProtocolViolation: return "ProtocolViolation";
    case ErrorCode::BackendUnavailable: return "BackendUnavailable";
    case ErrorCode::ReplayMiss: return "ReplayMiss";
    case ErrorCode::EmptySuite: return "EmptySuite";
    }
    return "Unknown";
}

/// Every failure raised by the library carries a machine-readable code; the
/// message is prefixed with the code name so CLI output stays greppable.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code)
    {
    }

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

/// Parser rejection; keeps the raw model output for diagnostics.
class ParseFailure : public Error {
public:
    ParseFailure(const std::string& reason, std::string raw)
        : Error(ErrorCode::ParseFailure, reason), raw_(std::move(raw))
    {
    }

    const std::string& raw_text() const noexcept { return raw_; }

private:
    std::string raw_;
};

}  // namespace rearrange
