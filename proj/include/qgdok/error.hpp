#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace qgdok {

enum class ErrorCode {
    EmptyDocument,
    InvalidConfig,
    DimensionMismatch,
    ZeroVector,
    ProviderFingerprintMixed,
    EmptyIndex,
    EmptyText,
    SchemaVersionMismatch,
    CorruptIndex,
    ProviderUnavailable,
    TimeoutExceeded,
    ContentBlocked,
    ModeContextMismatch,
    MissingMaterial,
    MissingContext,
    MissingSlot,
    UnparseableOutput,
    EmptyCandidate,
    MalformedJudgeOutput,
    RangeError,
    MissingCell,
    NotFound,
    InvalidArgument,
    InvalidTransition,
    IoError,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Base exception for every failure the engine surfaces. `stage` names the
/// pipeline step that raised it ("retrieval", "generation", "parse", ...)
/// and may be empty for errors raised outside a pipeline.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, std::string message, std::string stage = {})
        : std::runtime_error(std::move(message)), code_(code), stage_(std::move(stage)) {}

    ErrorCode code() const noexcept { return code_; }
    const std::string& stage() const noexcept { return stage_; }

    Error with_stage(std::string stage) const { return Error(code_, what(), std::move(stage)); }

private:
    ErrorCode code_;
    std::string stage_;
};

} // namespace qgdok
