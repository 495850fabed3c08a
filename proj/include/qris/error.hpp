#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace qris {

enum class ErrorCode {
    EmptyPayload,
    PayloadTooLong,
    UnsupportedMode,
    InvalidArgument,
    ImageTooSmall,
    MalformedImage,
    NoBlackPixel,
    ImplausibleModuleSize,
    InvalidSideCount,
    FormatUnrecoverable,
    DegenerateGrid,
    MalformedCsv,
    InsufficientSamples,
    TooFewRows,
    SingleClassData,
    SchemaMismatch,
    ModelFormat,
    Io,
};

/// Stable snake_case identifier, used as the machine-readable reason in
/// service responses and CLI error summaries.
std::string_view error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace qris
