#include "qris/error.hpp"

namespace qris {

std::string_view error_code_name(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::EmptyPayload: return "empty_payload";
        case ErrorCode::PayloadTooLong: return "payload_too_long";
        case ErrorCode::UnsupportedMode: return "unsupported_mode";
        case ErrorCode::InvalidArgument: return "invalid_argument";
        case ErrorCode::ImageTooSmall: return "image_too_small";
        case ErrorCode::MalformedImage: return "malformed_image";
        case ErrorCode::NoBlackPixel: return "no_black_pixel";
        case ErrorCode::ImplausibleModuleSize: return "implausible_module_size";
        case ErrorCode::InvalidSideCount: return "invalid_side_count";
        case ErrorCode::FormatUnrecoverable: return "format_unrecoverable";
        case ErrorCode::DegenerateGrid: return "degenerate_grid";
        case ErrorCode::MalformedCsv: return "malformed_csv";
        case ErrorCode::InsufficientSamples: return "insufficient_samples";
        case ErrorCode::TooFewRows: return "too_few_rows";
        case ErrorCode::SingleClassData: return "single_class_data";
        case ErrorCode::SchemaMismatch: return "schema_mismatch";
        case ErrorCode::ModelFormat: return "model_format";
        case ErrorCode::Io: return "io";
    }
    return "unknown";
}

}  // namespace qris
