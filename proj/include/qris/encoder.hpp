#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "qris/qr_types.hpp"

namespace qris {

/// True when every character is in the 45-symbol alphanumeric set
/// (0-9, A-Z, space, $ % * + - . / :).
bool is_alphanumeric(std::string_view payload) noexcept;

Mode select_mode(std::string_view payload) noexcept;

/// Length counted in the unit the capacity table uses for `mode`.
int payload_length(std::string_view payload, Mode mode) noexcept;

/// Smallest version whose capacity at `ecc` holds the payload, if any.
std::optional<int> smallest_version(std::string_view payload, Mode mode, EccLevel ecc);

/// ECC levels whose capacity at `version` still holds the payload, L..H order.
std::vector<EccLevel> feasible_ecc_levels(std::string_view payload, Mode mode, int version);

/// Encodes with automatic parameters: mode by character set, smallest version
/// at ECC L, ECC drawn uniformly (seeded) from the levels that fit at that
/// version unless `ecc_choice` is given, mask by minimum penalty.
QrMatrix encode(std::string_view payload, std::optional<EccLevel> ecc_choice = std::nullopt,
                std::uint64_t rng_seed = 0);

struct ForcedEncoding {
    int version = 1;
    EccLevel ecc = EccLevel::L;
    std::optional<Mode> mode;  // default: select_mode(payload)
    std::optional<int> mask;   // default: minimum penalty
};

QrMatrix encode_with(std::string_view payload, const ForcedEncoding& forced);

/// Data codewords (segment header, payload bits, terminator and pad bytes).
std::vector<std::uint8_t> make_data_codewords(std::string_view payload, int version, EccLevel ecc, Mode mode);

/// Splits data into RS blocks, appends ECC and interleaves.
std::vector<std::uint8_t> add_ecc_and_interleave(const std::vector<std::uint8_t>& data, int version, EccLevel ecc);

/// Reed-Solomon remainder of `data` for a generator of the given degree.
std::vector<std::uint8_t> reed_solomon_remainder(const std::vector<std::uint8_t>& data, int degree);

/// Sum of the four mask-selection penalties (runs, 2x2 blocks, finder-like
/// 1:1:3:1:1 patterns with four light modules, dark proportion).
long mask_penalty(const ModuleGrid& grid);

/// Text rendering for golden files: one line per row, U+2588 for dark, U+00B7 for light.
std::string dump_grid(const ModuleGrid& grid);

}  // namespace qris
