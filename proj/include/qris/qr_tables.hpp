#pragma once

#include <cstdint>
#include <optional>
#include <span>

#include "qris/qr_types.hpp"

namespace qris::tables {

int ecc_codewords_per_block(int version, EccLevel ecc);
int num_ecc_blocks(int version, EccLevel ecc);

/// Modules available for data and ECC codewords (including remainder bits).
int raw_data_modules(int version);
int data_codewords(int version, EccLevel ecc);

/// Row/column centre coordinates of alignment patterns; empty for version 1.
std::span<const int> alignment_positions(int version);

/// Alignment patterns actually drawn: k*k minus the three finder overlaps.
int alignment_pattern_count(int version);

/// Remainder bits appended after the final codeword (0, 3, 4 or 7).
int remainder_bits(int version);

int char_count_bits(Mode mode, int version);

/// Maximum payload length (characters for Alphanumeric, bytes for Byte).
int capacity(int version, EccLevel ecc, Mode mode);

/// 15-bit format field (BCH-protected, XOR-masked with 0x5412).
std::uint16_t format_bits(EccLevel ecc, int mask);

struct FormatInfo {
    EccLevel ecc;
    int mask;
    int distance;  // Hamming distance to the matched codeword
};

/// Nearest valid format codeword within Hamming distance 3.
std::optional<FormatInfo> decode_format_bits(std::uint16_t bits);

/// 18-bit version field (BCH(18,6)); only defined for versions 7..40.
std::uint32_t version_bits(int version);

/// Nearest valid version codeword within Hamming distance 3.
std::optional<int> decode_version_bits(std::uint32_t bits);

}  // namespace qris::tables
