#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

namespace qris {

/// Error-correction level. The numeric value is also the feature encoding
/// (L=0, M=1, Q=2, H=3).
enum class EccLevel : std::uint8_t { L = 0, M = 1, Q = 2, H = 3 };

enum class Mode : std::uint8_t { Alphanumeric, Byte };

inline constexpr int kMinVersion = 1;
inline constexpr int kMaxVersion = 40;
inline constexpr int kNumMasks = 8;

constexpr int side_for_version(int version) noexcept { return 17 + 4 * version; }

/// Version for a side length, or nullopt when side is not 17+4v with v in [1,40].
std::optional<int> version_for_side(int side) noexcept;

char ecc_letter(EccLevel ecc) noexcept;
std::optional<EccLevel> parse_ecc(std::string_view text) noexcept;
std::string_view mode_name(Mode mode) noexcept;

struct EncodingParams {
    int version = 1;
    EccLevel ecc = EccLevel::L;
    int mask = 0;
    Mode mode = Mode::Byte;

    bool operator==(const EncodingParams&) const = default;
};

/// Square module grid, row-major; 1 = dark module.
class ModuleGrid {
public:
    ModuleGrid() = default;
    explicit ModuleGrid(int side) : side_(side), cells_(static_cast<std::size_t>(side) * side, 0) {}

    int side() const noexcept { return side_; }
    std::uint8_t at(int row, int col) const { return cells_[index(row, col)]; }
    void set(int row, int col, bool dark) { cells_[index(row, col)] = dark ? 1 : 0; }
    const std::vector<std::uint8_t>& cells() const noexcept { return cells_; }

    bool operator==(const ModuleGrid&) const = default;

private:
    std::size_t index(int row, int col) const {
        return static_cast<std::size_t>(row) * side_ + col;
    }

    int side_ = 0;
    std::vector<std::uint8_t> cells_;
};

struct QrMatrix {
    ModuleGrid grid;
    EncodingParams params;

    int side() const noexcept { return grid.side(); }
};

}  // namespace qris
