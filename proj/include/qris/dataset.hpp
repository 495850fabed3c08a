#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "qris/features.hpp"

namespace qris {

enum class Label { Legit = 0, Phish = 1 };

/// Accepts 0/1, legit/legitimate/benign/good and phish/phishing/malicious/bad
/// (case-insensitive).
Label parse_label(std::string_view text);

struct UrlRecord {
    std::string url;
    Label label = Label::Legit;
};

/// Splits CSV text into records of fields (RFC 4180 quoting, CRLF or LF).
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

/// Reads a CSV whose header names `url` and `label` columns; extra columns
/// are ignored.
std::vector<UrlRecord> read_url_csv(const std::filesystem::path& path);
std::vector<UrlRecord> parse_url_csv(std::string_view text);

struct FeatureTable {
    std::vector<std::array<double, kNumFeatures>> rows;
    std::vector<int> labels;

    std::size_t size() const noexcept { return rows.size(); }
    std::size_t count(int label) const;
};

/// Canonical feature CSV: header of feature_names() plus `label`; integers
/// printed plainly, reals with 17 significant digits.
std::string format_feature_csv(const FeatureTable& table);
FeatureTable parse_feature_csv(std::string_view text);
FeatureTable read_feature_csv(const std::filesystem::path& path);

struct LabelCounts {
    long accepted = 0;
    long skipped_too_long = 0;
    long skipped_unreadable = 0;
    long duplicates = 0;
};

struct DatasetManifest {
    std::uint64_t seed = 0;
    long target_per_label = 0;
    long input_rows = 0;
    long consumed = 0;
    std::array<LabelCounts, 2> counts{};
    std::map<int, long> version_histogram;
    std::map<std::string, long> ecc_histogram;
    std::string source_digest;

    std::string to_json() const;
};

struct Dataset {
    FeatureTable table;
    DatasetManifest manifest;
};

struct BuildOptions {
    long target_per_label = 0;
    std::uint64_t seed = 42;
    int jobs = 1;
};

/// Encodes and extracts URLs until each label has target_per_label rows.
/// `source_digest` is recorded verbatim in the manifest.
Dataset build_dataset(const std::vector<UrlRecord>& records, const BuildOptions& options,
                      std::string source_digest = {});

struct Split {
    FeatureTable train;
    FeatureTable validation;
    FeatureTable test;
};

/// Per-label shuffle, then round(f_train n) and round(f_val n) rows per label
/// to train and validation, the rest to test.
Split stratified_split(const FeatureTable& table, std::array<double, 3> fractions, std::uint64_t seed);

/// FNV-1a 64-bit digest as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view bytes);
std::uint64_t fnv1a(std::string_view bytes);

}  // namespace qris
