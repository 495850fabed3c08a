#pragma once

#include <cstdint>
#include <vector>

#include "qris/dataset.hpp"

namespace qris {

/// Seeded stand-in URL corpus for offline runs: per_label distinct URLs of
/// each class. Phishing-style URLs skew longer and carry more tokens,
/// hyphenated look-alike hosts, raw IPs and encoded redirects; the two
/// length distributions overlap. Not a substitute for a real corpus.
std::vector<UrlRecord> synthetic_url_corpus(long per_label, std::uint64_t seed);

/// Two Gaussian clusters in feature space (label 1: higher version, ECC L,
/// denser grids). With shuffle_labels the labels are permuted, leaving no
/// signal.
FeatureTable synthetic_feature_clusters(long per_label, std::uint64_t seed, bool shuffle_labels = false);

}  // namespace qris
