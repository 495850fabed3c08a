#include "qris/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <unordered_set>

#include "qris/error.hpp"
#include "qris/rng.hpp"

namespace qris {

namespace {

constexpr std::array kWords{
    "news",    "shop",   "cloud",  "data",   "media",  "home",    "travel", "food",    "health", "books",
    "music",   "sports", "photo",  "code",   "maps",   "mail",    "docs",   "learn",   "market", "games",
    "weather", "auto",   "family", "garden", "design", "finance", "energy", "science", "city",   "art",
    "studio",  "wiki",   "forum",  "blog",   "store",  "press",   "labs",   "clinic",  "school", "trip"};
constexpr std::array kPathWords{
    "about", "contact", "products", "blog",    "article", "help",   "support", "docs",    "category", "search",
    "news",  "events",  "profile",  "gallery", "careers", "pricing", "faq",    "archive", "terms",    "privacy"};
constexpr std::array kBrands{"paypal", "apple", "microsoft", "netflix", "amazon", "chase", "wellsfargo",
                             "dhl",    "office365", "outlook", "instagram", "facebook", "coinbase", "bankofamerica"};
constexpr std::array kLures{"login", "verify", "secure", "account", "update", "confirm",
                            "signin", "wallet", "billing", "unlock", "support", "recovery"};
constexpr std::array kLegitTlds{".com", ".org", ".net", ".edu", ".gov", ".io", ".co.uk", ".de"};
constexpr std::array kPhishTlds{".com", ".xyz", ".top", ".info", ".online", ".site", ".ru", ".tk", ".net", ".club"};

template <typename A>
std::string pick(Rng& rng, const A& items) {
    return items[rng.index(items.size())];
}

std::string token(Rng& rng, int length, bool hex_only = false) {
    static const std::string alnum = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";
    static const std::string hex = "0123456789abcdef";
    const std::string& set = hex_only ? hex : alnum;
    std::string out;
    for (int i = 0; i < length; ++i) out += set[rng.index(set.size())];
    return out;
}

std::string legit_url(Rng& rng) {
    std::string url = rng.unit() < 0.85 ? "https://" : "http://";
    if (rng.unit() < 0.6) url += "www.";
    url += pick(rng, kWords);
    if (rng.unit() < 0.4) url += pick(rng, kWords);
    url += pick(rng, kLegitTlds);
    const long segments = rng.integer(0, 3);
    for (long s = 0; s < segments; ++s) {
        url += "/" + pick(rng, kPathWords);
        if (rng.unit() < 0.3) url += "-" + pick(rng, kWords);
    }
    if (rng.unit() < 0.25) url += "/" + std::to_string(rng.integer(1, 99999));
    if (rng.unit() < 0.15) url += "?q=" + pick(rng, kWords) + "&page=" + std::to_string(rng.integer(1, 40));
    if (rng.unit() < 0.1) url += "?utm_source=" + pick(rng, kWords) + "&utm_medium=" + pick(rng, kWords) +
                                 "&id=" + token(rng, static_cast<int>(rng.integer(6, 24)));
    return url;
}

std::string phish_url(Rng& rng) {
    // A minority is deliberately plain so the classes overlap.
    if (rng.unit() < 0.15) {
        std::string url = rng.unit() < 0.5 ? "https://" : "http://";
        url += pick(rng, kWords) + pick(rng, kPhishTlds) + "/" + pick(rng, kLures);
        return url;
    }
    std::string url = rng.unit() < 0.55 ? "http://" : "https://";
    const double host_kind = rng.unit();
    if (host_kind < 0.2) {
        url += std::to_string(rng.integer(11, 223)) + "." + std::to_string(rng.integer(0, 255)) + "." +
               std::to_string(rng.integer(0, 255)) + "." + std::to_string(rng.integer(1, 254));
        if (rng.unit() < 0.3) url += ":" + std::to_string(rng.integer(8000, 8999));
    } else if (host_kind < 0.6) {
        url += pick(rng, kBrands) + "-" + pick(rng, kLures);
        if (rng.unit() < 0.5) url += "-" + pick(rng, kLures);
        url += pick(rng, kPhishTlds);
    } else {
        const long subs = rng.integer(1, 3);
        for (long s = 0; s < subs; ++s) url += (s == 0 ? pick(rng, kBrands) : pick(rng, kLures)) + ".";
        url += token(rng, static_cast<int>(rng.integer(5, 12))) + pick(rng, kPhishTlds);
    }
    const long segments = rng.integer(1, 4);
    for (long s = 0; s < segments; ++s) {
        url += "/";
        url += rng.unit() < 0.5 ? pick(rng, kLures) : token(rng, static_cast<int>(rng.integer(4, 16)));
    }
    if (rng.unit() < 0.3) url += ".php";
    if (rng.unit() < 0.6) {
        url += "?" + std::string(rng.unit() < 0.5 ? "session" : "token") + "=" +
               token(rng, static_cast<int>(rng.integer(8, 48)), rng.unit() < 0.5);
    }
    if (rng.unit() < 0.25) url += "&redirect=https%3A%2F%2Fwww." + pick(rng, kBrands) + ".com%2F" + pick(rng, kLures);
    if (rng.unit() < 0.1) url += "@" + pick(rng, kBrands) + ".com";
    return url;
}

}  // namespace

std::vector<UrlRecord> synthetic_url_corpus(long per_label, std::uint64_t seed) {
    if (per_label <= 0) throw Error(ErrorCode::InvalidArgument, "per-label count must be positive");
    std::vector<UrlRecord> out;
    std::unordered_set<std::string> seen;
    for (int l = 0; l < 2; ++l) {
        Rng rng(mix_seed(seed, static_cast<std::uint64_t>(l)));
        long made = 0;
        long attempts = 0;
        while (made < per_label) {
            if (++attempts > per_label * 50) {
                throw Error(ErrorCode::InsufficientSamples, "generator could not produce enough distinct URLs");
            }
            std::string url = l == 0 ? legit_url(rng) : phish_url(rng);
            if (!seen.insert(url).second) continue;
            out.push_back({std::move(url), l == 0 ? Label::Legit : Label::Phish});
            ++made;
        }
    }
    Rng rng(mix_seed(seed, 2));
    rng.shuffle(out);
    return out;
}

FeatureTable synthetic_feature_clusters(long per_label, std::uint64_t seed, bool shuffle_labels) {
    Rng rng(seed);
    auto normal = [&rng](double mean, double sd) {
        // Box-Muller on the fixed uniform mapping keeps the stream portable.
        const double u1 = std::max(rng.unit(), 1e-300);
        const double u2 = rng.unit();
        return mean + sd * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    };
    FeatureTable t;
    for (int l = 0; l < 2; ++l) {
        for (long i = 0; i < per_label; ++i) {
            std::array<double, kNumFeatures> row{};
            const double version = std::clamp(std::round(normal(l == 0 ? 3.0 : 7.0, 1.0)), 1.0, 40.0);
            row[0] = version;
            row[1] = l == 0 ? static_cast<double>(rng.integer(1, 3)) : 0.0;
            row[2] = static_cast<double>(rng.integer(0, 7));
            row[3] = version < 2 ? 0.0 : (version < 7 ? 1.0 : 6.0);
            row[4] = version < 2 ? 0.0 : (version < 7 ? 7.0 : 0.0);
            const double side = 17.0 + 4.0 * version;
            const double density = std::clamp(normal(l == 0 ? 0.46 : 0.52, 0.02), 0.05, 0.95);
            row[6] = std::round(density * side * side);
            row[5] = side * side - row[6];
            row[7] = row[6] / row[5];
            row[8] = density;
            row[9] = density;
            for (int f = 10; f < kNumFeatures; ++f) row[static_cast<std::size_t>(f)] = normal(l == 0 ? 0.0 : 0.8, 1.0);
            t.rows.push_back(row);
            t.labels.push_back(l);
        }
    }
    if (shuffle_labels) rng.shuffle(t.labels);
    std::vector<std::size_t> order(t.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    FeatureTable shuffled;
    for (auto i : order) {
        shuffled.rows.push_back(t.rows[i]);
        shuffled.labels.push_back(t.labels[i]);
    }
    return shuffled;
}

}  // namespace qris
