#include <cmath>
#include <limits>
#include <set>
#include <string>

#include "doctest.h"
#include "json.hpp"
#include "qris/dataset.hpp"
#include "qris/encoder.hpp"
#include "qris/error.hpp"
#include "qris/rng.hpp"
#include "qris/synth.hpp"

using namespace qris;

namespace {

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::Io;
}

std::string header() {
    std::string h;
    for (auto name : feature_names()) h += std::string(name) + ",";
    return h + "label\n";
}

}  // namespace

TEST_CASE("labels accept common spellings") {
    CHECK(parse_label("0") == Label::Legit);
    CHECK(parse_label(" Benign ") == Label::Legit);
    CHECK(parse_label("legitimate") == Label::Legit);
    CHECK(parse_label("1") == Label::Phish);
    CHECK(parse_label("PHISHING") == Label::Phish);
    CHECK(parse_label("malicious") == Label::Phish);
    CHECK(code_of([] { parse_label("maybe"); }) == ErrorCode::MalformedCsv);
}

TEST_CASE("CSV parsing handles quotes, CRLF and a BOM") {
    const auto rows = parse_csv("\xEF\xBB\xBFurl,label\r\n\"http://a.b/?x=1,2\",1\r\n\"say \"\"hi\"\"\",0\n");
    REQUIRE(rows.size() == 3);
    CHECK(rows[0][0] == "url");
    CHECK(rows[1][0] == "http://a.b/?x=1,2");
    CHECK(rows[2][0] == "say \"hi\"");
    CHECK(code_of([] { parse_csv("\"open"); }) == ErrorCode::MalformedCsv);
}

TEST_CASE("URL CSV needs url and label columns") {
    const auto recs = parse_url_csv("id,label,url\n7,phishing,http://x.test/login\n8,0,https://ok.test\n");
    REQUIRE(recs.size() == 2);
    CHECK(recs[0].url == "http://x.test/login");
    CHECK(recs[0].label == Label::Phish);
    CHECK(recs[1].label == Label::Legit);
    CHECK(code_of([] { parse_url_csv("address,label\nx,1\n"); }) == ErrorCode::MalformedCsv);
    CHECK(code_of([] { parse_url_csv("url,label\nx\n"); }) == ErrorCode::MalformedCsv);
}

TEST_CASE("feature CSV round trip is exact") {
    FeatureTable t;
    Rng rng(5);
    for (int i = 0; i < 50; ++i) {
        std::array<double, kNumFeatures> row{};
        for (auto& x : row) x = i % 2 ? std::floor(rng.uniform(0, 1000)) : rng.uniform(-1, 1) / 3.0;
        t.rows.push_back(row);
        t.labels.push_back(i % 2);
    }
    const std::string text = format_feature_csv(t);
    CHECK(text.rfind(header(), 0) == 0);
    const FeatureTable back = parse_feature_csv(text);
    CHECK(back.rows == t.rows);
    CHECK(back.labels == t.labels);
    CHECK(format_feature_csv(back) == text);
}

TEST_CASE("feature CSV rejects schema drift and bad values") {
    CHECK(code_of([] { parse_feature_csv("a,b,label\n1,2,0\n"); }) == ErrorCode::SchemaMismatch);
    std::string row;
    for (int i = 0; i < kNumFeatures; ++i) row += (i == 3 ? "nan" : "1") + std::string(",");
    CHECK(code_of([&] { parse_feature_csv(header() + row + "0\n"); }) == ErrorCode::MalformedCsv);
}

TEST_CASE("FNV-1a reference vectors") {
    CHECK(fnv1a_hex("") == "cbf29ce484222325");
    CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
    CHECK(fnv1a_hex("foobar") == "85944171f73967e8");
}

TEST_CASE("dataset building dedupes, skips oversize URLs and is deterministic") {
    std::vector<UrlRecord> recs;
    for (int i = 0; i < 30; ++i) recs.push_back({"https://legit" + std::to_string(i) + ".example/", Label::Legit});
    for (int i = 0; i < 30; ++i) recs.push_back({"http://phish" + std::to_string(i) + ".test/verify", Label::Phish});
    recs.push_back({"https://legit3.example/", Label::Legit});
    recs.push_back({"http://" + std::string(3100, 'x') + ".test", Label::Phish});

    const Dataset a = build_dataset(recs, BuildOptions{20, 7, 2}, "digest");
    const Dataset b = build_dataset(recs, BuildOptions{20, 7, 1}, "digest");
    CHECK(a.table.rows == b.table.rows);
    CHECK(a.table.labels == b.table.labels);
    CHECK(a.manifest.to_json() == b.manifest.to_json());
    CHECK(a.table.count(0) == 20);
    CHECK(a.table.count(1) == 20);

    const auto j = nlohmann::json::parse(a.manifest.to_json());
    CHECK(j["seed"] == 7);
    CHECK(j["source_digest"] == "digest");

    // Every row is the extraction of some input URL's encoding.
    std::set<std::array<double, kNumFeatures>> expected;
    for (const auto& r : recs) {
        try {
            expected.insert(extract_all(encode(r.url, std::nullopt, mix_seed(7, fnv1a(r.url))).grid).values());
        } catch (const Error&) {
        }
    }
    for (const auto& row : a.table.rows) CHECK(expected.count(row) == 1);

    const Dataset all = build_dataset(recs, BuildOptions{30, 7, 1});
    const auto k = nlohmann::json::parse(all.manifest.to_json());
    CHECK(k["counts"]["legit"]["duplicates"] == 1);
    CHECK(k["counts"]["phish"]["skipped_too_long"] == 1);

    CHECK(code_of([&] { build_dataset(recs, BuildOptions{31, 7, 1}); }) == ErrorCode::InsufficientSamples);
    CHECK(code_of([&] { build_dataset(recs, BuildOptions{0, 7, 1}); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("stratified split of 200 rows gives 140/30/30") {
    const FeatureTable t = synthetic_feature_clusters(100, 3);
    const Split s = stratified_split(t, {0.7, 0.15, 0.15}, 42);
    CHECK(s.train.size() == 140);
    CHECK(s.validation.size() == 30);
    CHECK(s.test.size() == 30);
    CHECK(s.train.count(1) == 70);
    CHECK(s.validation.count(1) == 15);
    CHECK(s.test.count(1) == 15);

    std::multiset<std::array<double, kNumFeatures>> before(t.rows.begin(), t.rows.end());
    std::multiset<std::array<double, kNumFeatures>> after;
    for (const auto* part : {&s.train, &s.validation, &s.test}) after.insert(part->rows.begin(), part->rows.end());
    CHECK(before == after);

    const Split again = stratified_split(t, {0.7, 0.15, 0.15}, 42);
    CHECK(again.test.rows == s.test.rows);
    const Split other = stratified_split(t, {0.7, 0.15, 0.15}, 43);
    CHECK(other.test.rows != s.test.rows);

    CHECK(code_of([&] { stratified_split(t, {0.7, 0.2, 0.2}, 1); }) == ErrorCode::InvalidArgument);
    CHECK(code_of([&] { stratified_split(t, {1.0, 0.0, 0.0}, 1); }) == ErrorCode::InvalidArgument);
    const FeatureTable tiny = synthetic_feature_clusters(3, 3);
    CHECK(code_of([&] { stratified_split(tiny, {0.8, 0.1, 0.1}, 1); }) == ErrorCode::TooFewRows);
}

TEST_CASE("synthetic URL corpus is seeded and distinct") {
    const auto a = synthetic_url_corpus(200, 9);
    const auto b = synthetic_url_corpus(200, 9);
    REQUIRE(a.size() == 400);
    std::set<std::string> urls;
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].url == b[i].url);
        urls.insert(a[i].url);
    }
    CHECK(urls.size() == 400);
}
