#include "qris/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <optional>
#include <thread>
#include <unordered_set>

#include "json.hpp"
#include "qris/encoder.hpp"
#include "qris/error.hpp"
#include "qris/file_io.hpp"
#include "qris/rng.hpp"

namespace qris {

namespace {

std::string lower(std::string_view text) {
    std::string out(text);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::string trim(std::string_view text) {
    std::size_t a = 0;
    std::size_t b = text.size();
    while (a < b && std::isspace(static_cast<unsigned char>(text[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(text[b - 1]))) --b;
    return std::string(text.substr(a, b - a));
}

std::string format_real(double value) {
    if (value == std::floor(value) && std::fabs(value) < 1e15) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.0f", value);
        return buf;
    }
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    return buf;
}

}  // namespace

Label parse_label(std::string_view text) {
    const std::string t = lower(trim(text));
    if (t == "0" || t == "legit" || t == "legitimate" || t == "benign" || t == "good") return Label::Legit;
    if (t == "1" || t == "phish" || t == "phishing" || t == "malicious" || t == "bad") return Label::Phish;
    throw Error(ErrorCode::MalformedCsv, "unrecognised label '" + std::string(text) + "'");
}

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool quoted = false;
    bool field_started = false;
    std::size_t i = 0;
    if (text.substr(0, 3) == "\xEF\xBB\xBF") i = 3;
    auto end_record = [&] {
        record.push_back(std::move(field));
        field.clear();
        if (!(record.size() == 1 && record[0].empty() && !field_started)) records.push_back(std::move(record));
        record.clear();
        field_started = false;
    };
    for (; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
            continue;
        }
        if (c == '"' && field.empty()) {
            quoted = true;
            field_started = true;
        } else if (c == ',') {
            record.push_back(std::move(field));
            field.clear();
            field_started = true;
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
            end_record();
        } else {
            field += c;
            field_started = true;
        }
    }
    if (quoted) throw Error(ErrorCode::MalformedCsv, "unterminated quoted field");
    if (!field.empty() || !record.empty() || field_started) end_record();
    return records;
}

std::vector<UrlRecord> parse_url_csv(std::string_view text) {
    const auto records = parse_csv(text);
    if (records.empty()) throw Error(ErrorCode::MalformedCsv, "empty CSV");
    int url_col = -1;
    int label_col = -1;
    for (std::size_t c = 0; c < records[0].size(); ++c) {
        const std::string name = lower(trim(records[0][c]));
        if (name == "url" && url_col < 0) url_col = static_cast<int>(c);
        if (name == "label" && label_col < 0) label_col = static_cast<int>(c);
    }
    if (url_col < 0 || label_col < 0) throw Error(ErrorCode::MalformedCsv, "header must name 'url' and 'label' columns");
    std::vector<UrlRecord> out;
    out.reserve(records.size() - 1);
    for (std::size_t r = 1; r < records.size(); ++r) {
        const auto& rec = records[r];
        const auto needed = static_cast<std::size_t>(std::max(url_col, label_col));
        if (rec.size() <= needed) {
            throw Error(ErrorCode::MalformedCsv, "row " + std::to_string(r + 1) + " has too few fields");
        }
        if (rec[static_cast<std::size_t>(url_col)].empty()) {
            throw Error(ErrorCode::MalformedCsv, "row " + std::to_string(r + 1) + " has an empty url");
        }
        out.push_back({rec[static_cast<std::size_t>(url_col)], parse_label(rec[static_cast<std::size_t>(label_col)])});
    }
    return out;
}

std::vector<UrlRecord> read_url_csv(const std::filesystem::path& path) { return parse_url_csv(read_file(path)); }

std::size_t FeatureTable::count(int label) const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), label));
}

std::string format_feature_csv(const FeatureTable& table) {
    std::string out;
    for (const auto& name : feature_names()) {
        out += name;
        out += ',';
    }
    out += "label\n";
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        for (double v : table.rows[r]) {
            out += format_real(v);
            out += ',';
        }
        out += std::to_string(table.labels[r]);
        out += '\n';
    }
    return out;
}

FeatureTable parse_feature_csv(std::string_view text) {
    const auto records = parse_csv(text);
    if (records.empty()) throw Error(ErrorCode::MalformedCsv, "empty feature CSV");
    const auto& header = records[0];
    bool schema_ok = header.size() == kNumFeatures + 1 && trim(header[kNumFeatures]) == "label";
    for (int i = 0; schema_ok && i < kNumFeatures; ++i) schema_ok = trim(header[static_cast<std::size_t>(i)]) == feature_names()[static_cast<std::size_t>(i)];
    if (!schema_ok) throw Error(ErrorCode::SchemaMismatch, "feature CSV header does not match the 24-feature schema");

    FeatureTable table;
    table.rows.reserve(records.size() - 1);
    for (std::size_t r = 1; r < records.size(); ++r) {
        const auto& rec = records[r];
        if (rec.size() != kNumFeatures + 1) {
            throw Error(ErrorCode::MalformedCsv, "row " + std::to_string(r + 1) + " does not have 25 fields");
        }
        std::array<double, kNumFeatures> row{};
        for (int i = 0; i < kNumFeatures; ++i) {
            const std::string& cell = rec[static_cast<std::size_t>(i)];
            char* end = nullptr;
            const double v = std::strtod(cell.c_str(), &end);
            if (cell.empty() || end != cell.c_str() + cell.size() || !std::isfinite(v)) {
                throw Error(ErrorCode::MalformedCsv, "row " + std::to_string(r + 1) + " has a non-numeric or missing value");
            }
            row[static_cast<std::size_t>(i)] = v;
        }
        table.rows.push_back(row);
        table.labels.push_back(static_cast<int>(parse_label(rec[kNumFeatures])));
    }
    return table;
}

FeatureTable read_feature_csv(const std::filesystem::path& path) { return parse_feature_csv(read_file(path)); }

std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string fnv1a_hex(std::string_view bytes) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(bytes)));
    return buf;
}

std::string DatasetManifest::to_json() const {
    nlohmann::ordered_json j;
    j["seed"] = seed;
    j["target_per_label"] = target_per_label;
    j["input_rows"] = input_rows;
    j["consumed"] = consumed;
    const char* names[2] = {"legit", "phish"};
    for (int l = 0; l < 2; ++l) {
        const auto& c = counts[static_cast<std::size_t>(l)];
        j["counts"][names[l]] = {{"accepted", c.accepted},
                                 {"skipped_too_long", c.skipped_too_long},
                                 {"skipped_unreadable", c.skipped_unreadable},
                                 {"duplicates", c.duplicates}};
    }
    j["version_histogram"] = nlohmann::ordered_json::object();
    for (const auto& [v, n] : version_histogram) j["version_histogram"][std::to_string(v)] = n;
    j["ecc_histogram"] = nlohmann::ordered_json::object();
    for (const auto& [e, n] : ecc_histogram) j["ecc_histogram"][e] = n;
    j["source_digest"] = source_digest;
    return j.dump(2) + "\n";
}

namespace {

struct Outcome {
    std::optional<FeatureVector> features;
    bool too_long = false;
};

Outcome encode_and_extract(const std::string& url, std::uint64_t seed) {
    Outcome out;
    try {
        const QrMatrix m = encode(url, std::nullopt, mix_seed(seed, fnv1a(url)));
        out.features = extract_all(m.grid);
    } catch (const Error& e) {
        out.too_long = e.code() == ErrorCode::PayloadTooLong;
    }
    return out;
}

}  // namespace

Dataset build_dataset(const std::vector<UrlRecord>& records, const BuildOptions& options, std::string source_digest) {
    if (options.target_per_label <= 0) throw Error(ErrorCode::InvalidArgument, "target per label must be positive");
    Dataset result;
    auto& manifest = result.manifest;
    manifest.seed = options.seed;
    manifest.target_per_label = options.target_per_label;
    manifest.input_rows = static_cast<long>(records.size());
    manifest.source_digest = std::move(source_digest);

    std::array<std::vector<const UrlRecord*>, 2> pools;
    std::unordered_set<std::string_view> seen;
    for (const auto& rec : records) {
        const auto l = static_cast<std::size_t>(rec.label);
        if (!seen.insert(rec.url).second) {
            ++manifest.counts[l].duplicates;
            continue;
        }
        pools[l].push_back(&rec);
    }

    const int jobs = std::max(1, options.jobs);
    std::vector<std::pair<FeatureVector, int>> accepted;
    for (int l = 0; l < 2; ++l) {
        auto& pool = pools[static_cast<std::size_t>(l)];
        Rng rng(mix_seed(options.seed, static_cast<std::uint64_t>(l)));
        rng.shuffle(pool);
        auto& counts = manifest.counts[static_cast<std::size_t>(l)];

        std::size_t next = 0;
        const std::size_t chunk = 64 * static_cast<std::size_t>(jobs);
        while (counts.accepted < options.target_per_label && next < pool.size()) {
            // Results are computed in parallel but consumed in pool order, so
            // the accepted set does not depend on the job count.
            const std::size_t stop = std::min(pool.size(), next + chunk);
            std::vector<Outcome> outcomes(stop - next);
            auto work = [&](int worker) {
                for (std::size_t i = next + static_cast<std::size_t>(worker); i < stop; i += static_cast<std::size_t>(jobs)) {
                    outcomes[i - next] = encode_and_extract(pool[i]->url, options.seed);
                }
            };
            if (jobs == 1) {
                work(0);
            } else {
                std::vector<std::thread> threads;
                for (int w = 0; w < jobs; ++w) threads.emplace_back(work, w);
                for (auto& t : threads) t.join();
            }
            for (std::size_t i = next; i < stop && counts.accepted < options.target_per_label; ++i) {
                ++manifest.consumed;
                auto& o = outcomes[i - next];
                if (!o.features) {
                    ++(o.too_long ? counts.skipped_too_long : counts.skipped_unreadable);
                    continue;
                }
                ++counts.accepted;
                ++manifest.version_histogram[o.features->protocol.version];
                ++manifest.ecc_histogram[std::string(1, ecc_letter(static_cast<EccLevel>(o.features->protocol.ecc_level)))];
                accepted.emplace_back(*o.features, l);
            }
            next = stop;
        }
        if (counts.accepted < options.target_per_label) {
            throw Error(ErrorCode::InsufficientSamples,
                        std::string(l == 0 ? "legit" : "phish") + " URLs ran out at " + std::to_string(counts.accepted) +
                            " usable of " + std::to_string(options.target_per_label) + " requested");
        }
    }

    Rng rng(mix_seed(options.seed, 2));
    rng.shuffle(accepted);
    for (const auto& [fv, label] : accepted) {
        result.table.rows.push_back(fv.values());
        result.table.labels.push_back(label);
    }
    return result;
}

Split stratified_split(const FeatureTable& table, std::array<double, 3> fractions, std::uint64_t seed) {
    double sum = 0.0;
    for (double f : fractions) {
        if (!(f > 0.0)) throw Error(ErrorCode::InvalidArgument, "split fractions must all be positive");
        sum += f;
    }
    if (std::fabs(sum - 1.0) > 1e-9) throw Error(ErrorCode::InvalidArgument, "split fractions must sum to 1");

    Split split;
    std::array<FeatureTable*, 3> parts{&split.train, &split.validation, &split.test};
    for (int l = 0; l < 2; ++l) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < table.size(); ++i) {
            if (table.labels[i] == l) idx.push_back(i);
        }
        const long n = static_cast<long>(idx.size());
        const long n_train = std::lround(fractions[0] * static_cast<double>(n));
        const long n_val = std::lround(fractions[1] * static_cast<double>(n));
        const long n_test = n - n_train - n_val;
        if (n_train < 1 || n_val < 1 || n_test < 1) {
            throw Error(ErrorCode::TooFewRows, "label " + std::to_string(l) + " has " + std::to_string(n) +
                                                   " rows; every split needs at least one");
        }
        Rng rng(mix_seed(seed, static_cast<std::uint64_t>(l)));
        rng.shuffle(idx);
        for (long k = 0; k < n; ++k) {
            FeatureTable& dst = *parts[k < n_train ? 0 : (k < n_train + n_val ? 1 : 2)];
            dst.rows.push_back(table.rows[idx[static_cast<std::size_t>(k)]]);
            dst.labels.push_back(l);
        }
    }
    for (std::size_t p = 0; p < parts.size(); ++p) {
        FeatureTable& t = *parts[p];
        std::vector<std::size_t> order(t.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng rng(mix_seed(seed, 10 + p));
        rng.shuffle(order);
        FeatureTable shuffled;
        for (std::size_t i : order) {
            shuffled.rows.push_back(t.rows[i]);
            shuffled.labels.push_back(t.labels[i]);
        }
        t = std::move(shuffled);
    }
    return split;
}

}  // namespace qris
