// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria (capped at 125).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <memory>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "../support/process.hpp"
#include "../support/test_support.hpp"
#include "httplib.h"
#include "json.hpp"
#include "qris/dataset.hpp"
#include "qris/encoder.hpp"
#include "qris/error.hpp"
#include "qris/features.hpp"
#include "qris/image_io.hpp"
#include "qris/imaging.hpp"
#include "qris/model.hpp"
#include "qris/pipeline.hpp"
#include "qris/qr_tables.hpp"
#include "qris/service.hpp"
#include "qris/synth.hpp"

using namespace qris;
using namespace qris::testing;
using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

int hardware_jobs() { return std::max(1u, std::thread::hardware_concurrency()); }

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// ---------------------------------------------------------------- oracles

// ISO 18004 format word: 2-bit indicator (L=01 M=00 Q=11 H=10), 3-bit mask,
// BCH(15,5) remainder with generator 0x537, then XOR 0x5412.
std::uint16_t oracle_format_word(EccLevel ecc, int mask) {
    static constexpr int kIndicator[4] = {1, 0, 3, 2};
    const std::uint32_t data = (static_cast<std::uint32_t>(kIndicator[static_cast<int>(ecc)]) << 3) | mask;
    std::uint32_t rem = data << 10;
    for (int bit = 14; bit >= 10; --bit) {
        if (rem & (1u << bit)) rem ^= 0x537u << (bit - 10);
    }
    return static_cast<std::uint16_t>(((data << 10) | rem) ^ 0x5412u);
}

int oracle_alignment_count(int v) {
    if (v == 1) return 0;
    const int k = v / 7 + 2;
    return k * k - 3;
}

int oracle_remainder_bits(int v) {
    if (v == 1) return 0;
    if (v <= 6) return 7;
    if (v <= 13) return 0;
    if (v <= 20) return 3;
    if (v <= 27) return 4;
    if (v <= 34) return 3;
    return 0;
}

std::string url_like(std::size_t length, std::mt19937_64& rng) {
    static const std::string host = "abcdefghijklmnopqrstuvwxyz0123456789";
    static const std::string path = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789-._~/?=&%";
    std::string s = rng() % 2 ? "https://" : "http://";
    const int host_len = 3 + static_cast<int>(rng() % 18);
    for (int i = 0; i < host_len; ++i) s += host[rng() % host.size()];
    s += rng() % 2 ? ".com/" : ".example/";
    while (s.size() < length) s += path[rng() % path.size()];
    s.resize(length);
    return s;
}

// ---------------------------------------------------------------- criteria

Outcome round_trip() {
    constexpr int kCases = 10000;
    std::mt19937_64 rng(20240601);
    const auto t0 = Clock::now();
    int exact = 0;
    std::string first_failure;
    for (int i = 0; i < kCases; ++i) {
        const int v = 1 + static_cast<int>(rng() % 40);
        const auto ecc = static_cast<EccLevel>(rng() % 4);
        const int cap = tables::capacity(v, ecc, Mode::Byte);
        const std::size_t len = 1 + rng() % static_cast<std::uint64_t>(cap);
        const int module_px = 4 + static_cast<int>(rng() % 13);
        const std::string payload = url_like(len, rng);
        try {
            const QrMatrix m = encode_with(payload, ForcedEncoding{v, ecc, Mode::Byte, std::nullopt});
            const BinaryGrid g = binarize_to_grid(preprocess(render(m.grid, module_px, 4)));
            if (g.cells == m.grid) {
                ++exact;
                continue;
            }
        } catch (const Error& e) {
            if (first_failure.empty()) first_failure = e.what();
        }
        if (first_failure.empty()) first_failure = fmt("case %d (v%d, %dpx) mismatched", i, v, module_px);
    }
    const double secs = seconds_since(t0);
    Outcome o;
    o.pass = exact == kCases && secs < 120.0;
    o.detail = fmt("%d/%d exact, %.1f s (limit 120 s)", exact, kCases, secs);
    if (!first_failure.empty()) o.detail += "; first failure: " + first_failure;
    return o;
}

Outcome protocol_recovery() {
    int ok = 0;
    int total = 0;
    for (int v = 1; v <= 40; ++v) {
        for (int e = 0; e < 4; ++e) {
            for (int mask = 0; mask < 8; ++mask) {
                ++total;
                const auto ecc = static_cast<EccLevel>(e);
                try {
                    const QrMatrix m = encode_with("p" + std::to_string(total),
                                                   ForcedEncoding{v, ecc, std::nullopt, mask});
                    const ProtocolFeatures p = analyze(render(m.grid, 4, 4)).features.protocol;
                    ok += p.version == v && p.ecc_level == e && p.masking_pattern == mask &&
                          p.num_alignment_patterns == oracle_alignment_count(v) &&
                          p.required_remainder_bits == oracle_remainder_bits(v);
                } catch (const Error&) {
                }
            }
        }
    }
    return {ok == 1280 && total == 1280, fmt("%d/%d cases exact through render and image pipeline", ok, total)};
}

Outcome format_table() {
    int words = 0;
    long corrupted = 0;
    long repaired = 0;
    for (int e = 0; e < 4; ++e) {
        for (int mask = 0; mask < 8; ++mask) {
            const auto ecc = static_cast<EccLevel>(e);
            const std::uint16_t w = oracle_format_word(ecc, mask);
            auto good = [&](std::uint16_t x) {
                const auto info = tables::decode_format_bits(x);
                return info && info->ecc == ecc && info->mask == mask;
            };
            words += tables::format_bits(ecc, mask) == w && good(w);
            for (int i = 0; i < 15; ++i) {
                ++corrupted;
                repaired += good(static_cast<std::uint16_t>(w ^ (1u << i)));
                for (int j = i + 1; j < 15; ++j) {
                    ++corrupted;
                    repaired += good(static_cast<std::uint16_t>(w ^ (1u << i) ^ (1u << j)));
                }
            }
        }
    }
    const auto l0 = tables::decode_format_bits(0b111011111000100);
    const bool vector_ok = l0 && l0->ecc == EccLevel::L && l0->mask == 0;
    return {words == 32 && repaired == corrupted && vector_ok,
            fmt("%d/32 words, %ld/%ld single/double corruptions repaired, 111011111000100 -> %s", words, repaired,
                corrupted, vector_ok ? "(L,0)" : "wrong")};
}

Outcome statistical_oracle() {
    std::mt19937_64 rng(4242);
    int agree = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const int side = trial % 2 ? side_for_version(1 + static_cast<int>(rng() % 40)) : 2 + static_cast<int>(rng() % 180);
        ModuleGrid g = random_grid(side, 0.05 + 0.9 * static_cast<double>(rng() % 1000) / 1000.0, rng);
        g.set(0, 0, true);
        g.set(side - 1, side - 1, false);
        const auto a = stat_values(extract_statistical_features(g));
        const auto b = stat_values(naive_statistics(g));
        agree += std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0;
    }
    const QrMatrix m = encode("https://www.drivesmartbc.ca/");
    const auto s = extract_all(m.grid).stats;
    const bool invariant = m.side() == 25 && s.num_black + s.num_white == 625;
    return {agree == 1000 && invariant,
            fmt("%d/1000 grids bit-identical; 25x25 black %ld + white %ld = %ld", agree, s.num_black, s.num_white,
                s.num_black + s.num_white)};
}

Outcome metric_oracle() {
    std::mt19937_64 rng(77);
    double worst_auc = 0.0;
    double worst_identity = 0.0;
    for (int set = 0; set < 100; ++set) {
        const int n = 2 + static_cast<int>(rng() % 500);
        std::vector<double> scores(n);
        std::vector<int> labels(n);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        const bool coarse = set % 3 == 0;  // many ties
        for (int i = 0; i < n; ++i) {
            labels[i] = static_cast<int>(rng() % 2);
            const double x = u(rng);
            scores[i] = coarse ? std::round(x * 10.0) / 10.0 : x;
        }
        labels[0] = 0;
        labels[1] = 1;
        const EvalReport r = evaluate_scores(scores, labels);
        worst_auc = std::max(worst_auc, std::abs(r.auc - pairwise_auc(scores, labels)));

        long tp = 0, fp = 0, tn = 0, fn = 0;
        for (int i = 0; i < n; ++i) {
            const bool pos = scores[i] >= 0.5;
            (labels[i] ? (pos ? tp : fn) : (pos ? fp : tn)) += 1;
        }
        const double p = tp + fp ? 100.0 * tp / (tp + fp) : 0.0;
        const double rc = tp + fn ? 100.0 * tp / (tp + fn) : 0.0;
        const double f1 = p + rc > 0 ? 2.0 * p * rc / (p + rc) : 0.0;
        const double acc = 100.0 * (tp + tn) / n;
        double d = std::max({std::abs(r.precision - p), std::abs(r.recall - rc), std::abs(r.f1 - f1),
                             std::abs(r.accuracy - acc)});
        if (r.tp != tp || r.fp != fp || r.tn != tn || r.fn != fn) d = 1.0;
        worst_identity = std::max(worst_identity, d);
    }
    return {worst_auc <= 1e-9 && worst_identity <= 1e-12,
            fmt("100 score sets: max |AUC - pairwise| = %.3g, max P/R/F1/accuracy deviation = %.3g", worst_auc,
                worst_identity)};
}

std::vector<UrlRecord> trend_corpus(bool& proxy) {
    if (const char* path = std::getenv("QRIS_URL_CSV"); path && *path) {
        proxy = false;
        return read_url_csv(path);
    }
    proxy = true;
    return synthetic_url_corpus(14000, 2024);
}

Outcome size_trend() {
    const auto t0 = Clock::now();
    bool proxy = true;
    const auto corpus = trend_corpus(proxy);
    double acc_small = 0.0, acc_large = 0.0, auc_large = 0.0;
    for (long total : {2000L, 20000L}) {
        const Dataset ds = build_dataset(corpus, BuildOptions{total / 2, 42, hardware_jobs()});
        const Split split = stratified_split(ds.table, {0.7, 0.15, 0.15}, 42);
        HyperParams params;
        params.kind = ModelKind::Gbdt;
        const TreeEnsemble model = train(split.train, params, 42, TrainOptions{hardware_jobs()});
        const EvalReport r = evaluate(model, split.test);
        (total == 2000 ? acc_small : acc_large) = r.accuracy;
        if (total == 20000) auc_large = r.auc;
    }
    const double secs = seconds_since(t0);
    Outcome o;
    o.pass = acc_small > 65.0 && acc_large > 65.0 && acc_large >= acc_small - 2.0 && auc_large > 0.75 && secs < 900.0;
    o.detail = fmt("%s corpus: accuracy %.2f%% (2k) -> %.2f%% (20k), AUC %.4f at 20k, %.0f s (limit 900 s)",
                   proxy ? "synthetic proxy" : "QRIS_URL_CSV", acc_small, acc_large, auc_large, secs);
    return o;
}

Outcome separable_sanity() {
    auto test_accuracy = [](bool shuffle, ModelKind kind) {
        const FeatureTable t = synthetic_feature_clusters(2500, 11, shuffle);
        const Split s = stratified_split(t, {0.7, 0.15, 0.15}, 11);
        HyperParams p;
        p.kind = kind;
        return evaluate(train(s.train, p, 11, TrainOptions{hardware_jobs()}), s.test).accuracy;
    };
    const double gbdt = test_accuracy(false, ModelKind::Gbdt);
    const double rf = test_accuracy(false, ModelKind::RandomForest);
    const double shuffled_gbdt = test_accuracy(true, ModelKind::Gbdt);
    const double shuffled_rf = test_accuracy(true, ModelKind::RandomForest);
    auto chance = [](double a) { return a >= 45.0 && a <= 55.0; };
    return {gbdt >= 95.0 && rf >= 95.0 && chance(shuffled_gbdt) && chance(shuffled_rf),
            fmt("separable GBDT %.2f%%, RF %.2f%%; shuffled GBDT %.2f%%, RF %.2f%%", gbdt, rf, shuffled_gbdt,
                shuffled_rf)};
}

Outcome determinism(const std::string& tool) {
    TempDir dir("qris-acceptance-det");
    auto ok = [&](const std::vector<std::string>& args) { return run_tool(tool, args).exit_code == 0; };
    bool ran = ok({"synth-urls", "--per-label", "300", "--out", dir.str("urls.csv"), "--seed", "5"});
    for (const char* run : {"1", "2"}) {
        const std::string r = run;
        ran = ran && ok({"gen-dataset", dir.str("urls.csv"), "--per-label", "200", "--seed", "9", "--out",
                         dir.str("data" + r + ".csv"), "--jobs", r});
        ran = ran && ok({"train", dir.str("data1.csv"), "--kind", "gbdt", "--seed", "9", "--out",
                         dir.str("gbdt" + r + ".qris"), "--jobs", r});
        ran = ran && ok({"train", dir.str("data1.csv"), "--kind", "rf", "--seed", "9", "--out",
                         dir.str("rf" + r + ".qris"), "--jobs", r});
        ran = ran && ok({"tune", dir.str("data1.csv"), "--kind", "gbdt", "--trials", "3", "--folds", "3", "--seed",
                         "9", "--out", dir.str("tune" + r + ".json"), "--jobs", r});
    }
    if (!ran) return {false, "a CLI step exited non-zero"};
    int same = 0;
    std::string differing;
    for (const char* stem : {"data%s.csv", "data%s.csv.manifest.json", "gbdt%s.qris", "rf%s.qris", "tune%s.json"}) {
        const std::string a = slurp(dir / fmt(stem, "1"));
        const std::string b = slurp(dir / fmt(stem, "2"));
        if (!a.empty() && a == b) ++same;
        else differing += " " + fmt(stem, "*");
    }
    return {same == 5, fmt("%d/5 artefacts byte-identical across two runs (1 vs 2 jobs)", same) +
                           (differing.empty() ? "" : "; differing:" + differing)};
}

ModuleGrid stylized_grid() {
    ModuleGrid g(23);
    for (auto [r0, c0] : {std::pair{0, 0}, std::pair{0, 16}, std::pair{16, 0}}) {
        for (int r = 0; r < 7; ++r) {
            for (int c = 0; c < 7; ++c) {
                const bool ring = r == 0 || r == 6 || c == 0 || c == 6;
                const bool core = r >= 2 && r <= 4 && c >= 2 && c <= 4;
                g.set(r0 + r, c0 + c, ring || core);
            }
        }
    }
    for (int i = 8; i < 15; ++i) g.set(6, i, i % 2 == 0);
    g.set(22, 22, true);
    return g;
}

Outcome service_parity(const std::string& tool) {
    TempDir dir("qris-acceptance-svc");
    const auto corpus = synthetic_url_corpus(1200, 31);
    const std::vector<UrlRecord> training(corpus.begin(), corpus.end());
    const Dataset ds = build_dataset(training, BuildOptions{1000, 31, hardware_jobs()});
    HyperParams params;
    const TreeEnsemble model = train(ds.table, params, 31, TrainOptions{hardware_jobs()});
    model.save(dir / "model.qris");

    // Held out: a corpus under another seed, minus anything seen in training.
    std::set<std::string> seen;
    for (const auto& r : training) seen.insert(r.url);
    std::vector<std::string> images;
    int per_class[2] = {0, 0};
    for (const auto& r : synthetic_url_corpus(200, 97)) {
        const int y = r.label == Label::Phish;
        if (seen.count(r.url) || per_class[y] == 10) continue;
        const std::string path = dir.str("held" + std::to_string(images.size()) + ".png");
        write_png(path, render(encode(r.url).grid, 8, 4));
        images.push_back(path);
        ++per_class[y];
    }

    ServiceConfig config;
    config.port = 0;
    config.log_requests = false;
    PredictionService svc(std::make_shared<const TreeEnsemble>(TreeEnsemble::load(dir / "model.qris")), config);
    const int port = svc.serve_in_background();
    if (port <= 0) return {false, "could not bind the HTTP service"};
    httplib::Client client("127.0.0.1", port);
    client.set_read_timeout(60, 0);

    int agree = 0;
    for (const auto& path : images) {
        const ToolResult cli = run_tool(tool, {"predict", path, "--model", dir.str("model.qris")});
        const auto http = client.Post("/api/v1/predict", slurp(path), "image/png");
        if (cli.exit_code != 0 || !http || http->status != 200) continue;
        const auto a = json::parse(cli.out);
        const auto b = json::parse(http->body);
        agree += a["label"] == b["label"] && a["probability_phishing"] == b["probability_phishing"];
    }

    ModuleGrid broken = encode_with("https://broken.example/", ForcedEncoding{3, EccLevel::M, std::nullopt, 1}).grid;
    const std::uint16_t bad = undecodable_format_word();
    write_format(broken, 0, bad);
    write_format(broken, 1, bad);
    const std::vector<std::pair<std::string, GrayImage>> rejects = {
        {"all-white", GrayImage(200, 200, 255)},
        {"stylized", render(stylized_grid(), 6, 3)},
        {"unrecoverable-format", render(broken, 6, 4)},
    };
    std::string taxonomy;
    int rejected = 0;
    for (const auto& [name, image] : rejects) {
        const auto r = client.Post("/api/v1/predict", encode_png(image), "image/png");
        const std::string reason = r ? json::parse(r->body).value("reason", "?") : "no response";
        taxonomy += " " + name + "=" + (r ? std::to_string(r->status) : "-") + "/" + reason;
        rejected += r && r->status == 422;
    }
    svc.stop();
    const bool balanced = per_class[0] == 10 && per_class[1] == 10;
    return {balanced && agree == 20 && rejected == 3,
            fmt("%d/20 held-out labels identical via CLI and HTTP;", agree) + taxonomy};
}

}  // namespace

int main() {
    const std::string tool = QRIS_TOOL;
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"round-trip structural fidelity", round_trip},
        {"protocol-feature recovery", protocol_recovery},
        {"format-table completeness", format_table},
        {"statistical-feature oracle", statistical_oracle},
        {"metric oracle", metric_oracle},
        {"dataset-size trend", size_trend},
        {"separable-synthetic sanity", separable_sanity},
        {"determinism", [&] { return determinism(tool); }},
        {"service parity", [&] { return service_parity(tool); }},
    };
    int failed = 0;
    for (const auto& [name, run] : criteria) {
        Outcome o;
        const auto t0 = Clock::now();
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("%s  %-32s %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(),
                    seconds_since(t0));
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return std::min(failed, 125);
}
