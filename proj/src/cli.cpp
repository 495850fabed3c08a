#include "qris/cli.hpp"

#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <pthread.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "qris/dataset.hpp"
#include "qris/encoder.hpp"
#include "qris/error.hpp"
#include "qris/file_io.hpp"
#include "qris/image_io.hpp"
#include "qris/model.hpp"
#include "qris/pipeline.hpp"
#include "qris/service.hpp"
#include "qris/synth.hpp"

namespace qris {

namespace {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

enum class LogLevel { Error = 0, Info = 1, Debug = 2 };

LogLevel log_level() {
    const char* env = std::getenv("QRIS_LOG");
    if (!env) return LogLevel::Info;
    const std::string v = env;
    if (v == "error") return LogLevel::Error;
    if (v == "debug") return LogLevel::Debug;
    return LogLevel::Info;
}

template <typename... Args>
void log(LogLevel level, const char* fmt, Args... args) {
    if (level > log_level()) return;
    std::fprintf(stderr, "qris: ");
    if constexpr (sizeof...(Args) == 0) {
        std::fputs(fmt, stderr);
    } else {
        std::fprintf(stderr, fmt, args...);
    }
    std::fputc('\n', stderr);
}

void emit(const json& summary) { std::printf("%s\n", summary.dump().c_str()); }

void require_file(const fs::path& path, const char* what) {
    if (!fs::is_regular_file(path)) throw Error(ErrorCode::Io, std::string(what) + " not found: " + path.string());
}

void require_parent(const fs::path& path) {
    const auto parent = path.parent_path();
    if (!parent.empty() && !fs::is_directory(parent)) {
        throw Error(ErrorCode::Io, "output directory does not exist: " + parent.string());
    }
}

json features_json(const FeatureVector& features) {
    json out = json::object();
    const auto values = features.values();
    for (std::size_t i = 0; i < values.size(); ++i) out[std::string(feature_names()[i])] = values[i];
    return out;
}

json report_json(const EvalReport& report, bool roc) { return json::parse(report.to_json(roc)); }

struct Common {
    std::uint64_t seed = 42;
    int jobs = 0;
};

int effective_jobs(int jobs) {
    if (jobs > 0) return jobs;
    return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

// Subcommand handlers. Each returns the JSON summary.

struct GenDatasetArgs {
    fs::path input, out, manifest;
    long per_label = 1000;
};

json cmd_gen_dataset(const GenDatasetArgs& a, const Common& c) {
    require_file(a.input, "URL CSV");
    require_parent(a.out);
    const std::string text = read_file(a.input);
    const auto records = parse_url_csv(text);
    log(LogLevel::Info, "read %zu URL rows from %s", records.size(), a.input.string().c_str());
    const Dataset ds =
        build_dataset(records, BuildOptions{a.per_label, c.seed, effective_jobs(c.jobs)}, fnv1a_hex(text));
    const fs::path manifest = a.manifest.empty() ? fs::path(a.out.string() + ".manifest.json") : a.manifest;
    write_file_atomic(a.out, format_feature_csv(ds.table));
    write_file_atomic(manifest, ds.manifest.to_json() + "\n");
    log(LogLevel::Info, "wrote %zu rows to %s", ds.table.size(), a.out.string().c_str());
    return json{{"command", "gen-dataset"},
                {"rows", ds.table.size()},
                {"output", a.out.string()},
                {"manifest", manifest.string()},
                {"stats", json::parse(ds.manifest.to_json())}};
}

struct SplitArgs {
    fs::path input, out_dir;
    std::vector<double> fractions{0.7, 0.15, 0.15};
};

json cmd_split(const SplitArgs& a, const Common& c) {
    require_file(a.input, "feature CSV");
    const FeatureTable table = read_feature_csv(a.input);
    std::error_code ec;
    fs::create_directories(a.out_dir, ec);
    if (ec) throw Error(ErrorCode::Io, "cannot create output directory " + a.out_dir.string() + ": " + ec.message());
    const Split split = stratified_split(table, {a.fractions[0], a.fractions[1], a.fractions[2]}, c.seed);
    json files = json::object();
    const std::pair<const char*, const FeatureTable*> parts[] = {
        {"train", &split.train}, {"validation", &split.validation}, {"test", &split.test}};
    for (const auto& [name, part] : parts) {
        const fs::path path = a.out_dir / (std::string(name) + ".csv");
        write_file_atomic(path, format_feature_csv(*part));
        files[name] = {{"path", path.string()}, {"rows", part->size()}};
    }
    return json{{"command", "split"}, {"outputs", files}};
}

struct TrainArgs {
    fs::path input, out, params;
    std::string kind = "gbdt";
};

json cmd_train(const TrainArgs& a, const Common& c) {
    require_file(a.input, "training CSV");
    if (!a.params.empty()) require_file(a.params, "hyperparameter file");
    require_parent(a.out);
    HyperParams params;
    if (!a.params.empty()) {
        params = parse_hyperparams(read_file(a.params));
    } else {
        const auto kind = parse_kind(a.kind);
        if (!kind) throw Error(ErrorCode::InvalidArgument, "unknown model kind " + a.kind);
        params.kind = *kind;
    }
    const FeatureTable data = read_feature_csv(a.input);
    log(LogLevel::Info, "training %s on %zu rows", std::string(kind_name(params.kind)).c_str(), data.size());
    const TreeEnsemble model = train(data, params, c.seed, TrainOptions{effective_jobs(c.jobs)});
    model.save(a.out);
    return json{{"command", "train"},
                {"model", a.out.string()},
                {"model_id", model.id()},
                {"kind", std::string(kind_name(model.kind))},
                {"trees", model.trees.size()},
                {"rows", data.size()},
                {"params", json::parse(params.to_json())},
                {"train_metrics", report_json(evaluate(model, data), false)}};
}

struct TuneArgs {
    fs::path input, out;
    std::string kind = "gbdt";
    int trials = 100;
    double time_cap = 3600.0;
    int folds = 5;
};

json cmd_tune(const TuneArgs& a, const Common& c) {
    require_file(a.input, "training CSV");
    require_parent(a.out);
    const auto kind = parse_kind(a.kind);
    if (!kind) throw Error(ErrorCode::InvalidArgument, "unknown model kind " + a.kind);
    const FeatureTable data = read_feature_csv(a.input);
    log(LogLevel::Info, "tuning %s: up to %d trials, %d folds", a.kind.c_str(), a.trials, a.folds);
    const TuneResult result = tune(*kind, data, c.seed, TuneOptions{a.trials, a.time_cap, a.folds, effective_jobs(c.jobs)});
    json trials = json::array();
    for (const auto& t : result.trials) {
        trials.push_back({{"params", json::parse(t.params.to_json())}, {"cv_accuracy", t.cv_accuracy}});
        log(LogLevel::Debug, "trial %zu cv accuracy %.4f", trials.size(), t.cv_accuracy);
    }
    json doc{{"best", json::parse(result.best.to_json())},
             {"best_cv_accuracy", result.best_cv_accuracy},
             {"seed", c.seed},
             {"folds", a.folds},
             {"trials", trials}};
    write_file_atomic(a.out, doc.dump(2) + "\n");
    return json{{"command", "tune"},
                {"output", a.out.string()},
                {"trials_run", result.trials.size()},
                {"best_cv_accuracy", result.best_cv_accuracy},
                {"best", doc["best"]}};
}

struct EvalArgs {
    fs::path input, model;
    bool roc = false;
};

json cmd_eval(const EvalArgs& a) {
    require_file(a.input, "feature CSV");
    require_file(a.model, "model file");
    const TreeEnsemble model = TreeEnsemble::load(a.model);
    const FeatureTable data = read_feature_csv(a.input);
    json out{{"command", "eval"}, {"model_id", model.id()}, {"rows", data.size()}};
    out["metrics"] = report_json(evaluate(model, data), a.roc);
    return out;
}

json image_summary(const fs::path& path, const ImageAnalysis& analysis) {
    return json{{"image", path.string()},
                {"side", analysis.grid.side()},
                {"module_size_px", analysis.grid.module_size_px},
                {"features", features_json(analysis.features)}};
}

json cmd_extract(const std::vector<fs::path>& images) {
    for (const auto& p : images) require_file(p, "image");
    json results = json::array();
    for (const auto& p : images) results.push_back(image_summary(p, analyze(read_image(p))));
    if (results.size() == 1) {
        json out = results[0];
        out["command"] = "extract";
        return out;
    }
    return json{{"command", "extract"}, {"results", results}};
}

struct PredictArgs {
    std::vector<fs::path> images;
    fs::path model;
};

json cmd_predict(const PredictArgs& a) {
    require_file(a.model, "model file");
    for (const auto& p : a.images) require_file(p, "image");
    const TreeEnsemble model = TreeEnsemble::load(a.model);
    json results = json::array();
    for (const auto& p : a.images) {
        const ImageAnalysis analysis = analyze(read_image(p));
        const Prediction pr = predict(model, analysis.features);
        results.push_back({{"image", p.string()},
                           {"label", pr.label == 1 ? "phishing" : "legitimate"},
                           {"confidence", pr.confidence},
                           {"probability_phishing", pr.probability},
                           {"features", features_json(analysis.features)}});
    }
    if (results.size() == 1) {
        json out = results[0];
        out["model_id"] = model.id();
        return out;
    }
    return json{{"command", "predict"}, {"model_id", model.id()}, {"results", results}};
}

struct ServeArgs {
    fs::path model;
    std::string host = "127.0.0.1";
    int port = 8080;
    std::vector<std::string> cors{"http://localhost:5173"};
    bool quiet = false;
};

int cmd_serve(const ServeArgs& a, const Common& c) {
    require_file(a.model, "model file");
    auto model = std::make_shared<const TreeEnsemble>(TreeEnsemble::load(a.model));
    ServiceConfig config;
    config.host = a.host;
    config.port = a.port;
    config.cors_origins = a.cors;
    config.workers = c.jobs;
    config.log_requests = !a.quiet;

    // Block the stop signals before any thread exists so only sigwait sees them.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    PredictionService service(model, config);
    const int port = service.serve_in_background();
    if (port < 0) throw Error(ErrorCode::Io, "cannot listen on " + a.host + ":" + std::to_string(a.port));
    emit(json{{"command", "serve"}, {"host", a.host}, {"port", port}, {"model_id", model->id()}});
    std::fflush(stdout);
    log(LogLevel::Info, "listening on http://%s:%d", a.host.c_str(), port);
    int received = 0;
    sigwait(&signals, &received);
    log(LogLevel::Info, "signal %d, shutting down", received);
    service.stop();
    return kExitOk;
}

struct RenderArgs {
    std::string payload;
    fs::path out;
    int module_px = 8;
    int quiet_zone = 4;
    std::string ecc;
    int version = 0;
    int mask = -1;
};

json cmd_render(const RenderArgs& a, const Common& c) {
    require_parent(a.out);
    std::optional<EccLevel> ecc;
    if (!a.ecc.empty()) {
        ecc = parse_ecc(a.ecc);
        if (!ecc) throw Error(ErrorCode::InvalidArgument, "ECC level must be L, M, Q or H");
    }
    QrMatrix m;
    if (a.version > 0 || a.mask >= 0) {
        ForcedEncoding forced;
        const Mode mode = select_mode(a.payload);
        forced.version = a.version > 0 ? a.version : smallest_version(a.payload, mode, ecc.value_or(EccLevel::L)).value_or(0);
        if (forced.version == 0) throw Error(ErrorCode::PayloadTooLong, "payload does not fit any version");
        forced.ecc = ecc.value_or(EccLevel::L);
        if (a.mask >= 0) forced.mask = a.mask;
        m = encode_with(a.payload, forced);
    } else {
        m = encode(a.payload, ecc, c.seed);
    }
    write_png(a.out, render(m.grid, a.module_px, a.quiet_zone));
    return json{{"command", "render"},
                {"output", a.out.string()},
                {"version", m.params.version},
                {"ecc", std::string(1, ecc_letter(m.params.ecc))},
                {"mask", m.params.mask},
                {"mode", std::string(mode_name(m.params.mode))},
                {"side", m.side()}};
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += '"';
        out += ch;
    }
    return out + "\"";
}

json cmd_synth_urls(long per_label, const fs::path& out, const Common& c) {
    require_parent(out);
    const auto records = synthetic_url_corpus(per_label, c.seed);
    std::string text = "url,label\n";
    for (const auto& r : records) text += csv_field(r.url) + (r.label == Label::Phish ? ",1\n" : ",0\n");
    write_file_atomic(out, text);
    return json{{"command", "synth-urls"}, {"output", out.string()}, {"rows", records.size()}, {"synthetic", true}};
}

json cmd_synth_features(long per_label, bool shuffle, const fs::path& out, const Common& c) {
    require_parent(out);
    const FeatureTable t = synthetic_feature_clusters(per_label, c.seed, shuffle);
    write_file_atomic(out, format_feature_csv(t));
    return json{{"command", "synth-features"}, {"output", out.string()}, {"rows", t.size()}, {"labels_shuffled", shuffle}};
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"qris: phishing detection from QR code structure"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all");

    Common common;
    auto add_common = [&common](CLI::App* sub, bool seed = true, bool jobs = true) {
        if (seed) sub->add_option("--seed", common.seed, "Random seed")->capture_default_str();
        if (jobs) sub->add_option("--jobs,-j", common.jobs, "Worker threads (0 = CPU count)")->check(CLI::NonNegativeNumber);
    };

    GenDatasetArgs gen;
    auto* gen_cmd = app.add_subcommand("gen-dataset", "Encode labelled URLs and extract the feature table");
    gen_cmd->add_option("urls", gen.input, "CSV with url and label columns")->required();
    gen_cmd->add_option("--per-label", gen.per_label, "Rows per label")->capture_default_str()->check(CLI::PositiveNumber);
    gen_cmd->add_option("--out,-o", gen.out, "Feature CSV to write")->required();
    gen_cmd->add_option("--manifest", gen.manifest, "Manifest JSON (default: <out>.manifest.json)");
    add_common(gen_cmd);

    SplitArgs split;
    auto* split_cmd = app.add_subcommand("split", "Stratified train/validation/test split");
    split_cmd->add_option("features", split.input, "Feature CSV")->required();
    split_cmd->add_option("--fractions", split.fractions, "Train, validation and test fractions")
        ->expected(3)
        ->delimiter(',')
        ->capture_default_str();
    split_cmd->add_option("--out-dir,-o", split.out_dir, "Directory for train.csv, validation.csv, test.csv")->required();
    add_common(split_cmd, true, false);

    TrainArgs tr;
    auto* train_cmd = app.add_subcommand("train", "Fit a model on a feature CSV");
    train_cmd->add_option("features", tr.input, "Training feature CSV")->required();
    train_cmd->add_option("--kind", tr.kind, "gbdt or rf")->capture_default_str();
    train_cmd->add_option("--params", tr.params, "Hyperparameter JSON (as written by tune)");
    train_cmd->add_option("--out,-o", tr.out, "Model file to write")->required();
    add_common(train_cmd);

    TuneArgs tu;
    auto* tune_cmd = app.add_subcommand("tune", "Random search over hyperparameters with stratified CV");
    tune_cmd->add_option("features", tu.input, "Training feature CSV")->required();
    tune_cmd->add_option("--kind", tu.kind, "gbdt or rf")->capture_default_str();
    tune_cmd->add_option("--trials", tu.trials, "Maximum trials")->capture_default_str()->check(CLI::PositiveNumber);
    tune_cmd->add_option("--time-cap", tu.time_cap, "Seconds after which no new trial starts")->capture_default_str()
        ->check(CLI::PositiveNumber);
    tune_cmd->add_option("--folds", tu.folds, "CV folds")->capture_default_str()->check(CLI::Range(2, 100));
    tune_cmd->add_option("--out,-o", tu.out, "Tuning report JSON")->required();
    add_common(tune_cmd);

    EvalArgs ev;
    auto* eval_cmd = app.add_subcommand("eval", "Metrics of a model on a feature CSV");
    eval_cmd->add_option("features", ev.input, "Feature CSV")->required();
    eval_cmd->add_option("--model,-m", ev.model, "Model file")->required();
    eval_cmd->add_flag("--roc", ev.roc, "Include ROC points");

    std::vector<fs::path> extract_images;
    auto* extract_cmd = app.add_subcommand("extract", "Feature vector of QR images");
    extract_cmd->add_option("images", extract_images, "PNG or PGM files")->required();

    PredictArgs pr;
    auto* predict_cmd = app.add_subcommand("predict", "Classify QR images");
    predict_cmd->add_option("images", pr.images, "PNG or PGM files")->required();
    predict_cmd->add_option("--model,-m", pr.model, "Model file")->required();

    ServeArgs sv;
    auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP prediction service");
    serve_cmd->add_option("--model,-m", sv.model, "Model file")->required();
    serve_cmd->add_option("--host", sv.host, "Listen address")->capture_default_str()->envname("QRIS_HOST");
    serve_cmd->add_option("--port,-p", sv.port, "Listen port")->capture_default_str()->envname("QRIS_PORT")
        ->check(CLI::Range(0, 65535));
    serve_cmd->add_option("--cors-origin", sv.cors, "Allowed CORS origin, repeatable; * allows any")
        ->capture_default_str();
    serve_cmd->add_flag("--quiet", sv.quiet, "Disable request logs");
    add_common(serve_cmd, false, true);

    RenderArgs rd;
    auto* render_cmd = app.add_subcommand("render", "Encode a payload and write a PNG");
    render_cmd->add_option("payload", rd.payload, "Text to encode")->required();
    render_cmd->add_option("--out,-o", rd.out, "PNG to write")->required();
    render_cmd->add_option("--module-px", rd.module_px, "Pixels per module")->capture_default_str()->check(CLI::Range(1, 64));
    render_cmd->add_option("--quiet-zone", rd.quiet_zone, "Quiet zone in modules")->capture_default_str()
        ->check(CLI::Range(0, 64));
    render_cmd->add_option("--ecc", rd.ecc, "L, M, Q or H (default: seeded choice)");
    render_cmd->add_option("--version", rd.version, "Force a version")->check(CLI::Range(1, 40));
    render_cmd->add_option("--mask", rd.mask, "Force a mask pattern")->check(CLI::Range(0, 7));
    add_common(render_cmd, true, false);

    long synth_n = 1000;
    fs::path synth_out;
    auto* synth_cmd = app.add_subcommand("synth-urls", "Write a seeded synthetic labelled URL corpus");
    synth_cmd->add_option("--per-label", synth_n, "URLs per label")->capture_default_str()->check(CLI::PositiveNumber);
    synth_cmd->add_option("--out,-o", synth_out, "CSV to write")->required();
    add_common(synth_cmd, true, false);

    long clusters_n = 1000;
    bool clusters_shuffle = false;
    fs::path clusters_out;
    auto* clusters_cmd = app.add_subcommand("synth-features", "Write a two-cluster synthetic feature CSV");
    clusters_cmd->add_option("--per-label", clusters_n, "Rows per label")->capture_default_str()
        ->check(CLI::PositiveNumber);
    clusters_cmd->add_flag("--shuffle-labels", clusters_shuffle, "Permute labels to remove all signal");
    clusters_cmd->add_option("--out,-o", clusters_out, "CSV to write")->required();
    add_common(clusters_cmd, true, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    const std::string name = app.get_subcommands().front()->get_name();
    try {
        if (name == "serve") return cmd_serve(sv, common);
        json summary;
        if (name == "gen-dataset") summary = cmd_gen_dataset(gen, common);
        else if (name == "split") summary = cmd_split(split, common);
        else if (name == "train") summary = cmd_train(tr, common);
        else if (name == "tune") summary = cmd_tune(tu, common);
        else if (name == "eval") summary = cmd_eval(ev);
        else if (name == "extract") summary = cmd_extract(extract_images);
        else if (name == "predict") summary = cmd_predict(pr);
        else if (name == "render") summary = cmd_render(rd, common);
        else if (name == "synth-urls") summary = cmd_synth_urls(synth_n, synth_out, common);
        else if (name == "synth-features") summary = cmd_synth_features(clusters_n, clusters_shuffle, clusters_out, common);
        emit(summary);
        return kExitOk;
    } catch (const Error& e) {
        log(LogLevel::Error, "%s: %s", std::string(error_code_name(e.code())).c_str(), e.what());
        emit(json{{"command", name}, {"error", std::string(error_code_name(e.code()))}, {"message", e.what()}});
        return e.code() == ErrorCode::InvalidArgument ? kExitUsage : kExitRuntime;
    } catch (const std::exception& e) {
        log(LogLevel::Error, "%s", e.what());
        emit(json{{"command", name}, {"error", "internal"}, {"message", e.what()}});
        return kExitRuntime;
    }
}

}  // namespace qris
