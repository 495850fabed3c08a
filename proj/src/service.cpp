#include "qris/service.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <mutex>
#include <semaphore>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "qris/error.hpp"
#include "qris/image_io.hpp"
#include "qris/pipeline.hpp"

namespace qris {

using json = nlohmann::ordered_json;

namespace {

constexpr std::string_view kServiceVersion = "0.1.0";

HttpResponse json_response(int status, const json& body) { return HttpResponse{status, body.dump(), "application/json"}; }

HttpResponse problem(int status, std::string_view reason, std::string_view message) {
    const char* kind = status == 400 ? "bad_request"
                       : status == 422 ? "unprocessable"
                       : status == 503 ? "unavailable"
                                       : "internal";
    return json_response(status, json{{"error", kind}, {"reason", reason}, {"message", message}});
}

bool is_unprocessable(ErrorCode code) {
    switch (code) {
        case ErrorCode::ImageTooSmall:
        case ErrorCode::NoBlackPixel:
        case ErrorCode::ImplausibleModuleSize:
        case ErrorCode::InvalidSideCount:
        case ErrorCode::FormatUnrecoverable:
        case ErrorCode::DegenerateGrid:
            return true;
        default:
            return false;
    }
}

std::string starts_lower(std::string_view text) {
    std::string out(text.substr(0, text.find(';')));
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out;
}

json openapi_document() {
    json error_schema = {{"type", "object"},
                         {"properties",
                          {{"error", {{"type", "string"}}},
                           {"reason",
                            {{"type", "string"},
                             {"enum",
                              {"no_black_pixel", "implausible_module_size", "invalid_side_count",
                               "format_unrecoverable", "degenerate_grid", "image_too_small", "malformed_image",
                               "payload_too_large", "malformed_request", "no_model"}}}},
                           {"message", {{"type", "string"}}}}}};
    json features = {{"type", "object"}, {"properties", json::object()}};
    for (const auto& name : feature_names()) features["properties"][std::string(name)] = {{"type", "number"}};
    json predict_response = {
        {"type", "object"},
        {"required", {"label", "confidence", "features", "timing_ms", "model_id"}},
        {"properties",
         {{"label", {{"type", "string"}, {"enum", {"legitimate", "phishing"}}}},
          {"confidence", {{"type", "number"}, {"minimum", 0.5}, {"maximum", 1.0}}},
          {"probability_phishing", {{"type", "number"}}},
          {"features", features},
          {"timing_ms", {{"type", "object"}, {"additionalProperties", {{"type", "number"}}}}},
          {"model_id", {{"type", "string"}}}}}};
    json err = {{"description", "error"}, {"content", {{"application/json", {{"schema", error_schema}}}}}};
    return json{
        {"openapi", "3.0.3"},
        {"info", {{"title", "QR structure phishing classifier"}, {"version", kServiceVersion}}},
        {"paths",
         {{"/api/v1/predict",
           {{"post",
             {{"summary", "Classify a QR code image from its module structure"},
              {"requestBody",
               {{"required", true},
                {"content",
                 {{"image/png", {{"schema", {{"type", "string"}, {"format", "binary"}}}}},
                  {"application/octet-stream", {{"schema", {{"type", "string"}, {"format", "binary"}}}}},
                  {"application/json",
                   {{"schema",
                     {{"type", "object"},
                      {"required", {"image_b64"}},
                      {"properties", {{"image_b64", {{"type", "string"}, {"format", "byte"}}}}}}}}}}}}},
              {"responses",
               {{"200", {{"description", "verdict"}, {"content", {{"application/json", {{"schema", predict_response}}}}}}},
                {"400", err},
                {"422", err},
                {"503", err}}}}}}},
          {"/api/v1/health",
           {{"get",
             {{"summary", "Readiness"},
              {"responses", {{"200", {{"description", "model loaded"}}}, {"503", {{"description", "no model"}}}}}}}}},
          {"/api/v1/spec", {{"get", {{"summary", "This document"}, {"responses", {{"200", {{"description", "OpenAPI"}}}}}}}}}}}};
}

}  // namespace

std::string base64_decode(std::string_view text) {
    auto value = [](char c) -> int {
        if (c >= 'A' && c <= 'Z') return c - 'A';
        if (c >= 'a' && c <= 'z') return c - 'a' + 26;
        if (c >= '0' && c <= '9') return c - '0' + 52;
        if (c == '+' || c == '-') return 62;
        if (c == '/' || c == '_') return 63;
        return -1;
    };
    std::string out;
    out.reserve(text.size() * 3 / 4);
    std::uint32_t acc = 0;
    int bits = 0;
    int padding = 0;
    for (char c : text) {
        if (c == ' ' || c == '\n' || c == '\r' || c == '\t') continue;
        if (c == '=') {
            ++padding;
            continue;
        }
        const int v = value(c);
        if (v < 0 || padding > 0) throw Error(ErrorCode::InvalidArgument, "invalid base64 text");
        acc = (acc << 6) | static_cast<std::uint32_t>(v);
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            out.push_back(static_cast<char>((acc >> bits) & 0xFF));
        }
    }
    if (padding > 2 || bits >= 6) throw Error(ErrorCode::InvalidArgument, "invalid base64 length");
    return out;
}

std::string base64_encode(std::string_view bytes) {
    static constexpr char table[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    std::size_t i = 0;
    for (; i + 2 < bytes.size(); i += 3) {
        const std::uint32_t v = (static_cast<unsigned char>(bytes[i]) << 16) |
                                (static_cast<unsigned char>(bytes[i + 1]) << 8) | static_cast<unsigned char>(bytes[i + 2]);
        for (int k = 3; k >= 0; --k) out.push_back(table[(v >> (6 * k)) & 63]);
    }
    const std::size_t rest = bytes.size() - i;
    if (rest > 0) {
        std::uint32_t v = static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i])) << 16;
        if (rest == 2) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i + 1])) << 8;
        out.push_back(table[(v >> 18) & 63]);
        out.push_back(table[(v >> 12) & 63]);
        out.push_back(rest == 2 ? table[(v >> 6) & 63] : '=');
        out.push_back('=');
    }
    return out;
}

struct PredictionService::Impl {
    std::shared_ptr<const TreeEnsemble> model;
    std::string model_id;
    ServiceConfig config;
    std::unique_ptr<std::counting_semaphore<1024>> jobs;
    httplib::Server server;
    std::thread background;
    std::mutex log_mutex;
};

PredictionService::PredictionService(std::shared_ptr<const TreeEnsemble> model, ServiceConfig config)
    : impl_(std::make_unique<Impl>()) {
    impl_->model = std::move(model);
    if (impl_->model) impl_->model_id = impl_->model->id();
    if (config.workers <= 0) config.workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    config.workers = std::min(config.workers, 1024);
    impl_->jobs = std::make_unique<std::counting_semaphore<1024>>(config.workers);
    impl_->config = std::move(config);
}

PredictionService::~PredictionService() { stop(); }

HttpResponse PredictionService::predict(std::string_view body, std::string_view content_type) const {
    if (!impl_->model) return problem(503, "no_model", "no model is loaded");
    if (body.size() > kMaxImageBytes * 2) return problem(400, "payload_too_large", "request body exceeds the image size limit");

    std::string decoded;
    std::string_view image_bytes = body;
    const std::string type = starts_lower(content_type);
    const bool as_json = type == "application/json" || (type.empty() && !body.empty() && body.front() == '{');
    if (as_json) {
        try {
            const auto j = json::parse(body);
            if (!j.is_object() || !j.contains("image_b64") || !j["image_b64"].is_string()) {
                return problem(400, "malformed_request", "JSON body must carry a string field image_b64");
            }
            decoded = base64_decode(j["image_b64"].get<std::string>());
        } catch (const json::exception&) {
            return problem(400, "malformed_request", "body is not valid JSON");
        } catch (const Error&) {
            return problem(400, "malformed_request", "image_b64 is not valid base64");
        }
        image_bytes = decoded;
    }
    if (image_bytes.size() > kMaxImageBytes) return problem(400, "payload_too_large", "image exceeds 8 MiB");
    if (image_bytes.empty()) return problem(400, "malformed_image", "empty image");

    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    impl_->jobs->acquire();
    struct Release {
        std::counting_semaphore<1024>& s;
        ~Release() { s.release(); }
    } release{*impl_->jobs};
    const double queue_ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();

    try {
        auto t = clock::now();
        const GrayImage image = decode_image(image_bytes);
        const double decode_ms = std::chrono::duration<double, std::milli>(clock::now() - t).count();
        const ImageAnalysis analysis = analyze(image);
        t = clock::now();
        const Prediction p = qris::predict(*impl_->model, analysis.features);
        const double predict_ms = std::chrono::duration<double, std::milli>(clock::now() - t).count();

        json features = json::object();
        const auto values = analysis.features.values();
        for (std::size_t i = 0; i < values.size(); ++i) features[std::string(feature_names()[i])] = values[i];
        json out;
        out["label"] = p.label == 1 ? "phishing" : "legitimate";
        out["confidence"] = p.confidence;
        out["probability_phishing"] = p.probability;
        out["features"] = std::move(features);
        out["timing_ms"] = {{"queue", queue_ms},
                            {"decode", decode_ms},
                            {"preprocess", analysis.timings.preprocess_ms},
                            {"grid", analysis.timings.grid_ms},
                            {"features", analysis.timings.features_ms},
                            {"predict", predict_ms}};
        out["model_id"] = impl_->model_id;
        return json_response(200, out);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::MalformedImage) return problem(400, "malformed_image", e.what());
        if (is_unprocessable(e.code())) return problem(422, error_code_name(e.code()), e.what());
        return problem(500, error_code_name(e.code()), e.what());
    }
}

HttpResponse PredictionService::health() const {
    if (!impl_->model) return json_response(503, json{{"status", "no_model"}});
    return json_response(200, json{{"status", "ok"},
                                   {"model_id", impl_->model_id},
                                   {"model_kind", std::string(kind_name(impl_->model->kind))},
                                   {"trees", impl_->model->trees.size()},
                                   {"build", {{"version", kServiceVersion}, {"features", kNumFeatures}}}});
}

HttpResponse PredictionService::spec() const { return json_response(200, openapi_document()); }

std::string PredictionService::allowed_origin(std::string_view origin) const {
    for (const auto& allowed : impl_->config.cors_origins) {
        if (allowed == "*") return "*";
        if (!origin.empty() && allowed == origin) return std::string(origin);
    }
    return {};
}

namespace {

void apply(const HttpResponse& from, httplib::Response& to) {
    to.status = from.status;
    to.set_content(from.body, from.content_type);
}

}  // namespace

void PredictionService::install_routes() {
    auto& server = impl_->server;
    // Connection threads stay plentiful so health checks are answered while
    // image jobs wait on the bounded semaphore.
    const int connection_threads = std::max(8, impl_->config.workers * 4);
    server.new_task_queue = [connection_threads] {
        return new httplib::ThreadPool(static_cast<std::size_t>(connection_threads));
    };
    server.set_payload_max_length(kMaxImageBytes * 4);

    auto cors = [this](const httplib::Request& req, httplib::Response& res) {
        const std::string origin = allowed_origin(req.get_header_value("Origin"));
        if (origin.empty()) return;
        res.set_header("Access-Control-Allow-Origin", origin);
        res.set_header("Vary", "Origin");
        res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Content-Type");
    };
    server.Post("/api/v1/predict", [this, cors](const httplib::Request& req, httplib::Response& res) {
        apply(predict(req.body, req.get_header_value("Content-Type")), res);
        cors(req, res);
    });
    server.Get("/api/v1/health", [this, cors](const httplib::Request& req, httplib::Response& res) {
        apply(health(), res);
        cors(req, res);
    });
    server.Get("/api/v1/spec", [this, cors](const httplib::Request& req, httplib::Response& res) {
        apply(spec(), res);
        cors(req, res);
    });
    server.Options(R"(/api/v1/.*)", [cors](const httplib::Request& req, httplib::Response& res) {
        res.status = 204;
        cors(req, res);
    });
    if (impl_->config.log_requests) {
        server.set_logger([this](const httplib::Request& req, const httplib::Response& res) {
            const auto now = std::chrono::system_clock::now();
            const double ts = std::chrono::duration<double>(now.time_since_epoch()).count();
            const json line{{"ts", ts},
                            {"method", req.method},
                            {"path", req.path},
                            {"status", res.status},
                            {"request_bytes", req.body.size()},
                            {"response_bytes", res.body.size()},
                            {"remote", req.remote_addr}};
            std::lock_guard lock(impl_->log_mutex);
            std::fprintf(stderr, "%s\n", line.dump().c_str());
        });
    }
}

bool PredictionService::serve() {
    install_routes();
    if (!impl_->server.bind_to_port(impl_->config.host, impl_->config.port)) return false;
    return impl_->server.listen_after_bind();
}

int PredictionService::serve_in_background() {
    install_routes();
    const auto& cfg = impl_->config;
    int port = cfg.port;
    if (port == 0) {
        port = impl_->server.bind_to_any_port(cfg.host);
    } else if (!impl_->server.bind_to_port(cfg.host, port)) {
        port = -1;
    }
    if (port <= 0) return -1;
    impl_->background = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return port;
}

void PredictionService::stop() {
    if (!impl_) return;
    impl_->server.stop();
    if (impl_->background.joinable()) impl_->background.join();
}

}  // namespace qris
