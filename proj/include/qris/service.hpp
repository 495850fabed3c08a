#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "qris/model.hpp"

namespace qris {

inline constexpr std::size_t kMaxImageBytes = 8u * 1024u * 1024u;

struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 8080;
    /// Origins allowed by CORS; "*" allows any.
    std::vector<std::string> cors_origins{"http://localhost:5173"};
    /// Concurrent image jobs; 0 means the CPU count.
    int workers = 0;
    /// Emit one JSON line per request on stderr.
    bool log_requests = true;
};

struct HttpResponse {
    int status = 200;
    std::string body;
    std::string content_type = "application/json";
};

/// Request handling is exposed directly so it can be exercised without a
/// socket; serve() wires the same handlers to HTTP routes.
class PredictionService {
public:
    PredictionService(std::shared_ptr<const TreeEnsemble> model, ServiceConfig config);
    ~PredictionService();

    HttpResponse predict(std::string_view body, std::string_view content_type) const;
    HttpResponse health() const;
    HttpResponse spec() const;

    /// Value for Access-Control-Allow-Origin, or empty when not allowed.
    std::string allowed_origin(std::string_view origin) const;

    /// Blocks until stop(). Returns false when the address cannot be bound.
    bool serve();
    /// Binds host:port (port 0 picks a free one), serves on a background
    /// thread and returns the bound port, or -1 when binding fails.
    int serve_in_background();
    void stop();

private:
    void install_routes();

    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Standard base64 (RFC 4648) decoding; whitespace is ignored. Throws
/// InvalidArgument on malformed input.
std::string base64_decode(std::string_view text);
std::string base64_encode(std::string_view bytes);

}  // namespace qris
