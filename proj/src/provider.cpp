#include "qgdok/provider.hpp"

#include <httplib.h>

#include <cstdlib>
#include <thread>

namespace qgdok {

std::chrono::milliseconds RetryPolicy::delay_after(int attempt) const {
    if (attempt < 1) attempt = 1;
    return backoff_base * (1LL << std::min(attempt - 1, 20));
}

std::string ProviderConfig::api_key() const {
    if (api_key_env.empty()) return {};
    const char* v = std::getenv(api_key_env.c_str());
    return v ? std::string(v) : std::string{};
}

std::string redact(std::string text, const std::string& secret) {
    if (secret.empty()) return text;
    std::size_t pos = 0;
    while ((pos = text.find(secret, pos)) != std::string::npos) {
        text.replace(pos, secret.size(), "***");
        pos += 3;
    }
    return text;
}

namespace {

struct SplitUrl {
    std::string origin; // scheme://host[:port]
    std::string path;
};

SplitUrl split_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw Error(ErrorCode::InvalidConfig, "endpoint is not a URL: " + url);
    auto path_begin = url.find('/', scheme_end + 3);
    if (path_begin == std::string::npos) return {url, "/"};
    return {url.substr(0, path_begin), url.substr(path_begin)};
}

class HttplibTransport final : public HttpTransport {
public:
    HttpResponse post(const std::string& url, const HeaderMap& headers, const std::string& body,
                      std::chrono::milliseconds timeout) override {
        auto parts = split_url(url);
        httplib::Client client(parts.origin);
        auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
        auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
        client.set_connection_timeout(secs.count(), usecs.count());
        client.set_read_timeout(secs.count(), usecs.count());
        client.set_write_timeout(secs.count(), usecs.count());
        httplib::Headers h;
        for (const auto& [k, v] : headers) h.emplace(k, v);
        auto res = client.Post(parts.path, h, body, "application/json");
        if (!res) {
            auto err = res.error();
            auto kind = (err == httplib::Error::Read || err == httplib::Error::Write ||
                         err == httplib::Error::ConnectionTimeout)
                            ? TransportError::Kind::Timeout
                            : TransportError::Kind::Connection;
            throw TransportError(kind, httplib::to_string(err));
        }
        return {res->status, res->body};
    }
};

bool retryable_status(int status) { return status == 408 || status == 429 || status >= 500; }

} // namespace

std::shared_ptr<HttpTransport> make_default_transport() { return std::make_shared<HttplibTransport>(); }

HttpResponse post_with_retry(HttpTransport& transport, const ProviderConfig& cfg, const std::string& url,
                             const HeaderMap& headers, const std::string& body, CallLog* log,
                             const SleepFn& sleep) {
    const std::string secret = cfg.api_key();
    if (log) {
        log->provider_id = cfg.provider_id;
        log->model_id = cfg.model_id;
        log->url = url;
        log->request_body = redact(body, secret);
        for (const auto& [k, v] : headers) log->headers[k] = redact(v, secret);
    }

    const int max_attempts = std::max(1, cfg.retry.max_attempts);
    bool last_was_timeout = false;
    std::string trace;
    for (int attempt = 1; attempt <= max_attempts; ++attempt) {
        AttemptRecord rec;
        rec.attempt = attempt;
        auto t0 = std::chrono::steady_clock::now();
        std::optional<HttpResponse> res;
        try {
            res = transport.post(url, headers, body, cfg.timeout);
        } catch (const TransportError& e) {
            rec.error = e.what();
            last_was_timeout = e.kind() == TransportError::Kind::Timeout;
        }
        rec.elapsed_ms =
            std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0).count();
        if (res) {
            rec.status = res->status;
            last_was_timeout = res->status == 408;
        }
        if (log) log->attempts.push_back(rec);
        trace += "attempt " + std::to_string(attempt) + ": " +
                 (res ? "HTTP " + std::to_string(res->status) : rec.error) + "; ";

        if (res && !retryable_status(res->status)) {
            if (log) log->response_body = redact(res->body, secret);
            return *res;
        }
        if (attempt < max_attempts) {
            auto delay = cfg.retry.delay_after(attempt);
            if (sleep) sleep(delay);
            else std::this_thread::sleep_for(delay);
        }
    }
    if (last_was_timeout) {
        throw Error(ErrorCode::TimeoutExceeded, cfg.provider_id + " timed out after " +
                                                     std::to_string(max_attempts) + " attempts: " + trace);
    }
    throw Error(ErrorCode::ProviderUnavailable,
                cfg.provider_id + " unavailable after " + std::to_string(max_attempts) + " attempts: " + trace);
}

} // namespace qgdok
