#pragma once

#include "qgdok/error.hpp"

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

namespace qgdok {

struct RetryPolicy {
    int max_attempts = 3;
    std::chrono::milliseconds backoff_base{500};

    /// Delay before attempt `attempt + 1`, i.e. base * 2^(attempt - 1).
    std::chrono::milliseconds delay_after(int attempt) const;
};

/// Identity, endpoint and sampling settings of one embedding or chat
/// provider. `kind` is "mock" or "openai" (any service speaking the
/// OpenAI-style embeddings / chat-completions wire format).
struct ProviderConfig {
    std::string provider_id = "mock";
    std::string model_id = "mock";
    std::string kind = "mock";
    std::string endpoint;
    std::string api_key_env;
    /// nullopt sends no temperature field, leaving the provider default.
    std::optional<double> temperature;
    int max_output_tokens = 2048;
    std::chrono::milliseconds timeout{60000};
    RetryPolicy retry;
    /// Declared embedding dimensionality (embedders only).
    std::size_t dim = 256;
    /// Artificial per-call latency of mock providers.
    std::chrono::milliseconds mock_latency{0};

    std::string api_key() const;
};

struct HttpResponse {
    int status = 0;
    std::string body;
};

/// Raised by a transport when no HTTP response was obtained.
class TransportError : public std::runtime_error {
public:
    enum class Kind { Timeout, Connection };
    TransportError(Kind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

using HeaderMap = std::map<std::string, std::string>;

class HttpTransport {
public:
    virtual ~HttpTransport() = default;
    virtual HttpResponse post(const std::string& url, const HeaderMap& headers, const std::string& body,
                              std::chrono::milliseconds timeout) = 0;
};

std::shared_ptr<HttpTransport> make_default_transport();

/// Global cap on concurrently running provider calls.
class ProviderBudget {
public:
    explicit ProviderBudget(std::ptrdiff_t slots = 4) : sem_(slots), slots_(slots) {}
    std::ptrdiff_t slots() const noexcept { return slots_; }

    class Lease {
    public:
        explicit Lease(ProviderBudget& b) : b_(&b) { b_->sem_.acquire(); }
        ~Lease() { if (b_) b_->sem_.release(); }
        Lease(const Lease&) = delete;
        Lease& operator=(const Lease&) = delete;

    private:
        ProviderBudget* b_;
    };

private:
    std::counting_semaphore<1024> sem_;
    std::ptrdiff_t slots_;
};

struct AttemptRecord {
    int attempt = 0;
    int status = 0; // 0 when no response
    std::string error;
    long long elapsed_ms = 0;
};

/// Audit trail of one logical provider call. Header values holding secrets
/// are redacted before they are stored here.
struct CallLog {
    std::string provider_id;
    std::string model_id;
    std::string url;
    HeaderMap headers;
    std::string request_body;
    std::vector<AttemptRecord> attempts;
    std::string response_body;
    std::string text;
};

std::string redact(std::string text, const std::string& secret);

using SleepFn = std::function<void(std::chrono::milliseconds)>;

/// POSTs `body` with retries on transport failure, 408, 429 and 5xx.
/// Returns the first non-retryable response. Throws ProviderUnavailable or
/// TimeoutExceeded (last failure was a timeout) once attempts run out.
HttpResponse post_with_retry(HttpTransport& transport, const ProviderConfig& cfg, const std::string& url,
                             const HeaderMap& headers, const std::string& body, CallLog* log,
                             const SleepFn& sleep = {});

} // namespace qgdok
