#pragma once

#include "qgdok/corpus.hpp"
#include "qgdok/provider.hpp"

#include <atomic>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace qgdok::retrieval {

inline constexpr std::size_t kMockDim = 256;
inline constexpr std::uint32_t kIndexSchemaVersion = 1;

struct EmbeddingVector {
    std::vector<float> values;
    std::string provider_id;
    std::string model_id;

    std::size_t dim() const noexcept { return values.size(); }
};

double dot(std::span<const float> a, std::span<const float> b) noexcept;
double l2_norm(std::span<const float> a) noexcept;

/// dot(a,b) / (|a| |b|), clamped to [-1, 1]. Throws DimensionMismatch or
/// ZeroVector.
double cosine_similarity(std::span<const float> a, std::span<const float> b);
double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

/// Offline embedding: unigrams and bigrams of tokenize(text) are hashed with
/// FNV-1a 64 into 256 buckets. Bucket is h mod 256, sign is -1 when bit 32
/// of h is set. The sum is L2-normalized; texts that produce the zero vector
/// map to e0.
std::vector<float> mock_embed_values(std::string_view text);
EmbeddingVector mock_embed(std::string_view text);

/// Raw provider call without caching or validation.
class EmbeddingBackend {
public:
    virtual ~EmbeddingBackend() = default;
    virtual std::vector<float> embed(const std::string& text, CallLog* log) = 0;
};

class MockEmbeddingBackend final : public EmbeddingBackend {
public:
    explicit MockEmbeddingBackend(std::chrono::milliseconds latency = {}) : latency_(latency) {}
    std::vector<float> embed(const std::string& text, CallLog* log) override;

private:
    std::chrono::milliseconds latency_;
};

/// Speaks the OpenAI-style embeddings convention: POST {"model","input"},
/// reads data[0].embedding.
class HttpEmbeddingBackend final : public EmbeddingBackend {
public:
    HttpEmbeddingBackend(ProviderConfig cfg, std::shared_ptr<HttpTransport> transport, SleepFn sleep = {});
    std::vector<float> embed(const std::string& text, CallLog* log) override;

private:
    ProviderConfig cfg_;
    std::shared_ptr<HttpTransport> transport_;
    SleepFn sleep_;
};

/// Embedding cache keyed by (model_id, SHA-256 of text). When a file path is
/// given, entries are appended as JSONL and reloaded on construction.
class EmbeddingCache {
public:
    EmbeddingCache() = default;
    explicit EmbeddingCache(std::filesystem::path file);

    std::optional<std::vector<float>> get(const std::string& model_id, std::string_view text) const;
    void put(const std::string& model_id, std::string_view text, const std::vector<float>& values);
    std::size_t size() const;

private:
    static std::string key(const std::string& model_id, std::string_view text);

    std::filesystem::path file_;
    mutable std::mutex mu_;
    std::unordered_map<std::string, std::vector<float>> entries_;
};

/// Validating, caching front of one embedding provider.
class EmbeddingService {
public:
    EmbeddingService(ProviderConfig cfg, std::shared_ptr<EmbeddingBackend> backend,
                     std::shared_ptr<EmbeddingCache> cache = std::make_shared<EmbeddingCache>(),
                     std::shared_ptr<ProviderBudget> budget = nullptr);

    EmbeddingVector embed_text(std::string_view text);

    const ProviderConfig& config() const noexcept { return cfg_; }
    std::size_t provider_calls() const noexcept { return calls_.load(); }

private:
    ProviderConfig cfg_;
    std::shared_ptr<EmbeddingBackend> backend_;
    std::shared_ptr<EmbeddingCache> cache_;
    std::shared_ptr<ProviderBudget> budget_;
    std::atomic<std::size_t> calls_{0};
};

std::shared_ptr<EmbeddingService> make_embedding_service(const ProviderConfig& cfg,
                                                         std::shared_ptr<EmbeddingCache> cache = nullptr,
                                                         std::shared_ptr<ProviderBudget> budget = nullptr,
                                                         std::shared_ptr<HttpTransport> transport = nullptr);

class VectorIndex {
public:
    struct Entry {
        std::vector<float> values;
        double norm = 0.0;
    };

    VectorIndex() = default;

    /// Inserts or replaces an entry. The first entry fixes dim and the
    /// provider fingerprint; later entries must match them.
    void upsert(const std::string& chunk_id, const EmbeddingVector& v);

    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }
    std::size_t dim() const noexcept { return dim_; }
    const std::string& provider_id() const noexcept { return provider_id_; }
    const std::string& model_id() const noexcept { return model_id_; }
    bool contains(const std::string& chunk_id) const { return entries_.count(chunk_id) != 0; }
    const std::map<std::string, Entry>& entries() const noexcept { return entries_; }

    bool operator==(const VectorIndex& other) const;

private:
    friend VectorIndex deserialize_index(std::string_view bytes);

    std::size_t dim_ = 0;
    std::string provider_id_;
    std::string model_id_;
    std::map<std::string, Entry> entries_;
};

struct RetrievalHit {
    std::string chunk_id;
    double score = 0.0;
    std::size_t rank = 0;

    bool operator==(const RetrievalHit&) const = default;
};

/// Exact top-k by full scan, ordered by (score desc, chunk_id asc).
std::vector<RetrievalHit> search_topk(std::span<const float> query, std::size_t k, const VectorIndex& index);
std::vector<RetrievalHit> search_topk(std::string_view query, std::size_t k, const VectorIndex& index,
                                      EmbeddingService& embedder);

/// Embeds every chunk into a copy of `base` (replacing existing entries),
/// with at most `parallelism` embedding calls in flight.
VectorIndex index_chunks(std::span<const corpus::DocumentChunk> chunks, EmbeddingService& embedder,
                         const VectorIndex& base = {}, std::size_t parallelism = 4);

/// Binary layout (little-endian): magic "QGDKIDX1", u32 schema_version,
/// u32 dim, u32+bytes provider_id, u32+bytes model_id, u64 count, then per
/// entry u32+bytes chunk_id and dim float32 values, then SHA-256 of all
/// preceding bytes.
void save_index(const VectorIndex& index, const std::filesystem::path& path);
VectorIndex load_index(const std::filesystem::path& path);
std::string serialize_index(const VectorIndex& index);
VectorIndex deserialize_index(std::string_view bytes);

/// Holds the currently published index; readers get an immutable snapshot.
class IndexSlot {
public:
    std::shared_ptr<const VectorIndex> get() const {
        std::lock_guard lock(mu_);
        return current_;
    }
    void publish(std::shared_ptr<const VectorIndex> next) {
        std::lock_guard lock(mu_);
        current_ = std::move(next);
    }

private:
    mutable std::mutex mu_;
    std::shared_ptr<const VectorIndex> current_;
};

} // namespace qgdok::retrieval
