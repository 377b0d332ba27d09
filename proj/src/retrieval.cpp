#include "qgdok/retrieval.hpp"
#include "qgdok/util.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <exception>
#include <queue>
#include <thread>

namespace qgdok::retrieval {

using nlohmann::json;

namespace {

double cosine_from_parts(double d, double na, double nb) noexcept {
    double c = d / (na * nb);
    return std::clamp(c, -1.0, 1.0);
}

bool all_finite(std::span<const float> v) {
    return std::all_of(v.begin(), v.end(), [](float x) { return std::isfinite(x); });
}

// Strict weak order: better hits first.
struct HitOrder {
    bool operator()(const RetrievalHit& a, const RetrievalHit& b) const {
        if (a.score != b.score) return a.score > b.score;
        return a.chunk_id < b.chunk_id;
    }
};

} // namespace

double dot(std::span<const float> a, std::span<const float> b) noexcept {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return s;
}

double l2_norm(std::span<const float> a) noexcept { return std::sqrt(dot(a, a)); }

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) {
        throw Error(ErrorCode::DimensionMismatch,
                    "cosine of vectors with dim " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
    }
    double na = l2_norm(a);
    double nb = l2_norm(b);
    if (na == 0.0 || nb == 0.0) throw Error(ErrorCode::ZeroVector, "cosine of a zero vector");
    return cosine_from_parts(dot(a, b), na, nb);
}

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
    return cosine_similarity(std::span<const float>(a.values), std::span<const float>(b.values));
}

std::vector<float> mock_embed_values(std::string_view text) {
    std::vector<double> acc(kMockDim, 0.0);
    auto add = [&](const std::string& feature) {
        std::uint64_t h = util::fnv1a64(feature);
        std::size_t bucket = static_cast<std::size_t>(h % kMockDim);
        double sign = ((h >> 32) & 1U) ? -1.0 : 1.0;
        acc[bucket] += sign;
    };
    auto tokens = corpus::tokenize(text);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        add(tokens[i]);
        if (i + 1 < tokens.size()) add(tokens[i] + " " + tokens[i + 1]);
    }
    double norm = 0.0;
    for (double x : acc) norm += x * x;
    norm = std::sqrt(norm);

    std::vector<float> out(kMockDim, 0.0f);
    if (norm == 0.0) {
        out[0] = 1.0f;
        return out;
    }
    for (std::size_t i = 0; i < kMockDim; ++i) out[i] = static_cast<float>(acc[i] / norm);
    return out;
}

EmbeddingVector mock_embed(std::string_view text) { return {mock_embed_values(text), "mock", "mock-fnv1a-256"}; }

std::vector<float> MockEmbeddingBackend::embed(const std::string& text, CallLog* log) {
    if (latency_.count() > 0) std::this_thread::sleep_for(latency_);
    auto v = mock_embed_values(text);
    if (log) {
        log->provider_id = "mock";
        log->request_body = text;
        log->attempts.push_back({1, 200, {}, latency_.count()});
    }
    return v;
}

HttpEmbeddingBackend::HttpEmbeddingBackend(ProviderConfig cfg, std::shared_ptr<HttpTransport> transport, SleepFn sleep)
    : cfg_(std::move(cfg)), transport_(std::move(transport)), sleep_(std::move(sleep)) {}

std::vector<float> HttpEmbeddingBackend::embed(const std::string& text, CallLog* log) {
    json body = {{"model", cfg_.model_id}, {"input", text}};
    HeaderMap headers;
    if (auto key = cfg_.api_key(); !key.empty()) headers["Authorization"] = "Bearer " + key;
    auto res = post_with_retry(*transport_, cfg_, cfg_.endpoint, headers, body.dump(), log, sleep_);
    if (res.status != 200) {
        throw Error(ErrorCode::ProviderUnavailable,
                    cfg_.provider_id + " embeddings returned HTTP " + std::to_string(res.status));
    }
    try {
        auto j = json::parse(res.body);
        return j.at("data").at(0).at("embedding").get<std::vector<float>>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ProviderUnavailable, cfg_.provider_id + " returned malformed embeddings: " + e.what());
    }
}

EmbeddingCache::EmbeddingCache(std::filesystem::path file) : file_(std::move(file)) {
    for (const auto& line : util::read_lines(file_)) {
        try {
            auto j = json::parse(line);
            entries_[j.at("key").get<std::string>()] = j.at("values").get<std::vector<float>>();
        } catch (const json::exception&) {
            // A torn final line from an interrupted append is skipped.
        }
    }
}

std::string EmbeddingCache::key(const std::string& model_id, std::string_view text) {
    return model_id + ":" + util::sha256_hex(text);
}

std::optional<std::vector<float>> EmbeddingCache::get(const std::string& model_id, std::string_view text) const {
    auto k = key(model_id, text);
    std::lock_guard lock(mu_);
    auto it = entries_.find(k);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

void EmbeddingCache::put(const std::string& model_id, std::string_view text, const std::vector<float>& values) {
    auto k = key(model_id, text);
    std::lock_guard lock(mu_);
    auto [it, inserted] = entries_.insert_or_assign(k, values);
    if (inserted && !file_.empty()) {
        util::append_line(file_, json{{"schema_version", 1}, {"key", k}, {"values", values}}.dump());
    }
}

std::size_t EmbeddingCache::size() const {
    std::lock_guard lock(mu_);
    return entries_.size();
}

EmbeddingService::EmbeddingService(ProviderConfig cfg, std::shared_ptr<EmbeddingBackend> backend,
                                   std::shared_ptr<EmbeddingCache> cache, std::shared_ptr<ProviderBudget> budget)
    : cfg_(std::move(cfg)), backend_(std::move(backend)), cache_(std::move(cache)), budget_(std::move(budget)) {
    if (!cache_) cache_ = std::make_shared<EmbeddingCache>();
}

EmbeddingVector EmbeddingService::embed_text(std::string_view text) {
    if (util::trim(text).empty()) throw Error(ErrorCode::EmptyText, "cannot embed empty text");
    if (auto hit = cache_->get(cfg_.model_id, text)) return {std::move(*hit), cfg_.provider_id, cfg_.model_id};

    std::vector<float> values;
    {
        std::optional<ProviderBudget::Lease> lease;
        if (budget_) lease.emplace(*budget_);
        ++calls_;
        values = backend_->embed(std::string(text), nullptr);
    }
    if (values.size() != cfg_.dim) {
        throw Error(ErrorCode::DimensionMismatch, cfg_.provider_id + " returned " + std::to_string(values.size()) +
                                                      " values, declared dim is " + std::to_string(cfg_.dim));
    }
    if (!all_finite(values)) throw Error(ErrorCode::ProviderUnavailable, cfg_.provider_id + " returned non-finite values");
    cache_->put(cfg_.model_id, text, values);
    return {std::move(values), cfg_.provider_id, cfg_.model_id};
}

std::shared_ptr<EmbeddingService> make_embedding_service(const ProviderConfig& cfg,
                                                         std::shared_ptr<EmbeddingCache> cache,
                                                         std::shared_ptr<ProviderBudget> budget,
                                                         std::shared_ptr<HttpTransport> transport) {
    std::shared_ptr<EmbeddingBackend> backend;
    ProviderConfig effective = cfg;
    if (cfg.kind == "mock") {
        effective.dim = kMockDim;
        backend = std::make_shared<MockEmbeddingBackend>(cfg.mock_latency);
    } else if (cfg.kind == "openai") {
        backend = std::make_shared<HttpEmbeddingBackend>(cfg, transport ? transport : make_default_transport());
    } else {
        throw Error(ErrorCode::InvalidConfig, "unknown provider kind: " + cfg.kind);
    }
    return std::make_shared<EmbeddingService>(std::move(effective), std::move(backend), std::move(cache),
                                              std::move(budget));
}

void VectorIndex::upsert(const std::string& chunk_id, const EmbeddingVector& v) {
    if (v.values.empty()) throw Error(ErrorCode::DimensionMismatch, "empty embedding for " + chunk_id);
    if (!all_finite(v.values)) throw Error(ErrorCode::InvalidArgument, "non-finite embedding for " + chunk_id);
    if (entries_.empty() && dim_ == 0) {
        dim_ = v.dim();
        provider_id_ = v.provider_id;
        model_id_ = v.model_id;
    }
    if (v.provider_id != provider_id_ || v.model_id != model_id_) {
        throw Error(ErrorCode::ProviderFingerprintMixed, "chunk " + chunk_id + " embedded with " + v.provider_id + "/" +
                                                             v.model_id + ", index holds " + provider_id_ + "/" +
                                                             model_id_);
    }
    if (v.dim() != dim_) {
        throw Error(ErrorCode::DimensionMismatch, "chunk " + chunk_id + " has dim " + std::to_string(v.dim()) +
                                                      ", index dim is " + std::to_string(dim_));
    }
    double n = l2_norm(v.values);
    if (n == 0.0) throw Error(ErrorCode::ZeroVector, "zero embedding for " + chunk_id);
    entries_[chunk_id] = Entry{v.values, n};
}

bool VectorIndex::operator==(const VectorIndex& other) const {
    if (dim_ != other.dim_ || provider_id_ != other.provider_id_ || model_id_ != other.model_id_ ||
        entries_.size() != other.entries_.size()) {
        return false;
    }
    auto it = other.entries_.begin();
    for (const auto& [id, e] : entries_) {
        if (id != it->first || e.values != it->second.values) return false;
        ++it;
    }
    return true;
}

std::vector<RetrievalHit> search_topk(std::span<const float> query, std::size_t k, const VectorIndex& index) {
    if (k == 0) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
    if (index.empty()) throw Error(ErrorCode::EmptyIndex, "index is empty");
    if (query.size() != index.dim()) {
        throw Error(ErrorCode::DimensionMismatch, "query dim " + std::to_string(query.size()) + " vs index dim " +
                                                      std::to_string(index.dim()));
    }
    double qn = l2_norm(query);
    if (qn == 0.0) throw Error(ErrorCode::ZeroVector, "query embedding is the zero vector");

    // Max-heap under HitOrder keeps the worst retained hit on top.
    std::priority_queue<RetrievalHit, std::vector<RetrievalHit>, HitOrder> heap;
    const std::size_t limit = std::min(k, index.size());
    HitOrder better;
    for (const auto& [id, entry] : index.entries()) {
        RetrievalHit hit{id, cosine_from_parts(dot(query, entry.values), qn, entry.norm), 0};
        if (heap.size() < limit) {
            heap.push(std::move(hit));
        } else if (better(hit, heap.top())) {
            heap.pop();
            heap.push(std::move(hit));
        }
    }
    std::vector<RetrievalHit> hits;
    hits.reserve(heap.size());
    while (!heap.empty()) {
        hits.push_back(heap.top());
        heap.pop();
    }
    std::reverse(hits.begin(), hits.end());
    for (std::size_t i = 0; i < hits.size(); ++i) hits[i].rank = i + 1;
    return hits;
}

std::vector<RetrievalHit> search_topk(std::string_view query, std::size_t k, const VectorIndex& index,
                                      EmbeddingService& embedder) {
    if (index.empty()) throw Error(ErrorCode::EmptyIndex, "index is empty");
    const auto& cfg = embedder.config();
    if (cfg.provider_id != index.provider_id() || cfg.model_id != index.model_id()) {
        throw Error(ErrorCode::ProviderFingerprintMixed, "query embedder " + cfg.provider_id + "/" + cfg.model_id +
                                                             " does not match index " + index.provider_id() + "/" +
                                                             index.model_id());
    }
    auto q = embedder.embed_text(query);
    return search_topk(std::span<const float>(q.values), k, index);
}

VectorIndex index_chunks(std::span<const corpus::DocumentChunk> chunks, EmbeddingService& embedder,
                         const VectorIndex& base, std::size_t parallelism) {
    if (chunks.empty()) throw Error(ErrorCode::InvalidArgument, "no chunks to index");
    const auto& cfg = embedder.config();
    if (!base.empty() && (base.provider_id() != cfg.provider_id || base.model_id() != cfg.model_id)) {
        throw Error(ErrorCode::ProviderFingerprintMixed, "index holds " + base.provider_id() + "/" + base.model_id() +
                                                             ", embedder is " + cfg.provider_id + "/" + cfg.model_id);
    }

    std::vector<std::optional<EmbeddingVector>> results(chunks.size());
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::mutex err_mu;
    std::exception_ptr first_error;

    auto worker = [&] {
        for (;;) {
            if (failed.load()) return;
            std::size_t i = next.fetch_add(1);
            if (i >= chunks.size()) return;
            try {
                results[i] = embedder.embed_text(chunks[i].text);
            } catch (const Error& e) {
                std::lock_guard lock(err_mu);
                if (!first_error) {
                    first_error = std::make_exception_ptr(
                        Error(e.code(), "chunk " + chunks[i].chunk_id + ": " + e.what(), "indexing"));
                }
                failed = true;
            }
        }
    };

    std::size_t n_workers = std::clamp<std::size_t>(parallelism, 1, chunks.size());
    if (n_workers == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(n_workers);
        for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    }
    if (first_error) std::rethrow_exception(first_error);

    VectorIndex out = base;
    for (std::size_t i = 0; i < chunks.size(); ++i) out.upsert(chunks[i].chunk_id, *results[i]);
    return out;
}

} // namespace qgdok::retrieval
