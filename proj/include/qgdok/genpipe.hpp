#pragma once

#include "qgdok/corpus.hpp"
#include "qgdok/promptkit.hpp"
#include "qgdok/provider.hpp"
#include "qgdok/retrieval.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace qgdok::gen {

using prompt::GenerationMode;
using prompt::PromptBundle;

class ChatProvider {
public:
    explicit ChatProvider(ProviderConfig cfg) : cfg_(std::move(cfg)) {}
    virtual ~ChatProvider() = default;

    const ProviderConfig& config() const noexcept { return cfg_; }
    virtual std::string complete(const PromptBundle& prompt, CallLog* log) = 0;

protected:
    ProviderConfig cfg_;
};

/// Deterministic offline provider. A fixture registered under a prompt hash
/// is returned verbatim; otherwise the reply is synthesized from the
/// template id and filled slots, so identical prompts always get identical
/// replies.
class MockChatProvider final : public ChatProvider {
public:
    explicit MockChatProvider(ProviderConfig cfg, std::map<std::string, std::string> fixtures = {});

    void add_fixture(const std::string& prompt_hash, std::string text);
    /// Loads every `<prompt-hash>.txt` file of `dir`.
    void load_fixtures(const std::filesystem::path& dir);

    std::string complete(const PromptBundle& prompt, CallLog* log) override;

private:
    std::mutex mu_;
    std::map<std::string, std::string> fixtures_;
};

/// OpenAI-style chat completions client:
/// POST {"model","messages":[{"role","content"}],"temperature"?,"max_tokens"}.
class HttpChatProvider final : public ChatProvider {
public:
    HttpChatProvider(ProviderConfig cfg, std::shared_ptr<HttpTransport> transport, SleepFn sleep = {});
    std::string complete(const PromptBundle& prompt, CallLog* log) override;

private:
    std::shared_ptr<HttpTransport> transport_;
    SleepFn sleep_;
};

std::shared_ptr<ChatProvider> make_chat_provider(const ProviderConfig& cfg,
                                                 std::shared_ptr<HttpTransport> transport = nullptr);

/// Sends one prompt under the optional global budget.
std::string complete(const PromptBundle& prompt, ChatProvider& provider, CallLog* log = nullptr,
                     ProviderBudget* budget = nullptr);

enum class ParseQuality { Structured, Fallback, Partial };
std::string_view to_string(ParseQuality q) noexcept;

struct QaPair {
    std::string question;
    std::string answer;

    bool operator==(const QaPair&) const = default;
};

struct ParseResult {
    std::vector<QaPair> pairs;
    ParseQuality quality = ParseQuality::Structured;
    bool count_mismatch = false;
};

/// Reads a JSON array of {"question","answer"} objects (bare, fenced, or
/// wrapped as {"questions": [...]}); falls back to "Q:/A:" and
/// "1. ... Answer: ..." layouts. Throws UnparseableOutput when nothing is
/// recovered.
ParseResult parse_questions(std::string_view raw, int expected_count);

struct GenerationRequest {
    std::string concept_name;
    int level = 1;
    GenerationMode mode = GenerationMode::DokOnly;
    ProviderConfig provider;
    int count = prompt::kDefaultQuestionCount;
    std::size_t k_retrieve = 4;

    void validate() const;
};

struct GeneratedQuestion {
    std::string question_id;
    std::string request_id;
    std::string concept_name;
    std::string question_text;
    std::string answer_text;
    int level = 1;
    GenerationMode mode = GenerationMode::DokOnly;
    std::string model_id;
    std::vector<std::string> provenance;
    std::string raw_model_output_ref;
    std::string created_at;
};

nlohmann::json provider_to_json(const ProviderConfig& p);
ProviderConfig provider_from_json(const nlohmann::json& j);

nlohmann::json to_json(const GeneratedQuestion& q);
GeneratedQuestion question_from_json(const nlohmann::json& j);
nlohmann::json to_json(const GenerationRequest& r);
GenerationRequest request_from_json(const nlohmann::json& j);

enum class RunStatus { Pending, Done, Failed };

struct RunRecord {
    std::string request_id;
    GenerationRequest request;
    std::vector<std::string> question_ids;
    std::vector<std::string> evaluation_ids;
    RunStatus status = RunStatus::Pending;
    std::string failed_stage;
    std::string error;
    std::string created_at;
};

std::string_view to_string(RunStatus s) noexcept;

/// Retrieved context of a DOK_RAG run, persisted alongside the prompt.
struct RetrievedChunk {
    std::string chunk_id;
    double score = 0.0;
    std::size_t rank = 0;
    std::string text;
};

/// Append-only directory of per-request records:
/// `<root>/<request_id>/{run.json, request.json, retrieved.json,
/// prompt.json, calls.jsonl, raw_output.txt, questions.json}`.
/// Every file is written atomically; writes for one request are serialized.
class RunStore {
public:
    explicit RunStore(std::filesystem::path root);

    const std::filesystem::path& root() const noexcept { return root_; }

    RunRecord create(const GenerationRequest& request);
    /// PENDING -> DONE or PENDING -> FAILED only.
    void finish(const std::string& request_id, RunStatus status, const std::string& stage = {},
                const std::string& error = {});
    void set_questions(const std::string& request_id, const std::vector<GeneratedQuestion>& questions);
    void add_evaluation_ids(const std::string& request_id, const std::vector<std::string>& ids);

    void write_artifact(const std::string& request_id, const std::string& name, const std::string& content);
    void append_call(const std::string& request_id, const CallLog& log);
    std::optional<std::string> read_artifact(const std::string& request_id, const std::string& name) const;

    RunRecord load(const std::string& request_id) const;
    std::vector<GeneratedQuestion> questions(const std::string& request_id) const;
    std::vector<RetrievedChunk> retrieved(const std::string& request_id) const;
    std::vector<std::string> list() const;
    bool exists(const std::string& request_id) const;

private:
    std::shared_ptr<std::mutex> lock_for(const std::string& request_id);
    void save(const RunRecord& rec);
    std::filesystem::path dir_of(const std::string& request_id) const;

    std::filesystem::path root_;
    std::mutex table_mu_;
    std::map<std::string, std::shared_ptr<std::mutex>> locks_;
};

using ChunkLookup = std::function<std::optional<corpus::DocumentChunk>(const std::string& chunk_id)>;

/// Everything generate_questions reaches out to. The index and embedder are
/// only consulted in DOK_RAG mode.
struct PipelineContext {
    std::shared_ptr<const retrieval::VectorIndex> index;
    retrieval::EmbeddingService* embedder = nullptr;
    ChunkLookup chunk_lookup;
    ChatProvider* chat = nullptr;
    RunStore* store = nullptr;
    ProviderBudget* budget = nullptr;
    prompt::GenerationPromptOptions prompt_options;
};

struct GenerationResult {
    std::string request_id;
    std::vector<GeneratedQuestion> questions;
    ParseQuality parse_quality = ParseQuality::Structured;
    bool count_mismatch = false;
};

/// validate -> retrieval (DOK_RAG) -> prompt -> generation -> parse ->
/// persist. Errors are rethrown tagged with the failing stage and, once a
/// run exists, the run is marked FAILED with that stage.
GenerationResult generate_questions(const GenerationRequest& req, const PipelineContext& ctx);

} // namespace qgdok::gen
