#pragma once

#include "qgdok/corpus.hpp"
#include "qgdok/evalkit.hpp"
#include "qgdok/genpipe.hpp"
#include "qgdok/retrieval.hpp"

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace qgdok::service {

using EnvFn = std::function<std::optional<std::string>(const std::string&)>;

/// Reads the process environment.
std::optional<std::string> process_env(const std::string& name);

struct ServerConfig {
    std::string host = "127.0.0.1";
    int port = 8080;
};

struct AppConfig {
    std::filesystem::path data_dir = "qgdok-data";
    corpus::ChunkingConfig chunking;
    std::size_t k_retrieve = 4;
    std::map<std::string, ProviderConfig> providers;
    /// role ("embedder", "generator", "judge") -> provider name
    std::map<std::string, std::string> roles;
    ServerConfig server;
    bool mock_mode = false;
    std::size_t provider_budget = 4;
    std::size_t index_parallelism = 4;
    std::size_t chunk_token_budget = 300;
    int judge_samples = 1;
    bool pairwise_pinc = false;
    std::string static_dir;

    void validate() const;
    const ProviderConfig& role(const std::string& name) const;
};

/// Built-in defaults: OpenAI-compatible embedder (text-embedding-ada-002,
/// 1536 dims), generator and judge (gpt-4o). Generator keeps the provider's
/// default temperature; the judge runs at temperature 0.
AppConfig default_config();

/// Applies a JSON config document over `base`.
AppConfig merge_config_json(AppConfig base, const nlohmann::json& doc);

/// defaults < config file < environment. `config_file` is used when given;
/// otherwise `<data_dir>/qgdok.json` is read if present.
AppConfig load_config(const std::optional<std::filesystem::path>& config_file, const EnvFn& env = process_env);

/// Rewrites every provider to its deterministic mock counterpart.
void apply_mock_mode(AppConfig& cfg);

struct GenerateParams {
    std::string concept_name;
    int level = 1;
    prompt::GenerationMode mode = prompt::GenerationMode::DokOnly;
    std::optional<std::string> model;
    std::optional<int> count;
    std::optional<std::size_t> k_retrieve;
};

struct IndexSummary {
    std::size_t documents = 0;
    std::size_t chunks_indexed = 0;
};

struct StageError {
    std::string stage;
    std::string code;
    std::string message;
};

struct QuestionScores {
    std::string question_id;
    std::optional<double> pinc;
    std::map<std::string, eval::JudgeScore> judge; // keyed by criterion name
};

struct EvaluationSummary {
    std::string request_id;
    std::vector<QuestionScores> questions;
    std::optional<double> pairwise_pinc;
    std::vector<StageError> errors;
    std::vector<std::string> evaluation_ids;
};

struct ReportOptions {
    std::string format = "md"; // "md", "csv" or "json"
    std::vector<std::string> models; // empty: every model with evaluations
    std::vector<int> levels{1, 2, 3, 4};
    std::vector<prompt::GenerationMode> modes{prompt::GenerationMode::DokOnly, prompt::GenerationMode::DokRag};
    int precision = 2;
};

nlohmann::json to_json(const EvaluationSummary& s);

/// Owns the data directory layout and wires the modules together:
///   <data_dir>/corpus/{documents,chunks}.jsonl
///   <data_dir>/index/index.bin
///   <data_dir>/cache/embeddings.jsonl
///   <data_dir>/runs/<request_id>/...
///   <data_dir>/evaluations.jsonl
///   <data_dir>/fixtures/<prompt-hash>.txt   (mock chat fixtures)
class Engine {
public:
    explicit Engine(AppConfig cfg, std::shared_ptr<HttpTransport> transport = nullptr);

    const AppConfig& config() const noexcept { return cfg_; }

    corpus::SourceDocument ingest(std::string title, std::string body, corpus::DocumentKind kind);
    /// Plain text / Markdown become one document (title = first "# " heading
    /// or the file stem); `.jsonl` files are bulk-ingested line by line.
    std::vector<corpus::SourceDocument> ingest_file(const std::filesystem::path& path, corpus::DocumentKind kind);

    IndexSummary build_index();
    std::shared_ptr<const retrieval::VectorIndex> index();

    gen::GenerationResult generate(const GenerateParams& params);
    EvaluationSummary evaluate(const std::string& request_id, bool pinc, bool judge);
    std::string report(const ReportOptions& opts);

    corpus::Corpus& corpus() noexcept { return corpus_; }
    gen::RunStore& runs() noexcept { return runs_; }
    eval::EvaluationStore& evaluations() noexcept { return evals_; }
    retrieval::EmbeddingService& embedder() noexcept { return *embedder_; }
    gen::ChatProvider& chat_for(const std::optional<std::string>& model);
    gen::ChatProvider& judge_provider();

private:
    std::filesystem::path index_path() const { return cfg_.data_dir / "index" / "index.bin"; }

    AppConfig cfg_;
    std::shared_ptr<HttpTransport> transport_;
    std::shared_ptr<ProviderBudget> budget_;
    corpus::Corpus corpus_;
    gen::RunStore runs_;
    eval::EvaluationStore evals_;
    std::shared_ptr<retrieval::EmbeddingCache> cache_;
    std::shared_ptr<retrieval::EmbeddingService> embedder_;
    retrieval::IndexSlot index_;
    std::mutex index_build_mu_;
    std::mutex providers_mu_;
    std::map<std::string, std::shared_ptr<gen::ChatProvider>> chat_;
    std::shared_ptr<gen::ChatProvider> judge_;
};

/// HTTP status used for an engine error.
int http_status_for(const Error& e);

/// JSON API over an Engine. Every response carries X-Schema-Version and a
/// request id; failures are {stage, code, message, request_id}.
class ApiServer {
public:
    explicit ApiServer(Engine& engine);
    ~ApiServer();
    ApiServer(const ApiServer&) = delete;
    ApiServer& operator=(const ApiServer&) = delete;

    /// Binds `host:port` (port 0 picks a free port). Returns the bound port;
    /// throws IoError when the address is in use.
    int bind(const std::string& host, int port);
    /// Serves until stop(); call after bind().
    void listen();
    void stop();
    bool running() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Entry point of the `qgdok` command line tool. Returns the process exit
/// code: 0 success, 1 stage failure, 2 usage error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err,
            const EnvFn& env = process_env);

} // namespace qgdok::service
